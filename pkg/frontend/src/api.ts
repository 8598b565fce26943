// Thin client for the detection service HTTP API.

import type { DetectResponse, HealthResponse } from './types.js';

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly errorClass: string | null,
  ) {
    super(message);
    this.name = 'ServiceError';
  }
}

export interface DetectOptions {
  scoreThreshold?: number;
  nmsIou?: number;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  private readonly base: string;

  constructor(
    endpoint: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.base = endpoint.replace(/\/+$/, '');
  }

  get endpoint(): string {
    return this.base;
  }

  async health(): Promise<HealthResponse> {
    return this.requestJson(`${this.base}/healthz`, {});
  }

  async labels(): Promise<string[]> {
    return this.requestJson(`${this.base}/v1/labels`, {});
  }

  async detect(image: Blob, options: DetectOptions = {}): Promise<DetectResponse> {
    const params = new URLSearchParams();
    if (options.scoreThreshold !== undefined) {
      params.set('score_threshold', String(options.scoreThreshold));
    }
    if (options.nmsIou !== undefined) {
      params.set('nms_iou', String(options.nmsIou));
    }
    const query = params.toString();
    const url = `${this.base}/v1/detect${query ? `?${query}` : ''}`;
    return this.requestJson(url, {
      method: 'POST',
      body: image,
      headers: { 'content-type': 'application/octet-stream' },
    });
  }

  private async requestJson<T>(url: string, init: RequestInit): Promise<T> {
    const response = await this.fetchImpl(url, init);
    if (!response.ok) {
      let errorClass: string | null = null;
      let reason = '';
      try {
        const body = (await response.json()) as { error?: string; reason?: string };
        errorClass = body.error ?? null;
        reason = body.reason ?? '';
      } catch {
        // non-JSON error body; status alone will have to do
      }
      throw new ServiceError(
        `service returned ${response.status}${reason ? `: ${reason}` : ''}`,
        response.status,
        errorClass,
      );
    }
    return (await response.json()) as T;
  }
}
