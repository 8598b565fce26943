// Frame pump with two hard rules: at most one detect request is ever in
// flight, and frames arriving while one is pending replace each other so
// only the newest is sent next (latest wins, no queue growth). Service
// failures back off 1s, 2s, 4s, then stay at 8s until a request succeeds.

import type { DetectResponse, FrameResult } from './types.js';

export interface Frame {
  data: Blob;
  capturedAt: number;
}

export interface CaptureCallbacks {
  onResult(result: FrameResult): void;
  onServiceError(error: unknown, retryDelayMs: number): void;
}

export interface CaptureConfig {
  backoffBaseMs: number;
  backoffCapMs: number;
}

export const DEFAULT_CAPTURE_CONFIG: CaptureConfig = {
  backoffBaseMs: 1000,
  backoffCapMs: 8000,
};

export class CaptureLoop {
  private inFlight = false;
  private pending: Frame | null = null;
  private cooldownUntil = 0;
  private consecutiveFailures = 0;
  private readonly config: CaptureConfig;

  constructor(
    private readonly detect: (image: Blob) => Promise<DetectResponse>,
    private readonly callbacks: CaptureCallbacks,
    private readonly now: () => number = () => Date.now(),
    config: Partial<CaptureConfig> = {},
  ) {
    this.config = { ...DEFAULT_CAPTURE_CONFIG, ...config };
  }

  get hasRequestInFlight(): boolean {
    return this.inFlight;
  }

  /** Milliseconds until requests resume, 0 when the service is healthy. */
  get retryDelayMs(): number {
    return Math.max(0, this.cooldownUntil - this.now());
  }

  /**
   * Offer the newest camera frame. Sends it immediately when idle; while a
   * request is pending (or the loop is backing off) the frame is parked,
   * displacing any previously parked one.
   */
  offerFrame(frame: Frame): void {
    if (this.inFlight || this.now() < this.cooldownUntil) {
      this.pending = frame;
      return;
    }
    // anything still parked predates this frame and is now obsolete
    this.pending = null;
    void this.send(frame);
  }

  private async send(frame: Frame): Promise<void> {
    this.inFlight = true;
    try {
      const response = await this.detect(frame.data);
      this.consecutiveFailures = 0;
      this.cooldownUntil = 0;
      this.callbacks.onResult({
        response,
        capturedAt: frame.capturedAt,
        latencyMs: this.now() - frame.capturedAt,
      });
    } catch (error) {
      const delay = Math.min(
        this.config.backoffBaseMs * 2 ** this.consecutiveFailures,
        this.config.backoffCapMs,
      );
      this.consecutiveFailures += 1;
      this.cooldownUntil = this.now() + delay;
      this.callbacks.onServiceError(error, delay);
    } finally {
      this.inFlight = false;
      const next = this.pending;
      this.pending = null;
      if (next !== null && this.now() >= this.cooldownUntil) {
        void this.send(next);
      } else {
        // hold the frame; the next offerFrame after the cooldown replaces it
        this.pending = next;
      }
    }
  }
}
