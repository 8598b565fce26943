import { describe, expect, it } from 'vitest';

import { ServiceClient, ServiceError } from '../src/api.js';

function stubFetch(status: number, body: unknown) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const impl = (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return Promise.resolve(
      new Response(JSON.stringify(body), {
        status,
        headers: { 'content-type': 'application/json' },
      }),
    );
  };
  return { impl, calls };
}

describe('ServiceClient', () => {
  it('strips trailing slashes from the endpoint', () => {
    expect(new ServiceClient('http://box:8000///').endpoint).toBe('http://box:8000');
  });

  it('posts the image bytes with threshold overrides in the query', async () => {
    const { impl, calls } = stubFetch(200, { detections: [] });
    const client = new ServiceClient('http://box:8000', impl);
    await client.detect(new Blob(['png bytes']), { scoreThreshold: 0.25, nmsIou: 0.6 });

    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe('http://box:8000/v1/detect?score_threshold=0.25&nms_iou=0.6');
    expect(calls[0].init?.method).toBe('POST');
    expect(calls[0].init?.headers).toEqual({ 'content-type': 'application/octet-stream' });
  });

  it('omits the query string when no overrides are given', async () => {
    const { impl, calls } = stubFetch(200, { detections: [] });
    await new ServiceClient('http://box:8000', impl).detect(new Blob(['x']));
    expect(calls[0].url).toBe('http://box:8000/v1/detect');
  });

  it('turns error payloads into ServiceError with the class and reason', async () => {
    const { impl } = stubFetch(503, { error: 'loading', reason: 'model is still loading' });
    const client = new ServiceClient('http://box:8000', impl);
    const failure = await client.health().catch((error: unknown) => error);
    expect(failure).toBeInstanceOf(ServiceError);
    const serviceError = failure as ServiceError;
    expect(serviceError.status).toBe(503);
    expect(serviceError.errorClass).toBe('loading');
    expect(serviceError.message).toBe('service returned 503: model is still loading');
  });

  it('copes with non-JSON error bodies', async () => {
    const impl = () => Promise.resolve(new Response('<html>bad gateway</html>', { status: 502 }));
    const failure = await new ServiceClient('http://box:8000', impl)
      .labels()
      .catch((error: unknown) => error);
    expect(failure).toBeInstanceOf(ServiceError);
    expect((failure as ServiceError).status).toBe(502);
    expect((failure as ServiceError).errorClass).toBeNull();
  });
});
