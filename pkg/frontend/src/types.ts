// Shapes of the detection service's JSON responses, mirrored field for field.

export interface Box {
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export interface Detection {
  label: string;
  score: number;
  box: Box;
}

export interface ModelInfo {
  name: string;
  version: string;
}

export interface DetectResponse {
  detections: Detection[];
  image: { width: number; height: number };
  model: ModelInfo | null;
  timing: { preprocess_s: number; inference_s: number; postprocess_s: number };
  /** Present only when no notes were found. */
  message?: string;
}

export interface HealthResponse {
  status: 'ok' | 'loading';
  model: ModelInfo | null;
  uptime_s: number;
}

/** One processed webcam frame: the service response plus capture timing. */
export interface FrameResult {
  response: DetectResponse;
  capturedAt: number;
  latencyMs: number;
}
