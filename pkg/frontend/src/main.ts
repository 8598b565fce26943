// Wires the camera, the detection service and the announcer together.
// Everything interesting is in the imported modules; this file only touches
// the DOM.

import { freshAnnouncerState, nextAnnouncement, type AnnouncerState } from './announcer.js';
import { ServiceClient } from './api.js';
import { CaptureLoop } from './capture.js';
import { clearOverlay, drawDetections } from './overlay.js';
import { SERVICE_UNAVAILABLE_MESSAGE, WELCOME_MESSAGE, speak } from './speech.js';

const FRAME_INTERVAL_MS = 66; // ~15 fps offered; the loop throttles itself

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

const video = element<HTMLVideoElement>('camera');
const overlay = element<HTMLCanvasElement>('overlay');
const statusLine = element<HTMLElement>('status');
const latencyLine = element<HTMLElement>('latency');
const toggleButton = element<HTMLButtonElement>('toggle');
const endpointInput = element<HTMLInputElement>('endpoint');
const stabilityInput = element<HTMLInputElement>('stability-frames');
const emptyInput = element<HTMLInputElement>('empty-frames');
const repeatInput = element<HTMLInputElement>('repeat-after');

const defaultEndpoint =
  new URLSearchParams(window.location.search).get('endpoint') ?? window.location.origin;
endpointInput.value = defaultEndpoint;

let stream: MediaStream | null = null;
let ticker: number | null = null;
let announcer: AnnouncerState = freshAnnouncerState();
let outageAnnounced = false;

function setStatus(text: string): void {
  // the live region mirrors everything that is spoken
  statusLine.textContent = text;
}

function announce(text: string): void {
  speak(text);
  setStatus(text);
}

function currentAnnouncerConfig() {
  return {
    stabilityFrames: Math.max(1, Number(stabilityInput.value) || 3),
    emptyFrames: Math.max(1, Number(emptyInput.value) || 15),
    repeatAfterMs: Math.max(0, Number(repeatInput.value) || 2) * 1000,
  };
}

const loop = new CaptureLoop(
  (image) => new ServiceClient(endpointInput.value).detect(image),
  {
    onResult(result) {
      outageAnnounced = false;
      drawDetections(overlay, result.response);
      latencyLine.textContent = `${Math.round(result.latencyMs)} ms`;
      const [nextState, utterance] = nextAnnouncement(announcer, result, Date.now());
      announcer = nextState;
      if (utterance !== null) {
        announce(utterance);
      }
    },
    onServiceError(_error, retryDelayMs) {
      setStatus(`Service unavailable, retrying in ${Math.round(retryDelayMs / 1000)} s`);
      if (!outageAnnounced) {
        speak(SERVICE_UNAVAILABLE_MESSAGE);
        outageAnnounced = true;
      }
    },
  },
);

function captureFrame(): void {
  if (video.readyState < video.HAVE_CURRENT_DATA) {
    return;
  }
  const canvas = document.createElement('canvas');
  canvas.width = video.videoWidth;
  canvas.height = video.videoHeight;
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return;
  }
  ctx.drawImage(video, 0, 0);
  canvas.toBlob((blob) => {
    if (blob) {
      loop.offerFrame({ data: blob, capturedAt: Date.now() });
    }
  }, 'image/png');
}

async function start(): Promise<void> {
  try {
    stream = await navigator.mediaDevices.getUserMedia({
      video: { facingMode: 'environment' },
      audio: false,
    });
  } catch {
    announce('Camera permission denied. The camera is required to read notes.');
    return;
  }
  video.srcObject = stream;
  await video.play();
  overlay.width = video.videoWidth;
  overlay.height = video.videoHeight;
  announcer = freshAnnouncerState(currentAnnouncerConfig());
  outageAnnounced = false;
  ticker = window.setInterval(captureFrame, FRAME_INTERVAL_MS);
  toggleButton.textContent = 'Stop camera';
  announce(WELCOME_MESSAGE);
}

function stop(): void {
  if (ticker !== null) {
    window.clearInterval(ticker);
    ticker = null;
  }
  stream?.getTracks().forEach((track) => track.stop());
  stream = null;
  video.srcObject = null;
  clearOverlay(overlay);
  latencyLine.textContent = '';
  toggleButton.textContent = 'Start camera';
  setStatus('Stopped.');
}

toggleButton.addEventListener('click', () => {
  if (stream === null) {
    void start();
  } else {
    stop();
  }
});

setStatus('Ready. Press "Start camera" to begin.');
