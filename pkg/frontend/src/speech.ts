// Speech output. New utterances replace whatever is still queued so the
// spoken feedback never lags behind the camera.

/** Fixed line spoken once when the camera starts. */
export const WELCOME_MESSAGE = 'Currency reader started. Point the camera at a note.';

export const SERVICE_UNAVAILABLE_MESSAGE = 'Detection service unavailable, retrying.';

export function speechAvailable(): boolean {
  return typeof window !== 'undefined' && 'speechSynthesis' in window;
}

export function speak(text: string): void {
  if (!speechAvailable()) {
    return;
  }
  window.speechSynthesis.cancel();
  const utterance = new SpeechSynthesisUtterance(text);
  utterance.rate = 1;
  utterance.pitch = 1;
  utterance.volume = 1;
  window.speechSynthesis.speak(utterance);
}
