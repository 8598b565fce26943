// Debounced announcement policy. A label must top the detections for a few
// consecutive frames before it is spoken, so camera flicker stays silent; a
// long run of empty frames is reported exactly once until a note reappears.

import type { FrameResult } from './types.js';

export const EMPTY_MESSAGE = 'No currency notes identified';

export interface AnnouncerConfig {
  /** Consecutive frames a label must stay on top before it is spoken. */
  stabilityFrames: number;
  /** Consecutive empty frames before the empty message is spoken. */
  emptyFrames: number;
  /** Minimum pause before repeating the same label, in milliseconds. */
  repeatAfterMs: number;
}

export const DEFAULT_ANNOUNCER_CONFIG: AnnouncerConfig = {
  stabilityFrames: 3,
  emptyFrames: 15,
  repeatAfterMs: 2000,
};

export interface AnnouncerState {
  lastAnnounced: string | null;
  stableLabel: string | null;
  stableCount: number;
  emptyCount: number;
  /** Blocks a second empty message until a non-empty frame arrives. */
  emptyAnnounced: boolean;
  lastUtteranceAt: number | null;
  config: AnnouncerConfig;
}

export function freshAnnouncerState(config: Partial<AnnouncerConfig> = {}): AnnouncerState {
  return {
    lastAnnounced: null,
    stableLabel: null,
    stableCount: 0,
    emptyCount: 0,
    emptyAnnounced: false,
    lastUtteranceAt: null,
    config: { ...DEFAULT_ANNOUNCER_CONFIG, ...config },
  };
}

/** Highest-scored label of a frame, or null for an empty frame. */
export function topLabel(frame: FrameResult): string | null {
  let best = null as { label: string; score: number } | null;
  for (const detection of frame.response.detections) {
    if (best === null || detection.score > best.score) {
      best = detection;
    }
  }
  return best === null ? null : best.label;
}

/**
 * Pure transition: same (state, frame, now) always yields the same
 * (state, utterance) and never mutates its inputs.
 */
export function nextAnnouncement(
  state: AnnouncerState,
  frame: FrameResult,
  now: number,
): [AnnouncerState, string | null] {
  const label = topLabel(frame);
  const { stabilityFrames, emptyFrames, repeatAfterMs } = state.config;

  if (label === null) {
    const emptyCount = state.emptyCount + 1;
    if (emptyCount >= emptyFrames && !state.emptyAnnounced) {
      return [
        {
          ...state,
          lastAnnounced: null,
          stableLabel: null,
          stableCount: 0,
          emptyCount: 0,
          emptyAnnounced: true,
          lastUtteranceAt: now,
        },
        EMPTY_MESSAGE,
      ];
    }
    return [{ ...state, stableLabel: null, stableCount: 0, emptyCount }, null];
  }

  const stableCount = label === state.stableLabel ? state.stableCount + 1 : 1;
  const next: AnnouncerState = {
    ...state,
    stableLabel: label,
    stableCount,
    emptyCount: 0,
    emptyAnnounced: false,
  };
  if (stableCount < stabilityFrames) {
    return [next, null];
  }
  const repeatElapsed =
    state.lastUtteranceAt === null || now - state.lastUtteranceAt >= repeatAfterMs;
  if (label !== state.lastAnnounced || repeatElapsed) {
    return [{ ...next, lastAnnounced: label, lastUtteranceAt: now }, label];
  }
  return [next, null];
}
