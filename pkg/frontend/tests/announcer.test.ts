import { describe, expect, it } from 'vitest';

import {
  EMPTY_MESSAGE,
  freshAnnouncerState,
  nextAnnouncement,
  topLabel,
  type AnnouncerState,
} from '../src/announcer.js';
import type { FrameResult } from '../src/types.js';

function frame(labels: Array<[string, number]>): FrameResult {
  return {
    response: {
      detections: labels.map(([label, score]) => ({
        label,
        score,
        box: { xmin: 0, ymin: 0, xmax: 10, ymax: 10 },
      })),
      image: { width: 100, height: 100 },
      model: { name: 'stub', version: '1' },
      timing: { preprocess_s: 0, inference_s: 0, postprocess_s: 0 },
      ...(labels.length === 0 ? { message: EMPTY_MESSAGE } : {}),
    },
    capturedAt: 0,
    latencyMs: 0,
  };
}

const EMPTY = frame([]);

function run(
  state: AnnouncerState,
  frames: FrameResult[],
  startAt = 0,
  stepMs = 100,
): { state: AnnouncerState; utterances: Array<[number, string]> } {
  const utterances: Array<[number, string]> = [];
  let now = startAt;
  for (const f of frames) {
    const [next, utterance] = nextAnnouncement(state, f, now);
    state = next;
    if (utterance !== null) {
      utterances.push([now, utterance]);
    }
    now += stepMs;
  }
  return { state, utterances };
}

// deterministic PRNG so the property runs are reproducible
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe('topLabel', () => {
  it('picks the highest score regardless of order', () => {
    const f = frame([
      ['20 Rupees', 0.4],
      ['5000 Rupees', 0.9],
      ['100 Rupees', 0.7],
    ]);
    expect(topLabel(f)).toBe('5000 Rupees');
    expect(topLabel(EMPTY)).toBeNull();
  });
});

describe('nextAnnouncement', () => {
  it('speaks a fresh label on the third consecutive frame', () => {
    const note = frame([['100 Rupees', 0.95]]);
    const { utterances } = run(freshAnnouncerState(), [note, note, note]);
    expect(utterances).toEqual([[200, '100 Rupees']]);
  });

  it('stays silent while labels alternate every frame', () => {
    const a = frame([['100 Rupees', 0.9]]);
    const b = frame([['500 Rupees', 0.9]]);
    const { utterances } = run(freshAnnouncerState(), [a, b, a, b, a, b, a, b]);
    expect(utterances).toEqual([]);
  });

  it('speaks the empty message exactly once after fifteen empty frames', () => {
    const frames = Array.from({ length: 40 }, () => EMPTY);
    const { utterances } = run(freshAnnouncerState(), frames);
    expect(utterances).toEqual([[1400, EMPTY_MESSAGE]]);
  });

  it('announces a note again after the empty message cleared it', () => {
    const note = frame([['100 Rupees', 0.9]]);
    const frames = [note, note, note, ...Array.from({ length: 15 }, () => EMPTY), note, note, note];
    const { utterances } = run(freshAnnouncerState(), frames);
    expect(utterances.map(([, text]) => text)).toEqual([
      '100 Rupees',
      EMPTY_MESSAGE,
      '100 Rupees',
    ]);
  });

  it('repeats a persistent label only after repeat_after has elapsed', () => {
    const note = frame([['20 Rupees', 0.9]]);
    // 100 ms per frame, repeat after 2000 ms: announcements 1900 ms apart
    const { utterances } = run(freshAnnouncerState(), Array.from({ length: 45 }, () => note));
    expect(utterances[0]).toEqual([200, '20 Rupees']);
    expect(utterances[1]).toEqual([2200, '20 Rupees']);
    expect(utterances[2]).toEqual([4200, '20 Rupees']);
  });

  it('a changed label does not wait out the repeat timer', () => {
    const a = frame([['20 Rupees', 0.9]]);
    const b = frame([['5000 Rupees', 0.9]]);
    const { utterances } = run(freshAnnouncerState(), [a, a, a, b, b, b]);
    expect(utterances).toEqual([
      [200, '20 Rupees'],
      [500, '5000 Rupees'],
    ]);
  });

  it('is pure: identical inputs give identical outputs and no mutation', () => {
    const state = freshAnnouncerState();
    const note = frame([['100 Rupees', 0.9]]);
    const snapshot = structuredClone(state);
    const first = nextAnnouncement(state, note, 1234);
    const second = nextAnnouncement(state, note, 1234);
    expect(first).toEqual(second);
    expect(state).toEqual(snapshot);
  });
});

describe('announcer properties over random frame sequences', () => {
  const LABELS = ['20 Rupees', '100 Rupees', '5000 Rupees'];

  it('never speaks an unstable label, never doubles the empty message', () => {
    for (let seed = 0; seed < 30; seed++) {
      const rand = mulberry32(seed * 2654435761 + 1);
      let state = freshAnnouncerState();
      let now = 0;
      const recentTops: Array<string | null> = [];
      let emptySpokenSinceNote = false;
      let lastSpoken: [number, string] | null = null;

      for (let step = 0; step < 400; step++) {
        const f =
          rand() < 0.35
            ? EMPTY
            : frame([[LABELS[Math.floor(rand() * LABELS.length)], 0.5 + rand() * 0.5]]);
        recentTops.push(topLabel(f));
        now += Math.floor(rand() * 200) + 1;

        const [next, utterance] = nextAnnouncement(state, f, now);
        expect(next.stableCount).toBeGreaterThanOrEqual(0);
        expect(next.emptyCount).toBeGreaterThanOrEqual(0);

        if (utterance === EMPTY_MESSAGE) {
          expect(emptySpokenSinceNote).toBe(false);
          emptySpokenSinceNote = true;
        } else if (utterance !== null) {
          // the last stability_frames tops must all equal the spoken label
          const window = recentTops.slice(-state.config.stabilityFrames);
          expect(window.length).toBe(state.config.stabilityFrames);
          expect(window.every((top) => top === utterance)).toBe(true);
          // a straight repeat of the same label must wait out repeat_after
          if (lastSpoken !== null && lastSpoken[1] === utterance) {
            expect(now - lastSpoken[0]).toBeGreaterThanOrEqual(state.config.repeatAfterMs);
          }
        }
        if (topLabel(f) !== null) {
          emptySpokenSinceNote = false;
        }
        if (utterance !== null) {
          lastSpoken = [now, utterance];
        }
        state = next;
      }
    }
  });
});
