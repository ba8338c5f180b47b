// Blinded option presentation: the display order of the three answerable
// options is shuffled with a seed derived from the task id, so annotators
// cannot learn positional patterns and the permutation is reproducible.
// Provenance tags stay internal; the render model exposes only text.

import type { AnswerOptionPayload } from './types.js';

export interface DisplayOption {
    text: string;
    // index into the task's original answer_options array, kept so form
    // state can recover provenance without ever rendering it
    sourceIndex: number;
}

function hashString(input: string): number {
    // FNV-1a, 32-bit
    let hash = 0x811c9dc5;
    for (let i = 0; i < input.length; i++) {
        hash ^= input.charCodeAt(i);
        hash = Math.imul(hash, 0x01000193);
    }
    return hash >>> 0;
}

function mulberry32(seed: number): () => number {
    let state = seed >>> 0;
    return () => {
        state = (state + 0x6d2b79f5) >>> 0;
        let t = state;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

export function blindedOrder(taskId: string, options: AnswerOptionPayload[]): DisplayOption[] {
    const order = options.map((opt, i) => ({ text: opt.text, sourceIndex: i }));
    const rand = mulberry32(hashString(taskId));
    for (let i = order.length - 1; i > 0; i--) {
        const j = Math.floor(rand() * (i + 1));
        [order[i], order[j]] = [order[j], order[i]];
    }
    return order;
}
