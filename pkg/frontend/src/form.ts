// Survey form state machine.
//
// The form is the only producer of response payloads, and its transitions
// make invalid field combinations unrepresentable: branch-specific fields
// can only be set while that branch is active, switching branches clears the
// other side, and a payload can only be built once the form is complete
// (confidence included -- submit stays disabled until it is chosen).

import { blindedOrder, DisplayOption } from './blinding.js';
import type {
    AlteredElement,
    ReasonCode,
    ResponsePayload,
    TaskPayload,
    UnanswerableAnswerCode,
} from './types.js';

export type Branch = 'answerable' | 'unanswerable';

export interface FormDraft {
    branch: Branch | null;
    reason: ReasonCode | null;
    unanswerableAnswer: UnanswerableAnswerCode | null;
    alteredElement: AlteredElement | null;
    chosenDisplayIndex: number | null;
    confidence: number | null;
}

const EMPTY_DRAFT: FormDraft = {
    branch: null,
    reason: null,
    unanswerableAnswer: null,
    alteredElement: null,
    chosenDisplayIndex: null,
    confidence: null,
};

export class SurveyForm {
    readonly displayOptions: DisplayOption[];
    private state: FormDraft = { ...EMPTY_DRAFT };

    constructor(
        readonly task: TaskPayload,
        readonly workerId: string,
    ) {
        this.displayOptions = blindedOrder(task.task_id, task.answer_options);
    }

    get branch(): Branch | null {
        return this.state.branch;
    }

    setBranch(branch: Branch): void {
        if (this.state.branch === branch) return;
        this.state = { ...EMPTY_DRAFT, branch, confidence: this.state.confidence };
    }

    setReason(reason: ReasonCode): boolean {
        if (this.state.branch !== 'unanswerable') return false;
        this.state.reason = reason;
        return true;
    }

    setUnanswerableAnswer(answer: UnanswerableAnswerCode): boolean {
        if (this.state.branch !== 'unanswerable') return false;
        this.state.unanswerableAnswer = answer;
        return true;
    }

    setAlteredElement(element: AlteredElement): boolean {
        if (this.state.branch !== 'answerable') return false;
        this.state.alteredElement = element;
        return true;
    }

    chooseOption(displayIndex: number): boolean {
        if (this.state.branch !== 'answerable') return false;
        if (!Number.isInteger(displayIndex)) return false;
        if (displayIndex < 0 || displayIndex >= this.displayOptions.length) return false;
        this.state.chosenDisplayIndex = displayIndex;
        return true;
    }

    setConfidence(confidence: number): boolean {
        if (!Number.isInteger(confidence) || confidence < 1 || confidence > 5) return false;
        this.state.confidence = confidence;
        return true;
    }

    get complete(): boolean {
        const s = this.state;
        if (s.confidence === null) return false;
        if (s.branch === 'unanswerable') {
            return s.reason !== null && s.unanswerableAnswer !== null;
        }
        if (s.branch === 'answerable') {
            return s.alteredElement !== null && s.chosenDisplayIndex !== null;
        }
        return false;
    }

    buildPayload(): ResponsePayload {
        if (!this.complete) {
            throw new Error('form incomplete: submit must stay disabled');
        }
        const s = this.state;
        const base = {
            task_id: this.task.task_id,
            worker_id: this.workerId,
            confidence: s.confidence as number,
        };
        if (s.branch === 'unanswerable') {
            return {
                ...base,
                answerable: false,
                reason: s.reason as ReasonCode,
                unanswerable_answer: s.unanswerableAnswer as UnanswerableAnswerCode,
            };
        }
        const chosen = this.displayOptions[s.chosenDisplayIndex as number];
        const source = this.task.answer_options[chosen.sourceIndex];
        return {
            ...base,
            answerable: true,
            altered_element: s.alteredElement as AlteredElement,
            chosen_answer: source.text,
            chosen_provenance: source.provenance,
        };
    }

    toDraft(): FormDraft {
        return { ...this.state };
    }

    restoreDraft(draft: FormDraft): void {
        this.state = { ...draft };
    }
}
