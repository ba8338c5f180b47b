// Wire types mirroring the annotation service's JSON payloads.

export type Provenance = 'original' | 'baseline' | 'random';

export type ReasonCode = 'R1' | 'R2' | 'R3' | 'R4';
export type UnanswerableAnswerCode = 'A1' | 'A2' | 'A3';
export type AlteredElement = 'image' | 'question';

export const REASON_LABELS: Record<ReasonCode, string> = {
    R1: 'Being unclear to comprehend',
    R2: 'Requiring higher-level knowledge',
    R3: 'The image lacking important concepts',
    R4: 'Having multiple answers',
};

export const UNANSWERABLE_ANSWER_LABELS: Record<UnanswerableAnswerCode, string> = {
    A1: 'I cannot answer',
    A2: "I don't know",
    A3: 'Not sure',
};

export interface AnswerOptionPayload {
    text: string;
    provenance: Provenance;
}

export interface ExemplarPayload {
    image: string;
    question: string;
    reason: string;
}

export interface TaskPayload {
    task_id: string;
    image: string;
    question: string;
    answer_options: AnswerOptionPayload[];
    exemplars: ExemplarPayload[];
}

export interface NextTaskResponse {
    task: TaskPayload | null;
    lease_seconds?: number;
}

// Exactly the fields the service validates; the form state machine is the
// only producer, so invalid field combinations are unrepresentable upstream.
export interface ResponsePayload {
    task_id: string;
    worker_id: string;
    answerable: boolean;
    confidence: number;
    reason?: ReasonCode;
    unanswerable_answer?: UnanswerableAnswerCode;
    altered_element?: AlteredElement;
    chosen_answer?: string;
    chosen_provenance?: Provenance;
}

export interface SubmitResult {
    status: 'stored' | 'duplicate';
}

export interface ProgressPayload {
    total_tasks: number;
    completed_tasks: number;
    leased_tasks: number;
    responses: number;
}
