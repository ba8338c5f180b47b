// One annotator's session: fetch a leased task, hold the form, submit, move
// on. Network failures surface as a retry state; the draft form survives
// retries so no annotator input is lost.

import { ApiClient, ApiError } from './api.js';
import { SurveyForm } from './form.js';
import type { SubmitResult, TaskPayload } from './types.js';

export type SessionPhase = 'idle' | 'exemplars' | 'task' | 'done' | 'offline';

export class AnnotationSession {
    phase: SessionPhase = 'idle';
    form: SurveyForm | null = null;
    task: TaskPayload | null = null;
    lastError: string | null = null;
    private seenExemplars = false;

    constructor(
        private readonly api: ApiClient,
        readonly workerId: string,
    ) {}

    /** Fetch (or re-fetch after an outage) the next leased task. */
    async fetchTask(): Promise<SessionPhase> {
        try {
            const task = await this.api.fetchNextTask(this.workerId);
            this.lastError = null;
            if (task === null) {
                this.phase = 'done';
                this.form = null;
                this.task = null;
                return this.phase;
            }
            if (this.task?.task_id === task.task_id && this.form !== null) {
                // same lease renewed: keep the draft form untouched
                this.phase = 'task';
                return this.phase;
            }
            this.task = task;
            this.form = new SurveyForm(task, this.workerId);
            // exemplars are shown before the first task of a session
            this.phase = this.seenExemplars ? 'task' : 'exemplars';
            return this.phase;
        } catch (err) {
            this.lastError = err instanceof Error ? err.message : String(err);
            this.phase = 'offline';
            return this.phase;
        }
    }

    acknowledgeExemplars(): void {
        if (this.phase === 'exemplars') {
            this.seenExemplars = true;
            this.phase = 'task';
        }
    }

    get canSubmit(): boolean {
        return this.phase === 'task' && this.form !== null && this.form.complete;
    }

    /** Submit the completed form; advances to the next task on success. */
    async submit(): Promise<SubmitResult> {
        if (this.form === null || !this.form.complete) {
            throw new Error('nothing to submit: form incomplete');
        }
        const payload = this.form.buildPayload();
        try {
            const result = await this.api.submitResponse(payload);
            this.lastError = null;
            this.form = null;
            this.task = null;
            await this.fetchTask();
            return result;
        } catch (err) {
            if (err instanceof ApiError && err.status === 422) {
                // server-side validation message surfaces on the form
                this.lastError = err.message;
                this.phase = 'task';
            } else {
                this.lastError = err instanceof Error ? err.message : String(err);
                this.phase = 'offline'; // draft form retained for retry
            }
            throw err;
        }
    }
}
