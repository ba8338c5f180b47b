// Thin client for the annotation service HTTP API.

import type {
    NextTaskResponse,
    ProgressPayload,
    ResponsePayload,
    SubmitResult,
    TaskPayload,
} from './types.js';

export class ApiError extends Error {
    constructor(
        message: string,
        readonly status: number,
    ) {
        super(message);
    }
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string,
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    async fetchNextTask(workerId: string): Promise<TaskPayload | null> {
        const url = `${this.baseUrl}/tasks/next?worker=${encodeURIComponent(workerId)}`;
        const res = await this.fetchFn(url);
        if (!res.ok) {
            throw new ApiError(`task fetch failed: ${res.status}`, res.status);
        }
        const body = (await res.json()) as NextTaskResponse;
        return body.task;
    }

    async submitResponse(payload: ResponsePayload): Promise<SubmitResult> {
        const res = await this.fetchFn(`${this.baseUrl}/responses`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(payload),
        });
        if (!res.ok) {
            const detail = await res.text();
            throw new ApiError(`submit rejected: ${detail}`, res.status);
        }
        return (await res.json()) as SubmitResult;
    }

    async progress(): Promise<ProgressPayload> {
        const res = await this.fetchFn(`${this.baseUrl}/progress`);
        if (!res.ok) {
            throw new ApiError(`progress failed: ${res.status}`, res.status);
        }
        return (await res.json()) as ProgressPayload;
    }
}
