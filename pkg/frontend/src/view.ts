// DOM rendering for the survey. The view is a dumb projection of the
// session/form state; every mutation goes through the form state machine, so
// the DOM cannot assemble an invalid response either.

import { AnnotationSession } from './session.js';
import {
    REASON_LABELS,
    UNANSWERABLE_ANSWER_LABELS,
    type ReasonCode,
    type UnanswerableAnswerCode,
} from './types.js';

export class SurveyView {
    constructor(
        private readonly root: HTMLElement,
        private readonly session: AnnotationSession,
        private readonly imageBase: string = '',
    ) {}

    async start(): Promise<void> {
        await this.session.fetchTask();
        this.render();
    }

    render(): void {
        this.root.textContent = '';
        switch (this.session.phase) {
            case 'exemplars':
                this.renderExemplars();
                break;
            case 'task':
                this.renderTask();
                break;
            case 'done':
                this.renderMessage('All tasks are labeled. Thank you!');
                break;
            case 'offline':
                this.renderOffline();
                break;
            default:
                this.renderMessage('Loading…');
        }
    }

    private el<K extends keyof HTMLElementTagNameMap>(
        tag: K,
        text?: string,
        parent?: HTMLElement,
    ): HTMLElementTagNameMap[K] {
        const node = document.createElement(tag);
        if (text !== undefined) node.textContent = text;
        (parent ?? this.root).appendChild(node);
        return node;
    }

    private renderMessage(message: string): void {
        this.el('p', message).className = 'message';
    }

    private renderOffline(): void {
        const banner = this.el('div');
        banner.className = 'retry-banner';
        this.el('p', `Connection problem: ${this.session.lastError ?? 'unknown'}`, banner);
        const retry = this.el('button', 'Retry', banner);
        retry.onclick = async () => {
            await this.session.fetchTask();
            this.render();
        };
    }

    private renderExemplars(): void {
        const task = this.session.task;
        if (!task) return;
        this.el('h2', 'Examples of unanswerable questions');
        const list = this.el('div');
        list.className = 'exemplar-panel';
        for (const exemplar of task.exemplars) {
            const card = this.el('div', undefined, list);
            card.className = 'exemplar';
            const img = this.el('img', undefined, card);
            img.src = this.imageBase + exemplar.image;
            img.alt = 'exemplar image';
            this.el('p', exemplar.question, card);
            this.el('p', `Why it cannot be answered: ${exemplar.reason}`, card).className =
                'reason';
        }
        const next = this.el('button', 'I have reviewed the examples');
        next.onclick = () => {
            this.session.acknowledgeExemplars();
            this.render();
        };
    }

    private renderTask(): void {
        const { task, form } = this.session;
        if (!task || !form) return;

        const panel = this.el('div');
        panel.className = 'task-panel';
        const img = this.el('img', undefined, panel);
        img.src = this.imageBase + task.image;
        img.alt = 'task image';
        this.el('h2', task.question, panel);

        if (this.session.lastError) {
            this.el('p', this.session.lastError, panel).className = 'field-error';
        }

        const formBox = this.el('form', undefined, panel);
        formBox.onsubmit = (event) => event.preventDefault();

        this.el('p', 'Can this question be answered correctly from the image?', formBox);
        this.radioRow(formBox, 'branch', ['answerable', 'unanswerable'], (value) => {
            form.setBranch(value as 'answerable' | 'unanswerable');
            this.render();
        }, form.branch ?? undefined);

        if (form.branch === 'unanswerable') {
            this.el('p', 'Why is it unanswerable?', formBox);
            this.radioRow(
                formBox,
                'reason',
                Object.keys(REASON_LABELS),
                (value) => {
                    form.setReason(value as ReasonCode);
                    this.refreshSubmit();
                },
                undefined,
                (code) => REASON_LABELS[code as ReasonCode],
            );
            this.el('p', 'Your response to the question:', formBox);
            this.radioRow(
                formBox,
                'unanswerable-answer',
                Object.keys(UNANSWERABLE_ANSWER_LABELS),
                (value) => {
                    form.setUnanswerableAnswer(value as UnanswerableAnswerCode);
                    this.refreshSubmit();
                },
                undefined,
                (code) => UNANSWERABLE_ANSWER_LABELS[code as UnanswerableAnswerCode],
            );
        }

        if (form.branch === 'answerable') {
            this.el('p', 'Which element do you believe was altered?', formBox);
            this.radioRow(formBox, 'altered', ['image', 'question'], (value) => {
                form.setAlteredElement(value as 'image' | 'question');
                this.refreshSubmit();
            });
            this.el('p', 'Pick the correct answer:', formBox);
            // blinded: displayOptions order is seeded by task id, no
            // provenance reaches the DOM
            this.radioRow(
                formBox,
                'option',
                form.displayOptions.map((_, i) => String(i)),
                (value) => {
                    form.chooseOption(Number(value));
                    this.refreshSubmit();
                },
                undefined,
                (index) => form.displayOptions[Number(index)].text,
            );
        }

        this.el('p', 'How confident are you? (5 = very confident)', formBox);
        this.radioRow(formBox, 'confidence', ['1', '2', '3', '4', '5'], (value) => {
            form.setConfidence(Number(value));
            this.refreshSubmit();
        });

        const submit = this.el('button', 'Submit', formBox);
        submit.id = 'submit';
        submit.disabled = !this.session.canSubmit;
        submit.onclick = async () => {
            submit.disabled = true; // double-submit guard; server is idempotent too
            try {
                await this.session.submit();
            } catch {
                // session state carries the error; re-render shows it
            }
            this.render();
        };
    }

    private refreshSubmit(): void {
        const submit = this.root.querySelector<HTMLButtonElement>('#submit');
        if (submit) submit.disabled = !this.session.canSubmit;
    }

    private radioRow(
        parent: HTMLElement,
        name: string,
        values: string[],
        onPick: (value: string) => void,
        checked?: string,
        labelFor?: (value: string) => string,
    ): void {
        const row = document.createElement('div');
        row.className = `radio-row ${name}`;
        for (const value of values) {
            const label = document.createElement('label');
            const input = document.createElement('input');
            input.type = 'radio';
            input.name = name;
            input.value = value;
            input.checked = value === checked;
            input.onchange = () => onPick(value);
            label.appendChild(input);
            label.appendChild(document.createTextNode(labelFor ? labelFor(value) : value));
            row.appendChild(label);
        }
        parent.appendChild(row);
    }
}
