/**
 * Review session state: one active task at a time, decisions posted
 * in order with idempotency tokens, optimistic advance to the next
 * task. The session never mutates task content; it only renders what
 * the service sent.
 */
import {
	newRequestId,
	ServiceClient,
	ServiceError,
	type NextTaskResponse,
	type Progress,
	type TaskPayload,
	type Verdict,
} from './api.js';

export interface SessionState {
	phase: 'loading' | 'task' | 'done' | 'error';
	task: TaskPayload | null;
	progress: Progress | null;
	role: string;
	submitted: number;
	notice: string | null;
	error: string | null;
}

export type Listener = (state: SessionState) => void;

export class ReviewSession {
	private state: SessionState = {
		phase: 'loading',
		task: null,
		progress: null,
		role: 'annotator',
		submitted: 0,
		notice: null,
		error: null,
	};
	private listeners: Listener[] = [];
	private busy = false;

	constructor(private readonly client: ServiceClient) {}

	snapshot(): SessionState {
		return { ...this.state };
	}

	onChange(listener: Listener): void {
		this.listeners.push(listener);
	}

	private update(patch: Partial<SessionState>): void {
		this.state = { ...this.state, ...patch };
		for (const listener of this.listeners) {
			listener(this.snapshot());
		}
	}

	async start(): Promise<void> {
		await this.advance();
	}

	/** Put the displayed task back without deciding it; no decision is
	 * ever recorded for a skip. */
	async skip(): Promise<void> {
		if (this.busy || this.state.phase !== 'task' || this.state.task === null) {
			return;
		}
		this.busy = true;
		const skipped = this.state.task.task_id;
		await this.advance(skipped);
		this.busy = false;
	}

	private async advance(skipTaskId?: string): Promise<void> {
		this.update({ phase: 'loading' });
		let next: NextTaskResponse;
		try {
			next = await this.client.nextTask(skipTaskId);
		} catch (error) {
			this.update({ phase: 'error', error: String(error) });
			return;
		}
		if (next.task === null) {
			this.update({
				phase: 'done',
				task: null,
				progress: next.progress,
				role: next.role,
			});
			return;
		}
		this.update({
			phase: 'task',
			task: next.task,
			progress: next.progress,
			role: next.role,
			notice: null,
		});
	}

	/**
	 * Record the verdict for the displayed task, then advance. One call
	 * produces at most one persisted decision: the request id pins any
	 * transport-level retries to a single logical submission, and a 409
	 * (already decided) skips forward with a notice instead of looping.
	 */
	async decide(verdict: Verdict): Promise<void> {
		if (this.busy || this.state.phase !== 'task' || this.state.task === null) {
			return;
		}
		this.busy = true;
		const task = this.state.task;
		const requestId = newRequestId();
		try {
			await this.client.submitDecision(task.task_id, verdict, requestId);
			this.update({ submitted: this.state.submitted + 1 });
		} catch (error) {
			if (error instanceof ServiceError && error.isDuplicate) {
				this.update({ notice: 'Task was already decided elsewhere; skipping.' });
			} else {
				// decision not persisted; stay on the task so nothing is lost
				this.update({
					notice: `Submission failed (${String(error)}); task kept, try again.`,
				});
				this.busy = false;
				return;
			}
		}
		this.busy = false;
		await this.advance();
	}
}
