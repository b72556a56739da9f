/**
 * HTTP client for the verification service.
 *
 * Every decision submission carries a client-generated request id; a
 * retry after a network failure resends the same id, so the server
 * records at most one decision per click no matter how often the
 * request is repeated.
 */

export interface Highlight {
	start: number;
	end: number;
	role: 'subject' | 'object';
}

export interface TaskParagraph {
	text: string;
	highlights: Highlight[];
}

export interface TaskPayload {
	task_id: string;
	title: string;
	paragraphs: TaskParagraph[];
	subject: string;
	object: string;
	relation_name: string;
	statement: string;
	status: string;
	remaining: number;
}

export interface Progress {
	total: number;
	by_status: Record<string, number>;
	accepted: number;
	rejected: number;
	acceptance_rate: number;
	decisions: number;
}

export interface NextTaskResponse {
	task: TaskPayload | null;
	progress: Progress;
	role: string;
}

export interface DecisionAck {
	task_id: string;
	status: string;
	final_verdict: string | null;
	replayed: boolean;
}

export type Verdict = 'accept' | 'reject';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
	constructor(
		message: string,
		readonly status: number,
	) {
		super(message);
	}

	get isDuplicate(): boolean {
		return this.status === 409;
	}
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class ServiceClient {
	constructor(
		private readonly baseUrl: string,
		private readonly token: string,
		private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
		private readonly retryAttempts = 2,
		private readonly retryDelayMs = 150,
	) {}

	private headers(): Record<string, string> {
		return {
			'X-Annotator-Token': this.token,
			'Content-Type': 'application/json',
		};
	}

	async nextTask(skipTaskId?: string): Promise<NextTaskResponse> {
		const query = skipTaskId ? `?skip=${encodeURIComponent(skipTaskId)}` : '';
		const resp = await this.fetchImpl(`${this.baseUrl}/api/task/next${query}`, {
			headers: this.headers(),
		});
		if (!resp.ok) {
			throw new ServiceError(`next task failed: ${resp.status}`, resp.status);
		}
		return (await resp.json()) as NextTaskResponse;
	}

	async progress(): Promise<Progress> {
		const resp = await this.fetchImpl(`${this.baseUrl}/api/progress`, {
			headers: this.headers(),
		});
		if (!resp.ok) {
			throw new ServiceError(`progress failed: ${resp.status}`, resp.status);
		}
		return (await resp.json()) as Progress;
	}

	/**
	 * Submit one verdict. Network failures are retried with the same
	 * request id; HTTP errors are not retried (a 409 means this
	 * annotator already decided the task).
	 */
	async submitDecision(
		taskId: string,
		verdict: Verdict,
		requestId: string,
	): Promise<DecisionAck> {
		let lastError: unknown = null;
		for (let attempt = 0; attempt <= this.retryAttempts; attempt++) {
			try {
				const resp = await this.fetchImpl(
					`${this.baseUrl}/api/task/${encodeURIComponent(taskId)}/decision`,
					{
						method: 'POST',
						headers: this.headers(),
						body: JSON.stringify({ verdict, request_id: requestId }),
					},
				);
				if (!resp.ok) {
					throw new ServiceError(`decision failed: ${resp.status}`, resp.status);
				}
				return (await resp.json()) as DecisionAck;
			} catch (error) {
				if (error instanceof ServiceError) {
					throw error; // server answered; retrying would not change it
				}
				lastError = error;
				if (attempt < this.retryAttempts) {
					await sleep(this.retryDelayMs * (attempt + 1));
				}
			}
		}
		throw lastError instanceof Error
			? lastError
			: new Error('decision submission failed after retries');
	}
}

export function newRequestId(): string {
	const cryptoApi = globalThis.crypto;
	if (cryptoApi && 'randomUUID' in cryptoApi) {
		return cryptoApi.randomUUID();
	}
	return `req-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}
