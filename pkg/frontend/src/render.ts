/**
 * DOM rendering. Pure functions from session state to elements; the
 * document text is reassembled from the service's paragraphs and
 * character offsets with no client-side tokenization or rewriting.
 */
import type { TaskParagraph, TaskPayload, Progress } from './api.js';
import type { SessionState } from './session.js';

function el<K extends keyof HTMLElementTagNameMap>(
	doc: Document,
	tag: K,
	className?: string,
	text?: string,
): HTMLElementTagNameMap[K] {
	const node = doc.createElement(tag);
	if (className) node.className = className;
	if (text !== undefined) node.textContent = text;
	return node;
}

export function renderParagraph(doc: Document, paragraph: TaskParagraph): HTMLElement {
	const p = el(doc, 'p', 'doc-paragraph');
	const ordered = [...paragraph.highlights].sort((a, b) => a.start - b.start);
	let cursor = 0;
	for (const highlight of ordered) {
		const start = Math.max(cursor, highlight.start);
		const end = Math.min(paragraph.text.length, highlight.end);
		if (start >= end) continue;
		if (start > cursor) {
			p.appendChild(doc.createTextNode(paragraph.text.slice(cursor, start)));
		}
		const mark = el(
			doc,
			'mark',
			highlight.role === 'subject' ? 'hl-subject' : 'hl-object',
			paragraph.text.slice(start, end),
		);
		p.appendChild(mark);
		cursor = end;
	}
	if (cursor < paragraph.text.length) {
		p.appendChild(doc.createTextNode(paragraph.text.slice(cursor)));
	}
	return p;
}

export function renderTask(doc: Document, task: TaskPayload, role: string): HTMLElement {
	const root = el(doc, 'div', 'task-view');
	if (role === 'adjudicator') {
		root.appendChild(
			el(
				doc,
				'div',
				'banner-adjudicate',
				'Conflict resolution: the two annotators disagreed on this task.',
			),
		);
	}
	const header = el(doc, 'div', 'task-header');
	header.appendChild(el(doc, 'span', 'badge-subject', task.subject));
	header.appendChild(el(doc, 'span', 'relation-name', task.relation_name));
	header.appendChild(el(doc, 'span', 'badge-object', task.object));
	root.appendChild(header);
	root.appendChild(el(doc, 'p', 'statement', task.statement));
	root.appendChild(
		el(doc, 'p', 'question', 'Can this statement be inferred from the document below?'),
	);
	const body = el(doc, 'div', 'doc-body');
	for (const paragraph of task.paragraphs) {
		body.appendChild(renderParagraph(doc, paragraph));
	}
	root.appendChild(body);
	root.appendChild(
		el(doc, 'div', 'queue-note', `${task.remaining} task(s) in your queue`),
	);
	return root;
}

export function renderCompletion(doc: Document, progress: Progress | null): HTMLElement {
	const root = el(doc, 'div', 'completion');
	root.appendChild(el(doc, 'h2', undefined, 'All done'));
	if (progress) {
		const pct = (100 * progress.acceptance_rate).toFixed(2);
		root.appendChild(
			el(
				doc,
				'p',
				'progress-summary',
				`${progress.by_status['resolved'] ?? 0} of ${progress.total} tasks resolved; ` +
					`acceptance rate ${pct}%`,
			),
		);
	}
	return root;
}

export function renderApp(
	container: HTMLElement,
	state: SessionState,
	handlers: {
		onDecide: (verdict: 'accept' | 'reject') => void;
		onSkip?: () => void;
	},
): void {
	const doc = container.ownerDocument;
	container.textContent = '';

	if (state.phase === 'loading') {
		container.appendChild(el(doc, 'p', 'loading', 'Loading…'));
		return;
	}
	if (state.phase === 'error') {
		container.appendChild(el(doc, 'p', 'error', state.error ?? 'Unknown error'));
		return;
	}
	if (state.phase === 'done') {
		container.appendChild(renderCompletion(doc, state.progress));
		return;
	}
	if (state.task === null) return;

	if (state.notice) {
		container.appendChild(el(doc, 'div', 'notice', state.notice));
	}
	container.appendChild(renderTask(doc, state.task, state.role));

	const controls = el(doc, 'div', 'controls');
	const accept = el(doc, 'button', 'btn-accept', 'Accept (a)');
	accept.addEventListener('click', () => handlers.onDecide('accept'));
	const reject = el(doc, 'button', 'btn-reject', 'Reject (r)');
	reject.addEventListener('click', () => handlers.onDecide('reject'));
	controls.appendChild(accept);
	controls.appendChild(reject);
	if (handlers.onSkip) {
		const skip = el(doc, 'button', 'btn-skip', 'Skip (s)');
		skip.addEventListener('click', () => handlers.onSkip!());
		controls.appendChild(skip);
	}
	container.appendChild(controls);
}
