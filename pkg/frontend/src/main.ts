/**
 * Browser entry point: token entry, session wiring, keyboard shortcuts.
 * The service base address defaults to the page's own origin (the
 * service serves this bundle), overridable with ?service=<url>.
 */
import { ServiceClient } from './api.js';
import { renderApp } from './render.js';
import { ReviewSession } from './session.js';

export function mountApp(root: HTMLElement, baseUrl: string, token: string): ReviewSession {
	const client = new ServiceClient(baseUrl, token);
	const session = new ReviewSession(client);
	const handlers = {
		onDecide: (verdict: 'accept' | 'reject') => void session.decide(verdict),
		onSkip: () => void session.skip(),
	};
	session.onChange((state) => renderApp(root, state, handlers));
	const doc = root.ownerDocument;
	doc.addEventListener('keydown', (event) => {
		if (event.key === 'a') handlers.onDecide('accept');
		if (event.key === 'r') handlers.onDecide('reject');
		if (event.key === 's') handlers.onSkip();
	});
	void session.start();
	return session;
}

function boot(): void {
	const doc = document;
	const root = doc.getElementById('app');
	if (!root) return;
	const params = new URLSearchParams(window.location.search);
	const baseUrl = params.get('service') ?? window.location.origin;

	const form = doc.createElement('div');
	form.className = 'token-entry';
	const label = doc.createElement('label');
	label.textContent = 'Session token: ';
	const input = doc.createElement('input');
	input.type = 'password';
	input.placeholder = 'paste your token';
	const button = doc.createElement('button');
	button.textContent = 'Start reviewing';
	button.addEventListener('click', () => {
		if (!input.value.trim()) return;
		mountApp(root, baseUrl, input.value.trim());
	});
	input.addEventListener('keydown', (event) => {
		if (event.key === 'Enter') button.click();
	});
	label.appendChild(input);
	form.appendChild(label);
	form.appendChild(button);
	root.textContent = '';
	root.appendChild(form);
	input.focus();
}

if (typeof window !== 'undefined' && typeof document !== 'undefined') {
	if (document.readyState === 'loading') {
		document.addEventListener('DOMContentLoaded', boot);
	} else {
		boot();
	}
}
