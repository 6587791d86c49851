/** Typed client for the engine's HTTP API. */

import type {
	NavEventDTO,
	RecommendationSet,
	ReportPoint,
	Session,
	SlideMeta,
	TrialMetrics,
	Weights,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
	constructor(
		public status: number,
		message: string,
	) {
		super(message);
	}
}

export class ApiClient {
	constructor(
		private baseUrl: string,
		private fetchImpl: FetchLike = (...args) => fetch(...args),
	) {}

	private async request<T>(path: string, init?: RequestInit): Promise<T> {
		const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
		if (!res.ok) {
			let detail = res.statusText;
			try {
				const body = (await res.json()) as { error?: string };
				if (body.error) detail = body.error;
			} catch {
				// non-JSON error body; keep the status text
			}
			throw new ApiError(res.status, detail);
		}
		return (await res.json()) as T;
	}

	async listSlides(): Promise<SlideMeta[]> {
		const body = await this.request<{ slides: SlideMeta[] }>("/api/slides");
		return body.slides;
	}

	getMeta(slideId: string): Promise<SlideMeta> {
		return this.request(`/api/slides/${slideId}/meta`);
	}

	tileUrl(slideId: string, level: number, col: number, row: number): string {
		return `${this.baseUrl}/api/slides/${slideId}/tiles/${level}/${col}_${row}.png`;
	}

	getRecommendations(slideId: string, weights: Weights): Promise<RecommendationSet> {
		const q = new URLSearchParams({
			w_cell: String(weights.w_cell),
			w_prolif: String(weights.w_prolif),
			w_mitosis: String(weights.w_mitosis),
			sensitivity: String(weights.sensitivity),
		});
		return this.request(`/api/slides/${slideId}/recommendations?${q}`);
	}

	createSession(slideId: string, condition: "manual" | "navipath"): Promise<Session> {
		return this.request("/api/sessions", {
			method: "POST",
			headers: { "Content-Type": "application/json" },
			body: JSON.stringify({ slide_id: slideId, condition }),
		});
	}

	postEvent(sessionId: string, event: NavEventDTO): Promise<{ accepted: number }> {
		return this.request(`/api/sessions/${sessionId}/events`, {
			method: "POST",
			headers: { "Content-Type": "application/json" },
			body: JSON.stringify(event),
		});
	}

	postReport(sessionId: string, points: ReportPoint[]): Promise<{ points: number }> {
		return this.request(`/api/sessions/${sessionId}/report`, {
			method: "POST",
			headers: { "Content-Type": "application/json" },
			body: JSON.stringify({ format_version: 1, points }),
		});
	}

	getMetrics(sessionId: string): Promise<TrialMetrics> {
		return this.request(`/api/sessions/${sessionId}/metrics`);
	}
}

/** Ordered, retrying event poster; events never overtake one another. */
export class EventQueue {
	private queue: NavEventDTO[] = [];
	private sending = false;
	private nextClientId = 1;

	constructor(
		private client: ApiClient,
		private sessionId: string,
		private maxRetries = 3,
		private onError: (err: unknown) => void = () => {},
	) {}

	get pending(): number {
		return this.queue.length;
	}

	enqueue(event: NavEventDTO): void {
		event.payload = { ...event.payload, client_event_id: this.nextClientId++ };
		this.queue.push(event);
		void this.flush();
	}

	async flush(): Promise<void> {
		if (this.sending) return;
		this.sending = true;
		try {
			while (this.queue.length > 0) {
				const ev = this.queue[0]!;
				let sent = false;
				for (let attempt = 0; attempt <= this.maxRetries && !sent; attempt++) {
					try {
						await this.client.postEvent(this.sessionId, ev);
						sent = true;
					} catch (err) {
						if (attempt === this.maxRetries) {
							this.onError(err);
							this.queue.length = 0;
							return;
						}
						await new Promise((r) => setTimeout(r, 2 ** attempt * 100));
					}
				}
				this.queue.shift();
			}
		} finally {
			this.sending = false;
		}
	}

	/** Resolves once everything queued so far has been posted. */
	async drain(): Promise<void> {
		while (this.queue.length > 0 || this.sending) {
			await this.flush();
			await new Promise((r) => setTimeout(r, 10));
		}
	}
}

export async function loadConfig(
	fetchImpl: FetchLike = (...args) => fetch(...args),
): Promise<{ api_base_url: string }> {
	const res = await fetchImpl("config.json");
	if (!res.ok) return { api_base_url: "" };
	return (await res.json()) as { api_base_url: string };
}
