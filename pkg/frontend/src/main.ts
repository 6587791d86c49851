/** Viewer wiring: canvas, slide-bars, level toggles, reporting, explanations.
 *
 * Gestures follow the examination conventions: double-click selects the
 * recommendation under the cursor (double-click on a canvas edge pans one HPF
 * step instead), a single click at cell magnification reports a mitosis, the
 * wheel zooms, dragging pans, and clicking a numbered edge cue hops to that
 * recommendation. Every viewport-changing gesture posts exactly one NavEvent.
 */

import { ApiClient, EventQueue, loadConfig } from "./api";
import { cueAt } from "./cues";
import { buildOverlay, paintOverlay, type OverlayFrame } from "./overlay";
import {
	addReportPoint,
	allHpfRecs,
	applyRecs,
	debounce,
	findRec,
	initialState,
	navEvent,
	needsRefetch,
	recAtPoint,
	setSlide,
	setViewport,
	setWeight,
	toggleLevel,
	undoReportPoint,
	type UiState,
	type WeightKey,
} from "./state";
import type { DialogExplanation, EventKind } from "./types";
import {
	adjacentPan,
	edgeBand,
	panBy,
	screenToSlide,
	selectRecommendation,
	zoomAt,
} from "./viewport";
import { TileRenderer } from "./tiles";

const HPF_PX = 1680;
const CELL_SCALE_MAX = 0.6; // below this the user is adjudicating single cells

function el<T extends HTMLElement>(id: string): T {
	const node = document.getElementById(id);
	if (!node) throw new Error(`missing element #${id}`);
	return node as T;
}

async function boot(): Promise<void> {
	const config = await loadConfig();
	const api = new ApiClient(config.api_base_url);
	const canvas = el<HTMLCanvasElement>("slide-canvas");
	const ctx = canvas.getContext("2d");
	if (!ctx) throw new Error("canvas 2d context unavailable");

	let state: UiState = initialState(Date.now(), canvas.width, canvas.height);
	let frame: OverlayFrame = { commands: [], cues: [] };
	const banner = el<HTMLDivElement>("banner");

	const slides = await api.listSlides();
	const first = slides[0];
	if (!first) {
		banner.textContent = "no slides in the store; run gen-slide + score first";
		return;
	}
	state = setSlide(state, await api.getMeta(first.id));
	const session = await api.createSession(first.id, "navipath");
	const queue = new EventQueue(api, session.id, 3, (err) => {
		banner.textContent = `event post failed: ${String(err)}`;
	});
	el<HTMLSpanElement>("session-label").textContent = `${first.id} / ${session.id.slice(0, 8)}`;

	const tiles = new TileRenderer(api, () => render());

	function now(): number {
		return Date.now() - state.sessionStartMs;
	}

	function record(kind: EventKind, payload: Record<string, unknown> = {}): void {
		queue.enqueue(navEvent(state, kind, now(), payload));
	}

	function render(): void {
		if (!state.slide || !ctx) return;
		tiles.paint(ctx, state.viewport, state.slide);
		frame = buildOverlay(state);
		paintOverlay(ctx, frame);
		el<HTMLSpanElement>("report-count").textContent = String(state.reportPoints.length);
	}

	function showDialog(explanation: DialogExplanation): void {
		el<HTMLDivElement>("explanation").textContent =
			`Cellular rating: ${explanation.cellular_rating} (${explanation.n_hpfs}HPF) | ` +
			`Proliferative rating: ${explanation.prolif_rating} | ` +
			`Average mitosis: ${explanation.avg_mitosis}`;
	}

	const refetchRecs = debounce(async () => {
		if (!state.slide || !needsRefetch(state)) return;
		try {
			const recs = await api.getRecommendations(state.slide.id, state.weights);
			state = applyRecs(state, recs);
			banner.textContent = "";
			record("weights_change", { weights: { ...recs.weights } });
			render();
		} catch (err) {
			banner.textContent = `recommendations unavailable: ${String(err)}`;
		}
	}, 250);

	// Initial fetch happens immediately.
	const recs = await api.getRecommendations(first.id, state.weights);
	state = applyRecs(state, recs);

	// Slide-bars.
	const sliderIds: [string, WeightKey][] = [
		["slider-cell", "w_cell"],
		["slider-prolif", "w_prolif"],
		["slider-mitosis", "w_mitosis"],
		["slider-sensitivity", "sensitivity"],
	];
	for (const [id, key] of sliderIds) {
		const input = el<HTMLInputElement>(id);
		input.value = String(state.weights[key]);
		input.addEventListener("input", () => {
			state = setWeight(state, key, Number(input.value));
			refetchRecs();
		});
	}

	// Level toggles.
	for (const level of ["local", "hpf", "cell"] as const) {
		const box = el<HTMLInputElement>(`toggle-${level}`);
		box.checked = true;
		box.addEventListener("change", () => {
			state = toggleLevel(state, level);
			render();
		});
	}

	// Mouse interactions.
	let dragging = false;
	let moved = false;
	let last: [number, number] = [0, 0];
	canvas.addEventListener("mousedown", (ev) => {
		dragging = true;
		moved = false;
		last = [ev.offsetX, ev.offsetY];
	});
	canvas.addEventListener("mousemove", (ev) => {
		if (!dragging) return;
		const dx = ev.offsetX - last[0];
		const dy = ev.offsetY - last[1];
		if (Math.abs(dx) + Math.abs(dy) > 2) moved = true;
		state = setViewport(state, panBy(state.viewport, dx, dy));
		last = [ev.offsetX, ev.offsetY];
		render();
	});
	canvas.addEventListener("mouseup", () => {
		if (dragging && moved) record("pan");
		dragging = false;
	});
	canvas.addEventListener("wheel", (ev) => {
		ev.preventDefault();
		const factor = ev.deltaY > 0 ? 1.25 : 0.8;
		state = setViewport(state, zoomAt(state.viewport, factor, ev.offsetX, ev.offsetY));
		record("zoom", { factor });
		render();
	});

	canvas.addEventListener("click", (ev) => {
		if (moved) return;
		// Cue hit first: hop to the remote recommendation.
		const cue = cueAt(frame.cues, ev.offsetX, ev.offsetY);
		if (cue && state.recs) {
			const rec = findRec(state.recs, cue.recId);
			if (rec) {
				state = setViewport(state, selectRecommendation(state.viewport, rec.bounds));
				record("cue_hop", { rec_id: cue.recId, index: cue.index });
				render();
			}
			return;
		}
		// At cell magnification a plain click reports a mitosis.
		if (state.viewport.scale <= CELL_SCALE_MAX && state.slide) {
			const p = screenToSlide(state.viewport, ev.offsetX, ev.offsetY);
			const before = state.reportPoints.length;
			state = addReportPoint(state, p.x, p.y, now());
			if (state.reportPoints.length === before) {
				banner.textContent = "point outside the slide: ignored";
				return;
			}
			record("report_mitosis", { x: p.x, y: p.y });
			render();
		}
	});

	canvas.addEventListener("dblclick", (ev) => {
		ev.preventDefault();
		if (!state.slide) return;
		const band = edgeBand(state.viewport, ev.offsetX, ev.offsetY);
		if (band) {
			state = setViewport(
				state,
				adjacentPan(state.viewport, band, HPF_PX, state.slide.width0, state.slide.height0),
			);
			record("edge_pan", { direction: band });
			render();
			return;
		}
		if (!state.recs) return;
		const p = screenToSlide(state.viewport, ev.offsetX, ev.offsetY);
		const rec = recAtPoint(state.recs, p.x, p.y, state.levelToggles);
		if (!rec) return;
		const currentRecs = state.recs;
		state = { ...state, activeRecId: rec.id };
		state = setViewport(state, selectRecommendation(state.viewport, rec.bounds));
		record("select_rec", { rec_id: rec.id });
		const full = findRec(currentRecs, rec.id);
		if (full && "explanation" in full) {
			const exp = (full as { explanation: DialogExplanation }).explanation;
			if (exp.variant === "dialog") showDialog(exp);
		}
		render();
	});

	// Reporting controls.
	el<HTMLButtonElement>("undo-report").addEventListener("click", () => {
		state = undoReportPoint(state);
		render();
	});
	el<HTMLButtonElement>("submit-report").addEventListener("click", async () => {
		await queue.drain();
		await api.postReport(session.id, state.reportPoints);
		try {
			const metrics = await api.getMetrics(session.id);
			el<HTMLDivElement>("metrics").textContent = JSON.stringify(metrics, null, 1);
		} catch (err) {
			banner.textContent = `metrics unavailable: ${String(err)}`;
		}
	});

	// The first event pins the initial viewport for replay.
	record("zoom", { initial: true });
	render();
}

boot().catch((err) => {
	const banner = document.getElementById("banner");
	if (banner) banner.textContent = `viewer failed to start: ${String(err)}`;
});
