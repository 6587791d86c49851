/** UI state and pure reducers.
 *
 * The client never ranks anything itself: every ordering on screen comes from
 * the recommendation response for the current weights. State changes that
 * move the viewport produce exactly one NavEvent, recorded through the
 * `events` list the caller drains into the EventQueue.
 */

import type {
	EventKind,
	NavEventDTO,
	RecommendationSet,
	ReportPoint,
	SlideMeta,
	Weights,
} from "./types";
import { DEFAULT_WEIGHTS } from "./types";
import { toDTO, type Viewport } from "./viewport";

export type WeightKey = "w_cell" | "w_prolif" | "w_mitosis" | "sensitivity";

export interface LevelToggles {
	local: boolean;
	hpf: boolean;
	cell: boolean;
}

export interface UiState {
	slide: SlideMeta | null;
	viewport: Viewport;
	weights: Weights;
	fetchedWeights: Weights | null; // weights of the recs currently shown
	levelToggles: LevelToggles;
	recs: RecommendationSet | null;
	activeRecId: string | null;
	reportPoints: ReportPoint[];
	sessionStartMs: number;
}

export function initialState(nowMs: number, screenW = 1000, screenH = 1000): UiState {
	return {
		slide: null,
		viewport: { cx: 0, cy: 0, scale: 1, screenW, screenH },
		weights: { ...DEFAULT_WEIGHTS },
		fetchedWeights: null,
		levelToggles: { local: true, hpf: true, cell: true },
		recs: null,
		activeRecId: null,
		reportPoints: [],
		sessionStartMs: nowMs,
	};
}

export function weightsEqual(a: Weights | null, b: Weights | null): boolean {
	if (a === null || b === null) return a === b;
	return (
		a.w_cell === b.w_cell &&
		a.w_prolif === b.w_prolif &&
		a.w_mitosis === b.w_mitosis &&
		a.sensitivity === b.sensitivity
	);
}

export function setSlide(state: UiState, slide: SlideMeta): UiState {
	return {
		...state,
		slide,
		viewport: {
			...state.viewport,
			cx: slide.width0 / 2,
			cy: slide.height0 / 2,
			scale: Math.max(slide.width0 / state.viewport.screenW, slide.height0 / state.viewport.screenH),
		},
	};
}

export function setWeight(state: UiState, key: WeightKey, value: number): UiState {
	const clamped = Math.min(Math.max(value, 0), 1);
	return { ...state, weights: { ...state.weights, [key]: clamped } };
}

/** The debounced fetch only fires when weights actually changed. */
export function needsRefetch(state: UiState): boolean {
	return !weightsEqual(state.weights, state.fetchedWeights);
}

export function applyRecs(state: UiState, recs: RecommendationSet): UiState {
	const next = { ...state, recs, fetchedWeights: { ...recs.weights } };
	if (state.activeRecId && !findRec(recs, state.activeRecId)) next.activeRecId = null;
	return next;
}

export function toggleLevel(state: UiState, level: keyof LevelToggles): UiState {
	return {
		...state,
		levelToggles: { ...state.levelToggles, [level]: !state.levelToggles[level] },
	};
}

export function setViewport(state: UiState, viewport: Viewport): UiState {
	return { ...state, viewport };
}

export function addReportPoint(state: UiState, x: number, y: number, t: number): UiState {
	if (
		state.slide &&
		(x < 0 || y < 0 || x >= state.slide.width0 || y >= state.slide.height0)
	) {
		return state; // outside the slide: ignored
	}
	return { ...state, reportPoints: [...state.reportPoints, { x, y, t }] };
}

export function undoReportPoint(state: UiState): UiState {
	return { ...state, reportPoints: state.reportPoints.slice(0, -1) };
}

export function navEvent(
	state: UiState,
	kind: EventKind,
	t: number,
	payload: Record<string, unknown> = {},
): NavEventDTO {
	return { t, kind, viewport: toDTO(state.viewport), payload };
}

export function findRec(
	recs: RecommendationSet,
	id: string,
): { level: "local" | "hpf" | "cell"; bounds: { x: number; y: number; w: number; h: number } } | null {
	for (const loc of recs.locals) {
		if (loc.id === id) return loc;
		for (const hpf of loc.hpfs) {
			if (hpf.id === id) return hpf;
			for (const cell of hpf.cells) {
				if (cell.id === id) return cell;
			}
		}
	}
	return null;
}

export function allHpfRecs(recs: RecommendationSet) {
	return recs.locals
		.slice()
		.sort((a, b) => a.index - b.index)
		.flatMap((loc) => loc.hpfs.slice().sort((a, b) => a.index - b.index));
}

/** Top-most recommendation whose bounds contain a slide point, smallest level first. */
export function recAtPoint(
	recs: RecommendationSet,
	x: number,
	y: number,
	toggles: LevelToggles,
): { id: string; level: string; bounds: { x: number; y: number; w: number; h: number } } | null {
	const contains = (b: { x: number; y: number; w: number; h: number }) =>
		x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
	if (toggles.cell) {
		for (const loc of recs.locals)
			for (const hpf of loc.hpfs)
				for (const cell of hpf.cells) if (contains(cell.bounds)) return cell;
	}
	if (toggles.hpf) {
		for (const loc of recs.locals)
			for (const hpf of loc.hpfs) if (contains(hpf.bounds)) return hpf;
	}
	if (toggles.local) {
		for (const loc of recs.locals) if (contains(loc.bounds)) return loc;
	}
	return null;
}

export function debounce<A extends unknown[]>(
	fn: (...args: A) => void,
	ms: number,
): (...args: A) => void {
	let timer: ReturnType<typeof setTimeout> | null = null;
	return (...args: A) => {
		if (timer !== null) clearTimeout(timer);
		timer = setTimeout(() => {
			timer = null;
			fn(...args);
		}, ms);
	};
}
