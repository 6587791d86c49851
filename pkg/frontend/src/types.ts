/** Wire types mirroring the engine's JSON schemas (format_version 1). */

export interface SlideMeta {
	format_version: number;
	id: string;
	width0: number;
	height0: number;
	levels: number;
	tile_size: number;
	mpp: number;
}

export interface RectDTO {
	x: number;
	y: number;
	w: number;
	h: number;
}

export interface Weights {
	w_cell: number;
	w_prolif: number;
	w_mitosis: number;
	sensitivity: number;
}

/** Slider sensitivity whose threshold is the engine's documented default. */
export const DEFAULT_WEIGHTS: Weights = {
	w_cell: 1.0,
	w_prolif: 1.0,
	w_mitosis: 1.0,
	sensitivity: 2 / 9,
};

export interface DialogExplanation {
	variant: "dialog";
	cellular_rating: string;
	prolif_rating: string;
	avg_mitosis: number;
	n_hpfs: number;
}

export interface CardExplanation {
	variant: "card";
	prob: number;
	confidence_label: string;
	saliency_png_b64: string;
	saliency_source: string;
}

export interface CellRec {
	id: string;
	index: number;
	level: "cell";
	bounds: RectDTO;
	score: number;
	parent_id: string;
	explanation: CardExplanation;
}

export interface HpfRec {
	id: string;
	index: number;
	level: "hpf";
	bounds: RectDTO;
	score: number;
	parent_id: string;
	explanation: DialogExplanation;
	cells: CellRec[];
}

export interface LocalRec {
	id: string;
	index: number;
	level: "local";
	bounds: RectDTO;
	score: number;
	explanation: DialogExplanation;
	hpf_slots: number;
	hpfs: HpfRec[];
}

export interface RecommendationSet {
	format_version: number;
	slide_id: string;
	weights: Weights;
	tau: number;
	cells_total: number;
	locals: LocalRec[];
}

export type EventKind =
	| "pan"
	| "zoom"
	| "select_rec"
	| "edge_pan"
	| "cue_hop"
	| "report_mitosis"
	| "weights_change";

export interface ViewportDTO {
	cx: number;
	cy: number;
	scale: number;
	screen_w: number;
	screen_h: number;
}

export interface NavEventDTO {
	t: number;
	kind: EventKind;
	viewport: ViewportDTO;
	payload: Record<string, unknown>;
}

export interface ReportPoint {
	x: number;
	y: number;
	t: number;
}

export interface Session {
	format_version: number;
	id: string;
	slide_id: string;
	condition: "manual" | "navipath";
	created_at: string;
	weights: Weights;
	status: "active" | "closed";
}

export interface TrialMetrics {
	format_version: number;
	precision: number;
	recall: number;
	f1: number;
	duration_s: number;
	efficiency: number;
	visited_mr_hpf: number;
	visited_mr_mm2: number;
	visited_area_mm2: number;
	gt_visited: number;
	interaction_counts: Record<string, number>;
	final_viewport: ViewportDTO;
}
