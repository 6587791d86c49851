/** Viewport math mirroring the engine's transitions.
 *
 * The viewport is a slide-space center plus a scale in level-0 pixels per
 * screen pixel. These functions must stay numerically identical to the
 * server's; tests/fixtures pins them to engine-exported cases.
 */

import type { RectDTO, ViewportDTO } from "./types";

export interface Viewport {
	cx: number;
	cy: number;
	scale: number;
	screenW: number;
	screenH: number;
}

const SELECT_FILL_FRACTION = 0.9;

export function toDTO(vp: Viewport): ViewportDTO {
	return { cx: vp.cx, cy: vp.cy, scale: vp.scale, screen_w: vp.screenW, screen_h: vp.screenH };
}

export function fromDTO(d: ViewportDTO): Viewport {
	return { cx: d.cx, cy: d.cy, scale: d.scale, screenW: d.screen_w, screenH: d.screen_h };
}

export function visibleRect(vp: Viewport): { x0: number; y0: number; x1: number; y1: number } {
	const hw = (vp.scale * vp.screenW) / 2;
	const hh = (vp.scale * vp.screenH) / 2;
	return { x0: vp.cx - hw, y0: vp.cy - hh, x1: vp.cx + hw, y1: vp.cy + hh };
}

/** Positive-area overlap between the visible region and a slide-space rect. */
export function seesRect(vp: Viewport, r: RectDTO): boolean {
	const v = visibleRect(vp);
	return r.x < v.x1 && v.x0 < r.x + r.w && r.y < v.y1 && v.y0 < r.y + r.h;
}

export function screenToSlide(vp: Viewport, sx: number, sy: number): { x: number; y: number } {
	return {
		x: vp.cx + (sx - vp.screenW / 2) * vp.scale,
		y: vp.cy + (sy - vp.screenH / 2) * vp.scale,
	};
}

export function slideToScreen(vp: Viewport, x: number, y: number): { x: number; y: number } {
	return {
		x: vp.screenW / 2 + (x - vp.cx) / vp.scale,
		y: vp.screenH / 2 + (y - vp.cy) / vp.scale,
	};
}

/** Zoom and center so the rec fills 90% of the shorter screen edge. */
export function selectRecommendation(vp: Viewport, bounds: RectDTO): Viewport {
	const target = Math.max(bounds.w, bounds.h);
	return {
		cx: bounds.x + bounds.w / 2,
		cy: bounds.y + bounds.h / 2,
		scale: target / (SELECT_FILL_FRACTION * Math.min(vp.screenW, vp.screenH)),
		screenW: vp.screenW,
		screenH: vp.screenH,
	};
}

export type PanDirection = "N" | "S" | "E" | "W";

/** Discrete pan by one HPF cell, snapping to the nearest cell center. */
export function adjacentPan(
	vp: Viewport,
	direction: PanDirection,
	hpfPx: number,
	slideW: number,
	slideH: number,
): Viewport {
	const cols = Math.ceil(slideW / hpfPx);
	const rows = Math.ceil(slideH / hpfPx);
	const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
	let col = clamp(Math.round(vp.cx / hpfPx - 0.5), 0, cols - 1);
	let row = clamp(Math.round(vp.cy / hpfPx - 0.5), 0, rows - 1);
	if (direction === "E") col = clamp(col + 1, 0, cols - 1);
	if (direction === "W") col = clamp(col - 1, 0, cols - 1);
	if (direction === "S") row = clamp(row + 1, 0, rows - 1);
	if (direction === "N") row = clamp(row - 1, 0, rows - 1);
	return {
		cx: Math.min((col + 0.5) * hpfPx, slideW),
		cy: Math.min((row + 0.5) * hpfPx, slideH),
		scale: vp.scale,
		screenW: vp.screenW,
		screenH: vp.screenH,
	};
}

/** Continuous drag pan: screen-pixel deltas move the center against the drag. */
export function panBy(vp: Viewport, dxScreen: number, dyScreen: number): Viewport {
	return { ...vp, cx: vp.cx - dxScreen * vp.scale, cy: vp.cy - dyScreen * vp.scale };
}

/** Wheel zoom anchored at a screen point: the slide point under the cursor stays put. */
export function zoomAt(vp: Viewport, factor: number, sx: number, sy: number): Viewport {
	const anchor = screenToSlide(vp, sx, sy);
	const scale = vp.scale * factor;
	return {
		cx: anchor.x - (sx - vp.screenW / 2) * scale,
		cy: anchor.y - (sy - vp.screenH / 2) * scale,
		scale,
		screenW: vp.screenW,
		screenH: vp.screenH,
	};
}

/** Whether a screen point sits within `band` px of any canvas edge. */
export function edgeBand(
	vp: Viewport,
	sx: number,
	sy: number,
	band = 48,
): PanDirection | null {
	if (sx <= band) return "W";
	if (sx >= vp.screenW - band) return "E";
	if (sy <= band) return "N";
	if (sy >= vp.screenH - band) return "S";
	return null;
}
