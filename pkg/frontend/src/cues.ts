/** Edge-cue geometry for off-screen HPF recommendations.
 *
 * Ports the engine's cue computation one-to-one: exact boundary intersection
 * with the binding coordinate forced to the extreme, then deterministic
 * outward offsetting of colliding cues in ascending index order. The fixture
 * suite asserts equality with engine-exported cases.
 */

import type { HpfRec } from "./types";
import { seesRect, type Viewport } from "./viewport";

export const CUE_COLLISION_PX = 16;

export interface Cue {
	recId: string;
	index: number;
	edgePoint: [number, number];
	direction: [number, number];
}

export function computeCues(vp: Viewport, hpfRecs: readonly HpfRec[]): Cue[] {
	const hw = vp.screenW / 2;
	const hh = vp.screenH / 2;
	const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
	const raw: Cue[] = [];
	const ordered = [...hpfRecs].sort((a, b) => a.index - b.index);
	for (const rec of ordered) {
		if (seesRect(vp, rec.bounds)) continue;
		const dx = rec.bounds.x + rec.bounds.w / 2 - vp.cx;
		const dy = rec.bounds.y + rec.bounds.h / 2 - vp.cy;
		const norm = Math.hypot(dx, dy);
		if (norm === 0) continue;
		const dxs = dx / vp.scale;
		const dys = dy / vp.scale;
		const tx = dxs !== 0 ? hw / Math.abs(dxs) : Infinity;
		const ty = dys !== 0 ? hh / Math.abs(dys) : Infinity;
		let ex: number;
		let ey: number;
		if (tx <= ty) {
			ex = dxs > 0 ? vp.screenW : 0;
			ey = clamp(hh + dys * tx, 0, vp.screenH);
		} else {
			ey = dys > 0 ? vp.screenH : 0;
			ex = clamp(hw + dxs * ty, 0, vp.screenW);
		}
		raw.push({
			recId: rec.id,
			index: rec.index,
			edgePoint: [ex, ey],
			direction: [dx / norm, dy / norm],
		});
	}

	const placed: Cue[] = [];
	for (const cue of raw) {
		let [ex, ey] = cue.edgePoint;
		const onVertical = ex === 0 || ex === vp.screenW;
		for (let i = 0; i < 64; i++) {
			const hit = placed.find(
				(p) => Math.hypot(p.edgePoint[0] - ex, p.edgePoint[1] - ey) < CUE_COLLISION_PX,
			);
			if (!hit) break;
			if (onVertical) {
				const step = ey >= hit.edgePoint[1] ? CUE_COLLISION_PX : -CUE_COLLISION_PX;
				ey = clamp(ey + step, 0, vp.screenH);
			} else {
				const step = ex >= hit.edgePoint[0] ? CUE_COLLISION_PX : -CUE_COLLISION_PX;
				ex = clamp(ex + step, 0, vp.screenW);
			}
		}
		placed.push({ ...cue, edgePoint: [ex, ey] });
	}
	return placed;
}

/** The cue under a screen point, if any (hit radius matches the drawn disc). */
export function cueAt(cues: readonly Cue[], sx: number, sy: number, radius = 12): Cue | null {
	for (const cue of cues) {
		if (Math.hypot(cue.edgePoint[0] - sx, cue.edgePoint[1] - sy) <= radius) return cue;
	}
	return null;
}
