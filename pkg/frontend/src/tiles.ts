/** Pyramid tile selection and canvas painting. */

import type { ApiClient } from "./api";
import type { SlideMeta } from "./types";
import { visibleRect, type Viewport } from "./viewport";

/** Finest pyramid level whose downsample factor does not exceed the scale. */
export function levelForScale(scale: number, levels: number): number {
	let level = 0;
	while (level + 1 < levels && (1 << (level + 1)) <= scale) level++;
	return level;
}

export interface TilePlacement {
	level: number;
	col: number;
	row: number;
	/** Destination rect in screen pixels. */
	sx: number;
	sy: number;
	size: number;
}

export function visibleTiles(vp: Viewport, meta: SlideMeta): TilePlacement[] {
	const level = levelForScale(vp.scale, meta.levels);
	const factor = 1 << level;
	const tileSlidePx = meta.tile_size * factor;
	const v = visibleRect(vp);
	const x0 = Math.max(v.x0, 0);
	const y0 = Math.max(v.y0, 0);
	const x1 = Math.min(v.x1, meta.width0);
	const y1 = Math.min(v.y1, meta.height0);
	if (x1 <= x0 || y1 <= y0) return [];
	const cols = Math.ceil(Math.ceil(meta.width0 / factor) / meta.tile_size);
	const rows = Math.ceil(Math.ceil(meta.height0 / factor) / meta.tile_size);
	const out: TilePlacement[] = [];
	const c0 = Math.floor(x0 / tileSlidePx);
	const c1 = Math.min(Math.ceil(x1 / tileSlidePx), cols);
	const r0 = Math.floor(y0 / tileSlidePx);
	const r1 = Math.min(Math.ceil(y1 / tileSlidePx), rows);
	for (let row = r0; row < r1; row++) {
		for (let col = c0; col < c1; col++) {
			out.push({
				level,
				col,
				row,
				sx: vp.screenW / 2 + (col * tileSlidePx - vp.cx) / vp.scale,
				sy: vp.screenH / 2 + (row * tileSlidePx - vp.cy) / vp.scale,
				size: tileSlidePx / vp.scale,
			});
		}
	}
	return out;
}

/** Keeps decoded tiles around and repaints when new ones arrive. */
export class TileRenderer {
	private cache = new Map<string, HTMLImageElement>();

	constructor(
		private api: ApiClient,
		private onTileLoaded: () => void,
	) {}

	paint(ctx: CanvasRenderingContext2D, vp: Viewport, meta: SlideMeta): void {
		ctx.fillStyle = "#ffffff";
		ctx.fillRect(0, 0, vp.screenW, vp.screenH);
		for (const t of visibleTiles(vp, meta)) {
			const key = `${t.level}/${t.col}_${t.row}`;
			let img = this.cache.get(key);
			if (!img) {
				img = new Image();
				img.src = this.api.tileUrl(meta.id, t.level, t.col, t.row);
				img.onload = () => this.onTileLoaded();
				this.cache.set(key, img);
			}
			if (img.complete && img.naturalWidth > 0) {
				ctx.drawImage(img, t.sx, t.sy, t.size, t.size);
			}
		}
	}
}
