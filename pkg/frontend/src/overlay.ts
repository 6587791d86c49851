/** Overlay drawing split into a pure command builder and a thin painter,
 * so tests can assert on what would be drawn without a canvas.
 */

import { computeCues, type Cue } from "./cues";
import { allHpfRecs, type UiState } from "./state";
import { slideToScreen, seesRect, type Viewport } from "./viewport";

export type DrawCmd =
	| { kind: "box"; level: string; id: string; x: number; y: number; w: number; h: number; index: number }
	| { kind: "cue"; recId: string; index: number; x: number; y: number }
	| { kind: "report"; x: number; y: number };

export interface OverlayFrame {
	commands: DrawCmd[];
	cues: Cue[];
}

export function buildOverlay(state: UiState): OverlayFrame {
	const commands: DrawCmd[] = [];
	const cues: Cue[] = [];
	const vp = state.viewport;
	if (state.recs) {
		const pushBox = (rec: {
			id: string;
			index: number;
			level: string;
			bounds: { x: number; y: number; w: number; h: number };
		}) => {
			if (!seesRect(vp, rec.bounds)) return;
			const tl = slideToScreen(vp, rec.bounds.x, rec.bounds.y);
			commands.push({
				kind: "box",
				level: rec.level,
				id: rec.id,
				x: tl.x,
				y: tl.y,
				w: rec.bounds.w / vp.scale,
				h: rec.bounds.h / vp.scale,
				index: rec.index,
			});
		};
		for (const loc of state.recs.locals) {
			if (state.levelToggles.local) pushBox(loc);
			for (const hpf of loc.hpfs) {
				if (state.levelToggles.hpf) pushBox(hpf);
				if (state.levelToggles.cell) hpf.cells.forEach(pushBox);
			}
		}
		if (state.levelToggles.hpf) {
			for (const cue of computeCues(vp, allHpfRecs(state.recs))) {
				cues.push(cue);
				commands.push({
					kind: "cue",
					recId: cue.recId,
					index: cue.index,
					x: cue.edgePoint[0],
					y: cue.edgePoint[1],
				});
			}
		}
	}
	for (const p of state.reportPoints) {
		const s = slideToScreen(vp, p.x, p.y);
		if (s.x >= 0 && s.x <= vp.screenW && s.y >= 0 && s.y <= vp.screenH) {
			commands.push({ kind: "report", x: s.x, y: s.y });
		}
	}
	return { commands, cues };
}

const LEVEL_COLORS: Record<string, string> = {
	local: "#d03030",
	hpf: "#e04848",
	cell: "#f06060",
};

export function paintOverlay(ctx: CanvasRenderingContext2D, frame: OverlayFrame): void {
	for (const cmd of frame.commands) {
		if (cmd.kind === "box") {
			ctx.strokeStyle = LEVEL_COLORS[cmd.level] ?? "#d03030";
			ctx.lineWidth = cmd.level === "local" ? 3 : 2;
			ctx.strokeRect(cmd.x, cmd.y, cmd.w, cmd.h);
			// Index badge, top-left corner.
			const label = String(cmd.index);
			ctx.font = "bold 13px sans-serif";
			const pad = 4;
			const width = ctx.measureText(label).width + 2 * pad;
			ctx.fillStyle = LEVEL_COLORS[cmd.level] ?? "#d03030";
			ctx.fillRect(cmd.x, cmd.y, width, 18);
			ctx.fillStyle = "#fff";
			ctx.fillText(label, cmd.x + pad, cmd.y + 13);
		} else if (cmd.kind === "cue") {
			ctx.beginPath();
			ctx.arc(cmd.x, cmd.y, 11, 0, 2 * Math.PI);
			ctx.fillStyle = "#2958c9";
			ctx.fill();
			ctx.fillStyle = "#fff";
			ctx.font = "bold 11px sans-serif";
			ctx.textAlign = "center";
			ctx.fillText(String(cmd.index), cmd.x, cmd.y + 4);
			ctx.textAlign = "start";
		} else {
			ctx.beginPath();
			ctx.arc(cmd.x, cmd.y, 5, 0, 2 * Math.PI);
			ctx.strokeStyle = "#0a8f3c";
			ctx.lineWidth = 2;
			ctx.stroke();
		}
	}
}
