/**
 * Figure builders: trajectory overlay, control profiles, distance panels.
 *
 * Every figure is a pure function of the loaded run data, so re-rendering
 * identical inputs produces identical SVG strings.
 */
import { RunData } from "./schema.js";
import {
  CONSTRAINT_COLOR, Extent, Panel, SERIES_COLORS, document, extentOf,
  mergeExtents,
} from "./svg.js";

export type FigureKind = "trajectory" | "controls" | "distances";

export function renderFigure(kind: FigureKind, runs: RunData[]): string {
  switch (kind) {
    case "trajectory":
      return renderTrajectory(runs);
    case "controls":
      return renderControls(runs);
    case "distances":
      return renderDistances(runs);
    default:
      throw new Error(`unknown figure kind: ${kind satisfies never}`);
  }
}

function col(run: RunData, name: string): number[] {
  const values = run.series.get(name);
  if (!values) throw new Error(`missing column ${name}`);
  return values;
}

export function renderTrajectory(runs: RunData[]): string {
  const scene = runs[0].summary.scene;
  const xs: number[] = [];
  const ys: number[] = [];
  for (const pts of [scene.boundaries.left, scene.boundaries.right]) {
    for (const [x, y] of pts) {
      xs.push(x);
      ys.push(y);
    }
  }
  for (const run of runs) {
    xs.push(...col(run, "x"));
    ys.push(...col(run, "y"));
  }
  let extent = extentOf(xs, ys, 0.04);
  // keep an even aspect so the road is not distorted
  const span = Math.max(extent.xMax - extent.xMin, extent.yMax - extent.yMin);
  const cx = (extent.xMin + extent.xMax) / 2;
  const cy = (extent.yMin + extent.yMax) / 2;
  extent = {
    xMin: cx - span / 2, xMax: cx + span / 2,
    yMin: cy - span / 2, yMax: cy + span / 2,
  };

  const panel = new Panel(extent, 60, 30, 640, 640,
    `trajectory: ${runs[0].summary.scenario}`);
  for (const pts of [scene.boundaries.left, scene.boundaries.right]) {
    panel.polyline(pts.map((p) => p[0]), pts.map((p) => p[1]),
      CONSTRAINT_COLOR, { width: 1.8 });
  }
  panel.polyline(scene.centerline.map((p) => p[0]),
    scene.centerline.map((p) => p[1]), "#aab7b8", { dash: "10 8" });
  scene.obstacles.forEach((ov, i) => {
    const color = SERIES_COLORS[(runs.length + i) % SERIES_COLORS.length];
    panel.polyline(ov.track.map((r) => r[1]), ov.track.map((r) => r[2]), color,
      { width: 1.2, dash: "2 3", label: ov.name });
    const last = ov.track[ov.track.length - 1];
    panel.polyline([last[1]], [last[2]], color, { width: 4 });
  });
  runs.forEach((run, i) => {
    panel.polyline(col(run, "x"), col(run, "y"), SERIES_COLORS[i],
      { width: 2.2, label: run.label });
  });
  return document(760, 720, panel.render("x [m]", "y [m]"));
}

const CONTROL_PANELS: {
  column: string; title: string; bounds: (c: RunData["summary"]["constraints"]) => number[];
}[] = [
  { column: "a", title: "acceleration [m/s^2]", bounds: (c) => [c.u_min[0], c.u_max[0]] },
  { column: "steer", title: "steering [rad]", bounds: (c) => [c.u_min[1], c.u_max[1]] },
  { column: "da", title: "incremental acceleration", bounds: (c) => [c.du_min[0], c.du_max[0]] },
  { column: "dsteer", title: "incremental steering", bounds: (c) => [c.du_min[1], c.du_max[1]] },
];

export function renderControls(runs: RunData[]): string {
  const cons = runs[0].summary.constraints;
  const parts: string[] = [];
  CONTROL_PANELS.forEach((spec, p) => {
    const ts = runs.map((r) => col(r, "t"));
    const vals = runs.map((r) => col(r, spec.column));
    let extent = runs
      .map((_, i) => extentOf(ts[i], [...vals[i], ...spec.bounds(cons)]))
      .reduce(mergeExtents);
    const panel = new Panel(extent, 70 + (p % 2) * 390, 40 + Math.floor(p / 2) * 290,
      310, 220, spec.title);
    for (const bound of spec.bounds(cons)) {
      panel.hline(bound, CONSTRAINT_COLOR, "bound");
    }
    runs.forEach((run, i) => {
      panel.polyline(ts[i], vals[i], SERIES_COLORS[i], { label: run.label });
    });
    parts.push(panel.render("t [s]", ""));
  });
  return document(800, 600, parts.join("\n"));
}

export function renderDistances(runs: RunData[]): string {
  const summary = runs[0].summary;
  const parts: string[] = [];
  const nOv = summary.n_ov;
  const panels = nOv + 2; // per-OV distance, boundary margin, speed vs reference
  const perRow = 2;
  const width = 310;
  const height = 200;
  let index = 0;

  for (let i = 0; i < nOv; i++) {
    const name = `dist_ov${i + 1}`;
    const ts = runs.map((r) => col(r, "t"));
    const vals = runs.map((r) => col(r, name));
    const extent = runs
      .map((_, j) => extentOf(ts[j], [...vals[j], 0, summary.constraints.d_min]))
      .reduce(mergeExtents);
    const panel = new Panel(extent, 70 + (index % perRow) * 390,
      40 + Math.floor(index / perRow) * (height + 70), width, height,
      `distance to ${summary.scene.obstacles[i]?.name ?? name} [m]`);
    panel.hline(summary.constraints.d_min, CONSTRAINT_COLOR, "d_min");
    runs.forEach((run, j) => {
      panel.polyline(ts[j], vals[j], SERIES_COLORS[j], { label: run.label });
    });
    parts.push(panel.render("t [s]", ""));
    index += 1;
  }

  {
    const ts = runs.map((r) => col(r, "t"));
    const vals = runs.map((r) => col(r, "boundary_margin"));
    const extent = runs
      .map((_, j) => extentOf(ts[j], [...vals[j], 0]))
      .reduce(mergeExtents);
    const panel = new Panel(extent, 70 + (index % perRow) * 390,
      40 + Math.floor(index / perRow) * (height + 70), width, height,
      "distance to road boundary [m]");
    panel.hline(0, CONSTRAINT_COLOR, "boundary");
    runs.forEach((run, j) => {
      panel.polyline(ts[j], vals[j], SERIES_COLORS[j], { label: run.label });
    });
    parts.push(panel.render("t [s]", ""));
    index += 1;
  }

  {
    const ts = runs.map((r) => col(r, "t"));
    const vals = runs.map((r) => col(r, "v"));
    const schedule = summary.reference.speed_schedule;
    const tMax = Math.max(...ts.flat());
    const schedT = schedule.map((row) => row[0]).concat([tMax]);
    const schedV = schedule.map((row) => row[1]).concat([schedule[schedule.length - 1][1]]);
    const extent = runs
      .map((_, j) => extentOf(ts[j], [...vals[j], ...schedV, 0]))
      .reduce(mergeExtents);
    const panel = new Panel(extent, 70 + (index % perRow) * 390,
      40 + Math.floor(index / perRow) * (height + 70), width, height,
      "speed and reference [m/s]");
    panel.polyline(schedT, schedV, CONSTRAINT_COLOR,
      { dash: "6 3", label: "reference" });
    runs.forEach((run, j) => {
      panel.polyline(ts[j], vals[j], SERIES_COLORS[j], { label: run.label });
    });
    parts.push(panel.render("t [s]", ""));
    index += 1;
  }

  const rows = Math.ceil(panels / perRow);
  return document(800, 40 + rows * (height + 70), parts.join("\n"));
}
