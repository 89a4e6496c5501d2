/**
 * Loading and validation of planner run outputs (trace.csv + summary.json).
 *
 * The file formats are the only interface to the planner; nothing here
 * reaches into planner internals.
 */
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import Papa from "papaparse";
import { z } from "zod";

export class TraceFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TraceFormatError";
  }
}

const pair = z.tuple([z.number(), z.number()]);

export const SummarySchema = z
  .object({
    scenario: z.string(),
    config_sha: z.string(),
    mode: z.string(),
    seed: z.number(),
    n_steps: z.number().int(),
    n_ov: z.number().int().nonnegative(),
    dt: z.number().positive(),
    termination: z.string(),
    collision_step: z.number().int().nullable(),
    columns: z.array(z.string()),
    constraints: z.object({
      d_min: z.number(),
      u_min: z.array(z.number()).length(2),
      u_max: z.array(z.number()).length(2),
      du_min: z.array(z.number()).length(2),
      du_max: z.array(z.number()).length(2),
    }),
    reference: z.object({
      speed_schedule: z.array(pair),
      lane_offset: z.number(),
    }),
    scene: z.object({
      centerline: z.array(pair),
      boundaries: z.object({
        left: z.array(pair),
        right: z.array(pair),
      }),
      lane_offset: z.number(),
      obstacles: z.array(
        z.object({
          name: z.string(),
          length: z.number(),
          width: z.number(),
          // rows of [t, x, y, heading, speed]
          track: z.array(z.array(z.number()).length(5)),
        }),
      ),
    }),
    metrics: z.object({
      min_ov_distance: z.number().nullable(),
      min_boundary_margin: z.number().nullable(),
      violations: z.record(z.string(), z.number()),
      tracking_rmse_pos: z.number().nullable(),
      tracking_rmse_speed: z.number().nullable(),
    }),
  })
  .passthrough();

export type Summary = z.infer<typeof SummarySchema>;

export interface RunData {
  columns: string[];
  /** column name -> per-step values */
  series: Map<string, number[]>;
  nSteps: number;
  summary: Summary;
  label: string;
}

export function requiredColumns(nOv: number): string[] {
  const dists = Array.from({ length: nOv }, (_, i) => `dist_ov${i + 1}`);
  return [
    "step", "t", "x", "y", "theta", "v", "a", "steer", "da", "dsteer",
    ...dists, "boundary_margin", "viol_flags", "delta", "nu", "wall_ms",
  ];
}

export function loadRun(tracePath: string): RunData {
  const text = readFileSync(tracePath, "utf8");
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new TraceFormatError(`${tracePath}: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new TraceFormatError(`${tracePath}: empty file`);
  }
  const columns = rows[0];
  if (rows.length === 1) {
    throw new TraceFormatError(`${tracePath}: header only, no data rows`);
  }

  const summaryPath = join(dirname(tracePath), "summary.json");
  let summary: Summary;
  try {
    summary = SummarySchema.parse(JSON.parse(readFileSync(summaryPath, "utf8")));
  } catch (err) {
    throw new TraceFormatError(`${summaryPath}: ${(err as Error).message}`);
  }

  const expected = requiredColumns(summary.n_ov);
  const missing = expected.filter((c) => !columns.includes(c));
  if (missing.length > 0) {
    throw new TraceFormatError(
      `${tracePath}: missing columns: ${missing.join(", ")}`,
    );
  }

  const series = new Map<string, number[]>(columns.map((c) => [c, []]));
  for (let i = 1; i < rows.length; i++) {
    const row = rows[i];
    if (row.length !== columns.length) {
      throw new TraceFormatError(
        `${tracePath}: row ${i} has ${row.length} cells, expected ${columns.length}`,
      );
    }
    for (let j = 0; j < columns.length; j++) {
      const value = Number(row[j]);
      if (!Number.isFinite(value)) {
        throw new TraceFormatError(
          `${tracePath}: row ${i}, column ${columns[j]}: not a number: ${row[j]}`,
        );
      }
      series.get(columns[j])!.push(value);
    }
  }
  const label = `${summary.mode} seed ${summary.seed}`;
  return { columns, series, nSteps: rows.length - 1, summary, label };
}
