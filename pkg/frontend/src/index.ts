export { loadRun, requiredColumns, SummarySchema, TraceFormatError } from "./schema.js";
export type { RunData, Summary } from "./schema.js";
export { renderFigure, renderTrajectory, renderControls, renderDistances } from "./figures.js";
export type { FigureKind } from "./figures.js";
export { run } from "./cli.js";
