/** Pure view-model layer: service payloads in, display strings out.
 *
 * Displayed numbers are the parsed payload values rendered with String(),
 * which reproduces the service's shortest round-trip serialization for the
 * whole working range of levels and budgets. No level arithmetic happens
 * here; the only computations are presentation geometry (the gauge) and
 * the client-side sequence counter, which is the history length plus one.
 */

import type { Decision, SessionSummary, WhatIfReport } from "./api.js";

export function displayNumber(value: number): string {
  return String(value);
}

export interface HistoryRow {
  step: number;
  p: string;
  level: string;
  decision: string;
  budgetAfter: string;
}

export interface ConsoleView {
  id: string;
  procedure: string;
  alpha: string;
  mode: string;
  step: number;
  remaining: string;
  level: string;
  rows: HistoryRow[];
  gauge: number[];
}

export function historyRows(decisions: Decision[]): HistoryRow[] {
  return decisions.map((d) => ({
    step: d.step,
    p: displayNumber(d.p),
    level: displayNumber(d.level),
    decision: d.rejected ? "rejected" : "not rejected",
    budgetAfter: displayNumber(d.remaining),
  }));
}

export function nextSeq(decisions: Decision[]): number {
  return decisions.length + 1;
}

/** Remaining budget over steps, starting at the configured alpha. */
export function gaugeSeries(alpha: number, decisions: Decision[]): number[] {
  return [alpha, ...decisions.map((d) => d.remaining)];
}

export function sessionView(summary: SessionSummary, decisions: Decision[]): ConsoleView {
  return {
    id: summary.id,
    procedure: summary.procedure,
    alpha: displayNumber(summary.alpha),
    mode: summary.mode,
    step: summary.step,
    remaining: displayNumber(summary.remaining),
    level: displayNumber(summary.level),
    rows: historyRows(decisions),
    gauge: gaugeSeries(summary.alpha, decisions),
  };
}

export interface WhatIfView {
  p: string;
  verdict: string;
  nextRemaining: string;
  nextLevel: string;
}

export function whatIfView(report: WhatIfReport): WhatIfView {
  return {
    p: displayNumber(report.p),
    verdict: report.would_reject ? "would reject" : "would not reject",
    nextRemaining: displayNumber(report.next_remaining),
    nextLevel: displayNumber(report.next_level),
  };
}

/** SVG polyline points for the budget gauge (presentation geometry only). */
export function gaugePoints(
  series: number[],
  width: number,
  height: number,
  alpha: number,
): string {
  if (series.length === 0 || alpha <= 0) return "";
  const dx = series.length > 1 ? width / (series.length - 1) : 0;
  return series
    .map((value, i) => {
      const x = series.length > 1 ? i * dx : width / 2;
      const y = height - (value / alpha) * height;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

export const PROCEDURE_CATALOG = [
  { name: "alpha_spending", note: "pure spending baseline (tau=1, lambda=0)" },
  { name: "addis_spending", note: "adaptive-discard spending" },
  { name: "addis_graph", note: "adaptive-discard graph" },
  { name: "e_addis_spending", note: "exhaustive improvement of spending" },
  { name: "e_addis_graph", note: "exhaustive improvement of the graph" },
  { name: "ei_addis_graph", note: "evenly-improved graph (spreads the bonus)" },
] as const;
