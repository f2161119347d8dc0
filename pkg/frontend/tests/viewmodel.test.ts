import { describe, expect, it } from "vitest";

import type { Decision, SessionSummary } from "../src/api.js";
import {
  displayNumber,
  gaugePoints,
  gaugeSeries,
  historyRows,
  nextSeq,
  sessionView,
  whatIfView,
} from "../src/viewmodel.js";

const summary: SessionSummary = {
  id: "abc123",
  procedure: "e_addis_spending",
  alpha: 0.2,
  mode: "exhaustive",
  step: 2,
  remaining: 0.07841457962919468,
  level: 0.02110891386660778,
  submissions: 1,
  created: 1,
  updated: 2,
};

const decision: Decision = {
  seq: 1,
  step: 1,
  p: 0.5,
  level: 0.09726833629664426,
  tau: 0.8,
  lambda: 0.16,
  rejected: false,
  remaining: 0.07841457962919468,
};

describe("displayNumber", () => {
  it("renders the parsed double in shortest round-trip form", () => {
    expect(displayNumber(0.2)).toBe("0.2");
    expect(displayNumber(0.09726833629664426)).toBe("0.09726833629664426");
    expect(Number(displayNumber(0.07841457962919468))).toBe(0.07841457962919468);
  });
});

describe("historyRows", () => {
  it("maps decisions to display rows verbatim", () => {
    const [row] = historyRows([decision]);
    expect(row).toEqual({
      step: 1,
      p: "0.5",
      level: "0.09726833629664426",
      decision: "not rejected",
      budgetAfter: "0.07841457962919468",
    });
  });

  it("marks rejections", () => {
    const [row] = historyRows([{ ...decision, rejected: true }]);
    expect(row.decision).toBe("rejected");
  });
});

describe("nextSeq", () => {
  it("is the history length plus one", () => {
    expect(nextSeq([])).toBe(1);
    expect(nextSeq([decision])).toBe(2);
  });
});

describe("gaugeSeries", () => {
  it("starts at alpha and follows the recorded budgets", () => {
    expect(gaugeSeries(0.2, [decision])).toEqual([0.2, 0.07841457962919468]);
  });
});

describe("sessionView", () => {
  it("is a pure function of the service payloads", () => {
    const a = sessionView(summary, [decision]);
    const b = sessionView(summary, [decision]);
    expect(a).toEqual(b);
    expect(a.level).toBe("0.02110891386660778");
    expect(a.remaining).toBe("0.07841457962919468");
    expect(a.rows).toHaveLength(1);
    expect(a.gauge).toEqual([0.2, 0.07841457962919468]);
  });
});

describe("whatIfView", () => {
  it("renders the hypothetical outcome", () => {
    const view = whatIfView({
      p: 0.9,
      would_reject: false,
      next_remaining: 0.2,
      next_level: 0.09726833629664426,
    });
    expect(view.verdict).toBe("would not reject");
    expect(view.nextRemaining).toBe("0.2");
    expect(view.nextLevel).toBe("0.09726833629664426");
  });
});

describe("gaugePoints", () => {
  it("spans the drawing area", () => {
    const points = gaugePoints([0.2, 0.1, 0.05], 320, 56, 0.2);
    const pairs = points.split(" ").map((p) => p.split(",").map(Number));
    expect(pairs).toHaveLength(3);
    expect(pairs[0][0]).toBe(0);
    expect(pairs[2][0]).toBe(320);
    expect(pairs[0][1]).toBe(0); // full budget sits at the top
  });

  it("handles empty input", () => {
    expect(gaugePoints([], 320, 56, 0.2)).toBe("");
  });
});
