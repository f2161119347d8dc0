/** End-to-end console workflow against a live service instance:
 * create a session from the catalog entry, check the displayed level
 * string against the service's raw payload, submit a p-value, watch the
 * gauge drop, and verify what-if previews never touch the history. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { gaugeSeries, nextSeq, sessionView } from "../src/viewmodel.js";

let server: ChildProcess;
let base: string;
const client = () => new ApiClient(base);

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitReady(url: string, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/sessions`);
      if (response.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  const persist = mkdtempSync(join(tmpdir(), "onlinefwer-e2e-"));
  server = spawn(
    "python3",
    ["-m", "onlinefwer.cli", "serve", "--host", "127.0.0.1",
     "--port", String(port), "--persist-dir", persist],
    { stdio: "ignore" },
  );
  await waitReady(base);
}, 40000);

afterAll(() => {
  server?.kill("SIGKILL");
});

describe("console end-to-end", () => {
  it("runs the live workflow with verbatim numbers", async () => {
    const api = client();
    const created = await api.createSession({
      procedure: "e_addis_spending",
      alpha: 0.2,
      tau: 0.8,
      lambda: 0.16,
      gamma: { kind: "q_series" },
    });

    // displayed first level equals the service's serialized token
    const rawSummary = await (await fetch(`${base}/sessions/${created.id}`)).text();
    const levelToken = rawSummary.match(/"level":\s*([^,}]+)/)![1];
    let view = sessionView(created, []);
    expect(levelToken.startsWith("0.0972683")).toBe(true);
    expect(view.level).toBe(levelToken);
    expect(view.remaining).toBe("0.2");
    expect(view.gauge).toEqual([0.2]);

    // submit p = 0.5 with the client-side sequence counter
    const decisions = (await api.history(created.id)).decisions;
    const decision = await api.submit(created.id, 0.5, nextSeq(decisions));
    expect(decision.rejected).toBe(false);

    const summary = await api.getSession(created.id);
    const history = await api.history(created.id);
    view = sessionView(summary, history.decisions);
    expect(view.remaining.startsWith("0.0784145")).toBe(true);
    const rawHistory = await (await fetch(`${base}/sessions/${created.id}/history`)).text();
    const remainingToken = rawHistory.match(/"remaining":\s*([^,}]+)/)![1];
    expect(view.rows[0].budgetAfter).toBe(remainingToken);
    expect(view.gauge).toEqual(gaugeSeries(0.2, history.decisions));
    expect(view.gauge).toHaveLength(2);

    // what-if leaves the history length unchanged
    const before = (await api.history(created.id)).decisions.length;
    const preview = await api.whatIf(created.id, 0.9);
    expect(preview.would_reject).toBe(false);
    const after = (await api.history(created.id)).decisions.length;
    expect(after).toBe(before);

    // reload equivalence: rebuilding the view from scratch matches
    const reload = sessionView(
      await api.getSession(created.id),
      (await api.history(created.id)).decisions,
    );
    expect(reload).toEqual(view);
  }, 30000);

  it("surfaces service constraints verbatim", async () => {
    const api = client();
    await expect(
      api.createSession({ procedure: "e_addis_spending", alpha: 0.2, tau: 0.8, lambda: 0.1 }),
    ).rejects.toMatchObject({
      code: "invalid_config",
      constraint: "lambda >= tau*alpha",
    });
  });
});
