/** DOM glue for the console. State lives on the server; every render is a
 * pure function of the latest service responses, so a reload reconstructs
 * the identical view from /sessions/{id} + /history. */

import { ApiClient, ApiError, type Decision, type SessionSummary } from "./api.js";
import {
  PROCEDURE_CATALOG,
  gaugePoints,
  nextSeq,
  sessionView,
  whatIfView,
} from "./viewmodel.js";

const api = new ApiClient("");
const app = document.getElementById("app") as HTMLElement;

let busy = false; // one in-flight submission at a time

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function showError(box: HTMLElement, err: unknown): void {
  const message =
    err instanceof ApiError
      ? err.constraint
        ? `${err.code}: ${err.message} (constraint: ${err.constraint})`
        : `${err.code}: ${err.message}`
      : String(err);
  box.textContent = message;
  box.classList.remove("hidden");
}

function sessionIdFromUrl(): string | null {
  return new URLSearchParams(window.location.search).get("session");
}

async function renderHome(): Promise<void> {
  app.replaceChildren();
  const form = el("form", { class: "card" });
  form.appendChild(el("h2", {}, "New session"));

  const procedure = el("select", { name: "procedure" });
  for (const item of PROCEDURE_CATALOG) {
    procedure.appendChild(el("option", { value: item.name }, `${item.name}: ${item.note}`));
  }
  const alpha = el("input", { name: "alpha", value: "0.2" });
  const tau = el("input", { name: "tau", value: "0.8" });
  const lambda = el("input", { name: "lambda", value: "0.16" });
  const gamma = el("select", { name: "gamma" });
  gamma.appendChild(el("option", { value: "q_series" }, "q_series"));
  gamma.appendChild(el("option", { value: "log_q" }, "log_q (s=2)"));
  const errors = el("p", { class: "error hidden" });

  for (const [label, field] of [
    ["procedure", procedure],
    ["alpha", alpha],
    ["tau", tau],
    ["lambda", lambda],
    ["gamma", gamma],
  ] as const) {
    const row = el("label", {}, `${label} `);
    row.appendChild(field);
    form.appendChild(row);
  }
  form.appendChild(el("button", { type: "submit" }, "Create"));
  form.appendChild(errors);

  form.addEventListener("submit", async (evt) => {
    evt.preventDefault();
    try {
      const summary = await api.createSession({
        procedure: procedure.value,
        alpha: Number(alpha.value),
        tau: Number(tau.value),
        lambda: Number(lambda.value),
        gamma: gamma.value === "log_q" ? { kind: "log_q", s: 2.0 } : { kind: "q_series" },
      });
      window.location.search = `?session=${summary.id}`;
    } catch (err) {
      showError(errors, err);
    }
  });

  app.appendChild(form);

  const listCard = el("div", { class: "card" });
  listCard.appendChild(el("h2", {}, "Sessions"));
  try {
    const sessions = await api.listSessions();
    if (sessions.length === 0) listCard.appendChild(el("p", {}, "none yet"));
    for (const s of sessions) {
      const link = el("a", { href: `?session=${s.id}` }, `${s.id} (${s.procedure})`);
      const p = el("p");
      p.appendChild(link);
      listCard.appendChild(p);
    }
  } catch (err) {
    const box = el("p", { class: "error" });
    showError(box, err);
    listCard.appendChild(box);
  }
  app.appendChild(listCard);
}

async function renderSession(id: string): Promise<void> {
  const [summary, history] = await Promise.all([api.getSession(id), api.history(id)]);
  drawSession(summary, history.decisions);
}

function drawSession(summary: SessionSummary, decisions: Decision[]): void {
  const view = sessionView(summary, decisions);
  app.replaceChildren();

  const head = el("div", { class: "card" });
  head.appendChild(el("h2", {}, `${view.procedure} @ alpha=${view.alpha}`));
  head.appendChild(el("p", {}, `session ${view.id}, ${view.mode} mode, step ${view.step}`));
  const level = el("p", { class: "big" });
  level.appendChild(el("span", {}, "current level "));
  level.appendChild(el("strong", { id: "level" }, view.level));
  head.appendChild(level);
  const budget = el("p", { class: "big" });
  budget.appendChild(el("span", {}, "remaining budget "));
  budget.appendChild(el("strong", { id: "remaining" }, view.remaining));
  head.appendChild(budget);

  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 320 60");
  svg.setAttribute("class", "gauge");
  const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
  line.setAttribute("points", gaugePoints(view.gauge, 320, 56, summary.alpha));
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "#2563eb");
  line.setAttribute("stroke-width", "2");
  svg.appendChild(line);
  head.appendChild(svg);
  app.appendChild(head);

  const forms = el("div", { class: "card" });
  const errors = el("p", { class: "error hidden" });

  const whatIfForm = el("form", { class: "inline" });
  const whatIfInput = el("input", { name: "p", placeholder: "p-value" });
  whatIfForm.appendChild(el("strong", {}, "what if? "));
  whatIfForm.appendChild(whatIfInput);
  whatIfForm.appendChild(el("button", { type: "submit" }, "Preview"));
  const preview = el("p", { id: "whatif" });
  whatIfForm.addEventListener("submit", async (evt) => {
    evt.preventDefault();
    try {
      const report = await api.whatIf(summary.id, Number(whatIfInput.value));
      const w = whatIfView(report);
      preview.textContent =
        `if submitted: ${w.verdict}; budget after ${w.nextRemaining}; ` +
        `following level ${w.nextLevel}`;
    } catch (err) {
      showError(errors, err);
    }
  });

  const submitForm = el("form", { class: "inline" });
  const submitInput = el("input", { name: "p", placeholder: "p-value" });
  submitForm.appendChild(el("strong", {}, "submit "));
  submitForm.appendChild(submitInput);
  submitForm.appendChild(el("button", { type: "submit" }, "Decide"));
  submitForm.addEventListener("submit", async (evt) => {
    evt.preventDefault();
    if (busy) return;
    busy = true;
    try {
      // no optimistic updates: the decision is shown only after the
      // service acknowledged and persisted it
      await api.submit(summary.id, Number(submitInput.value), nextSeq(decisions));
      await renderSession(summary.id);
    } catch (err) {
      showError(errors, err);
    } finally {
      busy = false;
    }
  });

  forms.appendChild(whatIfForm);
  forms.appendChild(preview);
  forms.appendChild(submitForm);
  forms.appendChild(errors);
  app.appendChild(forms);

  const table = el("table", { class: "card" });
  const headRow = el("tr");
  for (const caption of ["step", "p", "level", "decision", "budget after"]) {
    headRow.appendChild(el("th", {}, caption));
  }
  table.appendChild(headRow);
  for (const row of view.rows) {
    const tr = el("tr");
    tr.appendChild(el("td", {}, String(row.step)));
    tr.appendChild(el("td", {}, row.p));
    tr.appendChild(el("td", {}, row.level));
    tr.appendChild(el("td", { class: row.decision === "rejected" ? "reject" : "" }, row.decision));
    tr.appendChild(el("td", {}, row.budgetAfter));
    table.appendChild(tr);
  }
  app.appendChild(table);

  const back = el("p");
  back.appendChild(el("a", { href: window.location.pathname }, "back to catalog"));
  app.appendChild(back);
}

const id = sessionIdFromUrl();
(id ? renderSession(id) : renderHome()).catch((err) => {
  const box = el("p", { class: "error" });
  showError(box, err);
  app.replaceChildren(box);
});
