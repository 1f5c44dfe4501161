/** DOM rendering: one render pass per state change, event delegation for all
 * controls. Numbers shown are read straight off the session payload. */

import { barWidth, pct, riskColor, signedPct } from "./format.js";
import { Store, canConfirm, canRuleOut, type AppState } from "./store.js";
import type { RiskEntry, SessionView } from "./types.js";

function el(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderBrowser(state: AppState): HTMLElement {
  const panel = el("section", { class: "panel", id: "browser" });
  panel.appendChild(el("h2", {}, "Patients"));

  const controls = el("div", { class: "browser-controls" });
  const search = el("input", {
    id: "search",
    type: "search",
    placeholder: "search by patient id",
    value: state.search,
  }) as HTMLInputElement;
  controls.appendChild(search);
  const sort = el("select", { id: "sort" }) as HTMLSelectElement;
  for (const [value, label] of [
    ["delta", "pessimistic delta"],
    ["q90", "Q90"],
    ["mean", "mean risk"],
    ["id", "patient id"],
  ]) {
    const opt = el("option", { value: value as string }, label as string);
    if (value === state.sort) {
      opt.setAttribute("selected", "selected");
    }
    sort.appendChild(opt);
  }
  controls.appendChild(sort);
  panel.appendChild(controls);

  if (state.serverError) {
    const err = el("div", { class: "error", id: "server-error" }, state.serverError);
    err.appendChild(el("button", { "data-action": "retry" }, "retry"));
    panel.appendChild(err);
  }
  if (state.loadingPatients) {
    panel.appendChild(el("div", { class: "muted" }, "loading…"));
    return panel;
  }
  if (!state.patients.length) {
    panel.appendChild(el("div", { class: "muted", id: "empty" }, "no patients to show"));
    return panel;
  }

  const table = el("table", { id: "patient-table" });
  const head = el("tr");
  for (const col of ["id", "mean", "Q90", "delta", ""]) {
    head.appendChild(el("th", {}, col));
  }
  table.appendChild(head);
  for (const p of state.patients) {
    const row = el("tr", { "data-patient": String(p.id) });
    if (state.session?.patient_id === p.id) {
      row.classList.add("selected");
    }
    row.appendChild(el("td", {}, String(p.id)));
    row.appendChild(el("td", {}, pct(p.mean)));
    row.appendChild(el("td", {}, pct(p.q90)));
    row.appendChild(el("td", { class: "delta" }, signedPct(p.delta)));
    const open = el("td");
    open.appendChild(
      el("button", { "data-action": "open", "data-patient": String(p.id) }, "open"),
    );
    row.appendChild(open);
    table.appendChild(row);
  }
  panel.appendChild(table);
  return panel;
}

function entryRow(session: SessionView, entry: RiskEntry, pending: boolean): HTMLElement {
  const excluded = session.excluded.includes(entry.diagnosis);
  const confirmed = session.confirmed === entry.diagnosis;
  const row = el("div", {
    class: `entry${excluded ? " excluded" : ""}${confirmed ? " confirmed" : ""}${entry.is_driver ? " driver" : ""}`,
    "data-entry": String(entry.diagnosis),
  });

  const label = el("div", { class: "entry-label" });
  label.appendChild(el("span", { class: "name" }, entry.name));
  if (entry.is_driver) {
    label.appendChild(el("span", { class: "tag" }, "risk driver"));
  }
  if (confirmed) {
    label.appendChild(el("span", { class: "tag confirmed-tag" }, "confirmed"));
  }
  if (excluded) {
    label.appendChild(el("span", { class: "tag excluded-tag" }, "ruled out"));
  }
  row.appendChild(label);

  const bar = el("div", { class: "bar-track" });
  const fill = el("div", { class: "bar-fill" });
  fill.style.width = barWidth(entry.probability);
  bar.appendChild(fill);
  row.appendChild(bar);

  const stats = el("div", { class: "entry-stats" });
  stats.appendChild(el("span", { class: "prob" }, pct(entry.probability)));
  const risk = el("span", { class: "risk" }, `risk ${pct(entry.conditional_risk)}`);
  risk.style.color = riskColor(entry.conditional_risk);
  stats.appendChild(risk);
  row.appendChild(stats);

  const actions = el("div", { class: "entry-actions" });
  const out = el("button", {
    "data-action": "rule-out",
    "data-diagnosis": String(entry.diagnosis),
  }, "rule out") as HTMLButtonElement;
  out.disabled = pending || !canRuleOut(session, entry.diagnosis);
  actions.appendChild(out);
  const conf = el("button", {
    "data-action": "confirm",
    "data-diagnosis": String(entry.diagnosis),
  }, "confirm") as HTMLButtonElement;
  conf.disabled = pending || !canConfirm(session, entry.diagnosis);
  actions.appendChild(conf);
  row.appendChild(actions);
  return row;
}

function describeAction(entry: AppState["log"][number]): string {
  switch (entry.kind) {
    case "open":
      return `opened patient ${entry.patientId}`;
    case "rule_out":
      return `ruled out ${entry.diagnoses.join(", ")}`;
    case "confirm":
      return `confirmed ${entry.diagnosis}`;
    default:
      return "reset";
  }
}

function renderConsole(state: AppState): HTMLElement {
  const panel = el("section", { class: "panel", id: "console" });
  panel.appendChild(el("h2", {}, "Session"));
  const session = state.session;
  if (!session) {
    panel.appendChild(
      el("div", { class: "muted" }, "select a patient to open a what-if session"),
    );
    return panel;
  }

  const badges = el("div", { class: "badges" });
  const q90 = session.risk.quantiles["0.9"];
  for (const [id, label, value] of [
    ["badge-mean", "mean risk", pct(session.risk.mean)],
    ["badge-q90", "Q90 (pessimistic)", q90 === undefined ? "—" : pct(q90)],
    ["badge-delta", "pessimistic delta", signedPct(session.risk.delta)],
  ] as const) {
    const badge = el("div", { class: "badge", id });
    badge.appendChild(el("span", { class: "badge-label" }, label));
    badge.appendChild(el("span", { class: "badge-value" }, value));
    badges.appendChild(badge);
  }
  panel.appendChild(badges);

  const header = el("div", { class: "session-header" });
  header.appendChild(el("span", {}, `patient ${session.patient_id}`));
  const resetBtn = el("button", { "data-action": "reset", id: "reset" }, "reset") as HTMLButtonElement;
  resetBtn.disabled = state.pending;
  header.appendChild(resetBtn);
  panel.appendChild(header);

  if (state.actionError) {
    panel.appendChild(el("div", { class: "error", id: "action-error" }, state.actionError));
  }
  for (const warning of session.risk.warnings) {
    panel.appendChild(el("div", { class: "warning" }, warning));
  }

  const chart = el("div", { id: "chart" });
  for (const entry of session.risk.entries) {
    chart.appendChild(entryRow(session, entry, state.pending));
  }
  panel.appendChild(chart);

  const logTitle = el("h3", {}, "Action log");
  panel.appendChild(logTitle);
  const log = el("ol", { id: "action-log" });
  for (const entry of state.log) {
    log.appendChild(el("li", {}, describeAction(entry)));
  }
  panel.appendChild(log);
  return panel;
}

export function mount(root: HTMLElement, store: Store): void {
  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === "open") {
      void store.openPatient(Number(target.dataset.patient));
    } else if (action === "rule-out") {
      void store.ruleOut([Number(target.dataset.diagnosis)]);
    } else if (action === "confirm") {
      void store.confirmDiagnosis(Number(target.dataset.diagnosis));
    } else if (action === "reset") {
      void store.resetSession();
    } else if (action === "retry") {
      void store.loadPatients();
    }
  });
  root.addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "sort") {
      void store.loadPatients((target as HTMLSelectElement).value as never, undefined);
    }
  });
  root.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "search" && (event as KeyboardEvent).key === "Enter") {
      void store.loadPatients(undefined, (target as HTMLInputElement).value);
    }
  });

  store.subscribe((state) => {
    const active = document.activeElement;
    const hadFocus = active instanceof HTMLInputElement && active.id === "search";
    const caret = hadFocus ? active.selectionStart : null;
    root.replaceChildren(renderBrowser(state), renderConsole(state));
    if (hadFocus) {
      const search = root.querySelector<HTMLInputElement>("#search");
      if (search) {
        search.focus();
        if (caret !== null) search.setSelectionRange(caret, caret);
      }
    }
  });
}
