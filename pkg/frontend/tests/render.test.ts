// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { mount } from "../src/render.js";
import { Store } from "../src/store.js";
import { demoServer, FakeServer } from "./fakeserver.js";

async function until(check: () => boolean, ms = 2000): Promise<void> {
  const start = Date.now();
  while (!check()) {
    if (Date.now() - start > ms) {
      throw new Error("condition not reached");
    }
    await new Promise((resolve) => setTimeout(resolve, 5));
  }
}

function setup(server: FakeServer = demoServer()) {
  document.body.innerHTML = '<main id="app"></main>';
  const root = document.getElementById("app")!;
  const store = new Store(server);
  mount(root, store);
  return { root, store, server };
}

function click(el: Element | null): void {
  if (!el) throw new Error("element not found");
  (el as HTMLElement).dispatchEvent(new MouseEvent("click", { bubbles: true }));
}

describe("patient browser rendering", () => {
  it("shows an empty state without crashing", async () => {
    const { root, store } = setup(new FakeServer([], []));
    await store.loadPatients();
    expect(root.querySelector("#empty")!.textContent).toContain("no patients");
  });

  it("renders rows sorted by delta with the max first", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    const rows = [...root.querySelectorAll("tr[data-patient]")];
    const ids = rows.map((r) => Number(r.getAttribute("data-patient")));
    const state = store.getState();
    expect(ids[0]).toBe(state.patients[0].id);
    expect(state.patients[0].delta).toBe(
      Math.max(...state.patients.map((p) => p.delta)),
    );
  });

  it("shows an error state with retry when the service is down", async () => {
    const { root, store, server } = setup();
    server.failNext = 500;
    await store.loadPatients();
    expect(root.querySelector("#server-error")).not.toBeNull();
    click(root.querySelector('[data-action="retry"]'));
    await until(() => store.getState().patients.length === 3);
    expect(root.querySelector("#server-error")).toBeNull();
  });
});

describe("session console rendering", () => {
  it("open via click populates badges from the server payload", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    click(root.querySelector('[data-action="open"][data-patient="1"]'));
    await until(() => store.getState().session !== null);
    const risk = store.getState().session!.risk;
    expect(root.querySelector("#badge-mean .badge-value")!.textContent).toBe(
      `${(risk.mean * 100).toFixed(1)}%`,
    );
    expect(root.querySelector("#badge-q90 .badge-value")!.textContent).toBe(
      `${(risk.quantiles["0.9"] * 100).toFixed(1)}%`,
    );
    // risky rare diagnosis flagged as driver despite low probability
    const driver = root.querySelector(".entry.driver .name");
    expect(driver!.textContent).toBe("risky-rare");
  });

  it("confirm collapses the chart to one bar and equal badges", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    click(root.querySelector('[data-action="open"][data-patient="1"]'));
    await until(() => store.getState().session !== null);
    click(root.querySelector('[data-action="confirm"][data-diagnosis="1"]'));
    await until(() => store.getState().session?.confirmed === 1);
    const mean = root.querySelector("#badge-mean .badge-value")!.textContent;
    const q90 = root.querySelector("#badge-q90 .badge-value")!.textContent;
    expect(mean).toBe(q90);
    const visible = [...root.querySelectorAll(".entry")].filter(
      (e) => Number((e.querySelector(".prob") as HTMLElement).textContent!.replace("%", "")) > 0,
    );
    expect(visible).toHaveLength(1);
  });

  it("rule-out greys the entry and logs the action", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    click(root.querySelector('[data-action="open"][data-patient="1"]'));
    await until(() => store.getState().session !== null);
    click(root.querySelector('[data-action="rule-out"][data-diagnosis="2"]'));
    await until(() => store.getState().session!.excluded.length === 1);
    expect(root.querySelector('.entry.excluded[data-entry="2"]')).not.toBeNull();
    const log = [...root.querySelectorAll("#action-log li")].map((li) => li.textContent);
    expect(log).toEqual(["opened patient 1", "ruled out 2"]);
  });

  it("disables ruling out the last remaining diagnosis client-side", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    click(root.querySelector('[data-action="open"][data-patient="1"]'));
    await until(() => store.getState().session !== null);
    await store.ruleOut([1]);
    await store.ruleOut([2]);
    const lastButton = root.querySelector(
      '[data-action="rule-out"][data-diagnosis="0"]',
    ) as HTMLButtonElement;
    expect(lastButton.disabled).toBe(true);
  });

  it("reset restores the initial view", async () => {
    const { root, store } = setup();
    await store.loadPatients();
    click(root.querySelector('[data-action="open"][data-patient="1"]'));
    await until(() => store.getState().session !== null);
    const freshRisk = JSON.stringify(store.getState().session!.risk);
    await store.ruleOut([2]);
    click(root.querySelector('[data-action="reset"]'));
    await until(() => store.getState().session!.excluded.length === 0);
    expect(JSON.stringify(store.getState().session!.risk)).toBe(freshRisk);
  });
});
