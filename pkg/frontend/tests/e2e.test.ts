// @vitest-environment jsdom
/** Scripted end-to-end console flow against a served demo bundle: build demo
 * assets with the Python CLI, start the real HTTP service, drive the actual
 * DOM app against it. Realizes the console acceptance flow: open the
 * highest-delta patient, rule out the risky confusable diagnosis and watch the
 * Q90 badge strictly decrease, then confirm it and see mean equal Q90. */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createApi } from "../src/api.js";
import { mount } from "../src/render.js";
import { Store } from "../src/store.js";

const REPO_ROOT = resolve(__dirname, "..", "..");
const PORT = 8891;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

async function until(check: () => boolean, ms = 15000): Promise<void> {
  const start = Date.now();
  while (!check()) {
    if (Date.now() - start > ms) {
      throw new Error("condition not reached");
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 20));
  }
}

function click(el: Element | null): void {
  if (!el) throw new Error("element not found");
  (el as HTMLElement).dispatchEvent(new MouseEvent("click", { bubbles: true }));
}

function badge(id: string): string {
  return document.querySelector(`#${id} .badge-value`)!.textContent!;
}

beforeAll(async () => {
  const demoDir = mkdtempSync(join(tmpdir(), "duacm-e2e-"));
  const build = spawnSync(
    "python3",
    ["scripts/make_demo.py", "--out", demoDir, "--quick"],
    { cwd: REPO_ROOT, encoding: "utf-8", timeout: 240_000 },
  );
  if (build.status !== 0) {
    throw new Error(`make_demo failed: ${build.stderr}\n${build.stdout}`);
  }
  const configPath = join(demoDir, "config.json");
  const config = JSON.parse(readFileSync(configPath, "utf-8"));
  config.port = PORT;
  writeFileSync(configPath, JSON.stringify(config));

  server = spawn("python3", ["-m", "duacm.cli", "serve", "--config", configPath], {
    cwd: REPO_ROOT,
    stdio: "ignore",
  });
  const deadline = Date.now() + 60_000;
  let healthy = false;
  while (Date.now() < deadline && !healthy) {
    try {
      const res = await fetch(`${BASE}/api/health`);
      healthy = res.ok;
    } catch {
      await new Promise((resolveSleep) => setTimeout(resolveSleep, 250));
    }
  }
  if (!healthy) {
    throw new Error("service did not become healthy");
  }
}, 300_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("served console flow", () => {
  it("rule out the risky driver lowers Q90; confirming it matches mean to Q90", async () => {
    document.body.innerHTML = '<main id="app"></main>';
    const store = new Store(createApi(BASE));
    mount(document.getElementById("app")!, store);

    await store.loadPatients();
    const state = store.getState();
    expect(state.patients.length).toBeGreaterThan(0);
    const top = state.patients[0];
    expect(top.delta).toBe(Math.max(...state.patients.map((p) => p.delta)));

    // open the highest-delta patient through its table button
    click(document.querySelector(`[data-action="open"][data-patient="${top.id}"]`));
    await until(() => store.getState().session !== null);
    const opened = store.getState().session!;
    const q90Before = opened.risk.quantiles["0.9"];
    const badgeBefore = badge("badge-q90");

    // the risky confusable diagnosis: flagged driver with the highest risk
    const drivers = opened.risk.entries.filter((e) => e.is_driver);
    expect(drivers.length).toBeGreaterThan(0);
    const risky = drivers.reduce((a, b) =>
      b.conditional_risk > a.conditional_risk ? b : a,
    );

    click(
      document.querySelector(
        `[data-action="rule-out"][data-diagnosis="${risky.diagnosis}"]`,
      ),
    );
    await until(() => store.getState().session!.excluded.length === 1);
    const afterRuleOut = store.getState().session!;
    expect(afterRuleOut.risk.quantiles["0.9"]).toBeLessThan(q90Before);
    expect(badge("badge-q90")).not.toBe(badgeBefore);

    // reset, then confirm the risky diagnosis: the distribution collapses
    click(document.querySelector('[data-action="reset"]'));
    await until(() => store.getState().session!.excluded.length === 0);
    click(
      document.querySelector(
        `[data-action="confirm"][data-diagnosis="${risky.diagnosis}"]`,
      ),
    );
    await until(() => store.getState().session!.confirmed === risky.diagnosis);
    const confirmed = store.getState().session!;
    expect(confirmed.risk.mean).toBe(confirmed.risk.quantiles["0.9"]);
    expect(badge("badge-mean")).toBe(badge("badge-q90"));
  }, 120_000);

  it("action log replay reproduces the final state against fresh sessions", async () => {
    document.body.innerHTML = '<main id="app"></main>';
    const store = new Store(createApi(BASE));
    mount(document.getElementById("app")!, store);
    await store.loadPatients();
    const top = store.getState().patients[0];
    await store.openPatient(top.id);
    const firstEntry = store.getState().session!.risk.entries[0];
    await store.ruleOut([firstEntry.diagnosis]);
    const displayed = store.getState().session!;

    const replayed = await store.replay(store.getState().log);
    expect(replayed!.risk.mean).toBe(displayed.risk.mean);
    expect(replayed!.risk.quantiles).toEqual(displayed.risk.quantiles);
    expect(replayed!.excluded).toEqual(displayed.excluded);
  }, 60_000);
});
