/** Application state and the only place that talks to the API.
 *
 * Mutations are serialized client-side: while one is pending the controls are
 * disabled, so a session never has two requests in flight. Every displayed
 * number comes verbatim from the last server response held in `session`. The
 * action log records the operations applied to the current session and can be
 * replayed against a fresh session to reproduce the displayed state.
 */

import { ApiError, type ApiClient } from "./api.js";
import type {
  ActionLogEntry,
  PatientSummary,
  SessionView,
  SortKey,
} from "./types.js";

export interface AppState {
  loadingPatients: boolean;
  serverError: string | null;
  patients: PatientSummary[];
  total: number;
  sort: SortKey;
  search: string;
  session: SessionView | null;
  pending: boolean;
  actionError: string | null;
  log: ActionLogEntry[];
}

const INITIAL: AppState = {
  loadingPatients: false,
  serverError: null,
  patients: [],
  total: 0,
  sort: "delta",
  search: "",
  session: null,
  pending: false,
  actionError: null,
  log: [],
};

export type Listener = (state: AppState) => void;

/** Diagnoses that still carry posterior probability in the current session. */
export function activeDiagnoses(session: SessionView): number[] {
  if (session.confirmed !== null) {
    return [session.confirmed];
  }
  const excluded = new Set(session.excluded);
  return session.risk.entries
    .map((e) => e.diagnosis)
    .filter((d) => !excluded.has(d));
}

export function canRuleOut(session: SessionView, diagnosis: number): boolean {
  if (session.confirmed !== null) {
    return session.confirmed !== diagnosis && !session.excluded.includes(diagnosis);
  }
  const active = activeDiagnoses(session);
  return active.includes(diagnosis) && active.length > 1;
}

export function canConfirm(session: SessionView, diagnosis: number): boolean {
  return !session.excluded.includes(diagnosis);
}

export class Store {
  private state: AppState = { ...INITIAL };
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): AppState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private set(partial: Partial<AppState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  async loadPatients(sort?: SortKey, search?: string): Promise<void> {
    const nextSort = sort ?? this.state.sort;
    const nextSearch = search ?? this.state.search;
    this.set({ loadingPatients: true, sort: nextSort, search: nextSearch });
    try {
      const body = await this.api.listPatients(nextSort, nextSearch, 200);
      this.set({
        loadingPatients: false,
        serverError: null,
        patients: body.patients,
        total: body.total,
      });
    } catch (err) {
      this.set({
        loadingPatients: false,
        serverError: err instanceof Error ? err.message : String(err),
      });
    }
  }

  async openPatient(patientId: number): Promise<void> {
    if (this.state.pending) return;
    this.set({ pending: true, actionError: null });
    try {
      const session = await this.api.openSession(patientId);
      this.set({
        pending: false,
        session,
        serverError: null,
        log: [{ kind: "open", patientId }],
      });
    } catch (err) {
      this.set({
        pending: false,
        serverError: err instanceof Error ? err.message : String(err),
      });
    }
  }

  private async mutate(
    entry: ActionLogEntry,
    call: (sessionId: string) => Promise<SessionView>,
  ): Promise<void> {
    const session = this.state.session;
    if (!session || this.state.pending) return;
    this.set({ pending: true, actionError: null });
    try {
      const updated = await call(session.session_id);
      this.set({ pending: false, session: updated, log: [...this.state.log, entry] });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // illegal mutation: keep the session, surface the message inline
        this.set({ pending: false, actionError: err.message });
      } else {
        this.set({
          pending: false,
          serverError: err instanceof Error ? err.message : String(err),
        });
      }
    }
  }

  ruleOut(diagnoses: number[]): Promise<void> {
    return this.mutate({ kind: "rule_out", diagnoses }, (sid) =>
      this.api.ruleOut(sid, diagnoses),
    );
  }

  confirmDiagnosis(diagnosis: number): Promise<void> {
    return this.mutate({ kind: "confirm", diagnosis }, (sid) =>
      this.api.confirmDiagnosis(sid, diagnosis),
    );
  }

  resetSession(): Promise<void> {
    return this.mutate({ kind: "reset" }, (sid) => this.api.resetSession(sid));
  }

  /** Replay an action log against fresh server sessions; returns the final
   * session view (used to check UI-level determinism). */
  async replay(log: ActionLogEntry[]): Promise<SessionView | null> {
    let session: SessionView | null = null;
    for (const entry of log) {
      if (entry.kind === "open") {
        session = await this.api.openSession(entry.patientId);
      } else if (!session) {
        throw new Error("replay log must start with an open action");
      } else if (entry.kind === "rule_out") {
        session = await this.api.ruleOut(session.session_id, entry.diagnoses);
      } else if (entry.kind === "confirm") {
        session = await this.api.confirmDiagnosis(session.session_id, entry.diagnosis);
      } else {
        session = await this.api.resetSession(session.session_id);
      }
    }
    return session;
  }
}
