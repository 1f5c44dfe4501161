/** Thin typed client for the risk service; the UI never computes probabilities
 * itself, it only relays what these endpoints return. */

import type {
  HealthResponse,
  PatientDetail,
  PatientListResponse,
  SessionView,
  SortKey,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON body: fall through with the status text
  }
  if (!response.ok) {
    const message =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : response.statusText;
    throw new ApiError(response.status, message);
  }
  return body as T;
}

function post<T>(url: string, payload?: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: payload === undefined ? "{}" : JSON.stringify(payload),
  });
}

export interface ApiClient {
  health(): Promise<HealthResponse>;
  listPatients(sort: SortKey, search: string, limit: number): Promise<PatientListResponse>;
  getPatient(id: number): Promise<PatientDetail>;
  openSession(patientId: number): Promise<SessionView>;
  getSession(sessionId: string): Promise<SessionView>;
  ruleOut(sessionId: string, diagnoses: number[]): Promise<SessionView>;
  confirmDiagnosis(sessionId: string, diagnosis: number): Promise<SessionView>;
  resetSession(sessionId: string): Promise<SessionView>;
}

export function createApi(baseUrl = ""): ApiClient {
  const u = (path: string) => `${baseUrl}${path}`;
  return {
    health: () => request<HealthResponse>(u("/api/health")),
    listPatients: (sort, search, limit) => {
      const params = new URLSearchParams({
        sort,
        search,
        limit: String(limit),
      });
      return request<PatientListResponse>(u(`/api/patients?${params}`));
    },
    getPatient: async (id) => {
      const body = await request<{ patient: PatientDetail }>(u(`/api/patients/${id}`));
      return body.patient;
    },
    openSession: (patientId) => post<SessionView>(u("/api/sessions"), { patient_id: patientId }),
    getSession: (sessionId) => request<SessionView>(u(`/api/sessions/${sessionId}`)),
    ruleOut: (sessionId, diagnoses) =>
      post<SessionView>(u(`/api/sessions/${sessionId}/rule_out`), { diagnoses }),
    confirmDiagnosis: (sessionId, diagnosis) =>
      post<SessionView>(u(`/api/sessions/${sessionId}/confirm`), { diagnosis }),
    resetSession: (sessionId) => post<SessionView>(u(`/api/sessions/${sessionId}/reset`)),
  };
}
