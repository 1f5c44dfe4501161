/** Wire types mirroring the server's JSON payloads (schema_version 1). */

export interface PatientSummary {
  id: number;
  mean: number;
  q50: number;
  q90: number;
  delta: number;
  recorded_diagnosis: string | null;
}

export interface PatientDetail extends PatientSummary {
  features: Record<string, number>;
}

export interface RiskEntry {
  diagnosis: number;
  name: string;
  probability: number;
  conditional_risk: number;
  is_driver: boolean;
}

export interface RiskView {
  mode: string;
  mean: number;
  quantiles: Record<string, number>;
  delta: number;
  entries: RiskEntry[];
  warnings: string[];
}

export interface SessionView {
  schema_version: number;
  session_id: string;
  patient_id: number;
  excluded: number[];
  confirmed: number | null;
  risk: RiskView;
}

export interface PatientListResponse {
  schema_version: number;
  patients: PatientSummary[];
  total: number;
}

export interface HealthResponse {
  schema_version: number;
  status: string;
  n_patients: number;
  n_diagnoses: number;
}

export type SortKey = "delta" | "mean" | "q90" | "id";

export type ActionLogEntry =
  | { kind: "open"; patientId: number }
  | { kind: "rule_out"; diagnoses: number[] }
  | { kind: "confirm"; diagnosis: number }
  | { kind: "reset" };
