/** Wire types for the label review API (everything under /api). */

export type LabelStatus = "active" | "frozen" | "removed";

export interface Label {
  id: number;
  name: string;
  status: LabelStatus;
  provenance: string;
  created_at_version: number;
  evidence: string[];
}

/** Borderline pair as served by GET /api/pairs: label fields are inlined. */
export interface Pair {
  id: number;
  label_a: Label;
  label_b: Label;
  similarity: number;
  status: "pending" | "resolved";
  resolution: string | null;
  /** What the automatic judge thought, when it was consulted. Advisory only. */
  judge_opinion: string | null;
}

export type Resolution = "keep_both" | "remove_a" | "remove_b" | "rename";

export interface Health {
  status: string;
  service_version: string;
  version: number;
  pending_pairs: number;
}

export interface LabelsResponse {
  version: number;
  labels: Label[];
}

export interface PairsResponse {
  version: number;
  pairs: Pair[];
}

export interface ResolveResponse {
  ok: true;
  version: number;
  pair: Pair;
}

export interface RenameResponse {
  ok: true;
  version: number;
  label: Label;
}

/**
 * Flat error body: {"error": tag, "message"?, ...} with only the relevant
 * extra fields present (current_version on 409s, valid on bad_resolution).
 */
export interface ErrorBody {
  error: string;
  message?: string;
  current_version?: number;
  valid?: string[];
}
