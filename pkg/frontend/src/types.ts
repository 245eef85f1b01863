/** JSON shapes exchanged with the certification service. */

export type Verdict = "Certified" | "Rejected" | "Pending";

export interface CandidateSummary {
  id: string;
  status: Verdict;
  label: string;
  source: string;
}

export interface QueueResponse {
  candidates: CandidateSummary[];
  total: number;
}

export interface DirectiveReport {
  d1_bizarre: boolean;
  d1_beat_count: number;
  d1_envelope_snr: number | null;
  d2_distorted: boolean;
  d2_worst_window_score: number | null;
  d3_inconsistent_qrs: boolean;
  d3_median_correlation: number | null;
  d4_redundant_peaks: boolean;
  d4_min_rr_ms: number | null;
  d4_max_amplitude_z: number | null;
  d5_partial_pxaf: boolean;
  d5_cv_ratio: number | null;
}

export interface CandidateDetail {
  id: string;
  fs: number;
  label: string;
  source: string;
  samples: number[];
  status: Verdict;
  r_peaks: number[];
  report: DirectiveReport;
}

export interface DecisionPayload {
  verdict: Verdict;
  directive?: number;
  reviewer: string;
  notes?: string;
  force?: boolean;
  nonce?: string;
}

export interface DecisionResponse {
  decision: {
    segment_id: string;
    verdict: Verdict;
    directive: number | null;
    source: string;
    reviewer: string;
    seq: number;
    nonce: string;
  };
  replayed: boolean;
}

export interface Progress {
  total: number;
  pending: number;
  certified: number;
  rejected: number;
  by_source: Record<string, number>;
  decisions_logged: number;
}

export const DIRECTIVE_LABELS: Record<number, string> = {
  1: "bizarre shape",
  2: "distorted stretch",
  3: "inconsistent QRS",
  4: "redundant/noisy R peaks",
  5: "partial arrhythmia pattern",
};

/** Client-side payload validation mirroring the service rules. */
export function validateDecision(payload: DecisionPayload): string | null {
  if (!["Certified", "Rejected", "Pending"].includes(payload.verdict)) {
    return `invalid verdict ${payload.verdict}`;
  }
  if (payload.verdict === "Rejected") {
    if (payload.directive === undefined) {
      return "a rejection needs a directive code (1-5)";
    }
    if (!Number.isInteger(payload.directive) || payload.directive < 1
        || payload.directive > 5) {
      return `directive must be 1-5, got ${payload.directive}`;
    }
  } else if (payload.directive !== undefined) {
    return "directive only valid when rejecting";
  }
  if (!payload.reviewer) {
    return "reviewer name required";
  }
  return null;
}
