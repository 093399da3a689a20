/** Wire types for the scoring service. Every number shown in the UI
 * originates from one of these responses; the client never computes
 * scores, tokens or probabilities locally. */

export interface ScoredRecord {
  id: string | null;
  label?: number | null;
  prediction: number;
  probs: number[];
  lambda_max: number;
  eigenvalues: number[];
  n_tokens: number | null;
  lambda_per_token?: number;
}

export interface ExampleListResponse {
  total: number;
  offset: number;
  limit: number;
  examples: ScoredRecord[];
}

/** Detail record: scored fields plus server-side tokens and per-token
 * attribution scores for the predicted class. */
export interface ExampleDetail extends ScoredRecord {
  tokens: string[];
  token_scores: number[];
}

export interface ScoreResponse extends ScoredRecord {
  tokens: string[];
}

export interface Substitution {
  position: number;
  replacement: string;
}

export interface PerturbResponse {
  original: ScoreResponse;
  perturbed: ScoreResponse & { text: string };
  delta: number;
  flipped: boolean;
}

export interface HealthResponse {
  status: string;
  model_hash: string;
}

export type SortOrder = "lambda_desc" | "lambda_asc";
