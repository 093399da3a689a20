/** Pure HTML renderers. Every function maps service responses to a
 * markup string, so views are testable without a browser; main.ts only
 * mounts the strings and binds events. */

import {
  difficultyColor,
  formatLambda,
  formatProb,
  relativeRank,
  tokenHeatColor,
} from "./color.js";
import type { WhatIfState } from "./session.js";
import type { ExampleDetail, ScoredRecord, SortOrder } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function lambdaBadge(value: number, t: number): string {
  return (
    `<span class="badge" style="background:${difficultyColor(t)}" ` +
    `title="difficulty score (largest FIM eigenvalue)">` +
    `λ ${escapeHtml(formatLambda(value))}</span>`
  );
}

export interface ListView {
  records: ScoredRecord[];
  total: number;
  offset: number;
  limit: number;
  sort: SortOrder;
}

export function renderList(view: ListView): string {
  const { records, total, offset, limit } = view;
  if (total === 0) {
    return `<div class="empty">No scored examples. Start the service with
      --data (or --scored) to browse a dataset.</div>`;
  }
  if (records.length === 0) {
    return (
      `<div class="empty">Page is past the end (${total} examples).` +
      ` <a href="#/list/0" class="back-control">Back to the first page</a></div>`
    );
  }
  const lams = records.map((r) => r.lambda_max);
  const lo = Math.min(...lams);
  const hi = Math.max(...lams);
  const rows = records
    .map((r) => {
      const t = relativeRank(r.lambda_max, lo, hi);
      const id = escapeHtml(String(r.id));
      return (
        `<tr class="example-row" data-id="${id}">` +
        `<td><a href="#/example/${encodeURIComponent(String(r.id))}">${id}</a></td>` +
        `<td>${lambdaBadge(r.lambda_max, t)}</td>` +
        `<td>${r.prediction}</td>` +
        `<td>${r.label ?? ""}</td>` +
        `<td>${r.n_tokens ?? ""}</td></tr>`
      );
    })
    .join("");
  const page = Math.floor(offset / limit);
  const prev = page > 0 ? `<a href="#/list/${page - 1}">&larr; prev</a>` : "";
  const next = offset + limit < total ? `<a href="#/list/${page + 1}">next &rarr;</a>` : "";
  return (
    `<table class="examples"><thead><tr>` +
    `<th>id</th><th>difficulty</th><th>pred</th><th>label</th><th>tokens</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>` +
    `<div class="pager">${prev} page ${page + 1} of ${Math.max(1, Math.ceil(total / limit))} ${next}</div>`
  );
}

/** Token chips with background intensity proportional to |score| / max
 * |score| (uniform when all scores are zero), sign encoded by hue. */
export function renderTokenHeatmap(tokens: string[], scores: number[]): string {
  if (tokens.length !== scores.length) {
    throw new Error(
      `token/score length mismatch: ${tokens.length} vs ${scores.length}`,
    );
  }
  const maxAbs = Math.max(...scores.map(Math.abs), 0);
  const chips = tokens
    .map((tok, i) => {
      const color = tokenHeatColor(scores[i], maxAbs);
      return (
        `<span class="token" data-position="${i}" style="background:${color}" ` +
        `title="score ${scores[i].toExponential(3)}">${escapeHtml(tok)}</span>`
      );
    })
    .join(" ");
  return `<div class="heatmap">${chips}</div>`;
}

function probsTable(probs: number[], prediction: number): string {
  const cells = probs
    .map((p, i) => {
      const mark = i === prediction ? " class=\"predicted\"" : "";
      return `<td${mark}>p(${i}) = ${formatProb(p)}</td>`;
    })
    .join("");
  return `<table class="probs"><tr>${cells}</tr></table>`;
}

export function renderDetail(detail: ExampleDetail): string {
  return (
    `<div class="detail" data-id="${escapeHtml(String(detail.id))}">` +
    `<h2>example ${escapeHtml(String(detail.id))}</h2>` +
    `<div class="scores">${lambdaBadge(detail.lambda_max, 1)}` +
    ` prediction ${detail.prediction}` +
    (detail.label !== null && detail.label !== undefined
      ? ` &middot; label ${detail.label}`
      : "") +
    `</div>` +
    probsTable(detail.probs, detail.prediction) +
    renderTokenHeatmap(detail.tokens, detail.token_scores) +
    `<p class="hint">Click a token to try a substitution.</p>` +
    `<div id="whatif"></div></div>`
  );
}

export function renderNotFound(id: string): string {
  return (
    `<div class="empty">No example with id “${escapeHtml(id)}”.` +
    ` <a href="#/list/0">Back to the list</a></div>`
  );
}

export function renderServiceDown(detail: string): string {
  return (
    `<div class="banner error">Scoring service unreachable: ` +
    `${escapeHtml(detail)} <button id="retry">retry</button></div>`
  );
}

function variantPanel(
  title: string,
  probs: number[],
  prediction: number,
  lambda: number,
  tokensHtml: string,
): string {
  return (
    `<div class="variant"><h3>${title}</h3>` +
    `${tokensHtml}` +
    probsTable(probs, prediction) +
    `<div>${lambdaBadge(lambda, title === "original" ? 0 : 1)}</div></div>`
  );
}

/** Side-by-side original vs perturbed panels with the delta readout and
 * a FLIPPED badge when the prediction changed. */
export function renderWhatIf(state: WhatIfState): string {
  const editing = state.baseTokens
    .map((tok, i) => {
      const replaced = state.substitutions.get(i);
      const cls = replaced !== undefined ? "token edited" : "token";
      const shown = replaced !== undefined ? `${tok}→${replaced}` : tok;
      return (
        `<span class="${cls}" data-position="${i}">${escapeHtml(shown)}</span>`
      );
    })
    .join(" ");
  let body = "";
  if (state.error !== null) {
    body = `<div class="banner error" role="alert">${escapeHtml(state.error)}</div>`;
  }
  const resp = state.lastResponse;
  if (resp !== null) {
    const flipped = resp.flipped
      ? `<span class="flipped-badge">FLIPPED</span>`
      : "";
    const origTokens = renderTokenHeatmap(
      resp.original.tokens,
      resp.original.tokens.map(() => 0),
    );
    const pertTokens = renderTokenHeatmap(
      resp.perturbed.tokens,
      resp.perturbed.tokens.map(() => 0),
    );
    body +=
      `<div class="comparison">` +
      variantPanel("original", resp.original.probs, resp.original.prediction,
                   resp.original.lambda_max, origTokens) +
      variantPanel("perturbed", resp.perturbed.probs, resp.perturbed.prediction,
                   resp.perturbed.lambda_max, pertTokens) +
      `</div>` +
      `<div class="delta">Δλ = ${escapeHtml(formatLambda(resp.delta))} ${flipped}</div>`;
  }
  return (
    `<div class="whatif"><h3>what-if substitutions</h3>` +
    `<div class="editable">${editing}</div>` +
    `<form id="sub-form">` +
    `<input name="position" type="number" min="0" max="${state.baseTokens.length - 1}" placeholder="token #" required>` +
    `<input name="replacement" type="text" placeholder="replacement" required>` +
    `<button type="submit">substitute</button>` +
    `<button type="button" id="reset-subs">reset</button>` +
    `</form>${body}</div>`
  );
}
