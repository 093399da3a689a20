/** What-if session state: one base example plus an accumulating set of
 * word substitutions, rescored server-side after every edit.
 *
 * Substitution positions always refer to the *base* token list (the
 * service applies them all against the original text), so editing never
 * shifts indices. Requests are serialized: a new substitution issued
 * while one is in flight waits for the previous response, keeping the
 * displayed state coherent. */

import type { ApiClient } from "./api.js";
import type { PerturbResponse, Substitution } from "./types.js";

export interface WhatIfState {
  baseText: string;
  baseTokens: string[];
  substitutions: Map<number, string>;
  lastResponse: PerturbResponse | null;
  error: string | null;
}

export function newSession(baseText: string, baseTokens: string[]): WhatIfState {
  return {
    baseText,
    baseTokens,
    substitutions: new Map(),
    lastResponse: null,
    error: null,
  };
}

/** Client-side validation; returns an error string or null when the
 * edit may be sent to the service. */
export function validateSubstitution(
  state: WhatIfState,
  position: number,
  replacement: string,
): string | null {
  if (!Number.isInteger(position) || position < 0 || position >= state.baseTokens.length) {
    return `position ${position} is out of range (0..${state.baseTokens.length - 1})`;
  }
  if (replacement.trim() === "") {
    return "replacement must not be empty";
  }
  return null;
}

export function substitutionList(state: WhatIfState): Substitution[] {
  return [...state.substitutions.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([position, replacement]) => ({ position, replacement }));
}

export class WhatIfSession {
  state: WhatIfState;
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private api: ApiClient,
    baseText: string,
    baseTokens: string[],
    private onChange: (state: WhatIfState) => void = () => {},
  ) {
    this.state = newSession(baseText, baseTokens);
  }

  /** Add or overwrite the substitution at a token position and rescore.
   * Invalid edits surface as state.error without touching the network. */
  substitute(position: number, replacement: string): Promise<WhatIfState> {
    const error = validateSubstitution(this.state, position, replacement);
    if (error !== null) {
      this.state = { ...this.state, error };
      this.onChange(this.state);
      return Promise.resolve(this.state);
    }
    return this.rescore((subs) => {
      const next = new Map(subs);
      next.set(position, replacement.trim());
      return next;
    });
  }

  /** Drop one substitution (revert a token) and rescore. */
  revert(position: number): Promise<WhatIfState> {
    return this.rescore((subs) => {
      const next = new Map(subs);
      next.delete(position);
      return next;
    });
  }

  reset(): Promise<WhatIfState> {
    return this.rescore(() => new Map());
  }

  private rescore(
    update: (current: Map<number, string>) => Map<number, string>,
  ): Promise<WhatIfState> {
    // serialize: each rescore waits for the previous one to settle, and
    // the edit is applied to the state seen at its turn in the queue
    const run = this.queue.then(async () => {
      const substitutions = update(this.state.substitutions);
      this.state = { ...this.state, substitutions, error: null };
      if (substitutions.size === 0) {
        this.state = { ...this.state, lastResponse: null };
        this.onChange(this.state);
        return this.state;
      }
      try {
        const response = await this.api.perturb(
          this.state.baseText,
          substitutionList(this.state),
        );
        this.state = { ...this.state, lastResponse: response, error: null };
      } catch (err) {
        this.state = { ...this.state, error: String(err) };
      }
      this.onChange(this.state);
      return this.state;
    });
    this.queue = run.catch(() => undefined);
    return run;
  }
}
