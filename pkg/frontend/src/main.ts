/** App wiring: hash routing, data fetching, event binding. All state
 * shown on screen comes from service responses. */

import { ApiClient } from "./api.js";
import {
  renderDetail,
  renderList,
  renderNotFound,
  renderServiceDown,
  renderWhatIf,
} from "./render.js";
import { WhatIfSession } from "./session.js";
import type { SortOrder } from "./types.js";

const PAGE_SIZE = 20;

const api = new ApiClient("");
const root = document.getElementById("app") as HTMLElement;

let sort: SortOrder = "lambda_desc";
let session: WhatIfSession | null = null;

function mountWhatIf(): void {
  const host = document.getElementById("whatif");
  if (host === null || session === null) return;
  host.innerHTML = renderWhatIf(session.state);
  const form = host.querySelector<HTMLFormElement>("#sub-form");
  form?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    const position = Number(data.get("position"));
    const replacement = String(data.get("replacement") ?? "");
    void session?.substitute(position, replacement);
  });
  host.querySelector("#reset-subs")?.addEventListener("click", () => {
    void session?.reset();
  });
  host.querySelectorAll<HTMLElement>(".editable .token").forEach((el) => {
    el.addEventListener("click", () => {
      const input = form?.elements.namedItem("position") as HTMLInputElement | null;
      if (input !== null && input !== undefined) {
        input.value = el.dataset.position ?? "";
        (form?.elements.namedItem("replacement") as HTMLInputElement)?.focus();
      }
    });
  });
}

async function showList(page: number): Promise<void> {
  try {
    const view = await api.listExamples(sort, page * PAGE_SIZE, PAGE_SIZE);
    root.innerHTML =
      `<div class="toolbar"><label>sort
         <select id="sort">
           <option value="lambda_desc"${sort === "lambda_desc" ? " selected" : ""}>hardest first</option>
           <option value="lambda_asc"${sort === "lambda_asc" ? " selected" : ""}>easiest first</option>
         </select></label></div>` +
      renderList({ records: view.examples, total: view.total,
                   offset: view.offset, limit: view.limit, sort });
    document.getElementById("sort")?.addEventListener("change", (ev) => {
      sort = (ev.target as HTMLSelectElement).value as SortOrder;
      void showList(0);
    });
  } catch (err) {
    showServiceDown(err, () => void showList(page));
  }
}

async function showDetail(id: string): Promise<void> {
  try {
    const detail = await api.exampleDetail(id);
    root.innerHTML = renderDetail(detail);
    session = new WhatIfSession(api, detail.tokens.join(" "), detail.tokens,
                                () => mountWhatIf());
    mountWhatIf();
    root.querySelectorAll<HTMLElement>(".heatmap .token").forEach((el) => {
      el.addEventListener("click", () => {
        const host = document.getElementById("whatif");
        const input = host?.querySelector<HTMLInputElement>("input[name=position]");
        if (input) input.value = el.dataset.position ?? "";
        host?.querySelector<HTMLInputElement>("input[name=replacement]")?.focus();
      });
    });
  } catch (err) {
    const apiErr = err as { status?: number };
    if (apiErr.status === 404) {
      root.innerHTML = renderNotFound(id);
      return;
    }
    showServiceDown(err, () => void showDetail(id));
  }
}

function showServiceDown(err: unknown, retry: () => void): void {
  root.innerHTML = renderServiceDown(String(err));
  document.getElementById("retry")?.addEventListener("click", retry);
}

function route(): void {
  const hash = window.location.hash || "#/list/0";
  const listMatch = /^#\/list\/(\d+)$/.exec(hash);
  if (listMatch !== null) {
    void showList(Number(listMatch[1]));
    return;
  }
  const detailMatch = /^#\/example\/(.+)$/.exec(hash);
  if (detailMatch !== null) {
    void showDetail(decodeURIComponent(detailMatch[1]));
    return;
  }
  void showList(0);
}

window.addEventListener("hashchange", route);
route();
