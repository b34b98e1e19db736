import type { QueryEntry, QueryResponse } from "./api.js";
import type { PanelResult } from "./state.js";

/** Anchor labels shown on the rating widget; intermediate points stay unlabeled. */
export const LIKERT_LABELS: Readonly<Record<number, string>> = {
  1: "Definitely irrelevant",
  3: "Not sure",
  5: "Definitely relevant",
};

function clear(node: Element): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

/**
 * Renders result cards in exactly the order the API returned them.
 * Scores are displayed verbatim to six decimals; nothing is re-sorted,
 * dropped, or recomputed on the client.
 */
export function renderCards(container: HTMLElement, entries: readonly QueryEntry[]): void {
  const doc = container.ownerDocument;
  clear(container);
  if (entries.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "empty-note";
    empty.textContent = "No results.";
    container.appendChild(empty);
    return;
  }
  const list = doc.createElement("ol");
  list.className = "result-cards";
  for (const entry of entries) {
    const card = doc.createElement("li");
    card.className = "result-card";
    card.dataset.itemId = entry.item_id;
    card.dataset.score = String(entry.score);

    const text = doc.createElement("span");
    text.className = "card-text";
    text.textContent = entry.item_text;

    const score = doc.createElement("span");
    score.className = "card-score";
    score.textContent = entry.score.toFixed(6);

    card.appendChild(text);
    card.appendChild(score);
    list.appendChild(card);
  }
  container.appendChild(list);
}

export type BannerKind = "info" | "error";

/** Shows a dismissible banner without blocking the rest of the page. */
export function renderBanner(container: HTMLElement, message: string, kind: BannerKind = "error"): void {
  const doc = container.ownerDocument;
  clear(container);
  if (message.length === 0) return;
  const banner = doc.createElement("div");
  banner.className = `banner banner-${kind}`;
  banner.setAttribute("role", "status");

  const text = doc.createElement("span");
  text.textContent = message;
  banner.appendChild(text);

  const dismiss = doc.createElement("button");
  dismiss.type = "button";
  dismiss.className = "banner-dismiss";
  dismiss.textContent = "dismiss";
  dismiss.addEventListener("click", () => clear(container));
  banner.appendChild(dismiss);

  container.appendChild(banner);
}

export function clearBanner(container: HTMLElement): void {
  clear(container);
}

/**
 * Builds the 1..5 rating radio group. Points 1, 3 and 5 carry their
 * anchor labels; 2 and 4 show just the number.
 */
export function renderLikert(
  container: HTMLElement,
  groupName: string,
  onPick: (rating: number) => void,
): void {
  const doc = container.ownerDocument;
  clear(container);
  const fieldset = doc.createElement("fieldset");
  fieldset.className = "likert";

  const legend = doc.createElement("legend");
  legend.textContent = "How relevant are these results?";
  fieldset.appendChild(legend);

  for (let rating = 1; rating <= 5; rating += 1) {
    const label = doc.createElement("label");
    label.className = "likert-point";

    const input = doc.createElement("input");
    input.type = "radio";
    input.name = groupName;
    input.value = String(rating);
    input.addEventListener("change", () => onPick(rating));
    label.appendChild(input);

    const caption = doc.createElement("span");
    const anchor = LIKERT_LABELS[rating];
    caption.textContent = anchor === undefined ? String(rating) : `${rating} ${anchor}`;
    label.appendChild(caption);

    fieldset.appendChild(label);
  }
  container.appendChild(fieldset);
}

/**
 * Renders one labeled panel per model for the compare view. Panels that
 * failed show their error in place; successful panels are unaffected.
 */
export function renderPanels(container: HTMLElement, results: readonly PanelResult[]): void {
  const doc = container.ownerDocument;
  clear(container);
  const row = doc.createElement("div");
  row.className = "panel-row";
  for (const result of results) {
    const panel = doc.createElement("section");
    panel.className = "panel";
    panel.dataset.modelTag = result.tag;

    const heading = doc.createElement("h3");
    heading.textContent = result.tag;
    panel.appendChild(heading);

    if (result.response !== null) {
      const body = doc.createElement("div");
      body.className = "panel-body";
      renderCards(body, result.response.entries);
      panel.appendChild(body);
    } else {
      const failure = doc.createElement("p");
      failure.className = "panel-error";
      failure.textContent = result.error ?? "query failed";
      panel.appendChild(failure);
    }
    row.appendChild(panel);
  }
  container.appendChild(row);
}

/** Updates the feedback indicator: how many ratings are stored, queued, or failed. */
export function renderFeedbackStatus(
  container: HTMLElement,
  stored: number,
  queued: number,
  failed: number,
): void {
  const parts: string[] = [];
  if (stored > 0) parts.push(`${stored} rating${stored === 1 ? "" : "s"} stored`);
  if (queued > 0) parts.push(`${queued} queued`);
  if (failed > 0) parts.push(`${failed} failed`);
  container.textContent = parts.join(", ");
  container.classList.toggle("has-queued", queued > 0);
  container.classList.toggle("has-failed", failed > 0);
}

/** Summarizes a response for the meta line under the results. */
export function describeResponse(response: QueryResponse): string {
  const fallback = response.used_fallback ? ", fallback embedding" : "";
  return `model ${response.model_tag}, k=${response.k}, ${response.latency_ms.toFixed(1)} ms${fallback}`;
}
