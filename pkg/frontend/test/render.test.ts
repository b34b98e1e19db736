// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import type { QueryEntry, QueryResponse } from "../src/api.js";
import {
  LIKERT_LABELS,
  describeResponse,
  renderBanner,
  renderCards,
  renderFeedbackStatus,
  renderLikert,
  renderPanels,
} from "../src/render.js";

// Scores deliberately not in descending order: the client must keep the
// API order rather than re-sorting by score.
const ENTRIES: QueryEntry[] = [
  { item_id: "i_low", item_text: "low score first", score: 0.25 },
  { item_id: "i_high", item_text: "high score second", score: 0.9 },
  { item_id: "i_mid", item_text: "mid score third", score: 0.5 },
];

function host(): HTMLElement {
  const node = document.createElement("div");
  document.body.appendChild(node);
  return node;
}

describe("renderCards", () => {
  it("renders cards in exactly the payload order", () => {
    const container = host();
    renderCards(container, ENTRIES);
    const ids = Array.from(container.querySelectorAll<HTMLElement>(".result-card")).map(
      (card) => card.dataset.itemId,
    );
    expect(ids).toEqual(["i_low", "i_high", "i_mid"]);
  });

  it("shows the item text and a six-decimal score", () => {
    const container = host();
    renderCards(container, ENTRIES);
    const first = container.querySelector(".result-card");
    expect(first?.querySelector(".card-text")?.textContent).toBe("low score first");
    expect(first?.querySelector(".card-score")?.textContent).toBe("0.250000");
  });

  it("replaces earlier results instead of appending", () => {
    const container = host();
    renderCards(container, ENTRIES);
    renderCards(container, ENTRIES.slice(0, 1));
    expect(container.querySelectorAll(".result-card")).toHaveLength(1);
  });

  it("shows a note when there are no results", () => {
    const container = host();
    renderCards(container, []);
    expect(container.textContent).toContain("No results.");
  });
});

describe("renderLikert", () => {
  it("labels points 1, 3 and 5 with the anchor wording", () => {
    const container = host();
    renderLikert(container, "g1", () => undefined);
    const captions = Array.from(container.querySelectorAll(".likert-point span")).map(
      (node) => node.textContent,
    );
    expect(captions).toEqual([
      "1 Definitely irrelevant",
      "2",
      "3 Not sure",
      "4",
      "5 Definitely relevant",
    ]);
  });

  it("reports the picked rating", () => {
    const container = host();
    const picked: number[] = [];
    renderLikert(container, "g2", (rating) => picked.push(rating));
    const inputs = container.querySelectorAll<HTMLInputElement>("input[type=radio]");
    inputs[3].click();
    expect(picked).toEqual([4]);
    inputs[0].click();
    expect(picked).toEqual([4, 1]);
  });

  it("exports the three anchor labels", () => {
    expect(LIKERT_LABELS[1]).toBe("Definitely irrelevant");
    expect(LIKERT_LABELS[3]).toBe("Not sure");
    expect(LIKERT_LABELS[5]).toBe("Definitely relevant");
  });
});

describe("renderBanner", () => {
  it("shows a dismissible message", () => {
    const container = host();
    renderBanner(container, "Query failed: boom", "error");
    expect(container.querySelector(".banner-error")?.textContent).toContain("Query failed: boom");
    container.querySelector<HTMLButtonElement>(".banner-dismiss")?.click();
    expect(container.querySelector(".banner")).toBeNull();
  });

  it("clears when given an empty message", () => {
    const container = host();
    renderBanner(container, "old", "info");
    renderBanner(container, "");
    expect(container.querySelector(".banner")).toBeNull();
  });
});

describe("renderPanels", () => {
  const response = (tag: string): QueryResponse => ({
    request: "red dress",
    model_tag: tag,
    k: 3,
    entries: ENTRIES,
    latency_ms: 1.0,
    used_fallback: false,
  });

  it("renders a labeled panel per model and keeps failures inline", () => {
    const container = host();
    renderPanels(container, [
      { tag: "wlite", response: response("wlite"), error: null },
      { tag: "bm25", response: null, error: "connection refused" },
    ]);
    const panels = container.querySelectorAll<HTMLElement>(".panel");
    expect(panels).toHaveLength(2);
    expect(panels[0].dataset.modelTag).toBe("wlite");
    expect(panels[0].querySelector("h3")?.textContent).toBe("wlite");
    expect(panels[0].querySelectorAll(".result-card")).toHaveLength(3);
    expect(panels[1].querySelector(".panel-error")?.textContent).toBe("connection refused");
    expect(panels[1].querySelectorAll(".result-card")).toHaveLength(0);
  });

  it("renders identical panels for the same response", () => {
    const container = host();
    renderPanels(container, [
      { tag: "wlite", response: response("wlite"), error: null },
      { tag: "wlite", response: response("wlite"), error: null },
    ]);
    const panels = container.querySelectorAll<HTMLElement>(".panel");
    expect(panels[0].innerHTML).toBe(panels[1].innerHTML);
  });
});

describe("status line", () => {
  it("summarizes stored, queued and failed counts", () => {
    const container = host();
    renderFeedbackStatus(container, 2, 1, 0);
    expect(container.textContent).toBe("2 ratings stored, 1 queued");
    expect(container.classList.contains("has-queued")).toBe(true);
    renderFeedbackStatus(container, 1, 0, 1);
    expect(container.textContent).toBe("1 rating stored, 1 failed");
    expect(container.classList.contains("has-queued")).toBe(false);
    expect(container.classList.contains("has-failed")).toBe(true);
  });

  it("describes a response for the meta line", () => {
    const line = describeResponse({
      request: "x",
      model_tag: "bm25",
      k: 7,
      entries: [],
      latency_ms: 3.14159,
      used_fallback: true,
    });
    expect(line).toBe("model bm25, k=7, 3.1 ms, fallback embedding");
  });
});
