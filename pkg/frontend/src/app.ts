import type { FeedbackItem, QueryResponse, ReqrankApi } from "./api.js";
import { FeedbackQueue, K_CHOICES, SessionState, fanOutQuery } from "./state.js";
import {
  clearBanner,
  describeResponse,
  renderBanner,
  renderCards,
  renderFeedbackStatus,
  renderLikert,
  renderPanels,
} from "./render.js";

export interface ConsoleHandles {
  state: SessionState;
  queue: FeedbackQueue;
  /** Runs the current query (single or compare, per the toggle). */
  submit: () => Promise<void>;
  /** Submits the pending rating for one panel; resolves when the queue settles. */
  rate: (panelId: string) => Promise<void>;
  /** Retries queued feedback. */
  retryFeedback: () => Promise<void>;
  modelTags: readonly string[];
}

interface Elements {
  text: HTMLTextAreaElement;
  model: HTMLSelectElement;
  kSelect: HTMLSelectElement;
  compare: HTMLInputElement;
  submitBtn: HTMLButtonElement;
  banner: HTMLElement;
  meta: HTMLElement;
  results: HTMLElement;
  status: HTMLElement;
  retryBtn: HTMLButtonElement;
}

function buildLayout(doc: Document, root: HTMLElement): Elements {
  root.innerHTML = `
    <h1>reqrank console</h1>
    <form class="query-form" autocomplete="off">
      <textarea class="request-text" rows="2"
        placeholder="Describe what you are looking for..."></textarea>
      <div class="controls">
        <label>model <select class="model-select"></select></label>
        <label>k <select class="k-select"></select></label>
        <label class="compare-label">
          <input type="checkbox" class="compare-toggle"> compare all models
        </label>
        <button type="submit" class="submit-query" disabled>search</button>
      </div>
    </form>
    <div class="banner-slot"></div>
    <p class="results-meta"></p>
    <div class="results-slot"></div>
    <div class="feedback-bar">
      <span class="feedback-status"></span>
      <button type="button" class="retry-queue" hidden>retry queued</button>
    </div>
  `;
  const pick = <T extends Element>(selector: string): T => {
    const node = root.querySelector(selector);
    if (node === null) throw new Error(`missing console element ${selector}`);
    return node as T;
  };
  return {
    text: pick<HTMLTextAreaElement>(".request-text"),
    model: pick<HTMLSelectElement>(".model-select"),
    kSelect: pick<HTMLSelectElement>(".k-select"),
    compare: pick<HTMLInputElement>(".compare-toggle"),
    submitBtn: pick<HTMLButtonElement>(".submit-query"),
    banner: pick<HTMLElement>(".banner-slot"),
    meta: pick<HTMLElement>(".results-meta"),
    results: pick<HTMLElement>(".results-slot"),
    status: pick<HTMLElement>(".feedback-status"),
    retryBtn: pick<HTMLButtonElement>(".retry-queue"),
  };
}

const COMPARE_NOTE =
  "Each panel runs the same query independently; orderings are shown " +
  "side by side without blending so no model's results can bias another's.";

/**
 * Wires the console into the element with id "app" (created if absent).
 * All backend traffic goes through the provided api client.
 */
export async function initConsole(doc: Document, api: ReqrankApi): Promise<ConsoleHandles> {
  let root = doc.getElementById("app");
  if (root === null) {
    root = doc.createElement("div");
    root.id = "app";
    doc.body.appendChild(root);
  }
  const els = buildLayout(doc, root);
  const state = new SessionState();

  let storedCount = 0;
  let queryInFlight = false;
  // Response per panel id, so ratings echo the query that produced them.
  const panelResponses = new Map<string, QueryResponse>();

  const updateStatus = (): void => {
    renderFeedbackStatus(els.status, storedCount, queue.size, queue.failures.length);
    els.retryBtn.hidden = queue.size === 0;
  };

  const queue = new FeedbackQueue(
    (item: FeedbackItem) => api.feedback(item),
    {
      onStored: () => {
        storedCount += 1;
      },
      onFailed: () => {
        renderBanner(els.banner, "A rating was rejected twice and could not be stored.", "error");
      },
      onChange: updateStatus,
    },
  );

  // Roster comes from the service; the default model is preselected.
  let modelTags: string[] = [];
  try {
    const roster = await api.models();
    modelTags = roster.models.map((m) => m.tag);
    for (const model of roster.models) {
      const option = doc.createElement("option");
      option.value = model.tag;
      option.textContent = `${model.tag} (${model.kind})`;
      if (model.tag === roster.default) option.selected = true;
      els.model.appendChild(option);
    }
    state.modelTag = roster.default;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    renderBanner(els.banner, `Cannot reach the ranking service: ${message}`, "error");
  }
  els.compare.disabled = modelTags.length < 2;

  for (const choice of K_CHOICES) {
    const option = doc.createElement("option");
    option.value = String(choice);
    option.textContent = String(choice);
    if (choice === state.k) option.selected = true;
    els.kSelect.appendChild(option);
  }

  const syncSubmitEnabled = (): void => {
    els.submitBtn.disabled = !state.canSubmit() || queryInFlight;
  };

  els.text.addEventListener("input", () => {
    state.text = els.text.value;
    syncSubmitEnabled();
  });
  els.model.addEventListener("change", () => {
    state.modelTag = els.model.value;
  });
  els.kSelect.addEventListener("change", () => {
    state.setK(Number(els.kSelect.value));
  });

  const attachLikert = (host: HTMLElement, panelId: string): void => {
    const area = doc.createElement("div");
    area.className = "rating-area";
    const widget = doc.createElement("div");
    renderLikert(widget, `likert-${panelId}`, (rating) => {
      state.setPendingRating(panelId, rating);
      sendBtn.disabled = false;
    });
    const sendBtn = doc.createElement("button");
    sendBtn.type = "button";
    sendBtn.className = "send-rating";
    sendBtn.textContent = "submit rating";
    sendBtn.disabled = true;
    sendBtn.addEventListener("click", () => {
      sendBtn.disabled = true;
      void rate(panelId);
    });
    area.appendChild(widget);
    area.appendChild(sendBtn);
    host.appendChild(area);
  };

  const rate = async (panelId: string): Promise<void> => {
    const rating = state.pendingRating(panelId);
    const response = panelResponses.get(panelId);
    if (rating === null || response === undefined) return;
    await queue.enqueue({
      request_text: response.request,
      model_tag: response.model_tag,
      k: response.k,
      rating,
    });
  };

  const submitSingle = async (): Promise<void> => {
    const response = await api.query(state.text, state.k, state.modelTag ?? undefined);
    state.lastResponse = response;
    panelResponses.clear();
    panelResponses.set("single", response);
    state.clearPendingRatings();
    els.meta.textContent = describeResponse(response);
    renderCards(els.results, response.entries);
    attachLikert(els.results, "single");
  };

  const submitCompare = async (): Promise<void> => {
    const results = await fanOutQuery(
      (text, k, tag) => api.query(text, k, tag),
      state.text,
      state.k,
      modelTags,
    );
    panelResponses.clear();
    state.clearPendingRatings();
    els.meta.textContent = COMPARE_NOTE;
    renderPanels(els.results, results);
    for (const result of results) {
      if (result.response === null) continue;
      panelResponses.set(result.tag, result.response);
      const panel = els.results.querySelector<HTMLElement>(
        `.panel[data-model-tag="${result.tag}"]`,
      );
      if (panel !== null) attachLikert(panel, result.tag);
    }
    const failed = results.filter((r) => r.error !== null);
    if (failed.length > 0) {
      const tags = failed.map((r) => r.tag).join(", ");
      renderBanner(els.banner, `Some panels failed: ${tags}`, "error");
    }
  };

  const submit = async (): Promise<void> => {
    if (!state.canSubmit() || queryInFlight) return;
    queryInFlight = true;
    syncSubmitEnabled();
    clearBanner(els.banner);
    try {
      if (els.compare.checked && modelTags.length >= 2) {
        await submitCompare();
      } else {
        await submitSingle();
      }
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      renderBanner(els.banner, `Query failed: ${message}`, "error");
    } finally {
      queryInFlight = false;
      syncSubmitEnabled();
    }
  };

  els.text.addEventListener("keydown", (event: KeyboardEvent) => {
    if (event.key === "Enter" && !event.shiftKey) {
      event.preventDefault();
      void submit();
    }
  });
  root.querySelector("form")?.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });
  els.retryBtn.addEventListener("click", () => {
    void queue.flush();
  });

  updateStatus();
  syncSubmitEnabled();

  return {
    state,
    queue,
    submit,
    rate,
    retryFeedback: () => queue.flush(),
    modelTags,
  };
}
