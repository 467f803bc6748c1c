// Browser bootstrap: owns the poll loops and event wiring, delegates all
// state shaping to model.ts and all markup to render.ts.

import { ApiClient } from "./api.js";
import {
  ReviewState,
  canSubmit,
  connectionLost,
  initialState,
  privacyCheckedFor,
  submitRejected,
  submitStarted,
  submitSucceeded,
  withDrilldown,
  withHistory,
  withPendingDetail,
  withPrivacyChecked,
  withProgress,
  withQueue,
} from "./model.js";
import { renderBanner, renderDrilldown, renderPendingPanel, renderSidebar } from "./render.js";
import type { LabelValue } from "./types.js";

const QUEUE_WAIT_SECONDS = 25;
const SIDEBAR_REFRESH_MS = 2000;
const RETRY_MS = 2000;

export class ReviewApp {
  state: ReviewState = initialState();
  private stopped = false;

  constructor(
    private readonly api: ApiClient,
    private readonly root: {
      banner: HTMLElement;
      pending: HTMLElement;
      sidebar: HTMLElement;
      drilldown: HTMLElement;
    },
  ) {}

  start(): void {
    void this.queueLoop();
    void this.sidebarLoop();
    this.root.pending.addEventListener("click", (ev) => this.onClick(ev));
    this.root.pending.addEventListener("change", (ev) => this.onChange(ev));
    this.root.sidebar.addEventListener("click", (ev) => this.onClick(ev));
    this.root.drilldown.addEventListener("click", (ev) => this.onClick(ev));
    if (typeof document !== "undefined") {
      document.addEventListener("keydown", (ev) => this.onKey(ev));
    }
    this.render();
  }

  stop(): void {
    this.stopped = true;
  }

  private update(state: ReviewState): void {
    this.state = state;
    this.render();
  }

  private render(): void {
    this.root.banner.innerHTML = renderBanner(this.state);
    this.root.pending.innerHTML = renderPendingPanel(this.state);
    this.root.sidebar.innerHTML = renderSidebar(this.state);
    this.root.drilldown.innerHTML = this.state.drilldown
      ? renderDrilldown(this.state.drilldown)
      : "";
    this.root.drilldown.style.display = this.state.drilldown ? "block" : "none";
  }

  private async queueLoop(): Promise<void> {
    while (!this.stopped) {
      try {
        const queue = await this.api.queueNext(QUEUE_WAIT_SECONDS);
        const hadDetail = this.state.pendingDetail !== null;
        this.update(withQueue(this.state, queue));
        const pending = this.state.pending;
        if (pending && (!hadDetail || this.state.pendingDetail === null)) {
          try {
            const detail = await this.api.script(pending.script_id);
            this.update(withPendingDetail(this.state, detail));
          } catch {
            // detail is cosmetic; the evidence bundle is already rendered
          }
        }
        if (queue.finished) {
          await this.refreshSidebar();
          return;
        }
      } catch (err) {
        this.update(connectionLost(this.state, String(err)));
        await sleep(RETRY_MS);
      }
    }
  }

  private async sidebarLoop(): Promise<void> {
    while (!this.stopped && !this.state.finished) {
      await this.refreshSidebar();
      await sleep(SIDEBAR_REFRESH_MS);
    }
  }

  private async refreshSidebar(): Promise<void> {
    try {
      const progress = await this.api.progress();
      this.update(withProgress(this.state, progress));
      const history = await this.api.labels();
      this.update(withHistory(this.state, history));
    } catch (err) {
      this.update(connectionLost(this.state, String(err)));
    }
  }

  async submit(label: LabelValue): Promise<void> {
    const pending = this.state.pending;
    if (!pending || !canSubmit(this.state)) return;
    this.update(submitStarted(this.state));
    try {
      const result = await this.api.submitLabel(
        pending.script_id,
        label,
        privacyCheckedFor(this.state, pending.script_id),
      );
      if (result.ok) {
        this.update(submitSucceeded(this.state));
      } else {
        // 409 means the item advanced under us; resync without losing history.
        this.update(submitRejected(this.state, result.error ?? `rejected (${result.status})`));
        const queue = await this.api.queueNext(0);
        this.update(withQueue(this.state, queue));
      }
      await this.refreshSidebar();
    } catch (err) {
      this.update(connectionLost(this.state, String(err)));
    }
  }

  async openDrilldown(scriptId: string): Promise<void> {
    try {
      const detail = await this.api.script(scriptId);
      this.update(withDrilldown(this.state, detail));
    } catch (err) {
      this.update(connectionLost(this.state, String(err)));
    }
  }

  private onClick(ev: Event): void {
    const target = (ev.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === "label") {
      void this.submit(target.dataset.label as LabelValue);
    } else if (action === "drilldown" && target.dataset.id) {
      void this.openDrilldown(target.dataset.id);
    } else if (action === "close-drilldown") {
      this.update(withDrilldown(this.state, null));
    }
  }

  private onChange(ev: Event): void {
    const target = ev.target as HTMLInputElement;
    if (target.dataset.action === "privacy" && this.state.pending) {
      this.update(
        withPrivacyChecked(this.state, this.state.pending.script_id, target.checked),
      );
    }
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLTextAreaElement) {
      return;
    }
    const shortcuts: Record<string, LabelValue> = {
      f: "fingerprinter",
      n: "non-fingerprinter",
      u: "unknown",
    };
    const label = shortcuts[ev.key.toLowerCase()];
    if (label && canSubmit(this.state)) {
      ev.preventDefault();
      void this.submit(label);
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function boot(): void {
  const byId = (id: string): HTMLElement => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing #${id}`);
    return el;
  };
  const app = new ReviewApp(new ApiClient(""), {
    banner: byId("banner"),
    pending: byId("pending"),
    sidebar: byId("sidebar"),
    drilldown: byId("drilldown"),
  });
  app.start();
}

if (typeof document !== "undefined" && document.getElementById("pending")) {
  boot();
}
