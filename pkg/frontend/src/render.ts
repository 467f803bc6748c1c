// HTML renderers: pure string producers, unit-testable without a DOM.
// Interactive elements carry data-action attributes; main.ts wires them
// through event delegation.

import {
  ReviewState,
  canSubmit,
  displayedCriteria,
  formatKey,
  intersectionGroups,
  privacyCheckedFor,
} from "./model.js";
import type { LabelEventJson, ScriptDetailJson } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const esc = escapeHtml;

function keyList(keys: { api: string; args: string[] }[], klass: string): string {
  if (!keys.length) return `<span class="muted">(none)</span>`;
  return keys.map((k) => `<code class="attr ${klass}">${esc(formatKey(k))}</code>`).join(" ");
}

export function renderPendingPanel(state: ReviewState): string {
  if (state.finished && !state.pending) {
    return `<div class="idle"><h2>Session finished</h2>
      <p>Every script is labeled. See the progress panel for totals.</p></div>`;
  }
  const pending = state.pending;
  if (!pending) {
    return `<div class="idle"><h2>Auto-processing&hellip;</h2>
      <p>Waiting for the next script that needs a human decision.</p></div>`;
  }
  const evidence = pending.evidence;
  const privacy = privacyCheckedFor(state, pending.script_id);
  const disabled = canSubmit(state) ? "" : "disabled";

  let evidenceHtml = `<p class="muted">No evidence bundle available.</p>`;
  if (evidence) {
    const sim = evidence.similarity;
    const { met, suggestion } = displayedCriteria(evidence, privacy);
    const attrs = state.pendingDetail?.attributes ?? [];
    const groups = intersectionGroups(attrs, evidence);

    const attrRows = attrs
      .map(
        (a) =>
          `<tr><td class="count">${a.count}&times;</td><td><code>${esc(formatKey(a))}</code></td></tr>`,
      )
      .join("");

    evidenceHtml = `
      <section class="similarity">
        <div class="score-badge">score <strong>${esc(sim.score)}</strong>
          (${sim.score_float.toFixed(3)})</div>
        <div>closest known fingerprinter:
          <code>${esc(sim.matched_fingerprinter_id ?? "(none)")}</code></div>
      </section>
      <section class="diff">
        <h3>Attribute overlap</h3>
        <dl>
          <dt>shared with fingerprinter only</dt>
          <dd>${keyList(groups.fingerprinterOnly, "fp")}</dd>
          <dt>also explained by best clean script</dt>
          <dd>${keyList(groups.sharedWithClean, "clean")}</dd>
          <dt>unique to this script</dt>
          <dd>${keyList(groups.uniqueToScript, "unique")}</dd>
        </dl>
      </section>
      <section class="attributes">
        <h3>All attributes (${attrs.length})</h3>
        <table>${attrRows || `<tr><td class="muted">none recorded</td></tr>`}</table>
      </section>
      <section class="criteria">
        <h3>Manual criteria</h3>
        <ul>
          <li class="${evidence.filter_hits.length ? "hit" : "miss"}">
            filter lists: ${
              evidence.filter_hits.length
                ? evidence.filter_hits
                    .map((h) => `<code>[${esc(h.list)}] ${esc(h.rule)}</code>`)
                    .join(" ")
                : "no hits"
            }</li>
          <li class="${evidence.keyword_hits.length ? "hit" : "miss"}">
            keywords: ${
              evidence.keyword_hits.length
                ? evidence.keyword_hits
                    .map((h) => `<code>${esc(h.keyword)}&times;${h.count}</code>`)
                    .join(" ")
                : "no hits"
            }</li>
          <li class="${evidence.exfiltration_hits.length ? "hit" : "miss"}">
            exfiltration: ${
              evidence.exfiltration_hits.length
                ? evidence.exfiltration_hits
                    .map(
                      (h) =>
                        `<code>${esc(h.value_excerpt)}</code> &rarr; <code>${esc(
                          h.destination_url,
                        )}</code>`,
                    )
                    .join("<br>")
                : "no hits"
            }</li>
          <li class="${privacy ? "hit" : "miss"}">
            <label><input type="checkbox" data-action="privacy" ${privacy ? "checked" : ""}>
            privacy policy mentions fingerprinting / device identification</label></li>
        </ul>
        <div class="suggestion badge-${suggestion === "fingerprinter" ? "fp" : "unknown"}">
          suggestion: <strong>${suggestion}</strong> (${met}/4 criteria)
        </div>
      </section>`;
  }

  return `
    <header class="pending-head">
      <h2><code>${esc(pending.script_id)}</code></h2>
      <div class="muted">item ${pending.position}/${pending.queue_length},
        pass ${pending.pass_index}
        ${state.pendingDetail ? `&middot; <code>${esc(state.pendingDetail.source_url)}</code>` : ""}
      </div>
    </header>
    ${evidenceHtml}
    <section class="decide">
      <button data-action="label" data-label="fingerprinter" ${disabled}>
        <u>f</u>ingerprinter</button>
      <button data-action="label" data-label="non-fingerprinter" ${disabled}>
        <u>n</u>on-fingerprinter</button>
      <button data-action="label" data-label="unknown" ${disabled}>
        <u>u</u>nknown</button>
    </section>`;
}

function labelClass(label: string): string {
  if (label === "fingerprinter") return "fp";
  if (label === "non-fingerprinter") return "clean";
  return "unknown";
}

export function renderHistoryRow(event: LabelEventJson): string {
  return `<tr data-action="drilldown" data-id="${esc(event.script_id)}">
    <td>${event.seq}</td>
    <td><code>${esc(event.script_id)}</code></td>
    <td><span class="badge badge-${labelClass(event.label)}">${esc(event.label)}</span></td>
    <td class="muted">${esc(event.method)}</td>
    <td class="muted">${event.score === null ? "" : esc(event.score)}</td>
  </tr>`;
}

export function renderSidebar(state: ReviewState): string {
  const progress = state.progress;
  const counters = progress
    ? `<table class="counters">
        <tr><th>total</th><td>${progress.total}</td></tr>
        <tr><th>fingerprinters</th><td>${progress.suspects}</td></tr>
        <tr><th>non-fingerprinters</th><td>${progress.cleans}</td></tr>
        <tr><th>unknown</th><td>${progress.unknowns}</td></tr>
        <tr><th>unlabeled</th><td>${progress.unlabeled}</td></tr>
        <tr><th>pass</th><td>${progress.pass_index}</td></tr>
        <tr><th>manual decisions</th><td>${progress.manual_decisions}</td></tr>
      </table>`
    : `<p class="muted">loading&hellip;</p>`;

  const rows = [...state.history].reverse().map(renderHistoryRow).join("");
  return `
    <h2>Progress</h2>
    ${counters}
    <h2>Decisions</h2>
    <table class="history">
      <thead><tr><th>#</th><th>script</th><th>label</th><th>how</th><th>score</th></tr></thead>
      <tbody>${rows || `<tr><td colspan="5" class="muted">none yet</td></tr>`}</tbody>
    </table>`;
}

export function renderDrilldown(detail: ScriptDetailJson): string {
  const attrs = detail.attributes
    .map((a) => `<tr><td class="count">${a.count}&times;</td><td><code>${esc(formatKey(a))}</code></td></tr>`)
    .join("");
  return `
    <div class="drilldown-box">
      <button class="close" data-action="close-drilldown">&times;</button>
      <h2><code>${esc(detail.script_id)}</code></h2>
      <p class="muted"><code>${esc(detail.source_url)}</code> &middot; ${esc(detail.origin)}</p>
      <p>label: <span class="badge badge-${labelClass(detail.label ?? "unknown")}">${esc(
        detail.label ?? "unlabeled",
      )}</span>
      ${detail.label_event ? `&middot; via ${esc(detail.label_event.method)} in pass ${detail.label_event.pass_index}` : ""}</p>
      <h3>Attributes (${detail.attributes.length})</h3>
      <table>${attrs || `<tr><td class="muted">none</td></tr>`}</table>
    </div>`;
}

export function renderBanner(state: ReviewState): string {
  if (!state.connected) {
    return `<div class="banner error">Review API unreachable; retrying&hellip;</div>`;
  }
  if (state.notice) {
    return `<div class="banner notice">${esc(state.notice)}</div>`;
  }
  return "";
}
