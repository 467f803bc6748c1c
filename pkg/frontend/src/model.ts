// The review view-model: a plain immutable state object plus pure update
// functions. The server is the only authority; everything here can be
// rebuilt from API responses after a page reload. The one piece of purely
// local state is the privacy-policy checkbox, keyed by script id so a
// queue refresh never clobbers an unsubmitted checkbox.

import type {
  AttributeKeyJson,
  EvidenceJson,
  LabelEventJson,
  LabelValue,
  PendingJson,
  ProgressJson,
  QueueJson,
  ScriptDetailJson,
} from "./types.js";

export interface ReviewState {
  pending: PendingJson | null;
  pendingDetail: ScriptDetailJson | null;
  progress: ProgressJson | null;
  history: LabelEventJson[];
  inFlight: boolean;
  finished: boolean;
  connected: boolean;
  notice: string | null;
  privacyChecked: Record<string, boolean>;
  drilldown: ScriptDetailJson | null;
}

export function initialState(): ReviewState {
  return {
    pending: null,
    pendingDetail: null,
    progress: null,
    history: [],
    inFlight: false,
    finished: false,
    connected: true,
    notice: null,
    privacyChecked: {},
    drilldown: null,
  };
}

export function withQueue(state: ReviewState, queue: QueueJson): ReviewState {
  const pending = queue.pending;
  const samePending =
    pending !== null && state.pending !== null && pending.script_id === state.pending.script_id;
  return {
    ...state,
    pending,
    // A fresh item needs a fresh detail fetch; the same item keeps it.
    pendingDetail: samePending ? state.pendingDetail : null,
    finished: queue.finished,
    connected: true,
  };
}

export function withProgress(state: ReviewState, progress: ProgressJson): ReviewState {
  return { ...state, progress, finished: state.finished || progress.finished, connected: true };
}

export function withHistory(state: ReviewState, history: LabelEventJson[]): ReviewState {
  return { ...state, history, connected: true };
}

export function withPendingDetail(state: ReviewState, detail: ScriptDetailJson): ReviewState {
  if (!state.pending || state.pending.script_id !== detail.script_id) {
    return state; // stale response for an item that already advanced
  }
  return { ...state, pendingDetail: detail };
}

export function withPrivacyChecked(state: ReviewState, scriptId: string, checked: boolean): ReviewState {
  return { ...state, privacyChecked: { ...state.privacyChecked, [scriptId]: checked } };
}

export function withDrilldown(state: ReviewState, detail: ScriptDetailJson | null): ReviewState {
  return { ...state, drilldown: detail };
}

export function submitStarted(state: ReviewState): ReviewState {
  return { ...state, inFlight: true, notice: null };
}

export function submitSucceeded(state: ReviewState): ReviewState {
  return { ...state, inFlight: false, pending: null, pendingDetail: null };
}

export function submitRejected(state: ReviewState, message: string): ReviewState {
  // Stale (409) or invalid submissions leave history intact; the queue
  // poll re-synchronizes the pending item.
  return { ...state, inFlight: false, notice: message };
}

export function connectionLost(state: ReviewState, message: string): ReviewState {
  return { ...state, connected: false, notice: message };
}

export function canSubmit(state: ReviewState): boolean {
  return state.pending !== null && !state.inFlight && !state.finished;
}

export function privacyCheckedFor(state: ReviewState, scriptId: string): boolean {
  return state.privacyChecked[scriptId] ?? false;
}

/** Criteria count as the reviewer currently sees it: the three automatic
 * signals from the bundle plus the local checkbox state. */
export function displayedCriteria(
  evidence: EvidenceJson,
  privacyChecked: boolean,
): { met: number; suggestion: LabelValue } {
  const met =
    Number(evidence.filter_hits.length > 0) +
    Number(evidence.keyword_hits.length > 0) +
    Number(evidence.exfiltration_hits.length > 0) +
    Number(privacyChecked);
  return { met, suggestion: met >= 2 ? "fingerprinter" : "unknown" };
}

export interface IntersectionGroups {
  sharedWithClean: AttributeKeyJson[];
  fingerprinterOnly: AttributeKeyJson[];
  uniqueToScript: AttributeKeyJson[];
}

const keyId = (k: AttributeKeyJson) => JSON.stringify([k.api, k.args]);

/** Split the pending script's attributes into the three groups the
 * reviewer is overriding: overlap explained by clean scripts, overlap
 * unique to the matched fingerprinter, and everything else. */
export function intersectionGroups(
  attributes: AttributeKeyJson[],
  evidence: EvidenceJson,
): IntersectionGroups {
  const cleanIds = new Set(evidence.clean_intersection.map(keyId));
  const fpIds = new Set(evidence.similarity.intersection.map(keyId));
  const sharedWithClean: AttributeKeyJson[] = [];
  const fingerprinterOnly: AttributeKeyJson[] = [];
  const uniqueToScript: AttributeKeyJson[] = [];
  for (const key of attributes) {
    const id = keyId(key);
    if (cleanIds.has(id)) {
      sharedWithClean.push(key);
    } else if (fpIds.has(id)) {
      fingerprinterOnly.push(key);
    } else {
      uniqueToScript.push(key);
    }
  }
  return { sharedWithClean, fingerprinterOnly, uniqueToScript };
}

export function formatKey(key: AttributeKeyJson): string {
  return key.args.length ? `${key.api}(${key.args.join(", ")})` : key.api;
}
