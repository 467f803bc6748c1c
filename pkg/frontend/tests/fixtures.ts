import type {
  EvidenceJson,
  PendingJson,
  ProgressJson,
  ScriptDetailJson,
} from "../src/types.js";

export function evidenceFixture(overrides: Partial<EvidenceJson> = {}): EvidenceJson {
  return {
    script_id: "s2",
    filter_hits: [],
    keyword_hits: [],
    exfiltration_hits: [],
    privacy_policy_checked: false,
    similarity: {
      score: "2/3",
      score_float: 2 / 3,
      matched_fingerprinter_id: "f1",
      intersection: [
        { api: "A", args: [] },
        { api: "B", args: [] },
      ],
    },
    clean_intersection: [{ api: "A", args: [] }],
    criteria_met: 0,
    suggested_label: "unknown",
    ...overrides,
  };
}

export function pendingFixture(overrides: Partial<PendingJson> = {}): PendingJson {
  return {
    script_id: "s2",
    evidence: evidenceFixture(),
    position: 2,
    pass_index: 1,
    queue_length: 4,
    ...overrides,
  };
}

export function progressFixture(overrides: Partial<ProgressJson> = {}): ProgressJson {
  return {
    total: 4,
    suspects: 1,
    cleans: 0,
    unknowns: 0,
    unlabeled: 3,
    pass_index: 1,
    manual_decisions: 0,
    finished: false,
    error: null,
    ...overrides,
  };
}

export function detailFixture(overrides: Partial<ScriptDetailJson> = {}): ScriptDetailJson {
  return {
    script_id: "s2",
    source_url: "https://scripts.example/s2.js",
    content_hash: "0".repeat(64),
    origin: "trace",
    attributes: [
      { api: "A", args: [], count: 2 },
      { api: "B", args: [], count: 1 },
      { api: "X", args: ["1"], count: 5 },
    ],
    network_sends: [],
    source_text: null,
    label: null,
    label_event: null,
    evidence: null,
    ...overrides,
  };
}
