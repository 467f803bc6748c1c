// Wire types mirroring the review API's JSON shapes.

export type LabelValue = "fingerprinter" | "non-fingerprinter" | "unknown";

export interface AttributeKeyJson {
  api: string;
  args: string[];
}

export interface AttributeEntryJson extends AttributeKeyJson {
  count: number;
}

export interface FilterHitJson {
  list: string;
  rule: string;
}

export interface KeywordHitJson {
  keyword: string;
  count: number;
}

export interface ExfiltrationHitJson {
  value_excerpt: string;
  destination_url: string;
}

export interface SimilarityJson {
  score: string;
  score_float: number;
  matched_fingerprinter_id: string | null;
  intersection: AttributeKeyJson[];
}

export interface EvidenceJson {
  script_id: string;
  filter_hits: FilterHitJson[];
  keyword_hits: KeywordHitJson[];
  exfiltration_hits: ExfiltrationHitJson[];
  privacy_policy_checked: boolean;
  similarity: SimilarityJson;
  clean_intersection: AttributeKeyJson[];
  criteria_met: number;
  suggested_label: LabelValue;
}

export interface PendingJson {
  script_id: string;
  evidence: EvidenceJson | null;
  position: number;
  pass_index: number;
  queue_length: number;
}

export interface QueueJson {
  pending: PendingJson | null;
  finished: boolean;
}

export interface ProgressJson {
  total: number;
  suspects: number;
  cleans: number;
  unknowns: number;
  unlabeled: number;
  pass_index: number;
  manual_decisions: number;
  finished: boolean;
  error: string | null;
}

export interface LabelEventJson {
  seq: number;
  script_id: string;
  label: LabelValue;
  method: string;
  pass_index: number;
  score: string | null;
  evidence_ref: string | null;
}

export interface NetworkSendJson {
  url: string;
  payload_size: number;
}

export interface ScriptDetailJson {
  script_id: string;
  source_url: string;
  content_hash: string;
  origin: string;
  attributes: AttributeEntryJson[];
  network_sends: NetworkSendJson[];
  source_text: string | null;
  label: LabelValue | null;
  label_event: LabelEventJson | null;
  evidence: EvidenceJson | null;
}

export interface SubmitAck {
  accepted: boolean;
  recompute_triggered: boolean;
}
