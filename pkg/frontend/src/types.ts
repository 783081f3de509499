// JSON shapes as the /api endpoints produce them. The UI never derives
// counts or holders itself, it only projects these records into HTML.

export interface UserRef {
  login: string;
  display_name: string;
}

export interface ProgressCount {
  type: string;
  count: number;
  incomplete: boolean;
}

export interface ProgressRow {
  sample_id: number;
  object_name: string;
  scalars: Record<string, number | string | null>;
  counts: ProgressCount[];
}

export interface ProgressDoc {
  plan_id: number;
  plan: string;
  aim: string;
  required_types: string[];
  scalar_columns: string[];
  rows: ProgressRow[];
}

export interface InboxItem {
  id: number;
  object_id: number;
  sender_id: number;
  recipient_id: number;
  sender: UserRef;
  recipient: UserRef;
  note: string;
  state: 'pending' | 'completed' | 'cancelled';
  initiated_at: string;
  resolved_at: string | null;
}

export interface ObjectNode {
  id: number;
  type: string;
  name: string;
  tombstoned: boolean;
  created_at: string;
  document: { filename: string; media_type: string } | null;
}

export interface GraphEdge {
  id: number;
  type: string;
  source_id: number;
  destination_id: number;
}

export interface GraphDoc {
  nodes: ObjectNode[];
  edges: GraphEdge[];
}

export interface AuditDoc {
  root_id: number;
  n_objects: number;
  n_edges: number;
  isolated: number[];
  connected: boolean;
  satisfies_edge_bound: boolean;
  has_report: boolean;
}

export interface PlanSummary {
  id: number;
  name: string;
  aim: string;
  required_types: string[];
}

export interface HolderDoc {
  id: number;
  login: string;
}
