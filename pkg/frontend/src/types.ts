/** Payload shapes of the orchestrator HTTP API. */

export type Stage =
  | 'blueprint_drafted'
  | 'awaiting_approval'
  | 'approved'
  | 'scripts_generated'
  | 'scripts_validated'
  | 'awaiting_log'
  | 'log_ingested'
  | 'analyzed'
  | 'evaluated'
  | 'failed';

export interface RunManifest {
  run_id: string;
  user_goal: string;
  stage: Stage;
  artifact_paths: Record<string, string>;
  revision_count: number;
  history: { stage: Stage; at: string }[];
  config_snapshot: Record<string, unknown>;
  error: string | null;
}

export interface WeatherEntry {
  magnitude: number;
  unit: string;
}

export interface Blueprint {
  use_case: string;
  environment: {
    location: string;
    weather: Record<string, WeatherEntry>;
    gps_quality: string;
    obstacles: string[];
    narrative: string;
  };
  mission_description: string;
  test_properties: string[];
  provenance: string[];
  revision: number;
}

export interface SelectedParam {
  name: string;
  message_type: string;
  description: string;
  score: number;
}

export interface SensorVerdict {
  sensor: string;
  failed: boolean;
  evidence: { parameter: string; timestamp_us: number | null; description: string }[];
}

export interface AnalysisReport {
  request: { mode: string; goals: string[]; log_ref: string; k_params: number };
  selected_params: SelectedParam[];
  plots: string[];
  narrative: string;
  detector_verdicts: SensorVerdict[];
  created_at: string;
}

export interface LogEntry {
  log_id: string;
  run_id: string;
  path: string;
  format: string;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
