/** Thin fetch client for the orchestrator API; every displayed fact comes
 * through here, the UI keeps no business state of its own. */

import type {
  AnalysisReport,
  ApiErrorBody,
  Blueprint,
  LogEntry,
  RunManifest,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let code = 'unknown';
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as ApiErrorBody;
    code = body.error.code;
    message = body.error.message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  createRun(goal: string): Promise<RunManifest> {
    return this.json('/api/runs', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ goal }),
    });
  }

  listRuns(): Promise<RunManifest[]> {
    return this.json('/api/runs');
  }

  getRun(runId: string): Promise<RunManifest> {
    return this.json(`/api/runs/${encodeURIComponent(runId)}`);
  }

  sendFeedback(runId: string, text: string, section: string): Promise<RunManifest> {
    return this.json(`/api/runs/${encodeURIComponent(runId)}/feedback`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ text, section }),
    });
  }

  approve(runId: string): Promise<RunManifest> {
    return this.json(`/api/runs/${encodeURIComponent(runId)}/approve`, {
      method: 'POST',
    });
  }

  async uploadLog(runId: string, filename: string, bytes: BlobPart): Promise<RunManifest> {
    const form = new FormData();
    form.append('file', new Blob([bytes]), filename);
    return this.json(`/api/runs/${encodeURIComponent(runId)}/log`, {
      method: 'POST',
      body: form,
    });
  }

  getBlueprint(runId: string): Promise<Blueprint> {
    return this.json(`/api/runs/${encodeURIComponent(runId)}/artifacts/blueprint.json`);
  }

  query(logId: string, question: string): Promise<AnalysisReport> {
    return this.json('/api/analytics/query', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ log_id: logId, question }),
    });
  }

  listLogs(): Promise<LogEntry[]> {
    return this.json('/api/logs');
  }

  artifactUrl(runId: string, name: string): string {
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/artifacts/${name}`;
  }

  plotUrl(relPath: string): string {
    return `${this.baseUrl}/api/plots/${relPath}`;
  }
}
