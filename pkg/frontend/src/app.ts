/** Browser bootstrap: hash routing, polling, and event wiring.
 * All rendering goes through views.ts; all data through api.ts. */

import { ApiClient, ApiError } from './api.js';
import {
  renderAnalyticsTurn,
  renderRunList,
  renderRunView,
  renderToast,
} from './views.js';
import type { AnalysisReport, Blueprint, RunManifest } from './types.js';

const api = new ApiClient('');
const root = document.getElementById('app') as HTMLElement;
const POLL_MS = 2000;

let pollTimer: number | null = null;

function toast(code: string, message: string): void {
  const holder = document.getElementById('toasts') as HTMLElement;
  holder.insertAdjacentHTML('beforeend', renderToast(code, message));
  const node = holder.lastElementChild as HTMLElement;
  setTimeout(() => node.remove(), 6000);
}

async function guard<T>(work: Promise<T>): Promise<T | null> {
  try {
    return await work;
  } catch (err) {
    if (err instanceof ApiError) {
      toast(err.code, err.message);
    } else {
      toast('network', String(err));
    }
    return null;
  }
}

// --- routes ---------------------------------------------------------------

async function showHome(): Promise<void> {
  const runs = (await guard(api.listRuns())) ?? [];
  const logs = (await guard(api.listLogs())) ?? [];
  root.innerHTML = `
    <section class="card">
      <h2>New run</h2>
      <input id="goal" placeholder="e.g. Generate a city surveillance scenario" size="48" />
      <button id="start-run">Start run</button>
    </section>
    <section class="card"><h2>Runs</h2>${renderRunList(runs)}</section>
    <section class="card"><h2>Flight logs</h2>
      <ul>${logs.map((l) => `<li><a href="#/logs/${l.log_id}">${l.log_id}</a> (${l.format})</li>`).join('') || '<li class="muted">none ingested</li>'}</ul>
    </section>`;
  document.getElementById('start-run')?.addEventListener('click', async () => {
    const goal = (document.getElementById('goal') as HTMLInputElement).value;
    const manifest = await guard(api.createRun(goal));
    if (manifest) location.hash = `#/runs/${manifest.run_id}`;
  });
}

async function loadBlueprint(runId: string): Promise<Blueprint | null> {
  try {
    return await api.getBlueprint(runId);
  } catch {
    return null; // drafted-but-failed runs have no blueprint yet
  }
}

async function showRun(runId: string): Promise<void> {
  const manifest = await guard(api.getRun(runId));
  if (!manifest) return;
  const blueprint = await loadBlueprint(runId);
  root.innerHTML = renderRunView(manifest, blueprint);
  wireRunControls(manifest);
}

function wireRunControls(manifest: RunManifest): void {
  const runId = manifest.run_id;
  document.getElementById('approve')?.addEventListener('click', async () => {
    startPolling(runId);
    const updated = await guard(api.approve(runId));
    stopPolling();
    if (updated) await showRun(runId);
  });
  document.getElementById('send-feedback')?.addEventListener('click', async () => {
    const text = (document.getElementById('feedback-text') as HTMLTextAreaElement).value;
    const section = (document.getElementById('feedback-section') as HTMLSelectElement).value;
    startPolling(runId);
    const updated = await guard(api.sendFeedback(runId, text, section));
    stopPolling();
    if (updated) await showRun(runId); // re-render the revised blueprint
  });
  document.getElementById('log-file')?.addEventListener('change', async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    startPolling(runId);
    const updated = await guard(api.uploadLog(runId, file.name, await file.arrayBuffer()));
    stopPolling();
    if (updated) {
      location.hash = `#/logs/${runId}`;
    }
  });
}

const sessions = new Map<string, string[]>(); // log id -> rendered turns

async function showAnalytics(logId: string): Promise<void> {
  const turns = sessions.get(logId) ?? [];
  root.innerHTML = `
    <article class="analytics" data-log-id="${logId}">
      <h2>Analytics: ${logId}</h2>
      <div id="turns">${turns.join('')}</div>
      <div class="ask">
        <input id="question" placeholder="e.g. Was the satellite count low?" size="48" />
        <button id="ask">Ask</button>
      </div>
    </article>`;
  const button = document.getElementById('ask') as HTMLButtonElement;
  button.addEventListener('click', async () => {
    const input = document.getElementById('question') as HTMLInputElement;
    if (!input.value.trim()) return; // empty questions stay disabled
    button.disabled = true;
    const report = await guard<AnalysisReport>(api.query(logId, input.value));
    button.disabled = false;
    if (!report) return;
    const turn = renderAnalyticsTurn(input.value, report, (rel) => api.plotUrl(rel));
    const history = sessions.get(logId) ?? [];
    history.push(turn); // turns are append-only within a session
    sessions.set(logId, history);
    (document.getElementById('turns') as HTMLElement).insertAdjacentHTML('beforeend', turn);
    input.value = '';
  });
}

// --- polling while a request is in flight ----------------------------------

function startPolling(runId: string): void {
  stopPolling();
  pollTimer = window.setInterval(async () => {
    const manifest = await api.getRun(runId).catch(() => null);
    const badge = document.querySelector('.run-view .badge');
    if (manifest && badge) {
      badge.textContent = manifest.stage;
      badge.setAttribute('data-stage', manifest.stage);
    }
  }, POLL_MS);
}

function stopPolling(): void {
  if (pollTimer !== null) {
    clearInterval(pollTimer);
    pollTimer = null;
  }
}

// --- router -----------------------------------------------------------------

function route(): void {
  const hash = location.hash || '#/';
  const runMatch = hash.match(/^#\/runs\/([^/]+)$/);
  const logMatch = hash.match(/^#\/logs\/([^/]+)$/);
  stopPolling();
  if (runMatch && runMatch[1]) {
    void showRun(runMatch[1]);
  } else if (logMatch && logMatch[1]) {
    void showAnalytics(logMatch[1]);
  } else {
    void showHome();
  }
}

window.addEventListener('hashchange', route);
route();
