/** Pure HTML renderers. Keeping these free of DOM access makes the whole
 * screen reproducible from API payloads (deep links) and testable in node. */

import type { AnalysisReport, Blueprint, RunManifest } from './types.js';

export function esc(value: unknown): string {
  return String(value ?? '')
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

const FEEDBACK_SECTIONS = ['environment', 'mission', 'test_properties', 'all'];

export function stageBadge(manifest: RunManifest): string {
  const tone = manifest.stage === 'failed' ? 'badge-failed'
    : manifest.stage === 'awaiting_approval' ? 'badge-gate'
    : 'badge-ok';
  return `<span class="badge ${tone}" data-stage="${esc(manifest.stage)}">${esc(manifest.stage)}</span>`;
}

function weatherLines(blueprint: Blueprint): string {
  const rows = Object.entries(blueprint.environment.weather)
    .map(([name, value]) => `<li>${esc(name)}: ${esc(value.magnitude)} ${esc(value.unit)}</li>`)
    .join('');
  return rows || '<li class="muted">none recorded</li>';
}

export function renderRunView(manifest: RunManifest, blueprint: Blueprint | null): string {
  const gateOpen = manifest.stage === 'awaiting_approval';
  const blueprintHtml = blueprint
    ? `
    <section class="card" data-section="environment">
      <h3>Environment</h3>
      <p>${esc(blueprint.environment.location)}</p>
      <ul>${weatherLines(blueprint)}</ul>
      <p>GPS quality: ${esc(blueprint.environment.gps_quality)}</p>
      <p>Obstacles: ${blueprint.environment.obstacles.map(esc).join(', ') || '<span class="muted">none</span>'}</p>
      <p>${esc(blueprint.environment.narrative)}</p>
    </section>
    <section class="card" data-section="mission">
      <h3>Mission</h3>
      <p>${esc(blueprint.mission_description)}</p>
    </section>
    <section class="card" data-section="test_properties">
      <h3>Test properties</h3>
      <ul>${blueprint.test_properties.map((p) => `<li>${esc(p)}</li>`).join('')}</ul>
    </section>`
    : '<p class="muted">blueprint not available yet</p>';

  const artifacts = Object.keys(manifest.artifact_paths)
    .sort()
    .map((name) => `<li><a data-artifact="${esc(name)}" href="/api/runs/${esc(manifest.run_id)}/artifacts/${esc(name)}">${esc(name)}</a></li>`)
    .join('');

  return `
  <article class="run-view" data-run-id="${esc(manifest.run_id)}">
    <header>
      <h2>${esc(manifest.user_goal)}</h2>
      ${stageBadge(manifest)}
      <span class="revision">revision ${manifest.revision_count}</span>
      ${manifest.error ? `<p class="error-banner">${esc(manifest.error)}</p>` : ''}
    </header>
    ${blueprintHtml}
    <section class="card controls">
      <h3>Stage gate</h3>
      <textarea id="feedback-text" placeholder="feedback for the blueprint agent"${gateOpen ? '' : ' disabled'}></textarea>
      <select id="feedback-section"${gateOpen ? '' : ' disabled'}>
        ${FEEDBACK_SECTIONS.map((s) => `<option value="${s}">${s}</option>`).join('')}
      </select>
      <button id="send-feedback"${gateOpen ? '' : ' disabled'}>Send feedback</button>
      <button id="approve"${gateOpen ? '' : ' disabled'}>Approve</button>
    </section>
    <section class="card">
      <h3>Upload flight log</h3>
      <input type="file" id="log-file" accept=".ulg,.ulog,.csv" />
    </section>
    <section class="card">
      <h3>Artifacts</h3>
      <ul class="artifacts">${artifacts}</ul>
    </section>
  </article>`;
}

/** One chat turn: the question on top, plots in the middle, report below. */
export function renderAnalyticsTurn(
  question: string,
  report: AnalysisReport,
  plotUrl: (rel: string) => string,
): string {
  const plots = report.plots
    .map((rel) => `<figure><img src="${esc(plotUrl(rel))}" alt="${esc(rel)}" /></figure>`)
    .join('');
  const verdictRows = report.detector_verdicts
    .map((v) => `
      <tr data-sensor="${esc(v.sensor)}" class="${v.failed ? 'failed' : ''}">
        <td>${esc(v.sensor)}</td>
        <td>${v.failed ? 'yes' : 'no'}</td>
        <td>${esc(v.evidence.map((e) => e.description).slice(0, 2).join('; '))}</td>
      </tr>`)
    .join('');
  const params = report.selected_params
    .map((p) => `<code>${esc(p.name)}</code>`)
    .join(' ');
  return `
  <section class="turn">
    <p class="question">${esc(question)}</p>
    <div class="plots">${plots || '<p class="muted">no parameters from this question are present in the log</p>'}</div>
    <div class="narrative">${esc(report.narrative).replace(/\n/g, '<br/>')}</div>
    <p class="params">parameters: ${params || '<span class="muted">none</span>'}</p>
    <table class="verdicts">
      <thead><tr><th>sensor</th><th>issue detected</th><th>evidence</th></tr></thead>
      <tbody>${verdictRows}</tbody>
    </table>
  </section>`;
}

export function renderRunList(manifests: RunManifest[]): string {
  if (!manifests.length) {
    return '<p class="muted">no runs yet; start one above</p>';
  }
  const rows = manifests
    .map((m) => `
      <tr>
        <td><a href="#/runs/${esc(m.run_id)}">${esc(m.run_id)}</a></td>
        <td>${esc(m.user_goal)}</td>
        <td>${stageBadge(m)}</td>
        <td>${m.revision_count}</td>
      </tr>`)
    .join('');
  return `
  <table class="runs">
    <thead><tr><th>run</th><th>goal</th><th>stage</th><th>revisions</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

export function renderToast(code: string, message: string): string {
  return `<div class="toast" data-code="${esc(code)}">${esc(code)}: ${esc(message)}</div>`;
}
