/**
 * Integration tests against a live mock-backed API server.
 *
 * The server is the real Python service started with scripted backends, so
 * these cover the same wire the browser uses: review flow (feedback then
 * approve), the analytics console turn rendering, and deep-link
 * reproducibility.
 */
import assert from 'node:assert/strict';
import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { after, before, test } from 'node:test';

import { ApiClient, ApiError } from '../src/api.js';
import { renderAnalyticsTurn, renderRunList, renderRunView } from '../src/views.js';
import type { Blueprint, RunManifest } from '../src/types.js';

let server: ChildProcess;
let workspace: string;
let api: ApiClient;

function gpsDropoutCsv(): string {
  const rows = ['timestamp_us,vehicle_gps_position.satellites_used,vehicle_air_data.baro_alt_meter'];
  for (let i = 0; i < 120; i++) {
    const sats = i >= 50 && i < 60 ? 3 : 12; // ten-sample satellite dropout
    rows.push(`${i * 1_000_000},${sats},${(100 + 0.2 * Math.sin(i / 7)).toFixed(4)}`);
  }
  return rows.join('\n') + '\n';
}

before(async () => {
  workspace = mkdtempSync(join(tmpdir(), 'console-test-'));
  server = spawn(
    'python3',
    ['-m', 'astkit.cli', '--mock', '--workspace', workspace, 'serve', '--port', '0'],
    { stdio: ['ignore', 'pipe', 'pipe'] },
  );
  const base = await new Promise<string>((resolve, reject) => {
    let buffer = '';
    const timer = setTimeout(() => reject(new Error(`server never came up: ${buffer}`)), 30_000);
    server.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    server.stderr!.on('data', (chunk: Buffer) => { buffer += chunk.toString(); });
    server.on('exit', (code) => reject(new Error(`server exited with ${code}: ${buffer}`)));
  });
  api = new ApiClient(base);
});

after(() => {
  server.kill();
  rmSync(workspace, { recursive: true, force: true });
});

async function runThroughGate(): Promise<RunManifest> {
  let manifest = await api.createRun('Generate a city surveillance scenario');
  assert.equal(manifest.stage, 'awaiting_approval');

  // the review screen shows the drafted blueprint
  let blueprint = await api.getBlueprint(manifest.run_id);
  let html = renderRunView(manifest, blueprint);
  assert.match(html, /New York City/);
  assert.match(html, /data-stage="awaiting_approval"/);
  assert.match(html, /<button id="approve">/); // gate open, button enabled

  // feedback re-renders the revised properties
  manifest = await api.sendFeedback(
    manifest.run_id, 'add lighting variability', 'environment',
  );
  assert.equal(manifest.revision_count, 1);
  blueprint = await api.getBlueprint(manifest.run_id);
  html = renderRunView(manifest, blueprint);
  assert.match(html, /revision 1/);
  assert.match(html, /Obstacle Avoidance Efficiency/);

  // approve advances the badge and disables the gate controls
  manifest = await api.approve(manifest.run_id);
  assert.equal(manifest.stage, 'scripts_validated');
  html = renderRunView(manifest, await api.getBlueprint(manifest.run_id));
  assert.match(html, /data-stage="scripts_validated"/);
  assert.match(html, /<button id="approve" disabled>/);
  return manifest;
}

test('review screen: feedback then approve', async () => {
  await runThroughGate();
});

test('wrong-stage errors surface with their server code', async () => {
  const manifest = await runThroughGate();
  await assert.rejects(
    api.approve(manifest.run_id),
    (err: unknown) => err instanceof ApiError && err.status === 409 && err.code === 'wrong_stage',
  );
});

test('analytics console renders plots and a narrative', async () => {
  const manifest = await runThroughGate();
  const uploaded = await api.uploadLog(manifest.run_id, 'flight.csv', gpsDropoutCsv());
  assert.equal(uploaded.stage, 'evaluated');

  const question = 'Was the satellite count low?';
  const report = await api.query(manifest.run_id, question);
  assert.ok(report.plots.length >= 1, 'at least one plot rendered');
  assert.ok(report.narrative.length > 0, 'non-empty narrative');

  const html = renderAnalyticsTurn(question, report, (rel) => api.plotUrl(rel));
  assert.match(html, /<img src="[^"]*\/api\/plots\/[^"]+\.png"/);
  assert.match(html, /class="narrative"/);
  assert.match(html, /satellites_used/);
  assert.match(html, /<tr data-sensor="gps" class="failed">/); // injected dropout

  // the plot URL actually serves PNG bytes
  const resp = await fetch(api.plotUrl(report.plots[0]!));
  assert.equal(resp.status, 200);
  assert.equal(resp.headers.get('content-type'), 'image/png');
  const bytes = new Uint8Array(await resp.arrayBuffer());
  assert.deepEqual([...bytes.slice(0, 4)], [0x89, 0x50, 0x4e, 0x47]);
});

test('deep-linking a run id reproduces the same view', async () => {
  const manifest = await runThroughGate();
  const render = async (): Promise<string> => {
    const fresh = await api.getRun(manifest.run_id);
    const blueprint = await api.getBlueprint(manifest.run_id);
    return renderRunView(fresh, blueprint);
  };
  const first = await render();
  const second = await render();
  assert.equal(first, second);
  assert.ok(first.includes(`data-run-id="${manifest.run_id}"`));
});

test('run list renders one row per run with stage badges', async () => {
  const runs = await api.listRuns();
  assert.ok(runs.length >= 1);
  const html = renderRunList(runs);
  for (const run of runs) {
    assert.match(html, new RegExp(run.run_id));
  }
});

test('views escape markup in server data', () => {
  const manifest: RunManifest = {
    run_id: 'r1',
    user_goal: '<script>alert(1)</script>',
    stage: 'awaiting_approval',
    artifact_paths: {},
    revision_count: 0,
    history: [],
    config_snapshot: {},
    error: null,
  };
  const blueprint: Blueprint = {
    use_case: 'x',
    environment: {
      location: 'a <b> place', weather: {}, gps_quality: 'high',
      obstacles: [], narrative: '',
    },
    mission_description: 'safe',
    test_properties: ['p'],
    provenance: [],
    revision: 0,
  };
  const html = renderRunView(manifest, blueprint);
  assert.ok(!html.includes('<script>alert'));
  assert.match(html, /&lt;script&gt;/);
});
