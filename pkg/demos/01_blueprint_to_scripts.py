"""Phase 1-2 walkthrough: blueprint -> feedback -> validated scripts.

Runs entirely offline against the packaged scripted backend and demo
incident corpus. Artifacts land in ./demo_workspace.
"""
from pathlib import Path

from astkit.config import load_config
from astkit.orchestrator import Orchestrator
from astkit.scenario import FeedbackNote

workspace = Path("demo_workspace")
orc = Orchestrator(load_config(mock=True, workspace=workspace))

print("=== starting a run from a one-line testing goal ===")
manifest = orc.start_run("Generate a city surveillance scenario")
print(f"run {manifest.run_id} is now {manifest.stage}")

blueprint = orc.load_blueprint(manifest.run_id)
print(f"location:   {blueprint.environment.location}")
print(f"weather:    {blueprint.environment.weather}")
print(f"mission:    {blueprint.mission_description}")
print(f"properties: {blueprint.test_properties}")
print(f"grounded in incidents: {blueprint.provenance}")

print("\n=== the human stage-gate: ask for one more stressor ===")
note = FeedbackNote(author="reviewer", text="add lighting variability",
                    target_section="environment")
manifest = orc.submit_feedback(manifest.run_id, note)
revised = orc.load_blueprint(manifest.run_id)
print(f"revision {revised.revision}: properties now {revised.test_properties}")

print("\n=== approval triggers script generation + rule validation ===")
manifest = orc.approve(manifest.run_id)
print(f"stage: {manifest.stage}")
run_dir = workspace / "runs" / manifest.run_id
for name in ("mission.plan.json", "sim.settings.json", "validation.json"):
    print(f"  wrote {run_dir / name}")
