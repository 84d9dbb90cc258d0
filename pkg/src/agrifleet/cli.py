"""Command-line client: batch planning and simulation over the same core the
gateway serves, so outputs are byte-identical across both surfaces.

Errors exit non-zero with a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .geo import GeoError
from .missions import canonical_bytes, plan_mission
from .planner import PlannerError
from .scenario import ScenarioError, demo_scenario, load_scenario_file
from .sim import (
    SimError,
    build_run_artifacts,
    replay as replay_trace,
    run_scenario,
)


def _fail(error: Exception, path: str = "") -> None:
    body = {"error": str(error)}
    pointer = getattr(error, "json_path", path)
    if pointer:
        body["path"] = pointer
    click.echo(json.dumps(body, sort_keys=True), err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Multi-UAV field coverage: plan, simulate, replay, report, serve."""


@main.command()
@click.option("--field", "field_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spacing", "spacing_m", required=True, type=float, help="sweep spacing in meters")
@click.option("--angle", default="auto", help="sweep direction in degrees, or 'auto'")
@click.option("--inset", "inset_m", default=0.0, type=float)
@click.option("--threshold", "threshold_pct", default=10.0, type=float)
@click.option("--fleet", "fleet_spec", default="", help="comma list of id:battery:drain, e.g. 1:100:0.05,2:90:0.06")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def plan(field_path, spacing_m, angle, inset_m, threshold_pct, fleet_spec, out_path):
    """Plan a coverage mission over a GeoJSON field."""
    try:
        field_fc = json.loads(Path(field_path).read_text())
        angle_value = angle if angle == "auto" else float(angle)
        fleet = []
        if fleet_spec:
            for chunk in fleet_spec.split(","):
                uav_id, battery, drain = chunk.split(":")
                fleet.append(
                    {"uav_id": int(uav_id), "battery_pct": float(battery),
                     "drain_pct_per_m": float(drain)}
                )
        result = plan_mission(
            field_fc,
            spacing_m=spacing_m,
            angle=angle_value,
            inset_m=inset_m,
            threshold_pct=threshold_pct,
            fleet=fleet or None,
        )
    except (ScenarioError, PlannerError, GeoError, ValueError, json.JSONDecodeError) as exc:
        _fail(exc)
        return
    Path(out_path).write_bytes(canonical_bytes(result["plan"]))
    if result["segments"]:
        segments_path = Path(out_path).with_name(Path(out_path).stem + ".segments.json")
        segments_path.write_bytes(canonical_bytes(result["segments"]))
        click.echo(f"wrote {out_path} and {segments_path}")
    else:
        click.echo(f"wrote {out_path}")
    metrics = result["plan"]["metrics"]
    click.echo(
        f"waypoints={len(result['plan']['waypoints'])} length={metrics['length_m']:.1f}m "
        f"turns={metrics['turn_count']}"
    )


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=None, type=int, help="override the scenario seed")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def simulate(scenario_path, seed, out_dir):
    """Run a scenario to completion; write report, trace, heatmap, records."""
    try:
        scenario = load_scenario_file(scenario_path)
        if seed is not None:
            doc = dict(scenario.raw, seed=seed)
            from .scenario import load_scenario as _load

            scenario = _load(doc)
        report, lines, engine = run_scenario(scenario)
    except (ScenarioError, PlannerError, GeoError, SimError, json.JSONDecodeError) as exc:
        _fail(exc)
        return
    build_run_artifacts(Path(out_dir), report, lines, engine)
    click.echo(
        f"coverage={report.coverage_pct}% ticks={report.ticks} swaps={report.swaps} "
        f"transfers={report.transfers_accepted}/{report.transfers_requested} "
        f"stranded={len(report.stranded)}"
    )
    if report.audit_violations:
        click.echo(f"AUDIT VIOLATIONS: {len(report.audit_violations)}", err=True)
        sys.exit(2)


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
def replay(trace_path, out_dir):
    """Re-run a trace, verifying the engine reproduces it event-for-event."""
    try:
        lines = [line.rstrip("\n") for line in Path(trace_path).read_text().splitlines() if line]
        report, replayed = replay_trace(lines)
    except SimError as exc:
        _fail(exc)
        return
    click.echo(f"replay ok: {len(replayed)} events, coverage={report.coverage_pct}%")
    if out_dir:
        from .sim import report_json_bytes

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_bytes(report_json_bytes(report))
        click.echo(f"wrote {out / 'report.json'}")


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", default="md", type=click.Choice(["md", "json"]))
def report(run_dir, fmt):
    """Summarize a finished run directory."""
    path = Path(run_dir) / "report.json"
    if not path.exists():
        _fail(FileNotFoundError(f"{path} not found"))
        return
    doc = json.loads(path.read_text())
    if fmt == "json":
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    lines = [
        f"# Run report: {doc['scenario']}",
        "",
        f"- seed: {doc['seed']}",
        f"- ticks: {doc['ticks']}",
        f"- coverage: {doc['coverage_pct']}%",
        f"- energy consumed: {doc['energy_consumed_pct']} battery-%",
        f"- waypoints: {doc['waypoints']['visited']}/{doc['waypoints']['planned']}"
        f" (stranded: {len(doc['waypoints']['stranded'])})",
        f"- swaps: {doc['swaps']}, transfers: {doc['transfers']['accepted']}"
        f"/{doc['transfers']['requested']}",
        "",
        "| UAV | distance (m) | turns | swaps | captures | final battery | final mode |",
        "|----:|-------------:|------:|------:|---------:|--------------:|------------|",
    ]
    for uav_id, stats in sorted(doc["per_uav"].items(), key=lambda kv: int(kv[0])):
        lines.append(
            f"| {uav_id} | {stats['distance_m']:.1f} | {stats['turns']} | {stats['swaps']} "
            f"| {stats['captures']} | {stats['final_battery']:.1f}% | {stats['final_mode']} |"
        )
    click.echo("\n".join(lines))


@main.command()
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--data-dir", default=None, type=click.Path(file_okay=False),
              help="defaults to $AGRIFLEET_DATA_DIR or ./data")
def serve(port, host, data_dir):
    """Start the ground-station gateway (HTTP + WebSocket)."""
    import uvicorn

    from .service import create_app

    resolved = data_dir or os.environ.get("AGRIFLEET_DATA_DIR", "data")
    app = create_app(resolved)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--size", default=60.0, type=float)
@click.option("--spacing", default=5.0, type=float)
@click.option("--uavs", default=2, type=int)
@click.option("--seed", default=42, type=int)
def demo(out_path, size, spacing, uavs, seed):
    """Write a ready-to-run sample scenario."""
    doc = demo_scenario(size_m=size, spacing_m=spacing, uavs=uavs, seed=seed)
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
