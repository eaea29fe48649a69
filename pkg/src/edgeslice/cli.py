"""Command-line entry points.

``serve`` runs the management API; ``request``/``release``/``instances``
play the management-client role against a running server; ``experiment``
reproduces the bundled latency studies; ``simulate`` replays a scenario
file through the workload engine.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .experiments import (
    CONFIG_DIR,
    EXPERIMENT_NAMES,
    ExperimentSpec,
    load_experiment_config,
    run_experiment,
    summary_markdown,
)


@click.group()
def main():
    """Slice-subnet orchestrator and latency-experiment runner."""


@main.command()
@click.option("--cluster", "cluster_file", type=click.Path(exists=True),
              default=str(CONFIG_DIR / "cluster.json"), show_default=True,
              help="cluster topology file")
@click.option("--template-dir", type=click.Path(exists=True),
              default=str(CONFIG_DIR / "templates"), show_default=True)
@click.option("--acf-dir", type=click.Path(exists=True),
              default=str(CONFIG_DIR / "acfs"), show_default=True)
@click.option("--listen", default="127.0.0.1:8080", show_default=True,
              help="address:port to bind")
def serve(cluster_file, template_dir, acf_dir, listen):
    """Run the management API server."""
    import uvicorn

    from .acf_registry import load_acf_dir
    from .api import configure_logging, create_app
    from .cluster import load_topology
    from .meco import Orchestrator
    from .templates import load_template_dir

    configure_logging()
    orchestrator = Orchestrator(
        load_topology(cluster_file),
        load_acf_dir(acf_dir),
        load_template_dir(template_dir),
    )
    app = create_app(orchestrator)
    host, _, port = listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")


@main.command()
@click.argument("descriptor_file", type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8080", show_default=True)
def request(descriptor_file, server):
    """Submit a slice-subnet descriptor file for instantiation."""
    import httpx

    body = Path(descriptor_file).read_bytes()
    response = httpx.post(f"{server}/mapss_mm/v1/mapss", content=body,
                          timeout=30.0)
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))
    sys.exit(0 if response.status_code == 201 else 1)


@main.command()
@click.argument("mapss_id")
@click.option("--server", default="http://127.0.0.1:8080", show_default=True)
def release(mapss_id, server):
    """Terminate a running slice-subnet instance."""
    import httpx

    response = httpx.delete(f"{server}/mapss_mm/v1/mapss/{mapss_id}",
                            timeout=30.0)
    if response.status_code == 204:
        click.echo(f"released {mapss_id} "
                   f"({response.headers.get('X-Deleted-Objects', '?')} objects)")
    else:
        click.echo(json.dumps(response.json(), indent=2, sort_keys=True))
        sys.exit(1)


@main.command()
@click.option("--server", default="http://127.0.0.1:8080", show_default=True)
def instances(server):
    """List slice-subnet instances known to the orchestrator."""
    import httpx

    response = httpx.get(f"{server}/mapss_mm/v1/mapss", timeout=30.0)
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="write the per-frame latency series here")
@click.option("--summary", "summary_path", type=click.Path(), default=None,
              help="write the per-phase summary here")
def simulate(scenario_file, csv_path, summary_path):
    """Replay one scenario file through the workload engine."""
    from .sim.engine import SimScenario, run as run_sim

    report = run_sim(SimScenario.from_json(scenario_file))
    if csv_path:
        report.emit_csv(csv_path)
    if summary_path:
        report.emit_summary(summary_path)
    click.echo(json.dumps(report.summary(), indent=2, sort_keys=True))


@main.command()
@click.argument("name", type=click.Choice(EXPERIMENT_NAMES))
@click.option("--phase-seconds", type=int, default=None,
              help="virtual seconds per phase (default from the config file)")
@click.option("--seeds", default=None,
              help="comma-separated seed list (default from the config file)")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="directory for CSV series and summaries")
@click.option("--config", "config_file", type=click.Path(exists=True),
              default=None, help="experiment calibration file")
@click.option("--parallel", is_flag=True, default=False,
              help="run independent seeds in parallel worker processes")
def experiment(name, phase_seconds, seeds, out_dir, config_file, parallel):
    """Run one named experiment; exits 0 iff its predicates pass."""
    config = load_experiment_config(config_file)
    parameters = {"parallel": parallel}
    if phase_seconds is not None:
        parameters["phaseSeconds"] = phase_seconds
    if seeds:
        seed_list = tuple(int(s) for s in seeds.split(","))
        parameters["seedsExplicit"] = True
    else:
        seed_list = tuple(config.get("seeds", [1]))
    spec = ExperimentSpec(
        name=name,
        parameters=parameters,
        seeds=seed_list,
        out_dir=Path(out_dir) if out_dir else None,
    )
    result = run_experiment(spec, config)
    click.echo(summary_markdown(result))
    if not result.passed:
        click.echo("experiment predicates FAILED", err=True)
        sys.exit(1)
    click.echo("all predicates passed")


if __name__ == "__main__":
    main()
