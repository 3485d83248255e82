"""Command-line client for the grasp-selection service.

Every subcommand builds the same pydantic request the HTTP API accepts and
either executes it in-process (default) or posts it to a running server
(--server URL). Flags can be preloaded from a TOML file via --config; explicit
flags always win. Domain errors map to stable nonzero exit codes (see
README); NoGraspFound exits 2.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
from pydantic import BaseModel

from .errors import ConfigError, GraspFieldError, error_name, exit_code_for
from .service import handlers
from .service.schemas import (
    BenchRequest,
    GraspRequest,
    PlanRequest,
    QueryRequest,
    SynthRequest,
    TrajectoryRequest,
)

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib


def _load_config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged.update(data.get(section, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}


def _apply_config(ctx: click.Context, values: dict, section: str) -> dict:
    """Fill parameters still at their defaults from the TOML config."""
    cfg = _load_config_section(values.pop("config", None), section)
    out = dict(values)
    for key, val in cfg.items():
        if key not in out:
            continue
        source = ctx.get_parameter_source(key)
        if source is None or source.name == "DEFAULT":
            out[key] = val
    return out


def _dispatch(server: str | None, endpoint: str, request: BaseModel, handler):
    """Run in-process or POST to a server; returns the response as a dict."""
    if server is None:
        return handler(request).model_dump()
    url = server.rstrip("/") + "/" + endpoint
    r = httpx.post(url, json=request.model_dump(), timeout=600.0)
    body = r.json()
    if r.status_code != 200:
        message = body.get("message", r.text) if isinstance(body, dict) else r.text
        code = body.get("exit_code", 1) if isinstance(body, dict) else 1
        click.echo(f"{body.get('error', 'error')}: {message}", err=True)
        sys.exit(code)
    return body


def _run(server, endpoint, request, handler) -> None:
    try:
        response = _dispatch(server, endpoint, request, handler)
    except GraspFieldError as e:
        click.echo(f"{error_name(e)}: {e}", err=True)
        sys.exit(exit_code_for(e))
    click.echo(json.dumps(response, indent=2, sort_keys=True))


server_option = click.option("--server", default=None,
                             help="Base URL of a running graspfield server; "
                                  "default runs in-process.")
config_option = click.option("--config", default=None, type=click.Path(),
                             help="TOML file preloading any flag defaults.")


@click.group()
def main() -> None:
    """Task-oriented grasp selection over language feature fields."""


@main.command()
@click.option("--field", "field_path", required=True, type=click.Path())
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path())
@click.option("--object-query", required=True)
@click.option("--part-query", default=None)
@click.option("--output-dir", required=True, type=click.Path())
@click.option("--w", default=0.95, show_default=True,
              help="Semantic weight in s = w*s_sem + (1-w)*s_geom.")
@click.option("--tau", default=0.58, show_default=True,
              help="Flood-fill similarity threshold.")
@click.option("--neighbor-radius-factor", default=2.0, show_default=True)
@click.option("--pca-components", default=3, show_default=True)
@click.option("--nms-trans-tol", default=0.01, show_default=True)
@click.option("--nms-rot-tol-deg", default=15.0, show_default=True)
@click.option("--friction-deg", default=30.0, show_default=True)
@click.option("--n-samples", default=400, show_default=True)
@click.option("--n-views", default=6, show_default=True)
@click.option("--view-size", default=64, show_default=True)
@click.option("--cam-radius", default=0.45, show_default=True)
@click.option("--n-az", default=8, show_default=True)
@click.option("--n-incl", default=3, show_default=True)
@click.option("--top-k", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ground-truth", "ground_truth_path", default=None, type=click.Path())
@server_option
@config_option
@click.pass_context
def grasp(ctx: click.Context, server: str | None, **values) -> None:
    """Select a task-oriented grasp for an (object, part) query."""
    values = _apply_config(ctx, values, "grasp")
    _run(server, "grasp", GraspRequest(**values), handlers.handle_grasp)


@main.command()
@click.option("--field", "field_path", required=True, type=click.Path())
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path())
@click.option("--phrase", required=True)
@click.option("--resolution", default=None, type=(int, int))
@click.option("--output-dir", default=None, type=click.Path())
@server_option
@config_option
@click.pass_context
def query(ctx: click.Context, server: str | None, **values) -> None:
    """Render a top-down relevancy heatmap and report the argmax point."""
    values = _apply_config(ctx, values, "query")
    _run(server, "query", QueryRequest(**values), handlers.handle_query)


@main.command()
@click.option("--out-field", required=True, type=click.Path())
@click.option("--out-sidecar", required=True, type=click.Path())
@click.option("--out-ground-truth", default=None, type=click.Path())
@click.option("--spec", "spec_path", default=None, type=click.Path(),
              help="Scene-spec JSON; omit for a seeded random scene.")
@click.option("--seed", default=0, show_default=True)
@click.option("--n-objects", default=4, show_default=True)
@click.option("--n-parts", default=3, show_default=True)
@click.option("--noise-sigma", default=0.02, show_default=True)
@server_option
@config_option
@click.pass_context
def synth(ctx: click.Context, server: str | None, **values) -> None:
    """Build a synthetic LFLD fixture plus its text sidecar."""
    values = _apply_config(ctx, values, "synth")
    _run(server, "synth", SynthRequest(**values), handlers.handle_synth)


@main.command()
@click.option("--task", required=True)
@click.option("--objects", required=True, multiple=True,
              help="Scene object list (repeatable).")
@click.option("--k", default=7, show_default=True)
@click.option("--offline-responses", "offline_responses_path", default=None,
              type=click.Path(), help="File of scripted responses split by '---'.")
@server_option
@config_option
@click.pass_context
def plan(ctx: click.Context, server: str | None, **values) -> None:
    """Ask the LLM planner for (action, object, part[, place])."""
    values = _apply_config(ctx, values, "plan")
    values["objects"] = list(values["objects"])
    _run(server, "plan", PlanRequest(**values), handlers.handle_plan)


@main.command()
@click.option("--center", default=(0.0, 0.0, 0.0), type=(float, float, float),
              show_default=True)
@click.option("--radius", default=0.45, show_default=True)
@click.option("--az-range-deg", default=100.0, show_default=True)
@click.option("--incl-lo-deg", default=30.0, show_default=True)
@click.option("--incl-hi-deg", default=75.0, show_default=True)
@click.option("-n", "--n", default=60, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@server_option
@config_option
@click.pass_context
def trajectory(ctx: click.Context, server: str | None, **values) -> None:
    """Emit a hemispherical capture trajectory as pose JSON."""
    values = _apply_config(ctx, values, "trajectory")
    _run(server, "trajectory", TrajectoryRequest(**values), handlers.handle_trajectory)


@main.command()
@click.option("--n-scenes", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--weights", default="0,0.5,0.95,1.0", show_default=True,
              help="Comma-separated semantic weights to evaluate.")
@click.option("--n-objects-lo", default=3, show_default=True)
@click.option("--n-objects-hi", default=6, show_default=True)
@click.option("--n-parts-lo", default=2, show_default=True)
@click.option("--n-parts-hi", default=4, show_default=True)
@click.option("--noise-sigma", default=0.02, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@server_option
@config_option
@click.pass_context
def bench(ctx: click.Context, server: str | None, **values) -> None:
    """Run the seeded synthetic benchmark and print per-weight rates."""
    values = _apply_config(ctx, values, "bench")
    values["weights"] = [float(x) for x in str(values["weights"]).split(",")]
    _run(server, "bench", BenchRequest(**values), handlers.handle_bench)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("graspfield.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
