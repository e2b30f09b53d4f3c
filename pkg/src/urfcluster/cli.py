"""Command line driver around the in-process pipeline.

Success prints one JSON line on stdout and exits 0. Failures print a
machine-readable error record on stderr and exit nonzero; the pipeline's
staging guarantees no partial session directory is left behind.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .forest import ForestConfig
from .pipeline import (
    DEFAULT_OUT_ENV,
    PipelineConfig,
    PipelineError,
    SubsetRef,
    run_pipeline,
    sweep_pipeline,
)
from .seriation import LINKAGE_METHODS

DEFAULT_OUT = "urfcluster-out"


def _fail(record: dict) -> None:
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(1)


def _parse_counts(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"counts must be comma-separated integers, got {text!r}")
    if not counts:
        raise ValueError("need at least one count")
    return counts


def _parse_subset(text) -> SubsetRef:
    if isinstance(text, dict):
        return SubsetRef(str(text["session"]), int(text["lo"]), int(text["hi"]))
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ValueError(f"subset must look like SESSION:LO:HI, got {text!r}")
    return SubsetRef(parts[0], int(parts[1]), int(parts[2]))


def _parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(part) for part in str(text).split(",")]


@click.group()
def main() -> None:
    """Cluster traffic scenarios and browse the results."""


@main.command()
@click.option("--input", "input_csv", type=click.Path(), default=None, help="Dataset CSV path.")
@click.option("--synthetic", default=None, help="Per-template synthetic row counts, e.g. 200,200,200.")
@click.option("--subset", default=None, help="SESSION:LO:HI ordered-index range of a parent session.")
@click.option("--trees", type=int, default=None, help="Number of trees (default 200).")
@click.option("--i-min", type=float, default=None, help="Impurity floor for pruning (default 0.29).")
@click.option("--m-min", type=int, default=None, help="Minimum bagged points to split (default 2).")
@click.option("--linkage", "linkage_method", type=click.Choice(LINKAGE_METHODS), default=None)
@click.option("--olo/--no-olo", default=None, help="Optimal leaf ordering (off by default).")
@click.option("--seed", type=int, default=None, help="Master seed (default 0).")
@click.option("--out", default=None, help=f"Output root (default ${DEFAULT_OUT_ENV} or ./{DEFAULT_OUT}).")
@click.option("--sweep-i-min", default=None, help="Comma-separated i_min values; runs one session each plus a contact sheet.")
@click.option("--config", "config_file", type=click.Path(), default=None, help="JSON config file; explicit flags win.")
def run(
    input_csv,
    synthetic,
    subset,
    trees,
    i_min,
    m_min,
    linkage_method,
    olo,
    seed,
    out,
    sweep_i_min,
    config_file,
) -> None:
    """Run the clustering pipeline and write one session directory."""
    try:
        file_cfg = {}
        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise ValueError(f"config file not found: {path}")
            file_cfg = json.loads(path.read_text())
            if not isinstance(file_cfg, dict):
                raise ValueError("config file must hold a JSON object")

        def pick(flag, key, default):
            if flag is not None:
                return flag
            return file_cfg.get(key, default)

        input_csv = pick(input_csv, "input", None)
        synthetic = pick(synthetic, "synthetic", None)
        subset = pick(subset, "subset", None)
        sweep_values = pick(sweep_i_min, "sweep_i_min", None)

        forest = ForestConfig(
            tree_count=int(pick(trees, "trees", 200)),
            i_min=float(pick(i_min, "i_min", 0.29)),
            m_min=int(pick(m_min, "m_min", 2)),
            seed=int(pick(seed, "seed", 0)),
        )
        out_value = pick(out, "out", None)
        if out_value is None:
            import os

            out_value = os.environ.get(DEFAULT_OUT_ENV, DEFAULT_OUT)

        if synthetic is None:
            counts = None
        elif isinstance(synthetic, (list, tuple)):
            counts = tuple(int(v) for v in synthetic)
        else:
            counts = _parse_counts(str(synthetic))

        config = PipelineConfig(
            out_root=str(out_value),
            input_csv=None if input_csv is None else str(input_csv),
            synthetic_counts=counts,
            subset=None if subset is None else _parse_subset(subset),
            forest=forest,
            linkage_method=str(pick(linkage_method, "linkage", "average")),
            olo=bool(pick(olo, "olo", False)),
        )
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        _fail({"error": "invalid-config", "stage": "configure", "message": str(exc)})
        return

    try:
        if sweep_values is not None:
            result = sweep_pipeline(config, _parse_floats(sweep_values))
            click.echo(
                json.dumps(
                    {
                        "sweep_id": result.sweep_id,
                        "path": str(result.path),
                        "sessions": [s.session_id for s in result.sessions],
                    },
                    sort_keys=True,
                )
            )
        else:
            result = run_pipeline(config)
            click.echo(
                json.dumps(
                    {
                        "session_id": result.session_id,
                        "path": str(result.path),
                        "created": result.created,
                    },
                    sort_keys=True,
                )
            )
    except PipelineError as exc:
        _fail(exc.record)
    except ValueError as exc:
        _fail({"error": "invalid-config", "stage": "configure", "message": str(exc)})


@main.command()
@click.option("--store", envvar=DEFAULT_OUT_ENV, default=DEFAULT_OUT, help="State root for datasets and sessions.")
@click.option("--host", envvar="URFCLUSTER_HOST", default="127.0.0.1")
@click.option("--port", envvar="URFCLUSTER_PORT", default=8000, type=int)
@click.option("--workers", envvar="URFCLUSTER_WORKERS", default=2, type=int, help="Background job pool size.")
def serve(store, host, port, workers) -> None:
    """Serve the clustering API over HTTP."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(store, workers=workers), host=host, port=port)


if __name__ == "__main__":
    main()
