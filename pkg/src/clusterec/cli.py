"""Operator command line: ingest catalogs, build cluster models, run the
evaluation grid, and serve the HTTP API.

Exit codes: 0 success, 1 validation problem (bad input data or arguments),
2 runtime failure. Every subcommand accepts --show-config to print its
effective hyperparameters and exit, so experiment provenance is always
reproducible from logs.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .baselines import load_ratings
from .clustering import OnlineClusterer
from .embedding import (DEFAULT_DIMENSION, Catalog, HashingEmbedder,
                        ServiceEmbedder, load_catalog, save_catalog)
from .errors import (CatalogParseError, JudgeError, PersistenceError,
                     StateError, ValidationError)
from .recommender import (DEFAULT_HISTORY_THRESHOLD, DEFAULT_WINDOW_SIZE,
                          Recommender)
from .simulation import (CONFIGURATIONS, ExperimentConfig, JudgeSettings,
                         _make_judge, run_experiment)
from .users import load_users

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _echo_config(values: dict) -> None:
    for key in values:
        click.echo(f"{key} = {values[key]!r}")


@click.group()
def cli():
    """Cluster-based recommendations with user-controlled exploration."""


@cli.command()
@click.argument("catalog_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Where to write the embedded catalog artifact (JSONL).")
@click.option("--embedding-source", default="hash",
              type=click.Choice(["precomputed", "hash", "service"]),
              help="Where item vectors come from.")
@click.option("--dimension", default=DEFAULT_DIMENSION, show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Hash-embedder seed.")
@click.option("--sample", "sample_n", default=None, type=int,
              help="Keep a uniform random sample of this many items "
                   "(arrival order preserved).")
@click.option("--sample-seed", default=0, show_default=True)
@click.option("--show-config", is_flag=True, default=False)
def ingest(catalog_path, out_path, embedding_source, dimension, seed,
           sample_n, sample_seed, show_config):
    """Parse CATALOG_PATH, attach embeddings, write a catalog artifact."""
    if show_config:
        _echo_config({
            "catalog": catalog_path, "out": out_path,
            "embedding_source": embedding_source, "dimension": dimension,
            "seed": seed, "sample": sample_n, "sample_seed": sample_seed,
        })
        return
    catalog = load_catalog(catalog_path, embedding_source,
                           dimension=dimension, seed=seed)
    if sample_n is not None:
        if sample_n < 1 or sample_n > len(catalog):
            raise ValidationError(
                f"--sample must be in [1, {len(catalog)}], got {sample_n}")
        rng = np.random.default_rng(sample_seed)
        keep = np.sort(rng.choice(len(catalog), size=sample_n, replace=False))
        catalog = Catalog([catalog[int(i)] for i in keep],
                          dimension=catalog.dimension)
    save_catalog(catalog, out_path)
    click.echo(f"items: {len(catalog)}")
    click.echo(f"dimension: {catalog.dimension}")
    click.echo(f"source: {embedding_source}")
    click.echo(f"artifact: {out_path}")


@cli.command()
@click.option("--catalog", "catalog_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Embedded catalog artifact from `ingest`.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Where to write the cluster model.")
@click.option("--threshold", default=0.45, show_default=True)
@click.option("--dynamic/--no-dynamic", default=True, show_default=True)
@click.option("--update-frequency", default=100, show_default=True)
@click.option("--silhouette-sample", default=1000, show_default=True)
@click.option("--merge-threshold", default=0.9, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dimension", default=DEFAULT_DIMENSION, show_default=True)
@click.option("--show-config", is_flag=True, default=False)
def cluster(catalog_path, out_path, threshold, dynamic, update_frequency,
            silhouette_sample, merge_threshold, seed, dimension, show_config):
    """Stream the catalog through online clustering and save the model."""
    if show_config:
        _echo_config({
            "catalog": catalog_path, "out": out_path, "threshold": threshold,
            "dynamic": dynamic, "update_frequency": update_frequency,
            "silhouette_sample": silhouette_sample,
            "merge_threshold": merge_threshold, "seed": seed,
            "dimension": dimension,
        })
        return
    catalog = load_catalog(catalog_path, "precomputed", dimension=dimension)
    model = OnlineClusterer(
        threshold=threshold, dynamic=dynamic,
        update_frequency=update_frequency,
        silhouette_sample_size=silhouette_sample,
        merge_threshold=merge_threshold, random_state=seed)
    model.fit(catalog.matrix(), catalog.ids)
    model.save(out_path)
    report = model.last_silhouette_
    click.echo(f"clusters: {model.n_clusters_}")
    click.echo(f"threshold: {model.threshold_}")
    click.echo("last_silhouette: "
               + (f"{report.score:.6f}" if report else "-"))
    click.echo(f"model: {out_path}")


def _load_experiment_config(path, overrides: dict) -> tuple[ExperimentConfig, dict]:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    paths = doc.get("paths", {})
    exp = doc.get("experiment", {})
    judge_doc = doc.get("judge", {})
    als = doc.get("als", {})

    judge = JudgeSettings(
        kind=overrides.get("judge_kind") or judge_doc.get("kind", "stub"),
        endpoint=judge_doc.get("endpoint", ""),
        api_key=judge_doc.get("api_key", ""),
        model=judge_doc.get("model", ""),
        temperature=judge_doc.get("temperature", 0.4),
        max_retries=judge_doc.get("max_retries", 3),
        timeout=judge_doc.get("timeout", 30.0),
    )
    config = ExperimentConfig(
        k_values=list(overrides.get("k_values") or exp.get("k", [5, 10])),
        h_values=list(overrides.get("h_values") or exp.get("h", [10, 50])),
        n_users=overrides.get("n_users") or exp.get("n_users", 300),
        catalog_size=exp.get("catalog_size", 20000),
        seed=(overrides["seed"] if overrides.get("seed") is not None
              else exp.get("seed", 0)),
        min_rating=exp.get("min_rating", 3.5),
        window_size=exp.get("window_size", DEFAULT_WINDOW_SIZE),
        history_threshold=exp.get("history_threshold",
                                  DEFAULT_HISTORY_THRESHOLD),
        hash_seed=exp.get("hash_seed", 0),
        configurations=tuple(exp.get("configurations", CONFIGURATIONS)),
        judge=judge,
        als_factors=als.get("factors", 50),
        als_iterations=als.get("iterations", 15),
        als_reg=als.get("reg", 0.1),
    )
    unknown = set(config.configurations) - set(CONFIGURATIONS)
    if unknown:
        raise ValidationError(f"unknown configurations: {sorted(unknown)}")
    return config, paths


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="TOML experiment config.")
@click.option("--out-dir", default=None, type=click.Path(),
              help="Overrides [paths].out_dir.")
@click.option("--judge", "judge_kind", default=None,
              type=click.Choice(["stub", "llm"]))
@click.option("--n-users", default=None, type=int)
@click.option("--k", "k_values", multiple=True, type=int)
@click.option("--h", "h_values", multiple=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--show-config", is_flag=True, default=False)
def evaluate(config_path, out_dir, judge_kind, n_users, k_values, h_values,
             seed, show_config):
    """Run the experiment grid and write results.csv plus table.md."""
    config, paths = _load_experiment_config(config_path, {
        "judge_kind": judge_kind, "n_users": n_users,
        "k_values": k_values, "h_values": h_values, "seed": seed,
    })
    out_dir = out_dir or paths.get("out_dir", "results")
    if show_config:
        _echo_config({
            "config": config_path, "out_dir": out_dir, "paths": paths,
            **{k: v for k, v in vars(config).items()},
        })
        return
    for key in ("catalog", "model", "ratings"):
        if key not in paths:
            raise ValidationError(f"config is missing [paths].{key}")

    _make_judge(config.judge)  # fail fast before any generation

    model = OnlineClusterer.load(paths["model"])
    catalog = load_catalog(paths["catalog"], "precomputed",
                           dimension=model.dimension_)
    ratings = load_ratings(paths["ratings"])
    summary = run_experiment(config, catalog, model, ratings, out_dir)

    click.echo(f"rows: {len(summary['rows'])}")
    click.echo(f"invalid_outcomes: {summary['invalid_outcomes']}")
    click.echo(f"results: {os.path.join(out_dir, 'results.csv')}")
    click.echo(f"table: {os.path.join(out_dir, 'table.md')}")
    if summary["empty_cells"]:
        click.echo(f"empty cells: {summary['empty_cells']}", err=True)
        sys.exit(EXIT_RUNTIME)


@cli.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--catalog", "catalog_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--users", "users_path", default=None, type=click.Path(),
              help="JSONL user store; loaded if present, flushed on "
                   "shutdown.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--default-k", default=10, show_default=True)
@click.option("--history-threshold", default=DEFAULT_HISTORY_THRESHOLD,
              show_default=True)
@click.option("--window-size", default=DEFAULT_WINDOW_SIZE, show_default=True)
@click.option("--keyword-embedder", default="hash",
              type=click.Choice(["hash", "service"]),
              help="How cold-start keywords are embedded.")
@click.option("--embed-seed", default=0, show_default=True)
@click.option("--show-config", is_flag=True, default=False)
def serve(model_path, catalog_path, users_path, host, port, default_k,
          history_threshold, window_size, keyword_embedder, embed_seed,
          show_config):
    """Serve the /v1/ recommendation API over HTTP."""
    if show_config:
        _echo_config({
            "model": model_path, "catalog": catalog_path,
            "users": users_path, "host": host, "port": port,
            "default_k": default_k, "history_threshold": history_threshold,
            "window_size": window_size, "keyword_embedder": keyword_embedder,
            "embed_seed": embed_seed,
        })
        return
    import uvicorn

    from .service import create_app

    model = OnlineClusterer.load(model_path)
    catalog = load_catalog(catalog_path, "precomputed",
                           dimension=model.dimension_)
    if keyword_embedder == "service":
        embedder = ServiceEmbedder.from_env(dimension=catalog.dimension)
    else:
        embedder = HashingEmbedder(dimension=catalog.dimension,
                                   seed=embed_seed)
    users = {}
    if users_path and os.path.exists(users_path):
        users = load_users(users_path)
    recommender = Recommender(model, catalog, embedder=embedder,
                              history_threshold=history_threshold,
                              window_size=window_size)
    app = create_app(catalog, model, recommender=recommender, users=users,
                     users_path=users_path, default_k=default_k)
    click.echo(f"serving on http://{host}:{port} "
               f"(items={len(catalog)}, clusters={model.n_clusters_})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None):
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(EXIT_VALIDATION)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_VALIDATION)
    except (ValidationError, CatalogParseError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (StateError, PersistenceError, JudgeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
