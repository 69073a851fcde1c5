"""Batch pipeline runner: ingest CSVs, preprocess, tune, estimate, and write
the report tables, plus subcommands for plot rendering and the synthetic
validation suite.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import validation
from .dml import (
    LearnerSpec,
    encode_features,
    problem_from_panel,
    residual_diagnostics,
    result_csv_row,
    run_dml,
    RESULT_CSV_HEADER,
)
from .errors import (
    ConfigError,
    DataError,
    MacrodmlError,
    MissingInput,
    NumericalError,
)
from .learners import DEFAULT_GRID, grid_from_json, grid_search_cv
from .panel_data import (
    FundFilter,
    Series,
    common_range,
    filter_funds,
    load_fund_meta_csv,
    load_tscs_csv,
    to_panel,
)
from .preprocess import (
    correlation_matrix,
    difference_matrix,
    pca_corr,
    screen_stationarity,
    select_lag_var_aic,
)
from .plots import render_corr_heatmap, render_residuals, render_scree

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4

AUTO_P_MAX = 12
LEARNER_CHOICES = ("linear", "boosted", "both")
FOLD_MODE_ALIASES = {"row": "row", "unit": "unit", "unitblocked": "unit"}
RNG_IDENTITY = "numpy.random.default_rng (PCG64)"


@dataclass
class PipelineConfig:
    """One reproducible run: inputs, knobs, output directory.

    Serializable as JSON; command-line flags override file values.
    """

    funds_csv: str = ""
    macro_csv: str = ""
    meta_csv: str = ""
    treatment_name: str = ""
    output_dir: str = ""
    lag_order: int | str = 7  # integer, or "auto" for AIC selection, p_max 12
    learner: str = "both"  # linear | boosted | both
    grid_path: str | None = None
    k: int = 2
    seed: int = 0
    level: str = "5%"
    fold_mode: str = "row"  # row | unit
    min_aum: float = 20.0
    unit_means: bool = False  # regressor means need more units than columns
    outcome_mean: bool = True
    score: str = "orthogonal"

    def validate(self) -> None:
        for name in ("funds_csv", "macro_csv", "meta_csv"):
            if not getattr(self, name):
                raise ConfigError(f"config field {name} is required")
        if not self.treatment_name:
            raise ConfigError("config field treatment_name is required")
        if not self.output_dir:
            raise ConfigError("config field output_dir is required")
        if isinstance(self.lag_order, str):
            if self.lag_order.lower() != "auto":
                raise ConfigError(f"lag_order must be an integer or 'auto', got {self.lag_order!r}")
            self.lag_order = "auto"
        elif self.lag_order < 0:
            raise ConfigError("lag_order must be >= 0")
        if self.learner not in LEARNER_CHOICES:
            raise ConfigError(f"learner must be one of {LEARNER_CHOICES}, got {self.learner!r}")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.level not in ("1%", "5%", "10%"):
            raise ConfigError(f"level must be 1%, 5%, or 10%, got {self.level!r}")
        key = str(self.fold_mode).lower()
        if key not in FOLD_MODE_ALIASES:
            raise ConfigError(f"fold_mode must be row or unit, got {self.fold_mode!r}")
        self.fold_mode = FOLD_MODE_ALIASES[key]
        if self.score not in ("orthogonal", "residual_ols"):
            raise ConfigError(f"unknown score {self.score!r}")
        if self.min_aum < 0:
            raise ConfigError("min_aum must be >= 0")


def config_from_json(path: str) -> PipelineConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config JSON is malformed: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config JSON must be an object")
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**doc)


def _config_hash(config: PipelineConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _series_of(matrix, name) -> Series:
    col = matrix.column(name)
    return [(t, float(v)) for t, v in zip(matrix.time_index, col)]


class _Artifacts:
    """Staged outputs: everything renders to memory first and hits disk only
    after the whole pipeline has succeeded, so failures leave no partials."""

    def __init__(self) -> None:
        self.files: dict[str, str] = {}

    def add(self, name: str, content: str) -> None:
        self.files[name] = content

    def add_csv(self, name: str, header: list[str], rows: list[list]) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        self.add(name, buf.getvalue())

    def write_out(self, out_dir: str) -> dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        written: list[str] = []
        hashes: dict[str, str] = {}
        try:
            for name, content in self.files.items():
                path = os.path.join(out_dir, name)
                with open(path, "w", newline="") as fh:
                    fh.write(content)
                written.append(path)
                hashes[name] = hashlib.sha256(content.encode()).hexdigest()
        except OSError:
            for path in written:
                try:
                    os.remove(path)
                except OSError:
                    pass
            raise
        return hashes


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the full estimation pipeline and write all artifacts.

    Steps: load + filter -> difference -> stationarity screen -> lag order
    (fixed or AIC) -> panel build -> tuning (boosted only) -> cross-fitted
    estimation per learner -> tables, diagnostics, and manifest. Returns the
    manifest dict. Raises typed errors; nothing is written on failure.
    """
    config.validate()
    art = _Artifacts()

    macro = load_tscs_csv(config.macro_csv)
    funds = load_tscs_csv(config.funds_csv)
    catalog = load_fund_meta_csv(config.meta_csv)
    if config.treatment_name not in macro.columns:
        raise DataError(f"treatment {config.treatment_name!r} is not a macro column")

    kept_funds = filter_funds(catalog, FundFilter(min_aum=config.min_aum))
    tickers = [m.ticker for m in kept_funds if m.ticker in funds.columns]
    if not tickers:
        raise DataError("no funds left after metadata filtering")
    funds = funds.select(tickers)

    start, end = common_range(macro, funds)
    macro = macro.restrict(start, end)
    funds = funds.restrict(start, end)

    # macro levels -> growths; fund returns are used as-is
    growth = difference_matrix(macro)
    funds = funds.restrict(growth.time_index[0], growth.time_index[-1])

    screen = screen_stationarity(growth, level=config.level)
    art.add_csv(
        "adf_screen.csv",
        ["variable", "adf_stat", "crit_5pct", "verdict"],
        [
            [name, repr(rep.statistic), repr(rep.critical_values["5%"]), rep.verdict]
            for name, rep in screen.reports.items()
        ],
    )
    if config.treatment_name not in screen.kept.columns:
        raise DataError(
            f"treatment {config.treatment_name!r} failed the stationarity screen"
        )
    kept = screen.kept

    corr = correlation_matrix(kept)
    pca = pca_corr(corr)
    art.add_csv(
        "corr.csv",
        ["variable"] + kept.columns,
        [[name] + [repr(float(v)) for v in corr[i]] for i, name in enumerate(kept.columns)],
    )
    art.add_csv(
        "pca.csv",
        ["component", "eigenvalue", "explained_ratio"] + kept.columns,
        [
            [f"PC{i + 1}", repr(float(pca.eigenvalues[i])), repr(float(pca.explained_ratio[i]))]
            + [repr(float(v)) for v in pca.components[:, i]]
            for i in range(len(kept.columns))
        ],
    )

    if config.lag_order == "auto":
        lag = select_lag_var_aic(kept, AUTO_P_MAX)
    else:
        lag = int(config.lag_order)

    controls = kept.select([c for c in kept.columns if c != config.treatment_name])
    panel = to_panel(
        funds,
        _series_of(kept, config.treatment_name),
        controls,
        lag,
        treatment_name=config.treatment_name,
    )
    if panel.n_rows == 0:
        raise DataError("panel is empty after lag-window construction")
    problem = problem_from_panel(panel)

    learners: list[tuple[str, LearnerSpec]] = []
    best_params = None
    if config.learner in ("linear", "both"):
        learners.append(("linear", LearnerSpec("linear")))
    if config.learner in ("boosted", "both"):
        if config.grid_path is not None:
            try:
                with open(config.grid_path) as fh:
                    grid = grid_from_json(fh.read())
            except FileNotFoundError:
                raise ConfigError(f"grid file not found: {config.grid_path}") from None
        else:
            grid = DEFAULT_GRID
        # tuning features mirror the estimation features, with unit means
        # computed on the full sample (model selection, not inference)
        tune_x = encode_features(
            problem, np.ones(panel.n_rows, dtype=bool),
            config.unit_means, config.outcome_mean,
        )
        best_params, cv_table = grid_search_cv(
            tune_x, panel.y, grid, k=config.k, seed=config.seed
        )
        art.add_csv(
            "grid_cv.csv",
            ["n_trees", "max_depth", "learning_rate", "min_samples_leaf", "cv_mse", "cv_r2"],
            [
                [
                    row.params.n_trees,
                    row.params.max_depth,
                    repr(row.params.learning_rate),
                    row.params.min_samples_leaf,
                    repr(row.cv_mse),
                    repr(row.cv_r2),
                ]
                for row in cv_table
            ],
        )
        learners.append(("boosted", LearnerSpec("boosted", best_params, seed=config.seed)))

    result_rows: list[list[str]] = []
    per_1pct_rows: list[list[str]] = []
    r2_rows: list[list[str]] = []
    diagnostics_res = None
    for name, spec in learners:
        result, res = run_dml(
            problem,
            spec,
            k=config.k,
            seed=config.seed,
            score=config.score,
            fold_mode=config.fold_mode,
            unit_means=config.unit_means,
            outcome_mean=config.outcome_mean,
        )
        result_rows.append(result_csv_row(name, result))
        per_1pct_rows.append([name, repr(result.per_1pct)])
        r2_rows.append([name, repr(res.r2_y), repr(res.r2_d)])
        diagnostics_res = res  # the last learner's residuals feed Fig-3 data

    art.add_csv("results.csv", list(RESULT_CSV_HEADER), result_rows)
    art.add_csv("per_1pct.csv", ["model", "per_1pct"], per_1pct_rows)
    art.add_csv("r2.csv", ["model", "r2_y", "r2_d"], r2_rows)

    table, summary = residual_diagnostics(diagnostics_res, diagnostics_res.g_hat)
    art.add_csv(
        "residuals.csv",
        ["fitted", "residual"],
        [[repr(float(f)), repr(float(r))] for f, r in table],
    )
    art.add_csv(
        "nuisance_residuals.csv",
        ["row", "fold", "u", "v"],
        [
            [str(i), str(int(diagnostics_res.fold_of[i])),
             repr(float(diagnostics_res.u[i])), repr(float(diagnostics_res.v[i]))]
            for i in range(panel.n_rows)
        ],
    )

    manifest = {
        "config": asdict(config),
        "config_hash": _config_hash(config),
        "seed": config.seed,
        "rng": RNG_IDENTITY,
        "flags": {
            "dml_variant": "dml2_pooled_score",
            "score": config.score,
            "mode": "crossfit",
            "fold_mode": config.fold_mode,
            "unit_x_means_encoding": config.unit_means,
            "unit_y_mean_encoding": config.outcome_mean,
            "means_refit_per_fold": True,
            "adf_regression": "constant_no_trend",
            "lag_used": lag,
            "level": config.level,
        },
        "panel": {
            "rows": panel.n_rows,
            "units": len(set(panel.unit_ids)),
            "x_width": len(panel.x_names),
            "dropped_nonstationary": [name for name, _ in screen.dropped],
        },
        "boosted_params": None if best_params is None else asdict(best_params),
        "residual_summary": summary,
    }
    blob = json.dumps(manifest, sort_keys=True, indent=2)
    art.add("manifest.json", blob)
    hashes = art.write_out(config.output_dir)

    # rewrite the manifest with file hashes included (hash covers all files
    # except the manifest itself)
    manifest["files"] = {k: v for k, v in sorted(hashes.items()) if k != "manifest.json"}
    with open(os.path.join(config.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def _read_csv_rows(path: str) -> tuple[list[str], list[list[str]]]:
    if not os.path.exists(path):
        raise MissingInput(f"missing input: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def emit_plots(output_dir: str) -> list[str]:
    """Render corr_heatmap.svg, pca_scree.svg, residuals_fitted.svg from the
    CSVs a previous `run` left in output_dir."""
    header, rows = _read_csv_rows(os.path.join(output_dir, "corr.csv"))
    labels = [row[0] for row in rows]
    corr = np.array([[float(v) for v in row[1:]] for row in rows])
    heatmap = render_corr_heatmap(corr, labels)

    header, rows = _read_csv_rows(os.path.join(output_dir, "pca.csv"))
    explained = np.array([float(row[header.index("explained_ratio")]) for row in rows])
    scree = render_scree(explained)

    header, rows = _read_csv_rows(os.path.join(output_dir, "residuals.csv"))
    fitted = np.array([float(row[0]) for row in rows])
    resid = np.array([float(row[1]) for row in rows])
    scatter = render_residuals(fitted, resid)

    out_names = []
    svg_hashes = {}
    for name, content in (
        ("corr_heatmap.svg", heatmap),
        ("pca_scree.svg", scree),
        ("residuals_fitted.svg", scatter),
    ):
        path = os.path.join(output_dir, name)
        with open(path, "w") as fh:
            fh.write(content)
        svg_hashes[name] = hashlib.sha256(content.encode()).hexdigest()
        out_names.append(path)

    manifest_path = os.path.join(output_dir, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        manifest.setdefault("files", {}).update(svg_hashes)
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return out_names


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macrodml",
        description="cross-fitted DML for macro treatment effects on fund panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the estimation pipeline")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--funds", help="fund returns CSV (wide, date column)")
    run.add_argument("--macro", help="macro levels CSV (wide, date column)")
    run.add_argument("--meta", help="fund metadata CSV")
    run.add_argument("--treatment", help="macro column used as treatment")
    run.add_argument("--learner", choices=LEARNER_CHOICES)
    run.add_argument("--lag", help="lag order: integer or 'auto'")
    run.add_argument("--k", type=int, help="number of cross-fitting folds")
    run.add_argument("--seed", type=int)
    run.add_argument("--level", choices=("1%", "5%", "10%"), help="ADF level")
    run.add_argument("--fold-mode", choices=("row", "unit"))
    run.add_argument("--grid", help="hyperparameter grid JSON file")
    run.add_argument("--out", help="output directory")

    plots = sub.add_parser("plots", help="render SVG figures from run outputs")
    plots.add_argument("--out", required=True, help="directory holding run outputs")

    val = sub.add_parser("validate", help="run the synthetic acceptance suite")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--reps", type=int, default=None,
                     help="Monte Carlo replication guard (default: full counts)")
    return parser


def _config_from_args(args) -> PipelineConfig:
    config = config_from_json(args.config) if args.config else PipelineConfig()
    overrides = {
        "funds_csv": args.funds,
        "macro_csv": args.macro,
        "meta_csv": args.meta,
        "treatment_name": args.treatment,
        "learner": args.learner,
        "lag_order": args.lag,
        "k": args.k,
        "seed": args.seed,
        "level": args.level,
        "fold_mode": args.fold_mode,
        "grid_path": args.grid,
        "output_dir": args.out,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if isinstance(config.lag_order, str) and config.lag_order.lower() != "auto":
        try:
            config.lag_order = int(config.lag_order)
        except ValueError:
            raise ConfigError(
                f"lag_order must be an integer or 'auto', got {config.lag_order!r}"
            ) from None
    return config


def _fail(exc: Exception, code: int) -> int:
    print(f"code={code} error={type(exc).__name__} message={exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = _config_from_args(args)
            manifest = run_pipeline(config)
            print(f"wrote {len(manifest['files']) + 1} files to {config.output_dir}")
            return EXIT_OK
        if args.command == "plots":
            for path in emit_plots(args.out):
                print(f"wrote {path}")
            return EXIT_OK
        results = validation.run_all(seed=args.seed, reps=args.reps)
        for row in results:
            print(row.line())
        n_pass = sum(r.passed for r in results)
        print(f"{n_pass}/{len(results)} criteria passed")
        if any(r.insufficient for r in results):
            print("insufficient reps for at least one Monte Carlo criterion",
                  file=sys.stderr)
        return EXIT_OK if n_pass == len(results) else EXIT_VALIDATION
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except DataError as exc:
        return _fail(exc, EXIT_DATA)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except MacrodmlError as exc:
        return _fail(exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
