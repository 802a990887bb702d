"""Command-line interface.

JSON goes to stdout and human-readable notes to stderr. Exit codes: 0 on
success, 1 for usage, schema, validation, configuration or I/O errors, and
2 for numerical failures such as a singular design matrix.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .dataset import CsvSchema, DatasetError, center_weighted, load_csv, validate
from .decomposer import decompose, diagnostics
from .designs import DesignError
from .estimator import SingularDesignError, fit_wls
from .permtest import ALTERNATIVES, MODES, P_CONVENTIONS, survey_permutation_test
from .simpop import LABELS, PopulationConfig, export_population, generate_population
from .study import ConfigError, export, gnuplot_hints, load_config, run_study

SEED_ENV = "SURVEYPERM_SEED"
DEFAULT_SEED = 20171211

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _schema(args) -> CsvSchema:
    fields: dict = {}
    if args.schema:
        parser = configparser.ConfigParser()
        if not parser.read(args.schema, encoding="utf-8"):
            raise ConfigError(f"cannot read schema file {args.schema}")
        if not parser.has_section("schema"):
            raise ConfigError(f"schema file {args.schema} needs a [schema] section")
        allowed = {"y", "g", "w", "cluster", "stratum", "covariates"}
        unknown = set(parser["schema"]) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [schema]: {sorted(unknown)}")
        fields.update(parser["schema"])
    for key in ("y", "g", "w", "cluster", "stratum", "covariates"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    cov = fields.pop("covariates", "") or ""
    fields["covariates"] = tuple(c.strip() for c in cov.split(",") if c.strip())
    return CsvSchema(**fields)


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("csv", help="input CSV file (header row, comma separated, UTF-8)")
    p.add_argument("--schema", help="INI file with a [schema] section mapping roles to columns")
    p.add_argument("--y", help="response column (default: y)")
    p.add_argument("--g", help="binary group label column (default: g)")
    p.add_argument("--w", help="sample weight column (default: w)")
    p.add_argument("--cluster", help="cluster id column (default: cluster)")
    p.add_argument("--stratum", help="optional stratum id column")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--center", action="store_true", help="subtract the weighted mean of y first")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="surveyperm", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run a permutation test on a CSV sample", allow_abbrev=False)
    _add_schema_flags(t)
    t.add_argument("--mode", choices=MODES, default="pseudo_cluster")
    t.add_argument("--m", type=int, default=1000, help="number of permutations (default 1000)")
    t.add_argument("--seed", type=int, help=f"seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    t.add_argument("--p-convention", choices=P_CONVENTIONS, default="plain")
    t.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    t.add_argument(
        "--carry-weights",
        action="store_true",
        help="naive mode: shuffle weighted residuals instead of keeping weights in place",
    )
    t.add_argument("--threads", type=int, default=1)

    d = sub.add_parser("diagnose", help="validate a CSV sample and print diagnostics", allow_abbrev=False)
    _add_schema_flags(d)

    s = sub.add_parser("simulate", help="generate a clustered finite population", allow_abbrev=False)
    s.add_argument("--n-clusters", type=int, default=500)
    s.add_argument("--cluster-size", type=int, default=20)
    s.add_argument("--sigma-nu", type=float, default=4.0)
    s.add_argument("--sigma-eps", type=float, default=0.5)
    s.add_argument("--delta", type=float, default=0.0, help="group mean difference")
    s.add_argument(
        "--delta-mode",
        choices=("value", "sigma-eta"),
        default="value",
        help="sigma-eta sets delta to sqrt(sigma_nu^2 + sigma_eps^2)",
    )
    s.add_argument("--label", choices=LABELS, default="B")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="population CSV path; a *_truth.csv sidecar is written next to it")

    st = sub.add_parser("study", help="run a Monte Carlo study from a config file", allow_abbrev=False)
    st.add_argument("config", help="study config (INI sections population, design, test, output)")
    st.add_argument("--out", help="output directory (overrides [output] dir)")
    st.add_argument("--threads", type=int, default=1)
    st.add_argument("--gnuplot-hints", action="store_true", help="append a gnuplot script as comments")
    return parser


def _cmd_test(args) -> int:
    seed = _resolve_seed(args.seed)
    print(f"seed = {seed}", file=sys.stderr)
    d = load_csv(args.csv, _schema(args))
    for w in validate(d).warnings:
        print(f"warning: {w.message}", file=sys.stderr)
    report = survey_permutation_test(
        d,
        args.mode,
        args.m,
        seed,
        center=args.center,
        alternative=args.alternative,
        p_convention=args.p_convention,
        carry_weights=args.carry_weights,
        threads=args.threads,
    )
    out = report.to_dict()
    out["centered"] = bool(args.center)
    print(json.dumps(out))
    print(report.result.summary(), file=sys.stderr)
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    d = load_csv(args.csv, _schema(args))
    if args.center:
        d = center_weighted(d)
    report = validate(d)
    model = fit_wls(d)
    diag = diagnostics(decompose(d, model.residuals))
    lines = [
        f"rows = {d.n}",
        f"clusters = {d.n_clusters}",
        f"valid = {str(report.ok).lower()}",
        f"gram_condition = {model.gram_condition:.6g}",
        diag.to_text(),
    ]
    lines += [f"warning = {w.code}: {w.message}" for w in report.warnings]
    print("\n".join(lines))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    print(f"seed = {seed}", file=sys.stderr)
    cfg = PopulationConfig(
        n_clusters=args.n_clusters,
        cluster_size=args.cluster_size,
        sigma_nu=args.sigma_nu,
        sigma_eps=args.sigma_eps,
        delta="sigma_eta" if args.delta_mode == "sigma-eta" else args.delta,
        label=args.label,
        seed=seed,
    )
    pop = generate_population(cfg)
    path, sidecar = export_population(pop, args.out)
    summary = {
        "rows": pop.size,
        "n_clusters": cfg.n_clusters,
        "cluster_size": cfg.cluster_size,
        "label": cfg.label,
        "seed": seed,
        "sigma_eta": cfg.sigma_eta,
        "delta": cfg.delta,
        "group_gap": pop.group_gap(),
        "files": {"population": str(path), "truth": str(sidecar)},
    }
    print(json.dumps(summary))
    return EXIT_OK


def _check_writable(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryFile(dir=directory):
        pass


def _cmd_study(args) -> int:
    cfg, output = load_config(args.config)
    print(f"seed = {cfg.seed}", file=sys.stderr)
    out = args.out or output.get("dir")
    if not out:
        raise ConfigError("no output directory: pass --out or set [output] dir")
    out = Path(out)
    _check_writable(out)
    result = run_study(cfg, threads=args.threads)
    export(result, out)
    print(result.rate_table())
    if args.gnuplot_hints:
        print(gnuplot_hints(out))
    return EXIT_OK


COMMANDS = {"test": _cmd_test, "diagnose": _cmd_diagnose, "simulate": _cmd_simulate, "study": _cmd_study}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SingularDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ConfigError, DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
