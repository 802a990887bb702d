"""Monte Carlo harness: repeated samples, both tests per sample, and the
calibration and power summaries built from them.

Replicate ``r`` draws its sample with ``derive_seed(seed, r, 0)`` and runs
mode ``k`` of ``MODE_ORDER`` with ``derive_seed(seed, r, k + 1)``, so any
replicate can be recomputed on its own and results do not depend on the
order in which replicates finish.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__, rng
from .dataset import SurveyDataset
from .decomposer import ClusterDecomposition, decompose
from .designs import DesignSpec, describe, draw_sample, parse_design
from .estimator import fit_wls
from .permtest import P_CONVENTIONS, run_test
from .simpop import PopulationConfig, SimulatedPopulation, generate_population

log = logging.getLogger(__name__)

MODE_ORDER = ("pseudo_cluster", "naive_global")
DEFAULT_ALPHA_GRID = (0.001, 0.005) + tuple(round(0.01 * k, 2) for k in range(1, 11))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    population: PopulationConfig
    design: DesignSpec
    replicates: int = 2000
    m: int = 500
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    seed: int = 1
    modes: tuple[str, ...] = MODE_ORDER
    p_convention: str = "plain"
    carry_weights: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid or any(not 0 < a < 1 for a in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError(f"alpha_grid must be strictly increasing within (0, 1): {grid}")
        object.__setattr__(self, "alpha_grid", grid)
        modes = tuple(self.modes)
        if not modes or any(md not in MODE_ORDER for md in modes):
            raise ConfigError(f"modes must be a nonempty subset of {MODE_ORDER}, got {modes}")
        object.__setattr__(self, "modes", modes)
        if self.p_convention not in P_CONVENTIONS:
            raise ConfigError(f"p_convention must be one of {P_CONVENTIONS}")
        rng.check_seed(self.seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["population"] = asdict(self.population)
        out["design"] = describe(self.design)
        out["alpha_grid"] = list(self.alpha_grid)
        out["modes"] = list(self.modes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        design = dict(data.pop("design"))
        return cls(
            population=PopulationConfig(**data.pop("population")),
            design=parse_design(design.pop("type"), **design),
            **{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()},
        )


class EmpiricalCurve(NamedTuple):
    psi: np.ndarray
    p: np.ndarray


@dataclass(eq=False)
class StudyResult:
    config: StudyConfig
    psi_obs: np.ndarray
    p_values: dict[str, np.ndarray]
    empirical_curve: EmpiricalCurve
    rejection_rates: dict[str, dict[float, float]]
    power_curve: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    @property
    def replicates(self) -> int:
        return self.psi_obs.shape[0]

    def per_replicate(self) -> list[dict]:
        missing = np.full(self.replicates, np.nan)
        pseudo = self.p_values.get("pseudo_cluster", missing)
        naive = self.p_values.get("naive_global", missing)
        return [
            {
                "replicate": r,
                "psi_obs": float(self.psi_obs[r]),
                "p_pseudo": float(pseudo[r]),
                "p_naive": float(naive[r]),
            }
            for r in range(self.replicates)
        ]

    def rate_table(self) -> str:
        modes = list(self.rejection_rates)
        lines = ["alpha    " + "  ".join(f"{md:>14}" for md in modes)]
        for a in self.config.alpha_grid:
            lines.append(
                f"{a:<8g} " + "  ".join(f"{self.rejection_rates[md][a]:>14.4f}" for md in modes)
            )
        return "\n".join(lines)


def empirical_pvalues(psi_values) -> EmpiricalCurve:
    """For every value, the share of all values at least as large in absolute
    value. Returned sorted by psi."""
    psi = np.sort(np.asarray(psi_values, dtype=float))
    if psi.size == 0:
        raise ValueError("empirical p-values need at least one statistic")
    mags = np.sort(np.abs(psi))
    below = np.searchsorted(mags, np.abs(psi), side="left")
    return EmpiricalCurve(psi, (psi.size - below) / psi.size)


def rejection_rate(p_values, alpha: float) -> float:
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValueError("rejection rate needs at least one p-value")
    return float(np.mean(p <= alpha))


def replicate_seeds(cfg: StudyConfig, r: int) -> tuple[int, dict[str, int]]:
    """Sample seed and per-mode permutation seeds of replicate ``r``."""
    sample_seed = rng.derive_seed(cfg.seed, r, 0)
    modes = {md: rng.derive_seed(cfg.seed, r, k + 1) for k, md in enumerate(MODE_ORDER)}
    return sample_seed, modes


def replicate_sample(pop: SimulatedPopulation, cfg: StudyConfig, r: int) -> SurveyDataset:
    return draw_sample(pop, cfg.design, replicate_seeds(cfg, r)[0])


def replicate_decomposition(d: SurveyDataset) -> ClusterDecomposition:
    return decompose(d, fit_wls(d).residuals)


def estimation_error(
    pop: SimulatedPopulation, d: SurveyDataset, c: ClusterDecomposition, beta
) -> np.ndarray:
    """Error of every estimated cluster effect against its true counterpart.

    With the true effect of cluster i written on the weighted-residual
    scale, ``mean_k w_k * (nu_i + mu_k - beta_0)``, the error equals the
    weighted mean of the true within-cluster errors of the sampled units.
    Needs an intercept-only fit and sample cluster ids that are population
    ids, as produced by :func:`replicate_sample`.
    """
    if d.p != 1:
        raise ValueError("estimation_error needs an intercept-only fit")
    nu = pop.true_nu[np.asarray(d.cluster, dtype=np.int64)]
    mu = pop.config.delta * d.g - pop.config.delta / 2
    target = d.w * (nu + mu - float(beta[0]))
    sums = np.bincount(c.cluster_index, weights=target, minlength=c.n_clusters)
    return c.nu_hat - sums / c.cluster_sizes


def _run_replicate(pop: SimulatedPopulation, cfg: StudyConfig, r: int) -> tuple[float, dict]:
    try:
        d = replicate_sample(pop, cfg, r)
        c = replicate_decomposition(d)
        seeds = replicate_seeds(cfg, r)[1]
        out, psi = {}, None
        for md in cfg.modes:
            res = run_test(
                c,
                md,
                cfg.m,
                seeds[md],
                p_convention=cfg.p_convention,
                carry_weights=cfg.carry_weights,
            )
            out[md] = res.p_value
            psi = res.psi_observed
        return psi, out
    except Exception as exc:
        raise RuntimeError(f"replicate {r} failed: {exc}") from exc


def run_study(
    cfg: StudyConfig,
    *,
    population: SimulatedPopulation | None = None,
    threads: int = 1,
) -> StudyResult:
    """Run every replicate and aggregate.

    ``population`` may be passed to reuse an already generated population;
    it must match ``cfg.population``.
    """
    pop = population if population is not None else generate_population(cfg.population)
    if pop.config != cfg.population:
        raise ConfigError("population does not match the study configuration")
    log.info("study: %d replicates, m=%d, design=%s", cfg.replicates, cfg.m, describe(cfg.design))
    reps = range(cfg.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda r: _run_replicate(pop, cfg, r), reps))
    else:
        rows = [_run_replicate(pop, cfg, r) for r in reps]
    psi = np.array([row[0] for row in rows])
    p_values = {md: np.array([row[1][md] for row in rows]) for md in cfg.modes}
    return summarize(cfg, psi, p_values)


def summarize(cfg: StudyConfig, psi, p_values: dict[str, np.ndarray]) -> StudyResult:
    psi = np.asarray(psi, dtype=float)
    rates = {
        md: {a: rejection_rate(p, a) for a in cfg.alpha_grid} for md, p in p_values.items()
    }
    power = {md: [(a, r) for a, r in table.items()] for md, table in rates.items()}
    return StudyResult(cfg, psi, p_values, empirical_pvalues(psi), rates, power)


# -- config files -------------------------------------------------------------

_POP_KEYS = {
    "n_clusters": int,
    "cluster_size": int,
    "sigma_nu": float,
    "sigma_eps": float,
    "delta": str,
    "label": str,
    "seed": int,
}
_DESIGN_KEYS = {"type", "n", "n_clusters", "rule", "rates", "sizes", "fractions"}
_TEST_KEYS = {"replicates", "m", "alpha_grid", "seed", "modes", "p_convention", "carry_weights"}
_OUTPUT_KEYS = {"dir"}


def _mapping(text: str, cast) -> dict[int, float]:
    out = {}
    for item in text.replace(";", ",").split(","):
        if item.strip():
            k, _, v = item.partition(":")
            out[int(k)] = cast(v)
    return out


def _split(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def parse_config(text: str) -> tuple[StudyConfig, dict]:
    """Parse an INI-style study config. Returns the config and the
    ``[output]`` section."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections = {"population": _POP_KEYS, "design": _DESIGN_KEYS, "test": _TEST_KEYS, "output": _OUTPUT_KEYS}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"unknown config section [{name}]")
        unknown = set(parser[name]) - set(sections[name])
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")

    def get(section, key, cast):
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc

    pop_kw = {}
    if parser.has_section("population"):
        for k, cast in _POP_KEYS.items():
            if parser.has_option("population", k):
                pop_kw[k] = get("population", k, cast)
    if "delta" in pop_kw and pop_kw["delta"].replace("-", "_") != "sigma_eta":
        pop_kw["delta"] = get("population", "delta", float)
    try:
        population = PopulationConfig(**pop_kw)
    except ValueError as exc:
        raise ConfigError(f"[population]: {exc}") from exc

    if not parser.has_option("design", "type"):
        raise ConfigError("missing key [design] type")
    d_kw: dict = {}
    for k in ("n", "n_clusters", "rule", "rates"):
        if parser.has_option("design", k):
            d_kw[k] = parser.get("design", k)
    if parser.has_option("design", "sizes"):
        d_kw["sizes"] = get("design", "sizes", lambda s: _mapping(s, int))
    if parser.has_option("design", "fractions"):
        d_kw["fractions"] = get("design", "fractions", lambda s: _mapping(s, float))
    try:
        design = parse_design(parser.get("design", "type"), **d_kw)
    except KeyError as exc:
        raise ConfigError(f"missing key [design] {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"[design]: {exc}") from exc

    t_kw: dict = {}
    casts = {
        "replicates": int,
        "m": int,
        "seed": int,
        "p_convention": str,
        "alpha_grid": lambda s: tuple(float(v) for v in _split(s)),
        "modes": lambda s: tuple(_split(s)),
        "carry_weights": lambda s: parser.BOOLEAN_STATES[s.strip().lower()],
    }
    for k, cast in casts.items():
        if parser.has_option("test", k):
            try:
                t_kw[k] = get("test", k, cast)
            except KeyError as exc:
                raise ConfigError(f"bad value for [test] {k}") from exc
    cfg = StudyConfig(population=population, design=design, **t_kw)
    output = dict(parser["output"]) if parser.has_section("output") else {}
    return cfg, output


def load_config(path: str | Path) -> tuple[StudyConfig, dict]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- export -------------------------------------------------------------------


def export(result: StudyResult, directory: str | Path) -> dict[str, Path]:
    """Write ``per_replicate.csv``, ``curves.csv``, ``rates.csv`` and
    ``manifest.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "per_replicate": out / "per_replicate.csv",
        "curves": out / "curves.csv",
        "rates": out / "rates.csv",
        "manifest": out / "manifest.json",
    }
    rows = result.per_replicate()
    with paths["per_replicate"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "psi_obs", "p_pseudo", "p_naive"])
        for row in rows:
            w.writerow([row["replicate"], repr(row["psi_obs"]), repr(row["p_pseudo"]), repr(row["p_naive"])])

    order = np.argsort(result.psi_obs, kind="stable")
    curve = result.empirical_curve
    with paths["curves"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["psi", "p_empirical", "p_pseudo", "p_naive"])
        for k, r in enumerate(order):
            w.writerow(
                [repr(float(curve.psi[k])), repr(float(curve.p[k])), repr(rows[r]["p_pseudo"]), repr(rows[r]["p_naive"])]
            )

    with paths["rates"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "alpha", "rate"])
        for md, table in result.rejection_rates.items():
            for a, rate in table.items():
                w.writerow([md, repr(a), repr(rate)])

    manifest = {
        "package_version": __version__,
        "seed": result.config.seed,
        "replicates": result.replicates,
        "config": result.config.to_dict(),
        "files": {k: v.name for k, v in paths.items() if k != "manifest"},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths


def load_rates(directory: str | Path) -> dict[str, dict[float, float]]:
    rates: dict[str, dict[float, float]] = {}
    with (Path(directory) / "rates.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            rates.setdefault(row["mode"], {})[float(row["alpha"])] = float(row["rate"])
    return rates


def load_manifest(directory: str | Path) -> StudyConfig:
    data = json.loads((Path(directory) / "manifest.json").read_text())
    return StudyConfig.from_dict(data["config"])


def gnuplot_hints(directory: str | Path) -> str:
    d = Path(directory)
    return "\n".join(
        [
            "# gnuplot script for the exported study",
            "# set datafile separator ','",
            f"# plot '{d / 'curves.csv'}' using 1:2 with lines lw 4 lc 'grey' title 'empirical', \\",
            f"#      '' using 1:3 with lines lc 'orange' title 'pseudo', \\",
            f"#      '' using 1:4 with lines dt 2 lc 'black' title 'naive'",
            f"# plot '< grep pseudo {d / 'rates.csv'}' using 2:3 with lines title 'pseudo power', \\",
            f"#      '< grep naive {d / 'rates.csv'}' using 2:3 with lines dt 2 title 'naive power'",
        ]
    )


def with_replicates(cfg: StudyConfig, replicates: int) -> StudyConfig:
    return replace(cfg, replicates=replicates)
