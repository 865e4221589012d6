"""Estimation runs and Monte Carlo replication over simulated panels."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io as ivio
from .baselines import naive_contrast, noiv_contrast
from .identification import P_MIN, EstimateReport, latre_contrast
from .model import PanelDataset, Regime, UtilityFunctional
from .propensity import EPS_CLIP, PropensityModel
from .simgen import DEFAULT_XI, SimConfig, generate, true_latre

METHODS = ("latre", "naive", "noiv")
METHOD_LABELS = {"naive": "Naive", "noiv": "No IV", "latre": "LATRE"}
METRIC_NAMES = ("absolute_mean_error", "mean_absolute_error",
                "absolute_median_error", "median_absolute_error")


@dataclass(frozen=True)
class EstimationSettings:
    method: str = "latre"
    regime_a: Regime = Regime((1, 0))
    regime_b: Regime = Regime((0, 1))
    utility: str = "final_outcome"
    propensity: str = "oracle"
    xi: tuple[float, ...] = DEFAULT_XI
    e1: float = 0.75
    eps_clip: float = EPS_CLIP
    p_min: float = P_MIN
    normalize: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ivio.ConfigError("method", f"must be one of {', '.join(METHODS)}, got {self.method!r}")
        if self.propensity not in ("oracle", "fitted"):
            raise ivio.ConfigError("propensity", f"must be 'oracle' or 'fitted', got {self.propensity!r}")
        if self.utility not in ("final_outcome", "sum_of_outcomes"):
            raise ivio.ConfigError("utility", f"must be final_outcome or sum_of_outcomes, got {self.utility!r}")
        if self.regime_a == self.regime_b:
            raise ivio.ConfigError("regime_b", "must differ from regime_a")

    def instrument_model(self, data: PanelDataset) -> PropensityModel:
        if self.propensity == "fitted":
            return PropensityModel.fit(data, target="z", eps_clip=self.eps_clip)
        if data.horizon != 1 or data.dims[0] != len(self.xi):
            raise ivio.ConfigError(
                "propensity",
                f"oracle 'sim-dgp' needs T=1 and {len(self.xi)} period-0 covariates; "
                f"data has T={data.horizon}, d0={data.dims[0]}",
            )
        return PropensityModel.sim_dgp(self.xi, self.e1, self.eps_clip)


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    est: EstimationSettings = field(default_factory=EstimationSettings)
    R: int = 500
    methods: tuple[str, ...] = METHODS
    master_seed: int = 0
    bootstrap: int = 0
    level: float = 0.95
    workers: int = 1

    def echo(self) -> dict:
        """Configuration as reported in outputs (``workers`` excluded)."""
        sim = asdict(self.sim)
        sim.pop("emit_latents")
        sim.pop("seed")
        est = asdict(self.est)
        est.pop("method")
        est["regime_a"] = list(self.est.regime_a.assignments)
        est["regime_b"] = list(self.est.regime_b.assignments)
        return {"sim": sim, "estimation": est, "R": self.R, "methods": list(self.methods),
                "master_seed": self.master_seed}


_SIM_PARSERS = {
    "n": int, "e1": float, "beta1": float, "beta2": float, "delta": float, "gamma": float,
    "seed": int, "xi": "vector", "alpha1": "vector", "alpha2": "vector", "emit_latents": "bool",
}
_EST_PARSERS = {
    "method": str, "regime_a": "regime", "regime_b": "regime", "utility": str,
    "propensity": str, "eps_clip": float, "p_min": float, "normalize": "bool",
}
_RUN_PARSERS = {
    "R": int, "methods": "list", "master_seed": int, "bootstrap": int, "level": float,
    "workers": int,
}


def _parse(key, value, kind):
    if kind == "vector":
        return ivio.parse_vector(key, value)
    if kind == "bool":
        return ivio.parse_bool(key, value)
    if kind == "list":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    try:
        if kind == "regime":
            return Regime.parse(value)
        if kind is int:
            try:
                return int(value)
            except ValueError:
                f = float(value)
                if not f.is_integer():
                    raise
                return int(f)
        return kind(value)
    except ValueError:
        raise ivio.ConfigError(key, f"cannot parse {value!r}") from None


def run_config(values: dict[str, str] | None = None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from flat string key-values (as read from a file).

    Every key is optional and defaults to the built-in simulation design.
    Bad keys or values raise :class:`~ivregime.io.ConfigError` naming the key.
    """
    values = dict(values or {})
    sim_kw, est_kw, run_kw = {}, {}, {}
    for key, raw in values.items():
        if key in _SIM_PARSERS:
            sim_kw[key] = _parse(key, raw, _SIM_PARSERS[key])
        elif key in _EST_PARSERS:
            est_kw[key] = _parse(key, raw, _EST_PARSERS[key])
        elif key in _RUN_PARSERS:
            run_kw[key] = _parse(key, raw, _RUN_PARSERS[key])
        else:
            raise ivio.ConfigError(key, "unknown configuration key")
    for key, v in overrides.items():
        if v is None:
            continue
        if key in _SIM_PARSERS:
            sim_kw[key] = v
        elif key in _EST_PARSERS:
            est_kw[key] = v
        else:
            run_kw[key] = v
    if "utility" in est_kw:
        try:
            est_kw["utility"] = UtilityFunctional.parse(est_kw["utility"]).kind
        except ValueError as exc:
            raise ivio.ConfigError("utility", str(exc)) from None
    try:
        sim = SimConfig(**sim_kw)
    except ValueError as exc:
        key = str(exc).split(":", 1)[0]
        raise ivio.ConfigError(key, str(exc).split(":", 1)[-1].strip()) from None
    est_kw.setdefault("xi", sim.xi)
    est_kw.setdefault("e1", sim.e1)
    est = EstimationSettings(**est_kw)
    run = RunConfig(sim=sim, est=est, **run_kw)
    for m in run.methods:
        if m not in METHODS:
            raise ivio.ConfigError("methods", f"unknown method {m!r}")
    if run.R < 1:
        raise ivio.ConfigError("R", "must be at least 1")
    if not 0.0 < run.level < 1.0:
        raise ivio.ConfigError("level", "must lie in (0, 1)")
    if run.bootstrap and run.bootstrap < 100:
        raise ivio.ConfigError("bootstrap", "needs at least 100 resamples")
    return run


def load_run_config(path=None, **overrides) -> RunConfig:
    return run_config(ivio.read_config(path) if path else {}, **overrides)


def estimate(data: PanelDataset, est: EstimationSettings, method: str | None = None) -> EstimateReport:
    """Run one estimator on a panel and wrap the result in an :class:`EstimateReport`."""
    method = method or est.method
    u = UtilityFunctional(est.utility)
    pair = (est.regime_a, est.regime_b)
    if method == "latre":
        model = est.instrument_model(data)
        return latre_contrast(data, model, u, *pair, p_min=est.p_min, normalize=est.normalize)
    if method == "naive":
        effect = naive_contrast(data, u, *pair)
    elif method == "noiv":
        effect = noiv_contrast(data, u, *pair)
    else:
        raise ivio.ConfigError("method", f"unknown method {method!r}")
    return EstimateReport(effect=effect, numerator=None, complier_prob=None,
                          regime_pair=pair, n_used=data.n, method=method)


def metrics(estimates, tau: float) -> tuple[float, float, float, float]:
    """Absolute mean, mean absolute, absolute median and median absolute error."""
    err = np.asarray(estimates, dtype=float) - tau
    if err.size == 0:
        raise ValueError("need at least one estimate")
    return (float(abs(err.mean())), float(np.abs(err).mean()),
            float(abs(np.median(err))), float(np.median(np.abs(err))))


class ReplicationError(RuntimeError):
    def __init__(self, index: int, cause_type: str, detail: str):
        super().__init__(f"replication {index} failed: {cause_type}: {detail}")
        self.index = index
        self.cause_type = cause_type
        self.detail = detail

    def __reduce__(self):
        return ReplicationError, (self.index, self.cause_type, self.detail)


@dataclass
class ReplicationResult:
    estimates: dict[str, list[float]]
    metrics: dict[str, tuple[float, float, float, float]]
    tau: float
    seconds: float
    config: dict

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "config": self.config,
            "tau": self.tau,
            "methods": {
                m: {"metrics": dict(zip(METRIC_NAMES, self.metrics[m])),
                    "estimates": list(self.estimates[m])}
                for m in self.estimates
            },
        }
        if timing:
            out["wall_seconds"] = self.seconds
        return out

    def table(self) -> str:
        return format_table(self.metrics)


def replication_seed(master_seed: int, r: int) -> int:
    return int(master_seed) ^ int(r)


def _one_replication(args):
    sim, est, methods, r = args
    try:
        data, _ = generate(sim)
        return {m: estimate(data, est, m).effect for m in methods}
    except Exception as exc:  # noqa: BLE001 - re-raised with the replication index
        raise ReplicationError(r, type(exc).__name__, str(exc)) from exc


def replicate(run: RunConfig, workers: int | None = None, progress=None) -> ReplicationResult:
    """Simulate ``run.R`` panels and apply every method to each.

    Replication ``r`` uses seed ``master_seed XOR r``. Results are collected
    in replication order, so they do not depend on ``workers``.
    """
    workers = run.workers if workers is None else workers
    jobs = [(run.sim.replace(seed=replication_seed(run.master_seed, r), emit_latents=False),
             run.est, run.methods, r) for r in range(run.R)]
    start = time.perf_counter()
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            for row in pool.map(_one_replication, jobs, chunksize=1):
                rows.append(row)
                if progress:
                    progress(len(rows), run.R)
    else:
        for job in jobs:
            rows.append(_one_replication(job))
            if progress:
                progress(len(rows), run.R)
    seconds = time.perf_counter() - start
    tau = true_latre(run.sim)
    estimates = {m: [row[m] for row in rows] for m in run.methods}
    return ReplicationResult(
        estimates=estimates,
        metrics={m: metrics(v, tau) for m, v in estimates.items()},
        tau=tau,
        seconds=seconds,
        config=run.echo(),
    )


def format_table(table: dict[str, tuple[float, ...]]) -> str:
    head = ("Error Metric", "Absolute Mean", "Mean Absolute", "Absolute Median", "Median Absolute")
    width = [max(12, len(h)) for h in head]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, width))]
    lines.append("-" * len(lines[0]))
    for m in ("naive", "noiv", "latre"):
        if m in table:
            cells = [METHOD_LABELS[m]] + [f"{v:.2f}" for v in table[m]]
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, width)))
    return "\n".join(lines)


def write_replications_csv(result: ReplicationResult, master_seed: int, path) -> None:
    methods = list(result.estimates)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["replication", "seed"] + methods) + "\n")
        for r in range(len(result.estimates[methods[0]])):
            vals = [repr(float(result.estimates[m][r])) for m in methods]
            fh.write(",".join([str(r), str(replication_seed(master_seed, r))] + vals) + "\n")
