"""Sample-analog estimators for complier quantities and regime contrasts.

All estimators are Horvitz-Thompson style sample means over paths. The
instrument enters through indicator ratios ``1{Z_j = i} / P(Z_j = i | history)``,
which turn observed treatment indicators into moments of potential
treatments, and through the kappa weights of :mod:`ivregime.weights`.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .model import ComplianceType, PanelDataset, Regime, UtilityFunctional
from .propensity import PropensityModel
from .weights import KappaDiagnostics, kappa_full_values, kappa_type_values

P_MIN = 0.01
MIN_STRATUM = 10
MAX_STRATA = 50


class DegenerateDenominator(ArithmeticError):
    """A ratio estimator's probability denominator is at or below the floor."""


class EmptyRegimeCell(ValueError):
    """No path in the data follows a requested treatment regime."""


class EmptyRegimeCellWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BootstrapInterval:
    level: float
    lower: float
    upper: float
    B: int

    def to_dict(self):
        return {"level": self.level, "lower": self.lower, "upper": self.upper, "B": self.B}


@dataclass(frozen=True)
class EstimateReport:
    effect: float
    numerator: float | None
    complier_prob: float | None
    regime_pair: tuple[Regime, Regime]
    n_used: int
    method: str = "latre"
    ctype: ComplianceType | None = None
    kappa_diag: KappaDiagnostics | None = None
    bootstrap: BootstrapInterval | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "effect": self.effect,
            "numerator": self.numerator,
            "complier_prob": self.complier_prob,
            "regime_a": list(self.regime_pair[0].assignments),
            "regime_b": list(self.regime_pair[1].assignments),
            "ctype": None if self.ctype is None else self.ctype.to_dict(),
            "n_used": self.n_used,
            "kappa_diag": None if self.kappa_diag is None else self.kappa_diag.to_dict(),
            "bootstrap": None if self.bootstrap is None else self.bootstrap.to_dict(),
            "diagnostics": dict(self.diagnostics),
        }


def indicator_ratio(data: PanelDataset, model: PropensityModel,
                    values: Sequence[int], periods: Sequence[int] | None = None):
    """``prod_j 1{Z_j = i_j} / P(Z_j = i_j | history)`` per path, with clip count."""
    periods = range(data.horizon + 1) if periods is None else periods
    out = np.ones(data.n)
    clipped = 0
    for j, i in zip(periods, values):
        p, c = model.marginal(data, j, i)
        out = out * (data.z[:, j] == i) / p
        clipped += c
    return out, clipped


def _treated_all(data: PanelDataset, periods=None) -> np.ndarray:
    periods = range(data.horizon + 1) if periods is None else list(periods)
    return np.prod(data.w[:, list(periods)], axis=1) if len(periods) else np.ones(data.n)


def _check_values(data: PanelDataset, values: Sequence[int]):
    if len(values) != data.horizon + 1 or any(v not in (0, 1) for v in values):
        raise ValueError(f"need {data.horizon + 1} binary values, got {tuple(values)}")


def potential_treatment_moment(data: PanelDataset, model: PropensityModel,
                               values: Sequence[int]) -> float:
    """Estimate ``E[prod_j W_j(i_j)]`` for instrument values ``(i_0..i_T)``."""
    _check_values(data, values)
    ratio, _ = indicator_ratio(data, model, values)
    return float(np.mean(_treated_all(data) * ratio))


def _signed_complier_sum(data, model, periods) -> np.ndarray:
    total = np.zeros(data.n)
    for values in itertools.product((0, 1), repeat=len(periods)):
        ratio, _ = indicator_ratio(data, model, values, periods)
        sign = (-1) ** (len(values) - sum(values))
        total += sign * ratio
    return total


def complier_probability_terms(data: PanelDataset, model: PropensityModel) -> np.ndarray:
    """Per-path integrand whose mean estimates ``P(W_j(1) > W_j(0) for all j)``."""
    periods = list(range(data.horizon + 1))
    return _treated_all(data) * _signed_complier_sum(data, model, periods)


def complier_probability(data: PanelDataset, model: PropensityModel) -> float:
    """Probability of complying in every period, as a single sample mean."""
    return float(np.mean(complier_probability_terms(data, model)))


def complier_probability_product(data: PanelDataset, model: PropensityModel) -> float:
    """Product over periods of per-period complier probabilities.

    Relies on take-up being independent across periods; kept as a
    cross-check on :func:`complier_probability`.
    """
    out = 1.0
    for j in range(data.horizon + 1):
        r1, _ = indicator_ratio(data, model, [1], [j])
        r0, _ = indicator_ratio(data, model, [0], [j])
        out *= float(np.mean(data.w[:, j] * (r1 - r0)))
    return out


def compliance_type_terms(data: PanelDataset, model: PropensityModel,
                          ctype: ComplianceType) -> np.ndarray:
    if ctype.horizon != data.horizon:
        raise ValueError(f"compliance type covers {ctype.horizon + 1} periods, data has {data.horizon + 1}")
    tc, tn0, tn1 = sorted(ctype.tc), sorted(ctype.tn0), sorted(ctype.tn1)
    out = _treated_all(data, tc + tn1) * np.prod(1.0 - data.w[:, tn0], axis=1)
    out = out * _signed_complier_sum(data, model, tc)
    r, _ = indicator_ratio(data, model, [1] * len(tn0), tn0)
    out = out * r
    r, _ = indicator_ratio(data, model, [0] * len(tn1), tn1)
    return out * r


def compliance_type_probability(data: PanelDataset, model: PropensityModel,
                                ctype: ComplianceType) -> float:
    """Estimate the population share of compliance type ``ctype``."""
    return float(np.mean(compliance_type_terms(data, model, ctype)))


def expected_utility_by_type(data: PanelDataset, model: PropensityModel,
                             u: UtilityFunctional, ctype: ComplianceType,
                             p_min: float = P_MIN) -> float:
    """``E[u | compliance type]`` as ``mean(kappa_type * u) / P(type)``.

    Raises
    ------
    DegenerateDenominator
        The estimated type probability is at most ``p_min``.
    """
    prob = compliance_type_probability(data, model, ctype)
    if not prob > p_min:
        raise DegenerateDenominator(
            f"estimated probability of type {ctype.label()} is {prob:.4g} <= {p_min:g}"
        )
    kappa, _ = kappa_type_values(data, ctype, model)
    return float(np.mean(kappa * u.evaluate(data))) / prob


def regime_weight(data: PanelDataset, model: PropensityModel, regime: Regime):
    """``1{W = regime} / P(Z = regime | history)`` per path, with clip count."""
    follows = np.all(data.w == np.asarray(regime.assignments, dtype=float), axis=1)
    out = np.zeros(data.n)
    clipped = 0
    if follows.any():
        den, clipped = model.joint(data.take(follows), list(enumerate(regime.assignments)))
        out[follows] = 1.0 / den
    return out, clipped


def latre_contrast(data: PanelDataset, model: PropensityModel, u: UtilityFunctional,
                   regime_a: Regime, regime_b: Regime, p_min: float = P_MIN,
                   normalize: bool = False) -> EstimateReport:
    """Local average effect of ``regime_a`` versus ``regime_b`` among full compliers.

    ``effect = mean(kappa * u * (w_a - w_b)) / P(complier)`` where
    ``w_r = 1{W = r} / P(Z = r | history)`` and ``kappa`` is the
    full-complier weight. With ``normalize=True`` each regime's weighted mean
    of ``u`` is divided by the mean of its own weights instead (Hajek form),
    and no complier denominator is used.

    Raises
    ------
    ValueError
        The regimes coincide or do not match the panel's horizon.
    DegenerateDenominator
        The estimated complier probability is at most ``p_min``.
    """
    if regime_a == regime_b:
        raise ValueError("regime_a and regime_b must differ")
    for r in (regime_a, regime_b):
        if r.horizon != data.horizon:
            raise ValueError(f"regime {r} has {r.horizon + 1} periods, data has {data.horizon + 1}")

    cp = complier_probability(data, model)
    if not cp > p_min:
        raise DegenerateDenominator(f"estimated complier probability {cp:.4g} <= {p_min:g}")

    kappa, clip_k = kappa_full_values(data, model)
    util = u.evaluate(data)
    wa, clip_a = regime_weight(data, model, regime_a)
    wb, clip_b = regime_weight(data, model, regime_b)
    diagnostics = {"complier_prob_out_of_range": not 0.0 <= cp <= 1.0}
    for r, w in ((regime_a, wa), (regime_b, wb)):
        count = int(np.count_nonzero(w))
        diagnostics[f"n_regime_{''.join(map(str, r.assignments))}"] = count
        if count == 0:
            warnings.warn(f"no path follows regime {r}", EmptyRegimeCellWarning, stacklevel=2)

    if normalize:
        terms = []
        for w in (wa, wb):
            mass = np.mean(kappa * w)
            terms.append(np.mean(kappa * util * w) / mass if mass != 0 else 0.0)
        effect = float(terms[0] - terms[1])
        numerator = effect * cp
    else:
        numerator = float(np.mean(kappa * util * (wa - wb)))
        effect = numerator / cp
    return EstimateReport(
        effect=effect,
        numerator=numerator,
        complier_prob=cp,
        regime_pair=(regime_a, regime_b),
        n_used=data.n,
        method="latre",
        ctype=ComplianceType.full(data.horizon),
        kappa_diag=KappaDiagnostics.of(kappa, clip_k + clip_a + clip_b),
        diagnostics=diagnostics,
    )


def conditional_latre_by_stratum(data: PanelDataset, model: PropensityModel,
                                 u: UtilityFunctional, regime_a: Regime, regime_b: Regime,
                                 stratum_column: int, p_min: float = P_MIN,
                                 min_cell: int = MIN_STRATUM, normalize: bool = False) -> dict:
    """Run :func:`latre_contrast` separately within each value of a discrete X0 column.

    Returns a mapping from stratum value to an :class:`EstimateReport`, or to
    the :class:`DegenerateDenominator` raised for that stratum.
    """
    col = data.x[0][:, stratum_column]
    levels = np.unique(col)
    if len(levels) > MAX_STRATA:
        raise ValueError(f"stratum column has {len(levels)} distinct values (max {MAX_STRATA})")
    out = {}
    for level in levels:
        mask = col == level
        key = float(level)
        if mask.sum() < min_cell:
            out[key] = DegenerateDenominator(
                f"stratum {key:g} has {int(mask.sum())} < {min_cell} observations"
            )
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmptyRegimeCellWarning)
                out[key] = latre_contrast(data.take(mask), model, u, regime_a, regime_b,
                                          p_min=p_min, normalize=normalize)
        except DegenerateDenominator as exc:
            out[key] = exc
    return out


def bootstrap_interval(estimator: Callable[[PanelDataset], float], data: PanelDataset,
                       B: int = 200, level: float = 0.95, seed: int = 0,
                       workers: int = 1) -> tuple[float, float]:
    """Percentile interval from ``B`` resamples of whole paths.

    Resample ``b`` draws its indices from its own Philox stream spawned from
    ``seed``, so the interval does not depend on ``workers``.
    """
    if B < 100:
        raise ValueError(f"B must be at least 100, got {B}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    children = np.random.SeedSequence(int(seed)).spawn(B)

    def one(ss):
        idx = np.random.Generator(np.random.Philox(ss)).integers(0, data.n, size=data.n)
        return float(estimator(data.take(idx)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            stats = list(pool.map(one, children))
    else:
        stats = [one(ss) for ss in children]
    lo, hi = np.percentile(stats, [50.0 * (1.0 - level), 50.0 * (1.0 + level)])
    return float(lo), float(hi)


def with_bootstrap(report: EstimateReport, estimator, data: PanelDataset, B: int,
                   level: float, seed: int, workers: int = 1) -> EstimateReport:
    lo, hi = bootstrap_interval(estimator, data, B, level, seed, workers)
    return replace(report, bootstrap=BootstrapInterval(level, lo, hi, B))
