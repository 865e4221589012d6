"""Signed inverse-propensity weights (kappa) for compliance types.

For period ``t`` let ``K[t, 0] = W_t (1 - Z_t)`` and ``K[t, 1] = (1 - W_t) Z_t``;
both vanish whenever the realized treatment follows the instrument. The
full-complier weight is the inclusion-exclusion sum::

    kappa = 1 + sum_{S nonempty} (-1)^|S| sum_{i in {0,1}^S}
                prod_{t in S} K[t, i_t] / P(Z_t = i_t, t in S | history)

over period subsets ``S`` of ``{0..T}``. Enumeration is explicit, so the
cost per path is ``3 ** (T + 1) - 1`` terms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import ComplianceType, PanelDataset
from .propensity import PropensityModel, _as_panel


@dataclass(frozen=True)
class KappaDiagnostics:
    mean: float
    min: float
    max: float
    n_clipped: int

    @classmethod
    def of(cls, kappa: np.ndarray, n_clipped: int = 0) -> "KappaDiagnostics":
        return cls(float(np.mean(kappa)), float(np.min(kappa)), float(np.max(kappa)), int(n_clipped))

    def to_dict(self):
        return {"mean": self.mean, "min": self.min, "max": self.max, "n_clipped": self.n_clipped}


def k_term(path, t: int, i: int):
    """``W_t (1 - Z_t)`` for ``i = 0``, ``(1 - W_t) Z_t`` for ``i = 1``."""
    data, scalar = _as_panel(path)
    out = _k(data, t, i)
    return float(out[0]) if scalar else out


def _k(data: PanelDataset, t: int, i: int) -> np.ndarray:
    w, z = data.w[:, t], data.z[:, t]
    return w * (1.0 - z) if i == 0 else (1.0 - w) * z


def kappa_terms(periods: Sequence[int]) -> Iterator[tuple[int, tuple[tuple[int, int], ...]]]:
    """Yield ``(sign, ((j_1, i_1), ..., (j_k, i_k)))`` for every term of the sum.

    Subsets are visited by increasing size, then lexicographically; value
    tuples run over ``{0,1}^k``.
    """
    periods = sorted(periods)
    for size in range(1, len(periods) + 1):
        sign = -1 if size % 2 else 1
        for subset in itertools.combinations(periods, size):
            for values in itertools.product((0, 1), repeat=size):
                yield sign, tuple(zip(subset, values))


def kappa_term_count(horizon: int) -> int:
    return sum(1 for _ in kappa_terms(range(horizon + 1)))


def _bracket(data: PanelDataset, model: PropensityModel, periods) -> tuple[np.ndarray, int]:
    ks = {(t, i): _k(data, t, i) for t in periods for i in (0, 1)}
    out = np.ones(data.n)
    clipped = 0
    for sign, assignment in kappa_terms(periods):
        num = np.ones(data.n)
        for t, i in assignment:
            num = num * ks[t, i]
        live = num != 0
        if not live.any():
            continue
        sub = data.take(live)
        den, c = model.joint(sub, list(assignment))
        clipped += c
        out[live] += sign * num[live] / den
    return out, clipped


def kappa_full_values(data: PanelDataset, model: PropensityModel) -> tuple[np.ndarray, int]:
    """Full-complier kappa for every path, plus the denominator clip count."""
    return _bracket(data, model, range(data.horizon + 1))


def kappa_type_values(data: PanelDataset, ctype: ComplianceType,
                      model: PropensityModel) -> tuple[np.ndarray, int]:
    """Compliance-type kappa for every path, plus the denominator clip count.

    A never-taker period ``t`` contributes ``K[t, 1]`` (untreated although
    instrumented) over ``P(Z_t = 1)``, an always-taker period ``K[t, 0]``
    over ``P(Z_t = 0)``; the complier periods contribute the
    inclusion-exclusion bracket restricted to ``tc``.
    """
    if ctype.horizon != data.horizon:
        raise ValueError(f"compliance type covers {ctype.horizon + 1} periods, data has {data.horizon + 1}")
    pattern = sorted([(t, 1) for t in ctype.tn0] + [(t, 0) for t in ctype.tn1])
    num = np.ones(data.n)
    for t, i in pattern:
        num = num * _k(data, t, i)
    clipped = 0
    if pattern:
        live = num != 0
        front = np.zeros(data.n)
        if live.any():
            den, clipped = model.joint(data.take(live), pattern)
            front[live] = num[live] / den
    else:
        front = num
    bracket, c = _bracket(data, model, sorted(ctype.tc))
    return front * bracket, clipped + c


def kappa_full(path, model: PropensityModel):
    """Full-complier kappa; a float for one path, an array for a panel."""
    data, scalar = _as_panel(path)
    vals, _ = kappa_full_values(data, model)
    return float(vals[0]) if scalar else vals


def kappa_type(path, ctype: ComplianceType, model: PropensityModel):
    """Compliance-type kappa; a float for one path, an array for a panel."""
    data, scalar = _as_panel(path)
    vals, _ = kappa_type_values(data, ctype, model)
    return float(vals[0]) if scalar else vals

