"""Comparison estimators that ignore the instruments."""

from __future__ import annotations

import numpy as np

from .identification import EmptyRegimeCell, regime_weight
from .model import PanelDataset, Regime, UtilityFunctional
from .propensity import PropensityModel


def _follows(data: PanelDataset, regime: Regime) -> np.ndarray:
    if regime.horizon != data.horizon:
        raise ValueError(f"regime {regime} has {regime.horizon + 1} periods, data has {data.horizon + 1}")
    mask = np.all(data.w == np.asarray(regime.assignments, dtype=float), axis=1)
    if not mask.any():
        raise EmptyRegimeCell(f"no path follows regime {regime}")
    return mask


def naive_contrast(data: PanelDataset, u: UtilityFunctional,
                   regime_a: Regime, regime_b: Regime) -> float:
    """Difference of mean utility between paths following ``regime_a`` and ``regime_b``."""
    util = u.evaluate(data)
    a, b = _follows(data, regime_a), _follows(data, regime_b)
    return float(util[a].mean() - util[b].mean())


def fit_treatment_model(data: PanelDataset, **kw) -> PropensityModel:
    """Logistic ``P(W_j = 1 | X0, Y1, X1, .., Y_j, X_j, W_0..W_{j-1})`` per period."""
    return PropensityModel.fit(data, target="w", **kw)


def noiv_contrast(data: PanelDataset, u: UtilityFunctional, regime_a: Regime,
                  regime_b: Regime, treatment_model: PropensityModel | None = None) -> float:
    """Sequential inverse-probability contrast that treats ``W`` as randomized.

    Each regime's mean utility is ``mean(u * 1{W = r} / prod_j P(W_j = r_j | history))``.
    Without ``treatment_model`` the treatment propensities are fitted by
    :func:`fit_treatment_model`; fitting errors such as
    :class:`~ivregime.propensity.SeparationError` propagate.
    """
    _follows(data, regime_a)
    _follows(data, regime_b)
    model = treatment_model if treatment_model is not None else fit_treatment_model(data)
    util = u.evaluate(data)
    wa, _ = regime_weight(data, model, regime_a)
    wb, _ = regime_weight(data, model, regime_b)
    return float(np.mean(util * (wa - wb)))
