"""Instrument propensities ``P(Z_j = 1 | history)``.

Two modes are supported. An *oracle* model wraps known closed-form
probabilities (for simulated data), a *fitted* model holds one logistic
regression per period, estimated by damped Newton iterations.

Joint instrument probabilities factor into sequential conditionals, each
conditioning on the history available when the instrument is drawn.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .model import ObservationPath, PanelDataset

log = logging.getLogger(__name__)

EPS_CLIP = 1e-6


class SeparationError(RuntimeError):
    """The logistic likelihood has no finite maximizer (perfect separation)."""


class SingleClassError(ValueError):
    """Labels handed to :func:`fit_logistic` are constant."""


@dataclass(frozen=True)
class LogisticFit:
    """Result of :func:`fit_logistic`; ``coef[0]`` is the intercept."""

    coef: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coef[1:]

    def predict(self, features) -> np.ndarray:
        return expit(add_intercept(features) @ self.coef)


def add_intercept(features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    return np.hstack([np.ones((features.shape[0], 1)), features])


def logistic_loglik(theta, design, labels) -> float:
    """Mean binomial log-likelihood of a logistic model."""
    eta = design @ theta
    return float(np.mean(labels * eta - np.logaddexp(0.0, eta)))


def logistic_gradient(theta, design, labels) -> np.ndarray:
    """Gradient of :func:`logistic_loglik` with respect to ``theta``."""
    p = expit(design @ theta)
    return design.T @ (labels - p) / design.shape[0]


def fit_logistic(features, labels, tol: float = 1e-8, max_iter: int = 100,
                 ridge: float = 1e-10, max_coef_norm: float = 1e4) -> LogisticFit:
    """Maximum-likelihood logistic regression with an intercept.

    Damped Newton: each step solves ``(H + ridge I) d = g`` and is halved
    until the mean log-likelihood does not decrease. Convergence means the
    sup-norm of the mean-log-likelihood gradient is at most ``tol``.

    Raises
    ------
    SingleClassError
        ``labels`` contain one class only.
    SeparationError
        The coefficient norm exceeds ``max_coef_norm``, or the iterates
        reach a perfect fit of the labels (no finite MLE exists).
    """
    design = add_intercept(features)
    labels = np.asarray(labels, dtype=float).ravel()
    n, p = design.shape
    if labels.shape[0] != n:
        raise ValueError(f"{n} feature rows but {labels.shape[0]} labels")
    if n < p:
        raise ValueError(f"need n >= p + 1 observations, got n={n}, p={p - 1}")
    if labels.min() == labels.max():
        raise SingleClassError(f"labels are constant ({labels[0]:g})")

    theta = np.zeros(p)
    ll = logistic_loglik(theta, design, labels)
    jitter = ridge * np.eye(p)
    converged = False
    it = 0
    grad = logistic_gradient(theta, design, labels)
    for it in range(1, max_iter + 1):
        prob = expit(design @ theta)
        grad = design.T @ (labels - prob) / n
        if np.max(np.abs(grad)) <= tol:
            converged = True
            it -= 1
            break
        if np.max(np.abs(labels - prob)) < 1e-6:
            raise SeparationError("fitted probabilities reproduce the labels exactly")
        hess = (design * (prob * (1.0 - prob))[:, None]).T @ design / n
        try:
            step = np.linalg.solve(hess + jitter, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess + jitter, grad, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            cand_ll = logistic_loglik(cand, design, labels)
            if cand_ll >= ll:
                break
            t *= 0.5
        theta, ll = cand, cand_ll
        if np.linalg.norm(theta) > max_coef_norm:
            raise SeparationError(
                f"coefficient norm {np.linalg.norm(theta):.3g} exceeds {max_coef_norm:g}"
            )
    else:
        grad = logistic_gradient(theta, design, labels)
        converged = bool(np.max(np.abs(grad)) <= tol)
    if not converged:
        log.warning("logistic fit stopped after %d iterations, |grad|=%.3g", it,
                    np.max(np.abs(grad)))
    return LogisticFit(theta, converged, it, float(np.max(np.abs(grad))))


def history_features(data: PanelDataset, j: int, lagged: str = "z") -> np.ndarray:
    """Conditioning history available when period ``j``'s instrument is drawn.

    Columns are ``X0, Y1, X1, ..., Y_j, X_j`` followed by the earlier
    instruments ``Z_0..Z_{j-1}`` (``lagged="z"``), the earlier treatments
    (``lagged="w"``) or nothing (``lagged=None``).
    """
    cols = [data.x[0]]
    for k in range(1, j + 1):
        cols.append(data.y[:, k - 1:k])
        cols.append(data.x[k])
    if lagged == "z":
        cols.append(data.z[:, :j])
    elif lagged == "w":
        cols.append(data.w[:, :j])
    elif lagged is not None:
        raise ValueError(f"lagged must be 'z', 'w' or None, got {lagged!r}")
    return np.hstack(cols)


def informative_columns(features: np.ndarray) -> np.ndarray:
    """Indices of columns that are neither constant nor exact copies of an earlier column."""
    keep = []
    for k in range(features.shape[1]):
        col = features[:, k]
        if col.size and np.all(col == col[0]):
            continue
        if any(np.array_equal(col, features[:, m]) for m in keep):
            continue
        keep.append(k)
    return np.array(keep, dtype=int)


def clip_probs(p, eps: float = EPS_CLIP):
    """Clip into ``[eps, 1 - eps]``; returns the clipped array and the clip count."""
    p = np.asarray(p, dtype=float)
    outside = (p < eps) | (p > 1.0 - eps)
    return np.clip(p, eps, 1.0 - eps), int(np.count_nonzero(outside))


ScoreFn = Callable[[PanelDataset], np.ndarray]


@dataclass(frozen=True)
class PropensityModel:
    """Per-period instrument propensities.

    ``scores[j]`` maps a panel to the vector ``P(Z_j = 1 | history)`` over its
    paths. Fitted models also carry the per-period :class:`LogisticFit`.
    """

    mode: str
    scores: tuple[ScoreFn, ...]
    fits: tuple[LogisticFit, ...] | None = None
    eps_clip: float = EPS_CLIP
    name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def periods(self) -> int:
        return len(self.scores)

    def prob_one(self, data: PanelDataset, j: int) -> np.ndarray:
        if j >= len(self.scores):
            raise ValueError(f"propensity model covers {len(self.scores)} periods, asked for period {j}")
        p = np.asarray(self.scores[j](data), dtype=float)
        if p.ndim == 0:
            p = np.full(data.n, float(p))
        return p

    def marginal(self, data: PanelDataset, j: int, i: int):
        """``P(Z_j = i | history)`` per path, clipped, with the clip count."""
        p1 = self.prob_one(data, j)
        return clip_probs(p1 if i == 1 else 1.0 - p1, self.eps_clip)

    def joint(self, data: PanelDataset, assignments: Sequence[tuple[int, int]]):
        """Product of sequential conditionals for ``[(j_1, i_1), ...]``, clipped."""
        periods = [j for j, _ in assignments]
        if any(b <= a for a, b in zip(periods, periods[1:])):
            raise ValueError(f"periods must be strictly increasing: {periods}")
        if not assignments:
            return np.ones(data.n), 0
        out = np.ones(data.n)
        for j, i in assignments:
            p1 = self.prob_one(data, j)
            out = out * (p1 if i == 1 else 1.0 - p1)
        return clip_probs(out, self.eps_clip)

    @classmethod
    def oracle(cls, scores: Sequence[ScoreFn], eps_clip: float = EPS_CLIP,
               name: str = "oracle", params: dict | None = None) -> "PropensityModel":
        return cls("oracle", tuple(scores), None, eps_clip, name, params or {})

    @classmethod
    def constant(cls, probs: Sequence[float], eps_clip: float = EPS_CLIP) -> "PropensityModel":
        scores = [(lambda data, q=float(q): np.full(data.n, q)) for q in probs]
        return cls.oracle(scores, eps_clip, "constant", {"probs": list(map(float, probs))})

    @classmethod
    def sim_dgp(cls, xi: Sequence[float], e1: float, eps_clip: float = EPS_CLIP) -> "PropensityModel":
        """Closed-form instrument law of the simulation design.

        ``P(Z0 = 1 | X0) = 1 / (1 + exp(X0 xi))`` and ``P(Z1 = 1) = e1``.
        """
        xi = np.asarray(xi, dtype=float)

        def period0(data):
            return expit(-(data.x[0] @ xi))

        def period1(data):
            return np.full(data.n, float(e1))

        return cls.oracle([period0, period1], eps_clip, "sim-dgp",
                          {"xi": xi.tolist(), "e1": float(e1)})

    @classmethod
    def fit(cls, data: PanelDataset, target: str = "z", lagged: str | None = None,
            feature_map: Callable[[PanelDataset, int], np.ndarray] | None = None,
            eps_clip: float = EPS_CLIP, **fit_kw) -> "PropensityModel":
        """Fit one logistic regression per period.

        ``target`` selects the label (``"z"`` instruments, ``"w"`` treatments).
        The default features are :func:`history_features` with lags of the
        same variable, minus constant and duplicated columns (detected on
        ``data`` and frozen into the model).
        """
        if target not in ("z", "w"):
            raise ValueError(f"target must be 'z' or 'w', got {target!r}")
        lagged = target if lagged is None else lagged
        if feature_map is None:
            def feature_map(d, j):
                return history_features(d, j, lagged)
        labels = data.z if target == "z" else data.w
        scores, fits = [], []
        for j in range(data.horizon + 1):
            full = feature_map(data, j)
            keep = informative_columns(full)
            fit = fit_logistic(full[:, keep], labels[:, j], **fit_kw)
            fits.append(fit)
            scores.append(lambda d, j=j, keep=keep, fit=fit: fit.predict(feature_map(d, j)[:, keep]))
        return cls("fitted", tuple(scores), tuple(fits), eps_clip, f"fitted-{target}")


def _as_panel(obj) -> tuple[PanelDataset, bool]:
    if isinstance(obj, ObservationPath):
        return PanelDataset.from_paths([obj]), True
    return obj, False


def marginal_prob(model: PropensityModel, path, j: int, i: int):
    """``P(Z_j = i | history)``; a float for a path, an array for a panel."""
    data, scalar = _as_panel(path)
    p, _ = model.marginal(data, j, i)
    return float(p[0]) if scalar else p


def joint_prob(model: PropensityModel, path, assignments: Sequence[tuple[int, int]]):
    """Joint instrument probability of ``[(j_1, i_1), ..., (j_k, i_k)]``."""
    data, scalar = _as_panel(path)
    p, _ = model.joint(data, list(assignments))
    return float(p[0]) if scalar else p
