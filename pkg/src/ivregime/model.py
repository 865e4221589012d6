"""Panel data containers and the structural bookkeeping of the IV-regime model.

A panel holds N subjects observed over treatment periods ``0..T``. Subject
``i`` contributes the sequence::

    X0, Z0, W0, Y1, X1, Z1, W1, ..., Y_T, X_T, Z_T, W_T, Y_{T+1}[, X_{T+1}]

where ``Z_j`` is the binary instrument and ``W_j`` the binary treatment of
period ``j``. Storage is column oriented so that estimators work on whole
columns at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


def _frozen(a, dtype=float, ndim=1):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservationPath:
    """One subject's trajectory.

    ``x[j]`` is the covariate vector of period ``j`` (``j = 0..T+1``),
    ``z[j]`` and ``w[j]`` the instrument and treatment of period ``j``
    (``j = 0..T``), and ``y[j - 1]`` the outcome ``Y_j`` (``j = 1..T+1``).
    """

    x: tuple[np.ndarray, ...]
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        z = _frozen(self.z)
        w = _frozen(self.w)
        y = _frozen(self.y)
        x = tuple(_frozen(v) for v in self.x)
        if not (len(z) == len(w) == len(y) and len(z) >= 1):
            raise ValueError("z, w and y must all have length T + 1")
        if len(x) not in (len(z), len(z) + 1):
            raise ValueError("x must hold T + 1 or T + 2 covariate vectors")
        if len(x) == len(z):
            x = x + (np.zeros(0),)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def horizon(self) -> int:
        return len(self.z) - 1


class PanelDataset:
    """Column-oriented collection of ``n`` paths sharing horizon ``T``.

    Parameters
    ----------
    x : sequence of arrays
        ``T + 2`` covariate blocks, block ``j`` of shape ``(n, d_j)``. The
        trailing block ``X_{T+1}`` may have zero columns and may be omitted.
    z, w : array_like, shape (n, T + 1)
        Instruments and treatments.
    y : array_like, shape (n, T + 1)
        Outcomes ``Y_1..Y_{T+1}``.

    Shapes are checked on construction. Value-level rules (binary domains,
    finiteness, positivity) are left to :func:`validate_dataset`.
    """

    def __init__(self, x: Sequence[np.ndarray], z, w, y):
        z = _frozen(z, ndim=2)
        w = _frozen(w, ndim=2)
        y = _frozen(y, ndim=2)
        n, periods = z.shape
        if periods < 1 or n < 1:
            raise ValueError("a panel needs at least one path and one period")
        if w.shape != z.shape or y.shape != z.shape:
            raise ValueError(
                f"z, w, y shapes disagree: {z.shape}, {w.shape}, {y.shape}"
            )
        blocks = []
        for j, block in enumerate(x):
            block = np.asarray(block, dtype=float)
            if block.ndim == 1:
                block = block.reshape(n, -1) if block.size else np.zeros((n, 0))
            blocks.append(_frozen(block, ndim=2))
            if blocks[-1].shape[0] != n:
                raise ValueError(f"x{j} has {blocks[-1].shape[0]} rows, expected {n}")
        if len(blocks) == periods:
            blocks.append(_frozen(np.zeros((n, 0)), ndim=2))
        if len(blocks) != periods + 1:
            raise ValueError(
                f"expected {periods + 1} covariate blocks, got {len(blocks)}"
            )
        self.x = tuple(blocks)
        self.z = z
        self.w = w
        self.y = y

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def horizon(self) -> int:
        return self.z.shape[1] - 1

    @property
    def dims(self) -> tuple[int, ...]:
        """Covariate dimension of every period ``0..T+1``."""
        return tuple(b.shape[1] for b in self.x)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"PanelDataset(n={self.n}, horizon={self.horizon}, dims={self.dims})"

    def path(self, i: int) -> ObservationPath:
        return ObservationPath(
            x=tuple(b[i] for b in self.x), z=self.z[i], w=self.w[i], y=self.y[i]
        )

    def paths(self):
        for i in range(self.n):
            yield self.path(i)

    @classmethod
    def from_paths(cls, paths: Sequence[ObservationPath]) -> "PanelDataset":
        if not paths:
            raise ValueError("need at least one path")
        first = paths[0]
        dims = tuple(len(v) for v in first.x)
        for k, p in enumerate(paths):
            if p.horizon != first.horizon:
                raise ValueError(f"path {k} has horizon {p.horizon}, expected {first.horizon}")
            if tuple(len(v) for v in p.x) != dims:
                raise ValueError(f"path {k} has covariate dims inconsistent with path 0")
        x = [np.array([p.x[j] for p in paths]).reshape(len(paths), dims[j])
             for j in range(len(dims))]
        return cls(
            x,
            z=[p.z for p in paths],
            w=[p.w for p in paths],
            y=[p.y for p in paths],
        )

    def take(self, idx) -> "PanelDataset":
        """Subset (or resample) whole paths by integer or boolean index."""
        idx = np.asarray(idx)
        return PanelDataset([b[idx] for b in self.x], self.z[idx], self.w[idx], self.y[idx])

    def scale_outcomes(self, c: float) -> "PanelDataset":
        return PanelDataset(self.x, self.z, self.w, self.y * c)

    def with_x0_column(self, values) -> "PanelDataset":
        """Append one column to the period-0 covariates."""
        col = np.asarray(values, dtype=float).reshape(self.n, 1)
        x = (np.hstack([self.x[0], col]),) + self.x[1:]
        return PanelDataset(x, self.z, self.w, self.y)

    @staticmethod
    def concat(parts: Sequence["PanelDataset"]) -> "PanelDataset":
        first = parts[0]
        for p in parts[1:]:
            if p.horizon != first.horizon or p.dims != first.dims:
                raise ValueError("cannot concatenate panels of different shape")
        return PanelDataset(
            [np.vstack([p.x[j] for p in parts]) for j in range(len(first.x))],
            np.vstack([p.z for p in parts]),
            np.vstack([p.w for p in parts]),
            np.vstack([p.y for p in parts]),
        )


@dataclass(frozen=True)
class ComplianceType:
    """Partition of the periods into complier, never-taker and always-taker sets."""

    tc: frozenset[int] = field(default_factory=frozenset)
    tn0: frozenset[int] = field(default_factory=frozenset)
    tn1: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        tc, tn0, tn1 = (frozenset(int(t) for t in s) for s in (self.tc, self.tn0, self.tn1))
        object.__setattr__(self, "tc", tc)
        object.__setattr__(self, "tn0", tn0)
        object.__setattr__(self, "tn1", tn1)
        if tc & tn0 or tc & tn1 or tn0 & tn1:
            raise ValueError(f"compliance sets overlap: {self}")
        union = tc | tn0 | tn1
        if union != frozenset(range(len(union))) or not union:
            raise ValueError(f"compliance sets must cover periods 0..T exactly: {self}")

    @classmethod
    def full(cls, horizon: int) -> "ComplianceType":
        return cls(tc=frozenset(range(horizon + 1)))

    @property
    def horizon(self) -> int:
        return len(self.tc | self.tn0 | self.tn1) - 1

    def label(self) -> str:
        """Per-period status string, e.g. ``"cn"`` for complier then never-taker."""
        out = []
        for t in range(self.horizon + 1):
            out.append("c" if t in self.tc else "n" if t in self.tn0 else "a")
        return "".join(out)

    @classmethod
    def from_label(cls, label: str) -> "ComplianceType":
        sets = {"c": set(), "n": set(), "a": set()}
        for t, ch in enumerate(label.strip().lower()):
            if ch not in sets:
                raise ValueError(f"unknown compliance status {ch!r} in {label!r}")
            sets[ch].add(t)
        return cls(frozenset(sets["c"]), frozenset(sets["n"]), frozenset(sets["a"]))

    def to_dict(self):
        return {"tc": sorted(self.tc), "tn0": sorted(self.tn0), "tn1": sorted(self.tn1)}


@dataclass(frozen=True)
class Regime:
    """A fixed treatment assignment for every period."""

    assignments: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(v) for v in self.assignments)
        if not a or any(v not in (0, 1) for v in self.assignments):
            raise ValueError(f"regime entries must be binary: {self.assignments!r}")
        object.__setattr__(self, "assignments", a)

    @classmethod
    def parse(cls, text: str) -> "Regime":
        return cls(tuple(int(float(t)) for t in str(text).replace(" ", "").strip("()[]").split(",")))

    @property
    def horizon(self) -> int:
        return len(self.assignments) - 1

    def __str__(self):
        return "(" + ",".join(map(str, self.assignments)) + ")"


@dataclass(frozen=True)
class UtilityFunctional:
    """Scalar summary ``u`` of a path's outcomes.

    ``final_outcome`` reads ``Y_{T+1}``, ``sum_of_outcomes`` adds
    ``Y_1..Y_{T+1}``. ``custom`` wraps a function of one
    :class:`ObservationPath` and is evaluated path by path.
    """

    kind: str = "final_outcome"
    func: Callable[[ObservationPath], float] | None = None

    def __post_init__(self):
        if self.kind not in ("final_outcome", "sum_of_outcomes", "custom"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom utility needs a function")

    @classmethod
    def parse(cls, text: str) -> "UtilityFunctional":
        aliases = {"final": "final_outcome", "sum": "sum_of_outcomes"}
        return cls(aliases.get(text, text))

    def evaluate(self, data: PanelDataset) -> np.ndarray:
        if self.kind == "final_outcome":
            return np.array(data.y[:, -1])
        if self.kind == "sum_of_outcomes":
            return data.y.sum(axis=1)
        return np.fromiter((self.func(p) for p in data.paths()), float, count=data.n)


def evaluate_utility(u: UtilityFunctional, path: ObservationPath) -> float:
    if u.kind == "final_outcome":
        return float(path.y[-1])
    if u.kind == "sum_of_outcomes":
        return float(np.sum(path.y))
    return float(u.func(path))


def enumerate_compliance_types(horizon: int) -> list[ComplianceType]:
    """All ``3 ** (T + 1)`` compliance types, full compliance first."""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    return [ComplianceType.from_label("".join(s))
            for s in itertools.product("cna", repeat=horizon + 1)]


@dataclass(frozen=True)
class Violation:
    rule: str
    path: int | None = None
    period: int | None = None

    def __str__(self):
        where = []
        if self.path is not None:
            where.append(f"path {self.path}")
        if self.period is not None:
            where.append(f"period {self.period}")
        return f"{self.rule}" + (f" ({', '.join(where)})" if where else "")


def validate_dataset(data: PanelDataset, max_per_rule: int | None = None) -> list[Violation]:
    """Check the value-level invariants of a panel.

    Returns an empty list when every path is well formed. Each violation
    names the rule, the offending path index and, where relevant, the period.
    ``max_per_rule`` caps how many paths are listed for any one rule.
    """
    out: list[Violation] = []

    def report(rule, mask, period=None):
        rows = np.flatnonzero(mask)
        if max_per_rule is not None:
            rows = rows[:max_per_rule]
        out.extend(Violation(rule, int(i), period) for i in rows)

    for j in range(data.horizon + 1):
        report("z out of {0,1}", ~np.isin(data.z[:, j], (0.0, 1.0)), j)
        report("w out of {0,1}", ~np.isin(data.w[:, j], (0.0, 1.0)), j)
    for j in range(data.horizon + 1):
        report("non-finite outcome", ~np.isfinite(data.y[:, j]), j + 1)
    for j, block in enumerate(data.x):
        if block.shape[1]:
            report("non-finite covariate", ~np.isfinite(block).all(axis=1), j)
    for j in range(data.horizon + 1):
        zj = data.z[:, j]
        if not ((zj == 0).any() and (zj == 1).any()):
            out.append(Violation(f"empirical positivity failed at period {j}", None, j))
    return out
