"""Two-period simulation design with endogenous treatment take-up.

Each subject draws ``X0 ~ U[-1, 1]^d`` and latent propensities
``eps0, eps1 ~ U[0, 1]``. Instruments are ``Z0 ~ Bernoulli(1 / (1 + exp(X0 xi)))``
and ``Z1 ~ Bernoulli(e1)``. Treatment is taken whenever instrumented and
otherwise with probability ``eps_j``, so ``W_j(1) = 1`` and
``W_j(0) ~ Bernoulli(eps_j)``. Outcomes::

    Y1 = X0 alpha1 + beta1 W0 + eps0
    Y2 = X0 alpha2 + beta2 W0 + delta Y1 + gamma W1 + eps1

Because ``eps_j`` drives both take-up and the outcome, the treatment is
endogenous while the instruments are not.

Randomness comes from Philox substreams, one per block of
:data:`BLOCK` consecutive paths keyed by ``(seed, block index)``, so the
panel does not depend on how blocks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .model import PanelDataset

BLOCK = 1 << 16

DEFAULT_XI = (1.0, 2.0, 3.0, -1.0, -2.0, -3.0)
DEFAULT_ALPHA1 = (1.0, 1.0, 1.0, 1.0, 1.0, 2.0)
DEFAULT_ALPHA2 = (2.0, 2.0, 2.0, 2.0, 2.0, 1.0)


@dataclass(frozen=True)
class SimConfig:
    n: int = 500_000
    xi: tuple[float, ...] = DEFAULT_XI
    e1: float = 0.75
    alpha1: tuple[float, ...] = DEFAULT_ALPHA1
    alpha2: tuple[float, ...] = DEFAULT_ALPHA2
    beta1: float = 2.0
    beta2: float = 2.0
    delta: float = 2.0
    gamma: float = 1.0
    seed: int = 0
    emit_latents: bool = False

    def __post_init__(self):
        for name in ("xi", "alpha1", "alpha2"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    @property
    def dim(self) -> int:
        return len(self.xi)

    def validate(self):
        if int(self.n) < 1:
            raise ValueError("n: must be at least 1")
        if not 0.0 < float(self.e1) < 1.0:
            raise ValueError(f"e1: must lie strictly between 0 and 1, got {self.e1}")
        if not self.xi:
            raise ValueError("xi: needs at least one coefficient")
        for name in ("alpha1", "alpha2"):
            if len(getattr(self, name)) != self.dim:
                raise ValueError(
                    f"{name}: has {len(getattr(self, name))} entries but xi implies "
                    f"covariate dimension {self.dim}"
                )
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed: must be a 64-bit unsigned integer")

    def replace(self, **kw) -> "SimConfig":
        return SimConfig(**{**asdict(self), **kw})


@dataclass(frozen=True)
class LatentRecord:
    """Per-path latent draws: ``eps`` and potential treatments ``W_j(0), W_j(1)``."""

    eps0: np.ndarray
    eps1: np.ndarray
    w0_0: np.ndarray
    w0_1: np.ndarray
    w1_0: np.ndarray
    w1_1: np.ndarray

    def potential(self, j: int, i: int) -> np.ndarray:
        return getattr(self, f"w{j}_{i}")

    def complier(self, j: int) -> np.ndarray:
        return (self.potential(j, 1) > self.potential(j, 0)).astype(float)

    def take(self, idx) -> "LatentRecord":
        return LatentRecord(**{k: v[idx] for k, v in asdict(self).items()})


@dataclass
class _Block:
    x0: np.ndarray
    cols: dict = field(default_factory=dict)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(cfg: SimConfig, block: int, size: int) -> _Block:
    rng = _block_rng(cfg.seed, block)
    xi = np.asarray(cfg.xi)
    x0 = rng.uniform(-1.0, 1.0, size=(size, cfg.dim))
    eps0 = rng.uniform(size=size)
    z0 = (rng.uniform(size=size) < expit(-(x0 @ xi))).astype(float)
    w0_0 = (rng.uniform(size=size) < eps0).astype(float)
    eps1 = rng.uniform(size=size)
    z1 = (rng.uniform(size=size) < cfg.e1).astype(float)
    w1_0 = (rng.uniform(size=size) < eps1).astype(float)

    w0 = np.where(z0 == 1.0, 1.0, w0_0)
    y1 = x0 @ np.asarray(cfg.alpha1) + cfg.beta1 * w0 + eps0
    w1 = np.where(z1 == 1.0, 1.0, w1_0)
    y2 = x0 @ np.asarray(cfg.alpha2) + cfg.beta2 * w0 + cfg.delta * y1 + cfg.gamma * w1 + eps1
    ones = np.ones(size)
    return _Block(x0, dict(z0=z0, w0=w0, y1=y1, z1=z1, w1=w1, y2=y2, eps0=eps0,
                           eps1=eps1, w0_0=w0_0, w0_1=ones, w1_0=w1_0, w1_1=ones))


def generate(cfg: SimConfig, workers: int = 1) -> tuple[PanelDataset, LatentRecord | None]:
    """Simulate one panel (``T = 1``, ``X1 = X0``) and optionally its latents."""
    cfg.validate()
    n = int(cfg.n)
    sizes = [min(BLOCK, n - start) for start in range(0, n, BLOCK)]
    jobs = list(enumerate(sizes))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda a: _simulate_block(cfg, *a), jobs))
    else:
        blocks = [_simulate_block(cfg, b, s) for b, s in jobs]

    def cat(key):
        return np.concatenate([b.cols[key] for b in blocks])

    x0 = np.vstack([b.x0 for b in blocks])
    data = PanelDataset(
        [x0, x0.copy()],
        z=np.column_stack([cat("z0"), cat("z1")]),
        w=np.column_stack([cat("w0"), cat("w1")]),
        y=np.column_stack([cat("y1"), cat("y2")]),
    )
    latents = None
    if cfg.emit_latents:
        latents = LatentRecord(*(cat(k) for k in ("eps0", "eps1", "w0_0", "w0_1", "w1_0", "w1_1")))
    return data, latents


def true_latre(cfg: SimConfig) -> float:
    """Regime (1, 0) versus (0, 1) effect for compliers: ``beta2 + delta beta1 - gamma``."""
    return (cfg.beta2 + cfg.delta * cfg.beta1) - cfg.gamma
