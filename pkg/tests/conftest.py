import itertools

import numpy as np
import pytest

from ivregime import (
    ComplianceType,
    PropensityModel,
    SimConfig,
    UtilityFunctional,
    compliance_type_probability,
    enumerate_compliance_types,
    generate,
)
from ivregime.identification import complier_probability_terms, indicator_ratio
from ivregime.weights import kappa_full_values

MC_REPLICATES = 20


@pytest.fixture(scope="session")
def default_sim():
    """The default design (seed 0) at n=100,000 with latent potential treatments."""
    cfg = SimConfig(n=100_000, emit_latents=True)
    data, latents = generate(cfg)
    return cfg, data, latents


@pytest.fixture(scope="session")
def oracle_model():
    cfg = SimConfig()
    return PropensityModel.sim_dgp(cfg.xi, cfg.e1)


def latent_label(latents, j):
    w0, w1 = latents.potential(j, 0), latents.potential(j, 1)
    return np.where(w1 > w0, "c", np.where(w1 == 0, "n", "a"))


def replicate_statistics(seed, model, n=100_000):
    """Estimates and latent brute-force truths on one simulated panel."""
    data, lat = generate(SimConfig(n=n, seed=seed, emit_latents=True))
    out = {}
    for v in itertools.product((0, 1), repeat=2):
        ratio, _ = indicator_ratio(data, model, v)
        out[f"moment{v}"] = (float(np.mean(data.w.prod(axis=1) * ratio)),
                             float(np.mean(lat.potential(0, v[0]) * lat.potential(1, v[1]))))
    both = lat.complier(0) * lat.complier(1)
    out["complier"] = (float(complier_probability_terms(data, model).mean()), float(both.mean()))
    labels = np.char.add(latent_label(lat, 0), latent_label(lat, 1))
    total = 0.0
    for t in enumerate_compliance_types(1):
        p = compliance_type_probability(data, model, t)
        total += p
        out[f"type_{t.label()}"] = (p, float(np.mean(labels == t.label())))
    out["partition"] = (total, 1.0)
    kappa, _ = kappa_full_values(data, model)
    u = UtilityFunctional().evaluate(data)
    out["kappa_u"] = (float(np.mean(kappa * u)), float(np.mean(both * u)))
    return out


@pytest.fixture(scope="session")
def mc_replicates(oracle_model):
    """Independent n=100,000 replicates; spread of (estimate - truth) gives the MC standard error."""
    rows = [replicate_statistics(1000 + r, oracle_model) for r in range(MC_REPLICATES)]
    return {k: np.array([row[k] for row in rows]) for k in rows[0]}


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
