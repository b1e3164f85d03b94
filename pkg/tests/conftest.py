"""Shared fixtures and independent oracles for the test-suite.

The oracles here deliberately re-derive quantities from first principles
(subset enumeration, sequential Bernoulli scanning, hand-built adjacency)
so the library is never checked against itself.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from sbmatch import ModelSpec, make_spec
from sbmatch import scenarios


@pytest.fixture
def triangle_spec() -> ModelSpec:
    return scenarios.triangle()


@pytest.fixture
def bipartite_spec() -> ModelSpec:
    return scenarios.bipartite()


@pytest.fixture
def solo_spec() -> ModelSpec:
    return scenarios.single_selfloop()


@pytest.fixture
def mixed_spec() -> ModelSpec:
    return scenarios.mixed_selfloop()


@pytest.fixture
def path3_spec() -> ModelSpec:
    return scenarios.path3()


def brute_force_eta(spec: ModelSpec):
    """Exact stability margin by direct enumeration of all class subsets.

    Returns (eta, ncond, minimizing subset) with eta a Fraction when exact
    arrival rates are available, computed without touching the library's
    graph helpers.
    """
    C = spec.n_classes
    nu = spec.nu_exact if spec.nu_exact is not None else spec.nu
    edges = {(i, j) for i in range(C) for j in range(C) if spec.rho[i][j] > 0.0}

    best = None
    best_set = None
    for size in range(1, C + 1):
        for subset in itertools.combinations(range(C), size):
            if any((i, j) in edges for i in subset for j in subset):
                continue
            closed = {j for i in subset for j in range(C) if (i, j) in edges}
            margin = sum(nu[j] for j in closed) - sum(nu[i] for i in subset)
            if best is None or margin < best:
                best, best_set = margin, frozenset(subset)
    if best is None:
        return Fraction(0), True, None  # no independent set: margin vacuous
    return best, best > 0, best_set


def random_model(rng: np.random.Generator, max_classes: int = 4) -> ModelSpec:
    """A random small model with at least one compatibility edge."""
    C = int(rng.integers(1, max_classes + 1))
    while True:
        rho = np.zeros((C, C))
        for i in range(C):
            for j in range(i, C):
                if rng.random() < 0.6:
                    rho[i][j] = rho[j][i] = round(float(rng.uniform(0.05, 1.0)), 3)
        if rho.max() > 0.0:
            break
    raw = rng.uniform(0.1, 1.0, size=C)
    nu = raw / raw.sum()
    # push the vector to exact normalization so validation cannot trip
    nu[-1] = 1.0 - nu[:-1].sum()
    labels = tuple(f"k{i}" for i in range(C))
    return make_spec(labels, tuple(float(v) for v in nu),
                     tuple(tuple(float(v) for v in row) for row in rho))


def random_state(rng: np.random.Generator, n_classes: int, high: int = 12) -> tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(0, high + 1, size=n_classes))
