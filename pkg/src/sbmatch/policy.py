"""Greedy max-weight matching policies.

A policy scores each candidate class j for an arrival of class i by
w(x(j), rho(i, j)), where x(j) is the number of unmatched nodes of class j,
and picks the class with the largest score; ties are broken by a fixed
priority bijection alpha, larger value winning.  The weight w must be
positive exactly when a match is possible, monotone in both arguments, and
eventually dominate its own one-step history (the threshold property below),
which together make the greedy choice insensitive to the fine structure of
rho once queues are long.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import ModelSpec, root_graph

WEIGHT_TOL = 1e-12

State = tuple[int, ...]


class PolicyError(ValueError):
    """Raised for invalid policy configurations or failed weight checks."""


def as_state(values: Iterable) -> State:
    out = []
    for v in values:
        iv = int(v)
        if iv != v or iv < 0:
            raise PolicyError(f"state entries must be non-negative integers, got {v!r}")
        out.append(iv)
    return tuple(out)


def support(x: State) -> frozenset[int]:
    return frozenset(i for i, v in enumerate(x) if v > 0)


def sup_norm(x: State) -> int:
    return max(x) if x else 0


def sup_norm_over(x: State, subset: Iterable[int]) -> int:
    """max of x over a class subset, 0 for the empty subset."""
    return max((x[i] for i in subset), default=0)


@dataclass(frozen=True)
class WeightFunction:
    """A matching weight w(n, r) on counts n >= 0 and edge probabilities r.

    fn must accept a scalar or a numpy array for n with scalar r.  certified
    marks the built-in weights whose threshold property is known in closed
    form for every n, so a windowed scan of it is conclusive.
    """

    name: str
    fn: Callable
    certified: bool = False

    def __call__(self, n, r: float):
        return self.fn(n, r)


def _w1(n, r: float):
    if np.ndim(n) == 0:
        return float(n) if r > 0.0 else 0.0
    n = np.asarray(n, dtype=float)
    return n.copy() if r > 0.0 else np.zeros_like(n)


def _w2(n, r: float):
    if np.ndim(n) == 0:
        n = float(n)
        return n * (1.0 - (1.0 - r) ** n)
    n = np.asarray(n, dtype=float)
    return n * (1.0 - (1.0 - r) ** n)


#: Count of matchable nodes: w1(n, r) = n when r > 0, else 0.
W1 = WeightFunction("w1", _w1, certified=True)

#: Expected number of successful trials proxy: w2(n, r) = n (1 - (1 - r)^n).
W2 = WeightFunction("w2", _w2, certified=True)

BUILTIN_WEIGHTS = {"w1": W1, "w2": W2}


def n_star(weight: WeightFunction, r: float, n_check: int = 10_000) -> int:
    """Smallest m >= 1 with w(n-1, 1) < w(n, r) and w(n, 1) < w(n+1, r) for
    every n in [m, n_check].

    The scan is windowed; for the built-in weights the property is known to
    persist beyond any window where it holds, so the result is exact.
    """
    if not (0.0 < r <= 1.0):
        raise PolicyError(f"r must lie in (0, 1], got {r!r}")
    if n_check < 1:
        raise PolicyError("n_check must be at least 1")
    n = np.arange(1, n_check + 1)
    ok = (np.asarray(weight(n - 1, 1.0)) < np.asarray(weight(n, r))) \
        & (np.asarray(weight(n, 1.0)) < np.asarray(weight(n + 1, r)))
    if not ok[-1]:
        raise PolicyError(f"no threshold m found in [1, {n_check}] for r={r}")
    bad = np.nonzero(~ok)[0]
    return int(bad[-1]) + 2 if bad.size else 1


@dataclass(frozen=True)
class AssumptionReport:
    """Result of checking the three weight hypotheses on a finite window."""

    ok: bool
    nonneg_ok: bool
    hyp1_ok: bool
    hyp2_ok: bool
    hyp3_ok: bool
    n_star_by_r: tuple[tuple[float, int], ...]
    violations: tuple[str, ...]
    n_check: int
    window_certified: bool

    def window_m(self) -> int:
        """Largest threshold over the checked r grid."""
        if not self.n_star_by_r:
            raise PolicyError("no positive r was checked")
        return max(m for _, m in self.n_star_by_r)


_DEFAULT_R_GRID = (0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def check_assumption(weight: WeightFunction, n_check: int = 10_000,
                     r_values: Sequence[float] | None = None) -> AssumptionReport:
    """Verify on [0, n_check] that the weight is admissible.

    hyp1: w(n, r) > 0 iff n > 0 and r > 0 (and w never negative).
    hyp2: w is non-decreasing in n and in r.
    hyp3: the threshold of n_star exists within the window for each r > 0.

    The r grid should include the smallest positive rho entry of the model the
    weight will drive; the default grid spans (0, 1] plus r = 0 for hyp1.
    """
    grid = sorted(set(_DEFAULT_R_GRID if r_values is None else tuple(r_values)))
    for r in grid:
        if not (0.0 <= r <= 1.0):
            raise PolicyError(f"r grid entries must lie in [0, 1], got {r!r}")
    ns = np.arange(0, n_check + 1)
    violations: list[str] = []
    nonneg_ok = hyp1_ok = hyp2_ok = hyp3_ok = True

    values = {}
    for r in grid:
        values[r] = np.asarray(weight(ns, r), dtype=float)

    for r in grid:
        vals = values[r]
        if np.any(vals < 0.0):
            nonneg_ok = False
            violations.append(f"negative weight at r={r}")
        should = (ns > 0) & (r > 0.0)
        if not np.array_equal(vals > 0.0, should):
            hyp1_ok = False
            violations.append(f"positivity pattern wrong at r={r}")
        if np.any(np.diff(vals) < -WEIGHT_TOL):
            hyp2_ok = False
            violations.append(f"not non-decreasing in n at r={r}")

    for lo, hi in zip(grid, grid[1:]):
        if np.any(values[lo] > values[hi] + WEIGHT_TOL):
            hyp2_ok = False
            violations.append(f"not non-decreasing in r between {lo} and {hi}")

    thresholds: list[tuple[float, int]] = []
    for r in grid:
        if r <= 0.0:
            continue
        try:
            thresholds.append((r, n_star(weight, r, n_check)))
        except PolicyError:
            hyp3_ok = False
            violations.append(f"no threshold within [1, {n_check}] at r={r}")

    ok = nonneg_ok and hyp1_ok and hyp2_ok and hyp3_ok
    return AssumptionReport(ok=ok, nonneg_ok=nonneg_ok, hyp1_ok=hyp1_ok,
                            hyp2_ok=hyp2_ok, hyp3_ok=hyp3_ok,
                            n_star_by_r=tuple(thresholds),
                            violations=tuple(violations), n_check=n_check,
                            window_certified=weight.certified)


@dataclass(frozen=True)
class PolicyConfig:
    """A weight, a tie-break bijection alpha (values 1..C per class index),
    and the threshold n_star derived from the model's smallest positive rho."""

    weight: WeightFunction
    alpha: tuple[int, ...]
    n_star: int
    n_check: int

    @property
    def n_classes(self) -> int:
        return len(self.alpha)


def make_policy(spec: ModelSpec, weight: WeightFunction = W1,
                alpha: Sequence[int] | None = None,
                n_check: int = 10_000) -> PolicyConfig:
    """Build a policy for a model, deriving n_star from rho_min.

    alpha gives the tie-break value of each class in class order; it defaults
    to 1..C so that later classes win ties.
    """
    graph = root_graph(spec)
    n = spec.n_classes
    if alpha is None:
        alpha_t = tuple(range(1, n + 1))
    else:
        alpha_t = tuple(int(a) for a in alpha)
        if sorted(alpha_t) != list(range(1, n + 1)):
            raise PolicyError(f"alpha must be a bijection onto 1..{n}")
    if graph.rho_min is None:
        raise PolicyError("the model has no positive rho entry; no policy threshold exists")
    ns = n_star(weight, graph.rho_min, n_check)
    return PolicyConfig(weight=weight, alpha=alpha_t, n_star=ns, n_check=n_check)


def select_class(weight: WeightFunction, alpha: Sequence[int], x: Sequence[int],
                 rho_row: Sequence[float], tol: float = WEIGHT_TOL) -> int:
    """Greedy choice: argmax over j of (w(x(j), rho_row(j)), alpha(j)).

    Weights within tol of the maximum count as tied and the largest alpha
    wins.  For integer-valued weights such as w1 this reduces to exact
    lexicographic comparison.
    """
    ws = [float(weight(x[j], rho_row[j])) for j in range(len(x))]
    w_max = max(ws)
    best = -1
    best_alpha = -1
    for j, wj in enumerate(ws):
        if wj >= w_max - tol and alpha[j] > best_alpha:
            best, best_alpha = j, alpha[j]
    return best


def phi(policy: PolicyConfig, spec: ModelSpec, x: Sequence[int], i: int) -> int:
    """Class targeted by an arrival of class i in state x."""
    if len(x) != spec.n_classes:
        raise PolicyError("state length does not match the number of classes")
    return select_class(policy.weight, policy.alpha, x, spec.rho[i])
