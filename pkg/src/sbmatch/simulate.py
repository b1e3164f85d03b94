"""Monte Carlo engines for the matching dynamics.

Two engines realize the same law.  The lazy engine works on class counts
only: an arrival targets the class chosen by the policy and probes its
unmatched nodes one Bernoulli trial at a time until the first hit, which is
a truncated geometric draw.  The full-graph engine materializes every node
and every edge indicator and serves as a ground-truth oracle at small
horizons, including an exact enumeration of all of its randomness.

Streams are split by seed tuple: replica r of a batch with base seed s draws
from SeedSequence((s, r)).  Nothing is ever seeded from the clock; a seed is
always required.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ModelSpec, neighborhood, root_graph
from .policy import PolicyConfig, State, select_class

FULL_GRAPH_MAX_T = 1000
ENUMERATION_MAX_T = 6
DEFAULT_SAMPLES = 512


def _seed_seq(seed) -> np.random.SeedSequence:
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence(tuple(int(v) for v in seed))
    return np.random.SeedSequence(int(seed))


def _sample_grid(T: int, sample_every: int | None) -> np.ndarray:
    if sample_every is not None:
        if sample_every < 1:
            raise ValueError("sample_every must be positive")
        ts = list(range(0, T + 1, sample_every))
        if ts[-1] != T:
            ts.append(T)
        return np.asarray(ts, dtype=np.int64)
    ts = np.linspace(0, T, num=min(T, DEFAULT_SAMPLES) + 1)
    return np.unique(np.concatenate([ts.astype(np.int64), [T]]))


def _draw_arrivals(spec: ModelSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(spec.nu)
    idx = np.searchsorted(cum, rng.random(T), side="right")
    return np.minimum(idx, spec.n_classes - 1).astype(np.int64)


class _GeomPool:
    """Buffered geometric draws, one buffer per success probability."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buffers: dict[float, tuple[np.ndarray, int]] = {}

    def draw(self, p: float) -> int:
        buf = self.buffers.get(p)
        if buf is None or buf[1] >= buf[0].size:
            buf = (self.rng.geometric(p, size=self.block), 0)
        arr, pos = buf
        self.buffers[p] = (arr, pos + 1)
        return int(arr[pos])


def _make_chooser(spec: ModelSpec, policy: PolicyConfig):
    """Per-arrival-class choice function; exact fast path for w1."""
    C = spec.n_classes
    alpha = policy.alpha
    if policy.weight.name == "w1":
        pos = [tuple(v > 0.0 for v in row) for row in spec.rho]

        def choose(x: list[int], c: int) -> int:
            row = pos[c]
            best = -1
            bw = -1
            ba = -1
            for j in range(C):
                wj = x[j] if row[j] else 0
                if wj > bw or (wj == bw and alpha[j] > ba):
                    best, bw, ba = j, wj, alpha[j]
            return best

        return choose

    weight = policy.weight
    rho = spec.rho

    def choose(x: list[int], c: int) -> int:
        return select_class(weight, alpha, x, rho[c])

    return choose


@dataclass
class SimState:
    """Mutable state of one lazy-engine realization."""

    t: int
    x: list[int]
    matched_pairs: int
    returns_to_zero: int
    first_return: int | None
    rng: np.random.Generator


@dataclass(frozen=True)
class StepEvent:
    t: int
    arrival: int
    chosen: int
    matched: bool
    trials: int


def new_sim(spec: ModelSpec, seed) -> SimState:
    rng = np.random.default_rng(_seed_seq(seed))
    return SimState(t=0, x=[0] * spec.n_classes, matched_pairs=0,
                    returns_to_zero=0, first_return=None, rng=rng)


def step(spec: ModelSpec, policy: PolicyConfig, sim: SimState) -> StepEvent:
    """Advance one arrival: draw its class, probe the targeted class node by
    node until the first successful edge, and update the counts."""
    cum = np.cumsum(spec.nu)
    u = sim.rng.random()
    c = int(np.searchsorted(cum, u, side="right"))
    c = min(c, spec.n_classes - 1)
    j = select_class(policy.weight, policy.alpha, sim.x, spec.rho[c])
    r = spec.rho[c][j]
    xj = sim.x[j]
    if xj > 0 and r > 0.0:
        g = int(sim.rng.geometric(r))
        matched = g <= xj
        trials = g if matched else xj
    else:
        matched = False
        trials = xj  # probing a class with r = 0 burns all its nodes
    sim.t += 1
    if matched:
        sim.x[j] -= 1
        sim.matched_pairs += 1
    else:
        sim.x[c] += 1
    if sum(sim.x) == 0:
        sim.returns_to_zero += 1
        if sim.first_return is None:
            sim.first_return = sim.t
    return StepEvent(t=sim.t, arrival=c, chosen=j, matched=matched, trials=trials)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled path of one realization plus pathwise counters."""

    T: int
    seed: object
    t_grid: np.ndarray
    x: np.ndarray
    sup_norm: np.ndarray
    matched_pairs: np.ndarray
    perfect: np.ndarray
    ergodic_avg: np.ndarray
    walks: dict[frozenset[int], np.ndarray]
    returns_to_zero: int
    first_return: int | None
    final_x: State
    matched_total: int
    arrivals: np.ndarray | None = None


def coupled_walk(spec: ModelSpec, independent_set: Iterable[int],
                 arrivals: Sequence[int]) -> np.ndarray:
    """Path of the comparison walk driven by a given arrival sequence.

    The walk starts at 0, gains 1 on arrivals in the set and loses 1 on
    arrivals in its neighborhood; the unmatched count summed over the set
    dominates this walk pathwise, whatever the policy does.
    """
    graph = root_graph(spec)
    members = frozenset(independent_set)
    for i in members:
        for j in members:
            if graph.adjacency[i][j]:
                raise ValueError("the comparison walk needs an independent set")
    delta = np.zeros(spec.n_classes, dtype=np.int64)
    for j in neighborhood(graph, members):
        delta[j] = -1
    for i in members:
        delta[i] = 1
    xi = delta[np.asarray(arrivals, dtype=np.int64)]
    out = np.empty(len(xi) + 1, dtype=np.int64)
    out[0] = 0
    np.cumsum(xi, out=out[1:])
    return out


def run(spec: ModelSpec, policy: PolicyConfig, T: int, seed,
        sample_every: int | None = None,
        track_walks: Iterable[Iterable[int]] = (),
        keep_arrivals: bool = False) -> Trajectory:
    """Run the lazy engine for T arrivals and sample the path on a grid.

    track_walks lists independent sets whose comparison walks are evaluated
    on the same arrival stream and sampled on the same grid.
    """
    rng = np.random.default_rng(_seed_seq(seed))
    arrivals = _draw_arrivals(spec, T, rng)
    pool = _GeomPool(rng)
    choose = _make_chooser(spec, policy)
    rho = spec.rho
    C = spec.n_classes

    grid = _sample_grid(T, sample_every)
    S = grid.size
    samp_x = np.zeros((S, C), dtype=np.int64)
    samp_matched = np.zeros(S, dtype=np.int64)
    samp_erg = np.zeros(S, dtype=np.float64)

    x = [0] * C
    total = 0
    matched_pairs = 0
    cum_norm = 0.0
    returns_to_zero = 0
    first_return: int | None = None

    gi = 0
    if grid[0] == 0:
        gi = 1  # the zero row is already all zeros
    next_sample = int(grid[gi]) if gi < S else -1

    for t in range(1, T + 1):
        c = int(arrivals[t - 1])
        j = choose(x, c)
        xj = x[j]
        r = rho[c][j]
        if xj > 0 and r > 0.0 and pool.draw(r) <= xj:
            x[j] = xj - 1
            matched_pairs += 1
            total -= 1
        else:
            x[c] += 1
            total += 1
        cum_norm += max(x)
        if total == 0:
            returns_to_zero += 1
            if first_return is None:
                first_return = t
        if t == next_sample:
            samp_x[gi] = x
            samp_matched[gi] = matched_pairs
            samp_erg[gi] = cum_norm / t
            gi += 1
            next_sample = int(grid[gi]) if gi < S else -1

    sup = samp_x.max(axis=1)
    perfect = sup == 0
    walks: dict[frozenset[int], np.ndarray] = {}
    for members in track_walks:
        key = frozenset(members)
        walks[key] = coupled_walk(spec, key, arrivals)[grid]

    return Trajectory(T=T, seed=seed, t_grid=grid, x=samp_x, sup_norm=sup,
                      matched_pairs=samp_matched, perfect=perfect,
                      ergodic_avg=samp_erg, walks=walks,
                      returns_to_zero=returns_to_zero, first_return=first_return,
                      final_x=tuple(int(v) for v in x), matched_total=matched_pairs,
                      arrivals=arrivals if keep_arrivals else None)


def run_replicas(spec: ModelSpec, policy: PolicyConfig, T: int, base_seed: int,
                 replicas: int, **kwargs) -> list[Trajectory]:
    """Independent replicas on split streams (base_seed, r)."""
    return [run(spec, policy, T, (base_seed, r), **kwargs) for r in range(replicas)]


def final_states(spec: ModelSpec, policy: PolicyConfig, T: int, base_seed: int,
                 replicas: int) -> np.ndarray:
    """Final count vectors of many short replicas, without path bookkeeping."""
    C = spec.n_classes
    rho = spec.rho
    choose = _make_chooser(spec, policy)
    out = np.zeros((replicas, C), dtype=np.int64)
    for rep in range(replicas):
        rng = np.random.default_rng(_seed_seq((base_seed, rep)))
        arrivals = _draw_arrivals(spec, T, rng)
        pool = _GeomPool(rng)
        x = [0] * C
        for t in range(T):
            c = int(arrivals[t])
            j = choose(x, c)
            xj = x[j]
            r = rho[c][j]
            if xj > 0 and r > 0.0 and pool.draw(r) <= xj:
                x[j] = xj - 1
            else:
                x[c] += 1
        out[rep] = x
    return out


@dataclass(frozen=True, eq=False)
class FullGraphRun:
    """Outcome of the node-level engine: a sampled trajectory plus the realized
    matching (pairs of node ids, arrival order) and, optionally, the edges."""

    T: int
    seed: object
    t_grid: np.ndarray
    x: np.ndarray
    sup_norm: np.ndarray
    matched_pairs: np.ndarray
    node_class: np.ndarray
    unmatched: np.ndarray
    matching: tuple[tuple[int, int], ...]
    edges: tuple[tuple[int, int], ...] | None
    final_x: State


def full_graph_run(spec: ModelSpec, policy: PolicyConfig, T: int, seed,
                   sample_every: int | None = None,
                   retain_graph: bool = False) -> FullGraphRun:
    """Run the node-level engine, materializing every edge indicator.

    Quadratic in T, capped at T = 1000.  When the targeted class has an
    edge to the arrival among its unmatched nodes, the arrival is matched to
    the eligible node that arrived first.
    """
    if T > FULL_GRAPH_MAX_T:
        raise ValueError(f"full-graph engine capped at T = {FULL_GRAPH_MAX_T}")
    rng = np.random.default_rng(_seed_seq(seed))
    arrivals = _draw_arrivals(spec, T, rng)
    choose = _make_chooser(spec, policy)
    rho_arr = np.asarray(spec.rho)
    C = spec.n_classes

    grid = _sample_grid(T, sample_every)
    S = grid.size
    samp_x = np.zeros((S, C), dtype=np.int64)
    samp_matched = np.zeros(S, dtype=np.int64)

    node_class = np.zeros(T, dtype=np.int64)
    unmatched = np.zeros(T, dtype=bool)
    psi = np.zeros(T, dtype=bool)
    x = [0] * C
    matched_pairs = 0
    matching: list[tuple[int, int]] = []
    edges: list[tuple[int, int]] | None = [] if retain_graph else None

    gi = 1 if grid[0] == 0 else 0
    next_sample = int(grid[gi]) if gi < S else -1

    for t in range(1, T + 1):
        c = int(arrivals[t - 1])
        nv = t - 1
        if nv:
            np.less(rng.random(nv), rho_arr[c, node_class[:nv]], out=psi[:nv])
            if edges is not None:
                edges.extend((v, nv) for v in np.nonzero(psi[:nv])[0])
        j = choose(x, c)
        node_class[nv] = c
        unmatched[nv] = True
        partner = -1
        if nv and x[j] > 0:
            elig = psi[:nv] & unmatched[:nv] & (node_class[:nv] == j)
            hits = np.nonzero(elig)[0]
            if hits.size:
                partner = int(hits[0])
        if partner >= 0:
            unmatched[partner] = False
            unmatched[nv] = False
            matching.append((partner, nv))
            x[j] -= 1
            matched_pairs += 1
        else:
            x[c] += 1
        if t == next_sample:
            samp_x[gi] = x
            samp_matched[gi] = matched_pairs
            gi += 1
            next_sample = int(grid[gi]) if gi < S else -1

    return FullGraphRun(T=T, seed=seed, t_grid=grid, x=samp_x,
                        sup_norm=samp_x.max(axis=1), matched_pairs=samp_matched,
                        node_class=node_class, unmatched=unmatched,
                        matching=tuple(matching),
                        edges=None if edges is None else tuple(edges),
                        final_x=tuple(int(v) for v in x))


def enumerate_exact_distribution(spec: ModelSpec, policy: PolicyConfig, T: int) -> dict[State, float]:
    """Exact law of the count vector after T arrivals of the full-graph
    engine, by enumeration of every arrival class and edge indicator."""
    if T > ENUMERATION_MAX_T:
        raise ValueError(f"exact enumeration capped at T = {ENUMERATION_MAX_T}")
    C = spec.n_classes
    rho = spec.rho
    nu = spec.nu
    weight, alpha = policy.weight, policy.alpha
    out: dict[State, float] = {}

    def counts(nodes) -> list[int]:
        x = [0] * C
        for cl, um in nodes:
            if um:
                x[cl] += 1
        return x

    def rec(t: int, nodes: tuple, prob: float) -> None:
        if t > T:
            key = tuple(counts(nodes))
            out[key] = out.get(key, 0.0) + prob
            return
        nv = len(nodes)
        for c in range(C):
            pc = nu[c]
            for bits in range(1 << nv):
                p_edges = 1.0
                for v in range(nv):
                    r = rho[c][nodes[v][0]]
                    p_edges *= r if (bits >> v) & 1 else 1.0 - r
                    if p_edges == 0.0:
                        break
                if p_edges == 0.0:
                    continue
                x = counts(nodes)
                j = select_class(weight, alpha, x, rho[c])
                partner = -1
                if x[j] > 0:
                    for v in range(nv):
                        if nodes[v][1] and nodes[v][0] == j and (bits >> v) & 1:
                            partner = v
                            break
                if partner >= 0:
                    new_nodes = tuple((cl, um and v != partner)
                                      for v, (cl, um) in enumerate(nodes)) + ((c, False),)
                else:
                    new_nodes = nodes + ((c, True),)
                rec(t + 1, new_nodes, prob * pc * p_edges)

    rec(1, (), 1.0)
    return out
