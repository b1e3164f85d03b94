"""Weight functions, thresholds, and the greedy class choice."""

import numpy as np
import pytest

from sbmatch import (
    W1,
    W2,
    PolicyError,
    WeightFunction,
    check_assumption,
    make_policy,
    n_star,
    phi,
    select_class,
)

from conftest import random_model, random_state


def brute_threshold(weight, r, window=400):
    """Smallest m such that both threshold inequalities hold on the window."""
    def ok(n):
        return (weight(n - 1, 1.0) < weight(n, r)
                and weight(n, 1.0) < weight(n + 1, r))
    for m in range(1, window):
        if all(ok(n) for n in range(m, window)):
            return m
    raise AssertionError("no threshold in the brute-force window")


def test_w1_values():
    assert W1(0, 0.7) == 0
    assert W1(5, 0.0) == 0
    assert W1(5, 0.7) == 5


def test_w2_values():
    assert W2(0, 0.3) == pytest.approx(0.0)
    assert W2(5, 0.3) == pytest.approx(5 * (1 - 0.7 ** 5))
    assert W2(1, 1.0) == pytest.approx(1.0)


def test_weights_accept_arrays():
    ns = np.arange(6)
    np.testing.assert_allclose(W1(ns, 0.5), ns)
    np.testing.assert_allclose(W2(ns, 0.5), ns * (1 - 0.5 ** ns))


def test_n_star_w1_is_one_for_every_rate():
    for r in (0.05, 0.1, 0.3, 0.5, 0.9, 1.0):
        assert n_star(W1, r) == 1


def test_n_star_w2_known_thresholds():
    assert n_star(W2, 0.3) == 4
    for r in (0.1, 0.2, 0.3, 0.5, 0.9):
        assert n_star(W2, r) == brute_threshold(W2, r)


def test_n_star_rejects_rate_zero():
    with pytest.raises(PolicyError):
        n_star(W1, 0.0)


def test_check_assumption_passes_for_builtins():
    for weight in (W1, W2):
        rep = check_assumption(weight)
        assert rep.ok
        assert rep.window_certified
        assert rep.violations == ()
    rep = check_assumption(W1)
    assert all(m == 1 for _, m in rep.n_star_by_r)
    assert rep.window_m() == 1


def test_check_assumption_flags_decreasing_weight():
    bad = WeightFunction(name="bad", fn=lambda n, r: (n > 0) * (r > 0) / (1.0 + n),
                         certified=False)
    rep = check_assumption(bad, n_check=200)
    assert not rep.ok
    assert not rep.hyp2_ok


def test_check_assumption_flags_wrong_positivity():
    bad = WeightFunction(name="const", fn=lambda n, r: np.ones_like(np.asarray(n, dtype=float)),
                         certified=False)
    rep = check_assumption(bad, n_check=50)
    assert not rep.hyp1_ok


def test_select_class_prefers_positive_weight(bipartite_spec):
    pol = make_policy(bipartite_spec)
    assert select_class(pol.weight, pol.alpha, (0, 2), bipartite_spec.rho[0]) == 1


def test_select_class_breaks_ties_by_larger_alpha(bipartite_spec):
    pol = make_policy(bipartite_spec, alpha=(1, 2))
    assert select_class(pol.weight, pol.alpha, (0, 0), bipartite_spec.rho[0]) == 1
    flipped = make_policy(bipartite_spec, alpha=(2, 1))
    assert select_class(flipped.weight, flipped.alpha, (0, 0), bipartite_spec.rho[0]) == 0


def test_select_class_triangle_example(triangle_spec):
    pol = make_policy(triangle_spec, weight=W2)
    assert phi(pol, triangle_spec, (3, 5, 0), 0) == 1


def test_phi_ignores_incompatible_classes(path3_spec):
    pol = make_policy(path3_spec)
    # arrival a only sees b, whatever the counts elsewhere
    assert phi(pol, path3_spec, (0, 1, 9), 0) == 1


def test_make_policy_defaults(triangle_spec):
    pol = make_policy(triangle_spec)
    assert pol.alpha == (1, 2, 3)
    assert pol.n_star == 1
    pol2 = make_policy(triangle_spec, weight=W2)
    assert pol2.n_star == 4


def test_make_policy_rejects_bad_alpha(triangle_spec):
    with pytest.raises(PolicyError):
        make_policy(triangle_spec, alpha=(1, 1, 2))


def test_make_policy_needs_a_positive_rate():
    from sbmatch import make_spec
    blank = make_spec(("a", "b"), (0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(PolicyError):
        make_policy(blank)


def test_support_rule_randomized():
    rng = np.random.default_rng(7)
    for _ in range(300):
        spec = random_model(rng)
        pol = make_policy(spec, weight=W2 if rng.random() < 0.5 else W1)
        x = random_state(rng, spec.n_classes)
        i = int(rng.integers(spec.n_classes))
        j = phi(pol, spec, x, i)
        eligible = [k for k in range(spec.n_classes)
                    if spec.rho[i][k] > 0.0 and x[k] > 0]
        if eligible:
            assert j in eligible


def test_indistinguishability_above_threshold():
    rng = np.random.default_rng(11)
    for _ in range(300):
        spec = random_model(rng)
        pol = make_policy(spec, weight=W2)
        x = tuple(int(v) for v in rng.integers(pol.n_star, pol.n_star + 8,
                                               size=spec.n_classes))
        i = int(rng.integers(spec.n_classes))
        neigh = [k for k in range(spec.n_classes) if spec.rho[i][k] > 0.0]
        if not neigh:
            continue
        j = phi(pol, spec, x, i)
        assert x[j] == max(x[k] for k in neigh)
