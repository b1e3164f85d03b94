"""Command line front end.

Verbs:
  ncond       stability report: margin, independent sets, walk constants
  drift       sweep the drift certificate over a sup-norm ball
  appendix    check every reduction inequality of the certificate chain
  simulate    lazy-engine replicas to CSV
  stationary  truncated stationary law, mean bound check
  sweep       margin and simulated growth across a family of models

All output is deterministic: floats are printed with 17 significant digits,
rows are sorted, and randomized verbs require an explicit seed (from the
config or --seed; there is no clock fallback).  The exit status is 0 only
when every asserted check passes, 1 when a check fails, and 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import analyze, kernel, simulate
from .model import InvalidModelError, ModelSpec, make_spec, stability, walk_spec
from .policy import BUILTIN_WEIGHTS, PolicyError, WeightFunction, make_policy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunParams:
    T: int
    replicas: int
    base_seed: int | None
    sample_every: int | None
    walk_set: tuple[int, ...] | None


@dataclass(frozen=True)
class AnalyzeParams:
    cap: int
    max_norm: int
    solver: str


@dataclass(frozen=True)
class ScenarioConfig:
    spec: ModelSpec
    weight: WeightFunction
    alpha: tuple[int, ...] | None
    n_check: int
    run: RunParams
    analyze: AnalyzeParams
    sweep_models: tuple[tuple[str, ModelSpec], ...]
    sweep_T: int
    sweep_replicas: int


def _parse_nu_entry(v):
    if isinstance(v, str):
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad nu entry {v!r}: {exc}") from exc
    if isinstance(v, (int, float)):
        return float(v)
    raise ConfigError(f"bad nu entry {v!r}")


def _parse_model(node: dict) -> ModelSpec:
    try:
        classes = node["classes"]
        nu_raw = node["nu"]
        rho = node["rho"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"model section needs classes, nu, rho: {exc}") from exc
    nu = [_parse_nu_entry(v) for v in nu_raw]
    if all(isinstance(v, Fraction) for v in nu):
        nu_vals: Sequence = nu
    else:
        nu_vals = [float(v) for v in nu]
    try:
        return make_spec(classes, nu_vals, rho)
    except InvalidModelError as exc:
        raise ConfigError(str(exc)) from exc


def _alpha_from_labels(spec: ModelSpec, labels: Sequence) -> tuple[int, ...]:
    """Priority list (highest first) to alpha values (largest wins ties)."""
    if sorted(map(str, labels)) != sorted(map(str, spec.classes)):
        raise ConfigError("alpha must list every class label exactly once")
    n = spec.n_classes
    values = [0] * n
    for pos, label in enumerate(labels):
        values[spec.classes.index(label)] = n - pos
    return tuple(values)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "model" not in raw:
        raise ConfigError("config has no model section")
    spec = _parse_model(raw["model"])

    pol = raw.get("policy", {})
    weight_id = pol.get("weight", "w1")
    if weight_id not in BUILTIN_WEIGHTS:
        raise ConfigError(f"unknown weight {weight_id!r} (choose from {sorted(BUILTIN_WEIGHTS)})")
    weight = BUILTIN_WEIGHTS[weight_id]
    alpha = _alpha_from_labels(spec, pol["alpha"]) if "alpha" in pol else None
    n_check = int(pol.get("n_check", 10_000))

    rn = raw.get("run", {})
    walk_set = None
    if rn.get("walk_set"):
        try:
            walk_set = tuple(spec.classes.index(lb) for lb in rn["walk_set"])
        except ValueError as exc:
            raise ConfigError(f"walk_set labels must be class labels: {exc}") from exc
    run_params = RunParams(
        T=int(rn.get("T", 10_000)),
        replicas=int(rn.get("replicas", 1)),
        base_seed=int(rn["base_seed"]) if "base_seed" in rn else None,
        sample_every=int(rn["sample_every"]) if rn.get("sample_every") is not None else None,
        walk_set=walk_set,
    )

    an = raw.get("analyze", {})
    analyze_params = AnalyzeParams(
        cap=int(an.get("cap", 30)),
        max_norm=int(an.get("max_norm", 10)),
        solver=str(an.get("solver", "auto")),
    )

    sw = raw.get("sweep", {})
    sweep_models = []
    for entry in sw.get("models", []):
        try:
            sweep_models.append((str(entry["id"]), _parse_model(entry["model"])))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"sweep entries need id and model: {exc}") from exc
    return ScenarioConfig(
        spec=spec, weight=weight, alpha=alpha, n_check=n_check,
        run=run_params, analyze=analyze_params,
        sweep_models=tuple(sweep_models),
        sweep_T=int(sw.get("T", run_params.T)),
        sweep_replicas=int(sw.get("replicas", run_params.replicas)),
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_csv(path: str | None, header: list[str], rows) -> None:
    fh, close = _open_out(path)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def _labels(spec: ModelSpec, members) -> list[str]:
    return [str(spec.classes[i]) for i in sorted(members)]


def cmd_ncond(cfg: ScenarioConfig, out: str | None) -> int:
    spec = cfg.spec
    stab = stability(spec)
    doc = {
        "classes": [str(c) for c in spec.classes],
        "eta": "inf" if math.isinf(stab.eta) else stab.eta,
        "eta_exact": str(stab.eta_exact) if stab.eta_exact is not None else None,
        "ncond": stab.ncond,
        "independent_sets": [_labels(spec, s) for s in stab.independent_sets],
        "minimizer": _labels(spec, stab.minimizer) if stab.minimizer is not None else None,
        "walk": None,
    }
    if stab.minimizer is not None:
        ws = walk_spec(spec, stab.minimizer)
        doc["walk"] = {
            "set": _labels(spec, ws.independent_set),
            "mu": ws.mu,
            "sigma2": ws.sigma2,
            "c_bound": ws.c_bound,
        }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    fh, close = _open_out(out)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    return 0


def _ball(n_classes: int, max_norm: int):
    return itertools.product(range(max_norm + 1), repeat=n_classes)


def cmd_drift(cfg: ScenarioConfig, max_norm: int, out: str | None, corrupt: bool = False) -> int:
    spec = cfg.spec
    stab = stability(spec)
    if not stab.ncond:
        print("drift: the certificate needs a positive stability margin", file=sys.stderr)
        return 2
    policy = make_policy(spec, cfg.weight, alpha=cfg.alpha, n_check=cfg.n_check)
    header = [f"x_{c}" for c in spec.classes] + ["drift", "bound", "slack", "status"]
    failures = 0
    rows = []
    for x in _ball(spec.n_classes, max_norm):
        if corrupt:
            # Negative control: flip every matching step upward, as a sign
            # error in the match indicator would; the sweep must then fail.
            row = kernel.transition_row(spec, policy, "raw", x)
            d = -kernel.quadratic(x)
            for y, p in row.entries:
                if sum(y) < sum(x):
                    y = tuple(2 * a - b for a, b in zip(x, y))
                d += p * kernel.quadratic(y)
            b = kernel.theorem_bound(spec, policy, x)
            slack = b - d
            ok = slack >= -kernel.INEQ_TOL
        else:
            rep = kernel.check_main_drift(spec, policy, x)
            d, b, slack, ok = rep.drift, rep.bound, rep.slack, rep.passed
        if not ok:
            failures += 1
        rows.append(list(x) + [d, b, slack, "pass" if ok else "fail"])
    _write_csv(out, header, rows)
    total = (max_norm + 1) ** spec.n_classes
    print(f"drift: {total} states, {failures} failures")
    return 1 if failures else 0


def cmd_appendix(cfg: ScenarioConfig, max_norm: int, out: str | None) -> int:
    spec = cfg.spec
    policy = make_policy(spec, cfg.weight, alpha=cfg.alpha, n_check=cfg.n_check)
    header = [f"x_{c}" for c in spec.classes] + ["step", "applicable", "lhs", "rhs", "slack", "status"]
    failures = 0
    checked = 0
    rows = []
    for x in _ball(spec.n_classes, max_norm):
        report = kernel.verify_drift_chain(spec, policy, x)
        for st in report.steps:
            if st.applicable:
                checked += 1
                status = "pass" if st.passed else "fail"
                if not st.passed:
                    failures += 1
                rows.append(list(x) + [st.name, 1, st.lhs, st.rhs, st.slack, status])
            else:
                rows.append(list(x) + [st.name, 0, "", "", "", "skipped"])
    _write_csv(out, header, rows)
    print(f"appendix: {checked} applicable checks, {failures} failures")
    return 1 if failures else 0


def cmd_simulate(cfg: ScenarioConfig, out: str | None, seed_override: int | None) -> int:
    spec = cfg.spec
    base_seed = seed_override if seed_override is not None else cfg.run.base_seed
    if base_seed is None:
        print("simulate: no seed given (set run.base_seed or pass --seed)", file=sys.stderr)
        return 2
    policy = make_policy(spec, cfg.weight, alpha=cfg.alpha, n_check=cfg.n_check)
    walks = [cfg.run.walk_set] if cfg.run.walk_set is not None else []
    header = ["replica", "t"] + [f"x_{c}" for c in spec.classes] \
        + ["sup_norm", "matched_pairs", "perfect"]
    if cfg.run.walk_set is not None:
        header.append("walk_S")
    rows = []
    for rep in range(cfg.run.replicas):
        tr = simulate.run(spec, policy, cfg.run.T, (base_seed, rep),
                          sample_every=cfg.run.sample_every, track_walks=walks)
        walk = tr.walks[frozenset(cfg.run.walk_set)] if cfg.run.walk_set is not None else None
        for k, t in enumerate(tr.t_grid):
            row = [rep, int(t)] + [int(v) for v in tr.x[k]] \
                + [int(tr.sup_norm[k]), int(tr.matched_pairs[k]), bool(tr.perfect[k])]
            if walk is not None:
                row.append(int(walk[k]))
            rows.append(row)
    _write_csv(out, header, rows)
    return 0


def cmd_stationary(cfg: ScenarioConfig, out: str | None) -> int:
    spec = cfg.spec
    policy = make_policy(spec, cfg.weight, alpha=cfg.alpha, n_check=cfg.n_check)
    chain = analyze.truncate(spec, policy, cfg.analyze.cap)
    est = analyze.stationary(chain, method=cfg.analyze.solver)
    stab = stability(spec)
    bound = analyze.invariant_mean_bound(spec, policy) if stab.ncond else None
    bound_ok = (est.mean_sup_norm <= bound + 1e-9) if bound is not None else None
    header = [f"x_{c}" for c in spec.classes] + ["pi"]
    _write_csv(out, header, (list(x) + [est.pi[k]] for k, x in enumerate(chain.states)))
    doc = {
        "n_states": chain.n_states,
        "cap": cfg.analyze.cap,
        "method": est.method,
        "mean_sup_norm": est.mean_sup_norm,
        "residual": est.residual,
        "boundary_mass": est.boundary_mass,
        "even_sum": est.even_sum,
        "odd_sum": est.odd_sum,
        "mean_bound": bound if bound is None or math.isfinite(bound) else "inf",
        "bound_ok": bound_ok,
    }
    print(json.dumps(doc, sort_keys=True))
    return 0 if bound_ok is None or bound_ok else 1


def cmd_sweep(cfg: ScenarioConfig, out: str | None, seed_override: int | None) -> int:
    base_seed = seed_override if seed_override is not None else cfg.run.base_seed
    if base_seed is None:
        print("sweep: no seed given (set run.base_seed or pass --seed)", file=sys.stderr)
        return 2
    if not cfg.sweep_models:
        print("sweep: config has no sweep.models", file=sys.stderr)
        return 2
    rows = analyze.eta_sweep(cfg.sweep_models, cfg.sweep_T, base_seed,
                             cfg.sweep_replicas, weight=cfg.weight,
                             alpha=None, n_check=cfg.n_check)
    header = ["id", "eta", "ncond", "growth", "perfect_rate", "mean_return_time"]
    _write_csv(out, header, ([r.id, r.eta, r.ncond, r.growth, r.perfect_rate,
                              r.mean_return_time] for r in rows))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sbmatch",
                                     description="online matching on stochastic block models")
    parser.add_argument("--config", required=True, help="path to a JSON scenario config")
    parser.add_argument("--out", default=None, help="output file (default: stdout)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the base seed of randomized verbs")
    parser.add_argument("--max-norm", type=int, default=None,
                        help="sup-norm radius for drift and appendix sweeps")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("ncond")
    p_drift = sub.add_parser("drift")
    p_drift.add_argument("--corrupt-kernel", action="store_true",
                         help="negative control: flip every matching step upward")
    sub.add_parser("appendix")
    sub.add_parser("simulate")
    sub.add_parser("stationary")
    sub.add_parser("sweep")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    max_norm = args.max_norm if args.max_norm is not None else cfg.analyze.max_norm
    try:
        if args.verb == "ncond":
            return cmd_ncond(cfg, args.out)
        if args.verb == "drift":
            return cmd_drift(cfg, max_norm, args.out, corrupt=args.corrupt_kernel)
        if args.verb == "appendix":
            return cmd_appendix(cfg, max_norm, args.out)
        if args.verb == "simulate":
            return cmd_simulate(cfg, args.out, args.seed)
        if args.verb == "stationary":
            return cmd_stationary(cfg, args.out)
        if args.verb == "sweep":
            return cmd_sweep(cfg, args.out, args.seed)
    except (PolicyError, InvalidModelError, kernel.KernelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable verb")


if __name__ == "__main__":
    sys.exit(main())
