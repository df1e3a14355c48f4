"""Command line entry point: build -> walk -> detect -> estimate pipelines.

Exit codes: 0 success, 2 configuration/usage error, 3 structural
assumption failure, 4 statistical precondition failure, 5 oracle check
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .automaton import ConeAutomaton, build_classified
from .estimators import (
    PerturbationFamily,
    StatisticalPreconditionError,
    atom_counts,
    clt_check,
    combined_z,
    estimate_report,
    estimate_speed,
    lazy_corrected_estimates,
    simulate,
    smoothness_probe,
)
from .renewal import (
    RenewalConfig,
    TooFewRenewals,
    detect_renewals,
    iid_diagnostics,
    renewal_summary,
    tail_diagnostics,
    write_excursions_csv,
)
from .walk import (
    AssumptionError,
    DrivingMeasure,
    LazyAverageDriver,
    pilot_target_type,
    run_lazy_walk,
    run_walk,
    validate_measure,
)
from .words import Presentation, PresentationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_STATISTICS = 4
EXIT_ORACLE = 5

PRESETS = {
    "f2-srw": {
        "group": {"kind": "free", "rank": 2},
        "measure": {"kind": "simple", "lazy_ell": None},
        "n": 1_000_000,
        "replicas": 64,
        "seed": 20240601,
        "margin": 256,
        "target_type": "auto",
        "probe_radius": 6,
        "clt": {"n": 10_000, "replicas": 2000},
        "probe": {"n": 500, "replicas": 4000, "atoms": [0, 1], "steps": [0.08, 0.04, 0.02, 0.01, 0.005]},
        "oracle": {"radius": 8, "trajectories": 10, "n": 2000},
    },
    "genus2-srw": {
        "group": {"kind": "surface", "genus": 2},
        "measure": {"kind": "simple", "lazy_ell": None},
        "n": 1_000_000,
        "replicas": 64,
        "seed": 20240602,
        "margin": 256,
        "target_type": "auto",
        "probe_radius": 5,
        "clt": {"n": 20_000, "replicas": 2000},
        "probe": {"n": 500, "replicas": 4000, "atoms": [0, 1], "steps": [0.04, 0.02, 0.01, 0.005, 0.0025]},
        "oracle": {"radius": 6, "trajectories": 10, "n": 2000},
    },
    "genus2-lazy": {
        "group": {"kind": "surface", "genus": 2},
        "measure": {"kind": "simple", "lazy_ell": 3},
        "n": 500_000,
        "replicas": 32,
        "seed": 20240603,
        "margin": 256,
        "target_type": "auto",
        "probe_radius": 5,
        "clt": None,
        "probe": None,
        "oracle": {"radius": 5, "trajectories": 5, "n": 2000},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, preset: str | None, seed: int | None) -> dict:
    """Preset (default ``f2-srw``) overlaid with the JSON file and ``--seed``."""
    name = preset or "f2-srw"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[name])
    cfg["preset"] = name
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        measure = user.get("measure")
        cfg = _merge(cfg, user)
        if isinstance(measure, dict) and "atoms" in measure:
            # explicit atoms replace the preset's measure instead of merging into it
            cfg["measure"] = {"lazy_ell": None, **measure}
    if seed is not None:
        cfg["seed"] = seed
    for key in ("n", "replicas", "margin"):
        if not isinstance(cfg.get(key), int) or cfg[key] < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    if cfg["replicas"] == 0:
        raise ConfigError("replicas must be positive")
    if cfg["margin"] < 1:
        raise ConfigError("margin must be at least 1")
    return cfg


class Context:
    """Objects shared by the subcommands of one run."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        try:
            self.p = Presentation.from_config(cfg["group"])
        except (KeyError, TypeError, PresentationError) as exc:
            raise ConfigError(f"bad group spec: {exc}") from exc
        mcfg = cfg.get("measure") or {}
        try:
            self.m = DrivingMeasure.from_config(mcfg, self.p)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad measure spec: {exc}") from exc
        self.ell = mcfg.get("lazy_ell")
        self._A: ConeAutomaton | None = None

    @property
    def A(self) -> ConeAutomaton:
        if self._A is None:
            self._A = build_classified(self.p, self.cfg.get("probe_radius"))
            if not self._A.recurrent_connected:
                raise AssumptionError("recurrent states are not strongly connected")
        return self._A

    def target(self) -> int:
        t = self.cfg.get("target_type", "auto")
        if t == "auto":
            return pilot_target_type(self.A, self.m, seed=int(self.cfg["seed"]))
        return int(t)

    def renewal_config(self, margin: int | None = None) -> RenewalConfig:
        rc = RenewalConfig(self.target(), margin or int(self.cfg["margin"]))
        rc.validate(self.A)
        return rc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _manifest(out: Path, command: str, cfg: dict, seeds: list, files: list, started: float) -> None:
    _write_json(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "config": cfg,
        "seeds": seeds,
        "outputs": files,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "workers": os.environ.get("CONEWALK_THREADS", "1"),
        "elapsed_seconds": round(time.time() - started, 3),
    })


def cmd_build_automaton(ctx: Context, out: Path, args) -> int:
    A = build_classified(ctx.p, ctx.cfg.get("probe_radius"))
    _write_json(out / "automaton.json", A.to_dict())
    report = {
        "group": ctx.p.to_config(),
        "states": A.n_states,
        "recurrent": int(A.recurrent.sum()),
        "large": int(A.large.sum()),
        "recurrent_connected": A.recurrent_connected,
        "ubiquity_radius": {str(k): v for k, v in A.ubiquity_radius.items()},
        "probe_radius": A.probe_radius,
    }
    _write_json(out / "classification.json", report)
    print(json.dumps({k: report[k] for k in ("states", "recurrent", "recurrent_connected")}))
    return EXIT_OK if A.recurrent_connected else EXIT_ASSUMPTION


def cmd_walk(ctx: Context, out: Path, args) -> int:
    validate_measure(ctx.m, ctx.p, ctx.ell)
    n, seed = int(ctx.cfg["n"]), int(ctx.cfg["seed"])
    if ctx.ell:
        traj = run_lazy_walk(LazyAverageDriver(ctx.m, ctx.ell), ctx.p, ctx.A, n, seed)
    else:
        traj = run_walk(ctx.m, ctx.p, ctx.A, n, seed)
    traj.write_csv(out / "trajectory.csv")
    summary = {"n": traj.n, "final_distance": int(traj.distances[-1]), "seed": traj.seed}
    try:
        rec = detect_renewals(traj, ctx.renewal_config())
        summary["renewals"] = renewal_summary(rec)
    except ValueError as exc:
        summary["renewals"] = {"error": str(exc)}
    _write_json(out / "walk.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def _run_batch(ctx: Context, extra_margins: tuple = ()):
    validate_measure(ctx.m, ctx.p, ctx.ell)
    cfg = ctx.cfg
    return simulate(
        ctx.m, ctx.p, ctx.A, int(cfg["n"]), int(cfg["replicas"]), int(cfg["seed"]),
        ctx.renewal_config(), ell=ctx.ell, extra_margins=extra_margins,
    )


def _write_clt(out: Path, z: np.ndarray) -> None:
    with open(out / "clt_samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "z"])
        for i, v in enumerate(z):
            w.writerow([i, float(v)])


def cmd_estimate(ctx: Context, out: Path, args) -> int:
    cfg = ctx.cfg
    batch = _run_batch(ctx)
    files = ["estimate.json", "excursions.csv"]
    report = estimate_report(batch, int(cfg["margin"]))
    result = report.to_dict()
    result["target_type"] = ctx.target()
    if ctx.ell:
        result["lazy"] = lazy_corrected_estimates(batch.stats, ctx.ell)
    seeds = list(batch.seeds)
    clt = cfg.get("clt")
    if clt and not ctx.ell:
        # a different base seed gives streams independent of the estimation run
        clt_seed = int(cfg["seed"]) + 1
        rep = clt_check(ctx.m, ctx.p, ctx.A, int(clt["n"]), int(clt["replicas"]), clt_seed,
                        report.v_renewal, report.sigma2)
        result["ks_distance"] = rep.ks_distance
        result["ks_bound"] = rep.bound
        result["ks_passed"] = rep.passed
        _write_clt(out, rep.samples)
        files.append("clt_samples.csv")
        seeds += [[clt_seed, r] for r in range(int(clt["replicas"]))]
    write_excursions_csv(out / "excursions.csv", batch.stats)
    _write_json(out / "estimate.json", result)
    _manifest(out, "estimate", cfg, seeds, files, args.started)
    print(json.dumps({k: result[k] for k in ("v_renewal", "v_renewal_se", "sigma2", "sigma2_se", "v_direct")}))
    return EXIT_OK


def cmd_diagnose(ctx: Context, out: Path, args) -> int:
    cfg = ctx.cfg
    margin = int(cfg["margin"])
    batch = _run_batch(ctx, (2 * margin,))
    s = batch.stats
    sp1, sp2 = estimate_speed(s), estimate_speed(batch.by_margin[2 * margin])
    bundle = {
        "iid": iid_diagnostics(s),
        "tails": tail_diagnostics(s),
        "margin_sensitivity": {
            "margin": margin,
            "v_at_margin": sp1.value,
            "v_at_double_margin": sp2.value,
            "z": combined_z(sp1, sp2),
        },
        "renewal_density": {
            "k_of_n_times_mean_tau_over_n": (batch.k_of_n * float(s.taus.mean()) / batch.n).tolist(),
        },
    }
    seeds = list(batch.seeds)
    clt = cfg.get("clt")
    if clt and not ctx.ell:
        rep_report = estimate_report(batch, margin)
        clt_seed = int(cfg["seed"]) + 1
        rep = clt_check(ctx.m, ctx.p, ctx.A, int(clt["n"]), int(clt["replicas"]), clt_seed,
                        rep_report.v_renewal, rep_report.sigma2)
        bundle["clt"] = {"ks_distance": rep.ks_distance, "bound": rep.bound, "passed": rep.passed}
        seeds += [[clt_seed, r] for r in range(int(clt["replicas"]))]
    _write_json(out / "diagnostics.json", bundle)
    _manifest(out, "diagnose", cfg, seeds, ["diagnostics.json"], args.started)
    print(json.dumps(bundle["margin_sensitivity"]))
    return EXIT_OK


def cmd_probe(ctx: Context, out: Path, args) -> int:
    cfg = ctx.cfg
    pc = cfg.get("probe")
    if not pc:
        raise ConfigError("this configuration has no probe section")
    n, replicas, seed = int(pc["n"]), int(pc["replicas"]), int(cfg["seed"])
    i, j = pc["atoms"]
    direction = np.zeros(len(ctx.m))
    direction[i], direction[j] = 1.0, -1.0
    family = PerturbationFamily(ctx.m, direction, pc["steps"])
    trajs = [run_walk(ctx.m, ctx.p, ctx.A, n, seed, r) for r in range(replicas)]
    counts = atom_counts(trajs, len(ctx.m))
    finals = np.array([t.distances[-1] for t in trajs])
    rows = smoothness_probe(family, counts, finals, n)
    with open(out / "probe.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _manifest(out, "probe", cfg, [[seed, r] for r in range(replicas)], ["probe.csv"], args.started)
    print(json.dumps(rows[-1]))
    return EXIT_OK


def cmd_oracle_check(ctx: Context, out: Path, args) -> int:
    from .checks import corrupted_rules, distance_mismatches, renewal_mismatches, rule_reducer, sphere_mismatches
    from .oracle import bfs_oracle

    oc = ctx.cfg.get("oracle") or {}
    radius = int(oc.get("radius", 5))
    ball = bfs_oracle(ctx.p, radius)
    checked, bad, examples = distance_mismatches(ctx.p, radius, ball)
    report = {"radius": radius, "words_checked": checked, "distance_mismatches": bad}
    if ctx.p.kind == "surface":
        rules = corrupted_rules(ctx.p) if oc.get("corrupt_rules") else None
        from .words import build_rules

        reducer = rule_reducer(rules if rules is not None else build_rules(ctx.p))
        _, rbad, _ = distance_mismatches(ctx.p, radius, ball, reducer)
        report["rule_distance_mismatches"] = rbad
    report["sphere_mismatches"] = sphere_mismatches(ctx.A, ball)
    report["renewal_mismatches"] = renewal_mismatches(
        ctx.p, ctx.A, ctx.m, ctx.target(), n=int(oc.get("n", 2000)),
        trajectories=int(oc.get("trajectories", 10)), seed=int(ctx.cfg["seed"]),
    )
    ok = (
        bad == 0
        and report.get("rule_distance_mismatches", 0) == 0
        and not report["sphere_mismatches"]
        and not report["renewal_mismatches"]
    )
    report["passed"] = ok
    _write_json(out / "oracle_check.json", report)
    print(json.dumps(report))
    return EXIT_OK if ok else EXIT_ORACLE


def cmd_automaton(ctx: Context, out: Path, args) -> int:
    A = build_classified(ctx.p, ctx.cfg.get("probe_radius"))
    text = A.dumps()
    (out / "automaton.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "build-automaton": cmd_build_automaton,
    "walk": cmd_walk,
    "estimate": cmd_estimate,
    "diagnose": cmd_diagnose,
    "probe": cmd_probe,
    "oracle-check": cmd_oracle_check,
    "automaton": cmd_automaton,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conewalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "automaton":
            sp.add_argument("action", choices=["dump"])
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="base configuration")
        sp.add_argument("--seed", type=int, help="base seed (replica r draws from the stream (seed, r))")
        sp.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args.started = time.time()
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg)
        return COMMANDS[args.command](ctx, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (StatisticalPreconditionError, TooFewRenewals) as exc:
        print(f"statistical precondition failure: {exc}", file=sys.stderr)
        return EXIT_STATISTICS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
