"""Command-line front end: batch observer comparisons and invariant audits.

``simulate`` loads a scenario file, runs the configured observers (one
worker thread per observer; the heavy kernels release the GIL), and
writes one CSV per observer plus a JSON summary.  ``check-invariants``
replays the randomized algebra, gradient, gap, and projection audits and
prints a pass/fail table.  The ``SE3_OBS_THREADS`` environment variable
caps the worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import se3, sim
from .config import load_config
from .errors import DivergenceDetected, SE3ObsError, ValidationError
from .observers import (VARIANT_TAGS, ObserverVariant, ProjectionParams,
                        proj_delta)
from .potential import (alpha_bounds, build_jump_set, build_potential,
                        critical_set, grad_psi_measured, grad_psi_true,
                        potential_value_measured, potential_value_true,
                        true_gap)
from .scene import Scene, measure_outputs

CSV_COLUMNS = (
    ["t", "j"]
    + [f"R{i}{k}" for i in (1, 2, 3) for k in (1, 2, 3)]
    + ["p1", "p2", "p3"]
    + [f"Rhat{i}{k}" for i in (1, 2, 3) for k in (1, 2, 3)]
    + ["phat1", "phat2", "phat3"]
    + [f"ba{i}" for i in range(1, 7)]
    + [f"bhat{i}" for i in range(1, 7)]
    + ["dist_gI", "bias_err", "U", "V", "gap", "jumped"]
)

FLOAT_FMT = "%.17g"


def _worker_count(n_jobs):
    raw = os.environ.get("SE3_OBS_THREADS", "")
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValidationError(
                f"SE3_OBS_THREADS must be an integer, got {raw!r}")
        if cap < 1:
            raise ValidationError("SE3_OBS_THREADS must be at least 1")
        return min(cap, n_jobs)
    return n_jobs


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def write_run_csv(path, log):
    """Write one run as CSV; floats carry 17 significant digits.

    The digit count makes re-reading the file reproduce every logged
    float64 bit-exactly, so downstream analysis can treat the CSV as the
    run, not an approximation of it.
    """
    n = log.n_rows
    data = np.column_stack([
        log.t, log.j.astype(float),
        log.g[:, :3, :3].reshape(n, 9), log.g[:, :3, 3],
        log.g_hat[:, :3, :3].reshape(n, 9), log.g_hat[:, :3, 3],
        log.b_a, log.b_hat,
        log.dist_gI, log.bias_err, log.U, log.V, log.gap,
        log.jumped.astype(float),
    ])
    fmt = [FLOAT_FMT] * data.shape[1]
    fmt[1] = "%d"
    fmt[-1] = "%d"
    np.savetxt(path, data, fmt=fmt, delimiter=",",
               header=",".join(CSV_COLUMNS), comments="")


def read_run_csv(path):
    """Load a run CSV back as (header list, (n, 44) float array)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _run_one(tag, cfg, pdef, jump_set, out_dir):
    traj = sim.TrajectorySpec(g0=cfg.g0, omega_fn=cfg.omega_fn,
                              v_fn=cfg.v_fn, duration=cfg.duration,
                              step=cfg.step)
    variant = ObserverVariant(tag=tag,
                              jump_set=jump_set if tag != "S" else None)
    scenario = sim.Scenario(
        scene=cfg.scene, trajectory=traj, variant=variant, gains=cfg.gains,
        bias=cfg.bias, noise_sigma=cfg.noise_sigma, seed=cfg.seed,
        projection=cfg.projection if cfg.projection.enabled else None)
    t0 = time.perf_counter()
    try:
        log = sim.run(scenario)
    except DivergenceDetected as exc:
        return tag, {
            "status": "diverged",
            "t": _json_num(exc.t) if exc.t is not None else None,
            "message": str(exc),
            "wall_time_s": round(time.perf_counter() - t0, 3),
        }
    diag = sim.monitors(log, pdef, cfg.gains)
    csv_name = f"{tag}.csv"
    write_run_csv(out_dir / csv_name, log)
    return tag, {
        "status": "ok",
        "csv": csv_name,
        "rows": int(log.n_rows),
        "jump_count": int(log.jumped.sum()),
        "final_dist_gI": _json_num(log.dist_gI[-1]),
        "final_bias_err": _json_num(log.bias_err[-1]),
        "lam_hat": _json_num(diag.lam_hat),
        "fit_rms": _json_num(diag.fit_rms),
        "flow_descent_fraction": _json_num(diag.frac_flow_ok),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }


def run_scenario(cfg, out_dir=None):
    """Run every configured observer and write CSVs plus summary.json.

    Returns the process exit status: 0 when all observers finish, 1 when
    any run diverges (its summary entry then carries the machine-readable
    error record instead of result fields).
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pdef = build_potential(cfg.scene)
    jump_set = build_jump_set(pdef, cfg.theta_star, U_choice=cfg.u_choice,
                              delta=cfg.delta)

    t0 = time.perf_counter()
    with ThreadPoolExecutor(_worker_count(len(cfg.observers))) as pool:
        results = dict(pool.map(
            lambda tag: _run_one(tag, cfg, pdef, jump_set, out_dir),
            cfg.observers))
    summary = {
        "observers": list(cfg.observers),
        "noise_sigma": cfg.noise_sigma,
        "seed": cfg.seed,
        "duration": cfg.duration,
        "step": cfg.step,
        "delta": _json_num(jump_set.delta),
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "runs": {tag: results[tag] for tag in cfg.observers},
    }
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")

    failed = 0
    for tag in cfg.observers:
        entry = results[tag]
        if entry["status"] == "ok":
            print(f"{tag}: {entry['rows']} rows, {entry['jump_count']} "
                  f"jumps, final |g~|_I = {entry['final_dist_gI']:.3e} "
                  f"({entry['wall_time_s']:.2f} s)")
        else:
            failed += 1
            print(f"{tag}: DIVERGED at t = {entry['t']}: "
                  f"{entry['message']}")
    print(f"summary written to {out_dir / 'summary.json'}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# check-invariants
# ---------------------------------------------------------------------------

def _random_scene(rng):
    while True:
        n1 = int(rng.integers(1, 3))
        n2 = int(rng.integers(max(0, 3 - n1), 4))
        landmarks = rng.uniform(-3.0, 3.0, size=(n1, 3))
        vectors = rng.standard_normal((n2, 3))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        weights = rng.uniform(0.3, 2.0, size=n1 + n2)
        try:
            return Scene(landmarks=landmarks, vectors=vectors,
                         weights=weights)
        except SE3ObsError:
            continue


def _random_pose(rng, p_scale=2.0):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return se3.pose(se3.angle_axis(rng.uniform(0.0, np.pi), axis),
                    p_scale * rng.standard_normal(3))


def _audit_pose_algebra(trials, rng):
    worst = 0.0
    for _ in range(trials):
        a = _random_pose(rng)
        b = _random_pose(rng)
        worst = max(worst, np.abs(
            se3.compose(se3.inverse(a), a) - np.eye(4)).max())
        worst = max(worst, np.abs(
            se3.adjoint(se3.compose(a, b))
            - se3.adjoint(a) @ se3.adjoint(b)).max())
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        comm = (se3.wedge6(x) @ se3.wedge6(y)
                - se3.wedge6(y) @ se3.wedge6(x))
        worst = max(worst, np.abs(
            se3.wedge6(se3.bracket(x, y)) - comm).max())
    return worst, 1e-11


def _audit_gradient_closed_form(trials, rng):
    worst = 0.0
    for _ in range(trials):
        scene = _random_scene(rng)
        pdef = build_potential(scene)
        g = _random_pose(rng)
        g_hat = _random_pose(rng)
        b_meas = measure_outputs(g, scene)
        g_tilde = se3.compose(g, se3.inverse(g_hat))
        worst = max(worst, np.abs(grad_psi_measured(pdef, g_hat, b_meas)
                                  - grad_psi_true(pdef, g_tilde)).max())
    return worst, 1e-10


def _audit_critical_points(trials, rng):
    worst = 0.0
    for _ in range(max(1, trials // 10)):
        pdef = build_potential(_random_scene(rng))
        for g in critical_set(pdef):
            worst = max(worst, np.abs(grad_psi_true(pdef, g)).max())
    return worst, 1e-9


def _audit_quadratic_sandwich(trials, rng):
    worst = 0.0
    for _ in range(max(1, trials // 50)):
        pdef = build_potential(_random_scene(rng))
        ab = alpha_bounds(pdef, n_samples=50, rng=rng)
        for _ in range(50):
            g = _random_pose(rng)
            u = potential_value_true(pdef, g)
            sq = se3.dist_identity(g) ** 2
            worst = max(worst, ab.alpha1 * sq - u, u - ab.alpha2 * sq)
    return worst, 1e-9


def _audit_measured_gap(trials, rng):
    worst = 0.0
    for _ in range(trials):
        pdef = build_potential(_random_scene(rng))
        jump_set = build_jump_set(pdef, theta_star=2.0 * np.pi / 3.0)
        g = _random_pose(rng)
        g_hat = _random_pose(rng)
        b_meas = pdef.r_ref @ se3.inverse(g).T
        g_tilde = se3.compose(g, se3.inverse(g_hat))
        u_meas = potential_value_measured(pdef, g_hat, b_meas)
        worst = max(worst, abs(u_meas - potential_value_true(pdef, g_tilde)))
        costs = [potential_value_measured(
            pdef, se3.compose(se3.inverse(q), g_hat), b_meas)
            for q in jump_set.Q_list]
        gap_meas = u_meas - min(costs)
        worst = max(worst,
                    abs(gap_meas - true_gap(pdef, jump_set, g_tilde)))
    return worst, 1e-9


def _audit_projection_pairing(trials, rng):
    params = ProjectionParams(Delta=1.0, epsilon=0.1, enabled=True)
    worst = 0.0
    for _ in range(trials):
        direction = rng.standard_normal(6)
        direction /= np.linalg.norm(direction)
        b_hat = rng.uniform(0.0, 1.6) * direction
        sigma = 3.0 * rng.standard_normal(6)
        gamma_diag = np.concatenate([np.full(3, rng.uniform(0.2, 3.0)),
                                     np.full(3, rng.uniform(0.2, 3.0))])
        b_true = rng.uniform(0.0, 1.0) * params.Delta * direction[::-1]
        out = proj_delta(b_hat, gamma_diag * sigma, np.diag(gamma_diag),
                         params)
        if np.linalg.norm(b_hat) <= params.Delta:
            worst = max(worst, float(np.abs(out - gamma_diag * sigma).max()))
        b_err = b_hat - b_true
        lhs = float(b_err @ (out / gamma_diag))
        rhs = float(b_err @ sigma)
        worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))
    return worst, 1e-12


AUDITS = (
    ("pose algebra identities", _audit_pose_algebra),
    ("gradient sum equals closed form", _audit_gradient_closed_form),
    ("critical points kill the gradient", _audit_critical_points),
    ("quadratic sandwich bounds", _audit_quadratic_sandwich),
    ("measured gap equals true gap", _audit_measured_gap),
    ("projection pairing and pass-through", _audit_projection_pairing),
)


def check_invariants(trials=200, seed=0):
    """Run the randomized audits; print a table; return the exit status."""
    rng = np.random.default_rng(seed)
    width = max(len(name) for name, _ in AUDITS)
    failed = 0
    print(f"{'audit':<{width}}  {'trials':>6}  {'worst':>10}  "
          f"{'tol':>8}  status")
    for name, fn in AUDITS:
        worst, tol = fn(trials, rng)
        ok = worst < tol
        failed += 0 if ok else 1
        print(f"{name:<{width}}  {trials:>6}  {worst:>10.3e}  "
              f"{tol:>8.0e}  {'PASS' if ok else 'FAIL'}")
    print("all checks passed" if not failed
          else f"{failed} check(s) failed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="se3obs",
        description="Hybrid SE(3) pose/bias observer simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser(
        "simulate", help="run the observers of a scenario file")
    p_sim.add_argument("--config", required=True,
                       help="path to a scenario file")
    p_sim.add_argument("--out", default=None,
                       help="output directory (default: from the scenario)")
    p_sim.add_argument("--observers", default=None,
                       help="comma-separated subset, e.g. H,S")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the scenario's noise seed")

    p_chk = sub.add_parser(
        "check-invariants", help="run the randomized self-audits")
    p_chk.add_argument("--trials", type=int, default=200)
    p_chk.add_argument("--seed", type=int, default=0)
    return parser


def _apply_overrides(cfg, args):
    updates = {}
    if args.observers is not None:
        tags = tuple(t.strip() for t in args.observers.split(",") if t.strip())
        if not tags:
            raise ValidationError("--observers lists no observer")
        for tag in tags:
            if tag not in VARIANT_TAGS:
                raise ValidationError(
                    f"unknown observer {tag!r} (expected subset of "
                    f"{','.join(VARIANT_TAGS)})")
        updates["observers"] = tags
    if args.seed is not None:
        updates["seed"] = args.seed
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _apply_overrides(load_config(args.config), args)
            return run_scenario(cfg, out_dir=args.out)
        return check_invariants(trials=args.trials, seed=args.seed)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SE3ObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
