"""Command-line entry point: ``lapkin <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 I/O error or malformed input.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import IO, Iterator, Optional, Sequence

import numpy as np

from ..chain import chain_fk
from ..errors import DegenerateGeometry, LapkinError, Unreachable
from ..se3 import Pose
from ..solver import IkStatus, solve_ik
from ..teleop import Side, run_stream
from ..tool import RcmConfig, forward
from . import io
from .oracle import oracle_ik, random_handle_state
from .peg import SCENARIO_GEOMETRY, PegBoard, gen_peg_transfer, scenario_rcm
from .scoring import score_trial

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

# round-trip acceptance: tip position (m), tip orientation (rad), pass rate
RT_POS_TOL, RT_ORI_TOL, RT_MIN_RATE = 1e-5, 1e-4, 0.99


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@contextlib.contextmanager
def _open(path: str, mode: str) -> Iterator[IO[str]]:
    if path == "-":
        yield sys.stdin if "r" in mode else sys.stdout
        return
    try:
        f = open(path, mode)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot open {path}: {exc.strerror}") from exc
    with f:
        yield f


def _config(args) -> io.HarnessConfig:
    if not getattr(args, "config", None):
        return io.HarnessConfig()
    try:
        return io.load_config(args.config)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read config {args.config}: {exc.strerror}") from exc
    except io.RecordError as exc:
        raise _Fail(EXIT_IO, f"{args.config}: {exc}") from exc
    except ValueError as exc:
        raise _Fail(EXIT_VALIDATION, f"{args.config}: {exc}") from exc


def _emit(obj: dict, path: str = "-") -> None:
    with _open(path, "w") as f:
        f.write(json.dumps(obj, indent=2) + "\n")


def _pose_arg(args) -> Pose:
    return io.pose_from_json(args.pos, args.quat)


def _pose_json(prefix: str, p: Optional[Pose]) -> dict:
    if p is None:
        return {f"{prefix}_pos": None, f"{prefix}_quat": None}
    pos, quat = io.pose_to_json(p)
    return {f"{prefix}_pos": pos, f"{prefix}_quat": quat}


def cmd_fk(args) -> int:
    cfg = _config(args)
    if args.joints is not None:
        if cfg.chain is None:
            raise _Fail(EXIT_VALIDATION, "--joints needs a config with a chain section")
        q = [math.radians(v) if j.kind.value == "revolute" else v for v, j in zip(args.joints, cfg.chain.joints)]
        q += list(args.joints[len(q):])
        ee = chain_fk(cfg.chain, q).pose
        handle = ee @ Pose.from_translation(-np.asarray(cfg.t_offset))
    else:
        if args.pos is None or args.quat is None:
            raise _Fail(EXIT_VALIDATION, "give --pos and --quat (handle-1 pose) or --joints")
        handle = _pose_arg(args)
    x_rcm = cfg.rcm(args.side).x_rcm
    try:
        st = forward(handle, x_rcm, cfg.geometry)
    except (DegenerateGeometry, Unreachable) as exc:
        _emit({"status": type(exc).__name__, "message": str(exc)})
        return EXIT_VALIDATION
    _emit({
        "status": "ok",
        **_pose_json("tip", Pose(st.R_tt, st.x_tt)),
        **_pose_json("handle1", handle),
        "x_h2_m": st.x_h2.tolist(),
        "theta1_deg": math.degrees(st.theta1), "theta2_deg": math.degrees(st.theta2),
        "theta3_deg": math.degrees(st.theta3), "theta4_deg": math.degrees(st.theta4),
    })
    return EXIT_OK


def _ik_json(res) -> dict:
    return {
        "status": res.status.value,
        **_pose_json("handle1", res.handle1_pose),
        **_pose_json("ee", res.ee_pose),
        "final_residual_norm": res.final_residual_norm,
        "position_error_m": res.position_error,
        "orientation_error_deg": math.degrees(res.orientation_error),
        "limit_violation_deg": math.degrees(res.limit_violation),
        "iterations": res.iterations,
        "seed": res.seed,
    }


def cmd_ik(args) -> int:
    cfg = _config(args)
    if args.pos is None or args.quat is None:
        raise _Fail(EXIT_VALIDATION, "give the target tip pose with --pos and --quat")
    res = solve_ik(_pose_arg(args), cfg.rcm(args.side).x_rcm, cfg.geometry, cfg.weights, cfg.options, cfg.t_offset)
    _emit(_ik_json(res))
    return EXIT_OK if res.status is IkStatus.CONVERGED else EXIT_VALIDATION


def replay_metrics(steps: Sequence, n_samples: int) -> dict:
    rcm = [s.command.rcm_distance for s in steps]
    tip = np.array([s.result.position_error for s in steps])
    failures = n_samples - len(steps) + sum(s.command.ik_status is not IkStatus.CONVERGED for s in steps)
    return {
        "max_rcm_dist_m": max(rcm) if rcm else 0.0,
        "mean_tip_err_m": float(tip.mean()) if tip.size else 0.0,
        "p95_tip_err_m": float(np.percentile(tip, 95)) if tip.size else 0.0,
        "ik_failures": int(failures),
        "samples": int(n_samples),
    }


def cmd_replay(args) -> int:
    cfg = _config(args)
    with _open(args.input, "r") as f:
        samples = list(io.read_jsonl(f, io.sample_from_record))
    active = [s for s in samples if not s.clutch]
    steps = list(run_stream(samples, cfg.teleop()))
    with _open(args.output, "w") as f:
        io.write_jsonl(f, (io.command_to_record(s.command) for s in steps))
    metrics = replay_metrics(steps, len(active))
    if args.metrics:
        _emit(metrics, args.metrics)
    else:
        print(json.dumps(metrics), file=sys.stderr)
    tol = min(cfg.rcm_left.tolerance, cfg.rcm_right.tolerance)
    if metrics["max_rcm_dist_m"] >= tol:
        print(f"max RCM distance {metrics['max_rcm_dist_m']:.3e} m exceeds tolerance {tol:.1e} m", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def roundtrip_report(n: int, seed: int, cfg: io.HarnessConfig, max_deflection_deg: float = 40.0) -> tuple[str, bool]:
    """Deterministic text report of n FK -> IK round trips (no timings)."""
    rng = np.random.default_rng(seed)
    geom = cfg.geometry
    lines = [f"roundtrip n={n} seed={seed} tol_pos_m={RT_POS_TOL:g} tol_ori_rad={RT_ORI_TOL:g}"]
    passed = 0
    for i in range(n):
        h = random_handle_state(rng, geom, cfg.rcm_left.x_rcm, max_deflection_deg=max_deflection_deg)
        res = solve_ik(h.tip, h.x_rcm, geom, cfg.weights, cfg.options, cfg.t_offset)
        ok = res.status is not IkStatus.DEGENERATE and res.position_error < RT_POS_TOL and res.orientation_error < RT_ORI_TOL
        passed += ok
        lines.append(
            f"{i:4d} {'PASS' if ok else 'FAIL'} theta1_deg={math.degrees(h.theta1):+8.3f} "
            f"theta2_deg={math.degrees(h.theta2_signed):+8.3f} pos_err_m={res.position_error:.3e} "
            f"ori_err_rad={res.orientation_error:.3e} status={res.status.value}"
        )
    rate = passed / n if n else 1.0
    ok = rate >= RT_MIN_RATE
    lines.append(f"passed {passed}/{n} rate={rate:.4f} required={RT_MIN_RATE} {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n", ok


def cmd_roundtrip(args) -> int:
    report, ok = roundtrip_report(args.n, args.seed, _config(args))
    with _open(args.output, "w") as f:
        f.write(report)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_gen_peg(args) -> int:
    board = PegBoard(center=args.center)
    left, right = gen_peg_transfer(board, args.lift_height_m, args.samples_per_segment, args.dt)
    merged = sorted(left + right, key=lambda s: (s.t, s.side.value))
    with _open(args.output, "w") as f:
        io.write_jsonl(f, (io.sample_to_record(s) for s in merged))
    if args.config_out:
        base = _config(args)
        cfg = io.HarnessConfig(
            replace(SCENARIO_GEOMETRY, sign_convention=base.geometry.sign_convention,
                    axis_convention=base.geometry.axis_convention),
            RcmConfig(scenario_rcm(board, Side.LEFT, args.lift_height_m), base.rcm_left.tolerance),
            RcmConfig(scenario_rcm(board, Side.RIGHT, args.lift_height_m), base.rcm_right.tolerance),
            base.weights, base.options, base.t_offset, base.scale, base.registration, base.chain,
        )
        _emit(io.config_to_dict(cfg), args.config_out)
    return EXIT_OK


def cmd_score(args) -> int:
    with _open(args.input, "r") as f:
        events = list(io.read_jsonl(f, io.event_from_record))
    print(score_trial(events))
    return EXIT_OK


def tip_error(pos_err: float, ori_err: float, w_t: float) -> float:
    """Pose part of the IK residual norm: position weighted by w_t, orientation in rad."""
    return math.hypot(w_t * pos_err, ori_err)


def _oracle_trial(job) -> dict:
    i, seed, cfg, grid = job
    rng = np.random.default_rng([seed, i])
    h = random_handle_state(rng, cfg.geometry, cfg.rcm_left.x_rcm)
    res = solve_ik(h.tip, h.x_rcm, cfg.geometry, cfg.weights, cfg.options)
    orc = oracle_ik(h.tip, h.x_rcm, cfg.geometry, grid, cfg.weights)
    w = cfg.weights.w_t
    e_s = tip_error(res.position_error, res.orientation_error, w)
    e_o = tip_error(orc.tip_position_error, orc.tip_orientation_error, w) if orc.feasible else math.inf
    # both errors can sit at round-off; below the solver tolerance they tie
    return {"trial": i, "solver_err": e_s, "oracle_err": e_o,
            "solver_wins": e_s <= max(e_o, cfg.options.residual_tolerance)}


def oracle_compare(n: int, seed: int, cfg: io.HarnessConfig, grid: int = 15, workers: int = 1) -> list[dict]:
    jobs = [(i, seed, cfg, grid) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_oracle_trial, jobs))
    return [_oracle_trial(j) for j in jobs]


def cmd_oracle_compare(args) -> int:
    rows = oracle_compare(args.n, args.seed, _config(args), args.grid, args.workers)
    wins = sum(r["solver_wins"] for r in rows)
    need = math.ceil(args.min_fraction * args.n)
    with _open(args.output, "w") as f:
        for r in rows:
            f.write(f"{r['trial']:3d} solver={r['solver_err']:.3e} oracle={r['oracle_err']:.3e} "
                    f"{'solver<=oracle' if r['solver_wins'] else 'ORACLE BETTER'}\n")
        f.write(f"solver at least as good in {wins}/{args.n} (need {need}) {'PASS' if wins >= need else 'FAIL'}\n")
    return EXIT_OK if wins >= need else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lapkin", description="RCM-constrained wristed-instrument kinematics harness")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config (defaults apply when omitted)")
        return p

    def with_pose(p, what):
        p.add_argument("--pos", type=float, nargs=3, metavar=("X", "Y", "Z"), help=f"{what} position (m)")
        p.add_argument("--quat", type=float, nargs=4, metavar=("W", "X", "Y", "Z"), help=f"{what} orientation")
        p.add_argument("--side", type=Side, default=Side.LEFT, choices=list(Side),
                       metavar="{L,R}", help="which RCM to use")
        return p

    p = with_pose(with_config(sub.add_parser("fk", help="handle-1 pose (or joint vector) -> tip pose")), "handle-1")
    p.add_argument("--joints", type=float, nargs="+", help="joint values for the config chain (deg / m)")
    p.set_defaults(func=cmd_fk)

    p = with_pose(with_config(sub.add_parser("ik", help="target tip pose -> handle-1 and end-effector pose")), "tip")
    p.set_defaults(func=cmd_ik)

    p = with_config(sub.add_parser("replay", help="console samples JSONL -> robot commands JSONL"))
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.add_argument("--metrics", help="write metrics JSON here (default: standard error)")
    p.set_defaults(func=cmd_replay)

    p = with_config(sub.add_parser("roundtrip", help="random FK -> IK round trips"))
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_roundtrip)

    p = with_config(sub.add_parser("gen-peg", help="synthetic bimanual peg-transfer trajectories"))
    p.add_argument("--output", default="-")
    p.add_argument("--samples-per-segment", type=int, default=20)
    p.add_argument("--lift-height-m", type=float, default=0.030)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--center", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("X", "Y", "Z"))
    p.add_argument("--config-out", help="also write a replay config for this board (scenario geometry and keyholes)")
    p.set_defaults(func=cmd_gen_peg)

    p = sub.add_parser("score", help="weighted error score of an events JSONL file")
    p.add_argument("--input", default="-")
    p.set_defaults(func=cmd_score)

    p = with_config(sub.add_parser("oracle-compare", help="solver vs brute-force oracle on random targets"))
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=15, help="oracle grid steps per dimension")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--min-fraction", type=float, default=0.95)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_oracle_compare)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LapkinError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
