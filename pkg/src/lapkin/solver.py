"""RCM-constrained inverse mapping: tool-tip pose -> handle-1 pose.

The handle-1 pose is found by minimizing the 8-vector from `ik_residual`
(weighted tip position error, tip orientation log error, two hinge penalties
on the passive angles) with a trust-region Gauss-Newton (dogleg) iteration on
the 6-parameter local chart of SE(3). The Jacobian is numerical.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
from scipy import optimize

from .errors import DegenerateGeometry, LapkinError
from .se3 import Pose, _log_unchecked, retract, rotation_angle
from .tool import THETA_MAX_DEG, ToolGeometry, forward

log = logging.getLogger(__name__)

# central-difference steps: translation (m), rotation (rad)
FD_STEPS = np.array([1e-7, 1e-7, 1e-7, 1e-6, 1e-6, 1e-6])
AZIMUTH_PERTURBATIONS_DEG = (30.0, -30.0, 60.0, -60.0)
PSI_BANDS = 4
# trust radius cap, in Jacobian-scaled step units
MAX_TRUST_RADIUS = 1e3


class IkStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class IkWeights:
    w_t: float = 100.0
    w_a: float = 10.0
    theta_max: float = math.radians(THETA_MAX_DEG)

    def __post_init__(self):
        if not (self.w_t > 0 and self.w_a >= 0 and 0 < self.theta_max <= math.pi / 2):
            raise ValueError(f"invalid IK weights {self}")


@dataclass(frozen=True)
class IkOptions:
    max_iterations: int = 100
    residual_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    initial_trust_radius: float = 0.1
    # relative cost decrease below which an accepted step counts as stalled
    cost_tolerance: float = 1e-14
    # residual norm above which the warm-start result triggers the seed fallback
    fallback_residual: float = 1e-6
    # distinct basins of the analytic seed search tried before azimuth perturbations
    max_seed_candidates: int = 10
    warm_start: Optional[Pose] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("residual_tolerance", "step_tolerance", "initial_trust_radius", "cost_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IkResult:
    handle1_pose: Optional[Pose]
    ee_pose: Optional[Pose]
    status: IkStatus
    final_residual_norm: float
    position_error: float
    orientation_error: float
    limit_violation: float
    iterations: int
    cost_history: list = field(default_factory=list, repr=False)
    seed: str = ""

    @property
    def ok(self) -> bool:
        return self.status is not IkStatus.DEGENERATE


def ik_residual(P_h1: Pose, target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights) -> np.ndarray:
    """8-vector: w_t*(tip position error), log(R_tt^T R_target), two hinge penalties."""
    st = forward(P_h1, x_rcm, geom)
    r = np.empty(8)
    r[:3] = weights.w_t * (st.x_tt - target.translation)
    r[3:6] = _log_unchecked(st.R_tt.T @ target.rotation)
    r[6] = weights.w_a * max(0.0, abs(st.theta1) - weights.theta_max)
    r[7] = weights.w_a * max(0.0, abs(st.theta2) - weights.theta_max)
    return r


def numeric_jacobian(fun: Callable[[Pose], np.ndarray], P: Pose, scheme: str = "central",
                     steps: np.ndarray = FD_STEPS, f0: Optional[np.ndarray] = None) -> np.ndarray:
    """Finite-difference Jacobian of `fun` with respect to the retract chart at P.

    If a central stencil point fails the forward pass, that column falls back
    to a one-sided difference.
    """
    if f0 is None and scheme != "central":
        f0 = fun(P)
    cols = []
    for i, h in enumerate(steps):
        e = np.zeros(6)
        e[i] = h
        if scheme == "central":
            try:
                cols.append((fun(retract(P, e)) - fun(retract(P, -e))) / (2 * h))
                continue
            except LapkinError:
                if f0 is None:
                    f0 = fun(P)
        try:
            cols.append((fun(retract(P, e)) - f0) / h)
        except LapkinError:
            cols.append((f0 - fun(retract(P, -e))) / h)
    return np.column_stack(cols)


def ee_from_handle(P_h1: Pose, t_offset) -> Pose:
    return P_h1 @ Pose.from_translation(t_offset)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perp_basis(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.eye(3)[int(np.argmin(np.abs(s)))]
    p = _unit(np.cross(s, a))
    return p, np.cross(s, p)


def _elementary_batch(axis: str, ang: np.ndarray) -> np.ndarray:
    c, s = np.cos(ang), np.sin(ang)
    out = np.zeros(ang.shape + (3, 3))
    if axis == "y":
        out[..., 0, 0] = c
        out[..., 0, 2] = s
        out[..., 1, 1] = 1.0
        out[..., 2, 0] = -s
        out[..., 2, 2] = c
    else:
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = c
        out[..., 1, 2] = -s
        out[..., 2, 1] = s
        out[..., 2, 2] = c
    return out


class _ReducedPosture:
    """Handle postures whose forward tip position is exact, by (tilt, azimuth).

    With handle 2 fixed, tilting the handle z axis by `tau` from the shaft at
    azimuth `omega` fixes the handle-1 offset direction through the chain; the
    remaining roll enters the tip orientation as a plain rotation about the
    local z axis, so it is solved in closed form.
    """

    def __init__(self, target: Pose, x_rcm, x_h2, geom: ToolGeometry, weights: IkWeights):
        self.target, self.x_rcm, self.x_h2 = target, x_rcm, x_h2
        self.geom, self.weights = geom, weights
        shaft = x_rcm - x_h2
        self.D = float(np.linalg.norm(shaft))
        self.s = shaft / self.D if self.D > 0 else shaft
        self.p, self.q = _perp_basis(self.s) if self.D > 0 else (None, None)

    def evaluate(self, tau: np.ndarray, om: np.ndarray) -> dict:
        geom, s = self.geom, self.s
        ct, st = np.cos(tau)[..., None], np.sin(tau)[..., None]
        m = np.cos(om)[..., None] * self.p + np.sin(om)[..., None] * self.q
        n1 = ct * s + st * m
        e = st * s - ct * m
        y0 = np.cross(m, s) * np.ones_like(n1)
        R0 = np.stack([e, y0, n1], axis=-1)                               # columns
        x_h1 = self.x_h2 + geom.l12 * e
        d2 = np.sum((self.x_rcm - x_h1) ** 2, axis=-1)
        arg = (geom.l12**2 + geom.l0**2 - d2) / (2 * geom.l12 * geom.l0)
        feasible = np.abs(arg) <= 1.0 - 1e-9
        theta1 = np.arccos(np.clip(arg, -1.0, 1.0)) - geom.theta1_neutral
        if geom.sign_convention.value == "world_z":
            s1 = np.where(x_h1[..., 2] - self.x_rcm[2] < 0, -1.0, 1.0)
        else:
            s1 = np.where(np.sum((x_h1 - self.x_rcm) * n1, axis=-1) < 0, -1.0, 1.0)
        A = _elementary_batch(geom.axis_convention.value[0], (geom.k - 1.0) * s1 * theta1)
        Q = np.einsum("...ji,jk->...ik", R0, self.target.rotation)
        M = np.einsum("...ji,...jk->...ik", A, Q)
        psi = np.arctan2(M[..., 1, 0], M[..., 0, 0]) / geom.k
        th = self.weights.theta_max
        limit = np.maximum(0, np.abs(theta1) - th) + np.maximum(0, np.abs(psi) - th)
        # squared tilt error: smooth at the optimum and, via atan2, exact near zero
        tilt = np.arctan2(np.hypot(M[..., 0, 2], M[..., 1, 2]), M[..., 2, 2])
        score = np.where(feasible, tilt * tilt + self.weights.w_a * limit, np.inf)
        return {"score": score, "psi": psi, "R0": R0, "x_h1": x_h1}

    def pose(self, tau: float, om: float) -> Pose:
        ev = self.evaluate(np.asarray(tau, dtype=float), np.asarray(om, dtype=float))
        c, sn = math.cos(float(ev["psi"])), math.sin(float(ev["psi"]))
        Rz = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose(ev["R0"] @ Rz, ev["x_h1"])

    def polish(self, tau: float, om: float, step: tuple[float, float]) -> tuple[float, float]:
        def f(x):
            return float(self.evaluate(np.asarray(x[0]), np.asarray(x[1]))["score"])

        simplex = np.array([[tau, om], [tau + step[0], om], [tau, om + step[1]]])
        res = optimize.minimize(f, (tau, om), method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-12, "fatol": 1e-30,
                                         "maxiter": 400})
        return (float(res.x[0]), float(res.x[1])) if res.fun <= f((tau, om)) else (tau, om)


def _seed_grid(target: Pose, x_rcm, x_h2, geom: ToolGeometry, weights: IkWeights,
               n_tilt: int = 24, n_azimuth: int = 48, max_candidates: int = 10) -> Iterator[Pose]:
    """Ranked handle postures from a (tilt, azimuth) grid over `_ReducedPosture`.

    Candidates are the grid's local minima plus the best cell per band of the
    roll angle (narrow valleys can hide a basin between grid minima); each is
    polished with a 2-D simplex search, lazily, as the caller asks for it.
    """
    red = _ReducedPosture(target, x_rcm, x_h2, geom, weights)
    if red.D * 1.001 <= geom.l12:
        return
    tilt_lo = math.asin(min(1.0, geom.l12 * 1.001 / red.D)) + 1e-3
    tilt_hi = math.radians(85.0)
    if tilt_lo >= tilt_hi:
        return
    taus = np.linspace(tilt_lo, tilt_hi, n_tilt)
    oms = np.linspace(0.0, 2 * math.pi, n_azimuth, endpoint=False)
    ev = red.evaluate(taus[:, None], oms[None, :])
    score, psi = ev["score"], ev["psi"]
    if not np.isfinite(score).any():
        return
    # local minima over the grid; azimuth wraps around
    padded = np.pad(score, ((1, 1), (0, 0)), constant_values=np.inf)
    is_min = np.isfinite(score)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                nb = np.roll(padded, -dj, axis=1)[1 + di:1 + di + score.shape[0]]
                is_min &= score <= nb
    order = sorted(zip(*np.nonzero(is_min)), key=lambda ij: score[ij])
    edges = np.linspace(-weights.theta_max, weights.theta_max, PSI_BANDS + 1)
    band = np.clip(np.searchsorted(edges, psi) - 1, 0, PSI_BANDS - 1)
    for b in range(PSI_BANDS):
        masked = np.where(band == b, score, np.inf)
        ij = np.unravel_index(int(np.argmin(masked)), score.shape)
        if np.isfinite(masked[ij]) and ij not in order:
            order.append(ij)

    step = (0.5 * (taus[1] - taus[0]) if n_tilt > 1 else 1e-2, 0.5 * (oms[1] - oms[0]))
    seen = []
    for i, j in order:
        tau, om = red.polish(float(taus[i]), float(oms[j]), step)
        key = np.array([tau, math.cos(om), math.sin(om)])
        if any(np.linalg.norm(key - k) < 1e-4 for k in seen):
            continue
        cand = red.pose(tau, om)
        try:
            forward(cand, x_rcm, geom)
        except LapkinError:
            continue
        seen.append(key)
        yield cand
        if len(seen) == max_candidates:
            return


def iter_seed_candidates(target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights = IkWeights(),
                         max_candidates: int = 10) -> Iterator[Pose]:
    """Ranked cold-start handle poses, one per basin of the reduced search.

    Raises DegenerateGeometry (on first use) if the target tip sits on the RCM.
    """
    x_rcm = np.asarray(x_rcm, dtype=float)
    x_tt = target.translation
    reach = x_tt - x_rcm
    if np.linalg.norm(reach) < 1e-10:
        raise DegenerateGeometry("target tip coincides with the RCM")
    l0, l1 = geom.l0, geom.l1
    lines = []
    if abs(l1 - l0) > 1e-12:
        lines.append((l0 * x_tt - l1 * x_rcm) / (l0 - l1))
    direction = _unit(reach) * (1.0 if l1 >= l0 else -1.0)
    lines.append(x_rcm - l0 * direction)
    for x_h2 in lines:
        produced = False
        for seed in _seed_grid(target, x_rcm, x_h2, geom, weights, max_candidates=max_candidates):
            produced = True
            yield seed
        if produced:
            return


def seed_candidates(target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights = IkWeights(),
                    max_candidates: int = 10) -> list[Pose]:
    seeds = list(iter_seed_candidates(target, x_rcm, geom, weights, max_candidates))
    if not seeds:
        raise DegenerateGeometry("no reachable handle posture for this target")
    return seeds


def seed_handle_pose(target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights = IkWeights()) -> Pose:
    """Analytic cold start for `solve_ik`.

    Handle 2 is placed on the line through the RCM and the target tip so that
    the forward tip position matches the target; when no handle posture on
    that line is reachable, handle 2 goes to the nominal distance l0 from the
    RCM instead. Tilt, azimuth and roll are then chosen to match the target
    orientation as closely as the chain allows.
    """
    for seed in iter_seed_candidates(target, x_rcm, geom, weights, max_candidates=1):
        return seed
    raise DegenerateGeometry("no reachable handle posture for this target")


def _rotate_about_line(P: Pose, point: np.ndarray, axis: np.ndarray, angle: float) -> Pose:
    from .se3 import rot_exp

    R = rot_exp(_unit(axis) * angle)
    return Pose(R @ P.rotation, R @ (P.translation - point) + point)


def _diagnostics(P: Pose, target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights):
    st = forward(P, x_rcm, geom)
    pos = float(np.linalg.norm(st.x_tt - target.translation))
    ori = rotation_angle(st.R_tt, target.rotation)
    lim = max(0.0, abs(st.theta1) - weights.theta_max, abs(st.theta2) - weights.theta_max)
    return pos, ori, lim


def _dogleg(J: np.ndarray, r: np.ndarray, radius: float) -> np.ndarray:
    p_gn = np.linalg.lstsq(J, -r, rcond=None)[0]
    if np.linalg.norm(p_gn) <= radius:
        return p_gn
    g = J.T @ r
    Jg = J @ g
    gg = float(g @ g)
    if gg == 0.0:
        return p_gn * (radius / np.linalg.norm(p_gn))
    p_sd = -(gg / float(Jg @ Jg)) * g
    nsd = np.linalg.norm(p_sd)
    if nsd >= radius:
        return p_sd * (radius / nsd)
    # point on p_sd + t (p_gn - p_sd) at distance radius
    d = p_gn - p_sd
    a, b, c = d @ d, 2 * (p_sd @ d), p_sd @ p_sd - radius**2
    t = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    return p_sd + t * d


def trust_region_solve(start: Pose, target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights,
                       options: IkOptions, t_offset=np.zeros(3), seed_name: str = "") -> IkResult:
    """Single trust-region Gauss-Newton run from `start` (no fallback seeds)."""

    def fun(P: Pose) -> np.ndarray:
        return ik_residual(P, target, x_rcm, geom, weights)

    try:
        r = fun(start)
    except LapkinError as exc:
        log.debug("start pose infeasible: %s", exc)
        return IkResult(None, None, IkStatus.DEGENERATE, math.inf, math.inf, math.inf, math.inf, 0, seed=seed_name)

    P = start
    cost = 0.5 * float(r @ r)
    history = [cost]
    # the radius bounds the step in variables scaled by the Jacobian column
    # norms: translation columns are orders of magnitude stiffer than rotation ones
    radius = options.initial_trust_radius
    scale = None
    status = IkStatus.MAX_ITERATIONS
    it = 0
    J = None
    while it < options.max_iterations:
        # always take one step: a start already inside the tolerance still gains digits
        if it > 0 and math.sqrt(2 * cost) <= options.residual_tolerance:
            status = IkStatus.CONVERGED
            break
        it += 1
        if J is None:
            J = numeric_jacobian(fun, P)
            norms = np.linalg.norm(J, axis=0)
            scale = norms if scale is None else np.maximum(scale, norms)
            scale = np.where(scale > 0, scale, 1.0)
        step = _dogleg(J / scale, r, radius) / scale
        nstep = float(np.linalg.norm(step))
        nscaled = float(np.linalg.norm(scale * step))
        if nstep < options.step_tolerance:
            status = IkStatus.CONVERGED
            break
        predicted = cost - 0.5 * float(np.sum((r + J @ step) ** 2))
        try:
            P_new = retract(P, step)
            r_new = fun(P_new)
            cost_new = 0.5 * float(r_new @ r_new)
        except LapkinError:
            cost_new = math.inf
        actual = cost - cost_new
        rho = actual / predicted if predicted > 0 else -1.0
        if rho < 0.25:
            radius = 0.25 * nscaled
        elif rho > 0.75 and nscaled > 0.99 * radius:
            radius = min(2.0 * radius, MAX_TRUST_RADIUS)
        if rho > 0.0 and cost_new <= cost:
            stalled = actual <= options.cost_tolerance * cost
            P, r, cost = P_new, r_new, cost_new
            history.append(cost)
            J = None
            if stalled:
                status = IkStatus.CONVERGED
                break
        elif nstep < 4 * options.step_tolerance:
            status = IkStatus.CONVERGED
            break
    else:
        if math.sqrt(2 * cost) <= options.residual_tolerance:
            status = IkStatus.CONVERGED

    pos, ori, lim = _diagnostics(P, target, x_rcm, geom, weights)
    return IkResult(
        handle1_pose=P,
        ee_pose=ee_from_handle(P, t_offset),
        status=status,
        final_residual_norm=math.sqrt(2 * cost),
        position_error=pos,
        orientation_error=ori,
        limit_violation=lim,
        iterations=it,
        cost_history=history,
        seed=seed_name,
    )


def _good(res: IkResult, options: IkOptions) -> bool:
    return res.status is IkStatus.CONVERGED and res.final_residual_norm <= options.fallback_residual


def solve_ik(target: Pose, x_rcm, geom: ToolGeometry, weights: IkWeights = IkWeights(),
             options: IkOptions = IkOptions(), t_offset=(0.0, 0.0, 0.0)) -> IkResult:
    """Handle-1 pose (and robot end-effector pose) realizing a target tip pose.

    Tries the warm start first if one is given, then the analytic seeds (one
    per basin of the reduced search), then four azimuthal rotations of the
    best seed about the shaft. Among equally good results the one closest in orientation to the warm start wins.
    """
    x_rcm = np.asarray(x_rcm, dtype=float)
    t_offset = np.asarray(t_offset, dtype=float)
    results: list[IkResult] = []

    def run(start: Pose, name: str) -> IkResult:
        res = trust_region_solve(start, target, x_rcm, geom, weights, options, t_offset, name)
        results.append(res)
        return res

    if options.warm_start is not None:
        if _good(run(options.warm_start, "warm"), options):
            return results[0]

    first, found = None, False
    try:
        for n, seed in enumerate(iter_seed_candidates(target, x_rcm, geom, weights, options.max_seed_candidates)):
            if first is None:
                first = seed
            if _good(run(seed, "seed" if n == 0 else f"seed#{n}"), options):
                found = True
                break
    except DegenerateGeometry:
        pass
    if not found and first is not None:
        axis = x_rcm - forward(first, x_rcm, geom).x_h2
        for deg in AZIMUTH_PERTURBATIONS_DEG:
            run(_rotate_about_line(first, x_rcm, axis, math.radians(deg)), f"seed{deg:+.0f}")

    feasible = [r for r in results if r.handle1_pose is not None]
    if not feasible:
        return IkResult(None, None, IkStatus.DEGENERATE, math.inf, math.inf, math.inf, math.inf,
                        sum(r.iterations for r in results), seed="none")
    best_norm = min(r.final_residual_norm for r in feasible)
    tied = [r for r in feasible if r.final_residual_norm <= best_norm + options.residual_tolerance]
    if options.warm_start is not None and len(tied) > 1:
        R_prev = options.warm_start.rotation
        tied.sort(key=lambda r: rotation_angle(R_prev, r.handle1_pose.rotation))
    else:
        tied.sort(key=lambda r: r.final_residual_norm)
    return tied[0]
