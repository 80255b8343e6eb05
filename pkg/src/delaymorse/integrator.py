"""Method-of-steps RK4 integration with dense cubic Hermite output.

The solver advances x'(t) = f(x(t), x(t - r(x_t))) with a fixed step no
larger than a twentieth of the smallest possible lag, so every delayed
stage argument falls in already-committed history.  Stage lags for
state-dependent delay laws are solved at the stage's predictor state.

History handling: during integration, delayed arguments at or before 0
evaluate the initial function phi directly.  The exported trajectory
samples phi onto the mesh and geometrically refines the last history cell
(-h, 0), because x'(0+) = f(...) generally differs from phi'(0-); the
refinement confines that derivative jump to a sub-cell of width ~1e-9*h,
keeping the exported interpolant faithful to phi on [-K, 0] and to the
equation on [0, horizon] at the same time.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .delay import (
    IMPLICIT_BUDGET,
    IMPLICIT_TOL,
    THRESHOLD_TOL,
    NoRoot,
    NonConvergence,
)
from .feedback import FeedbackModel
from .phase import PhaseSpace, SegmentView, Trajectory

__all__ = ["BoundViolation", "IntegratorConfig", "integrate", "residual_check"]

STEP_FRACTION = 20  # step <= tau_floor / STEP_FRACTION
JUNCTION_LEVELS = 30  # geometric refinement depth of the cell (-h, 0)

_GL8N, _GL8W = leggauss(8)
_GL8N01 = [float(x) for x in 0.5 * (_GL8N + 1.0)]
_GL8W01 = [float(x) for x in 0.5 * _GL8W]
_GL4N, _GL4W = leggauss(4)
_GL4N01 = [float(x) for x in 0.5 * (_GL4N + 1.0)]
_GL4W01 = [float(x) for x in 0.5 * _GL4W]


class BoundViolation(RuntimeError):
    """The trajectory (or the initial history) left the ball |x| < M."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step setup: step size, horizon, residual sampling density."""

    step: float
    horizon: float
    residual_grid: int = 2000

    def __post_init__(self) -> None:
        if self.step <= 0 or self.horizon <= 0:
            raise ValueError("step and horizon must be positive")
        if self.residual_grid < 2:
            raise ValueError("residual_grid must be at least 2")


class _Phi:
    """Uniform access to an initial history given as callable or segment."""

    def __init__(self, phi, K: float) -> None:
        self.K = K
        if isinstance(phi, SegmentView):
            self.val = lambda s: float(phi(s))
            self.slope = lambda s, d: float(phi.deriv(s))
            self.exact_slopes = True
        else:
            self.val = lambda s: float(phi(s))
            self.exact_slopes = False

            def slope(s: float, d: float) -> float:
                lo, hi = s - d, s + d
                if lo < -K:
                    lo = s
                if hi > 0.0:
                    hi = s
                if hi <= lo:
                    return 0.0
                return (self.val(hi) - self.val(lo)) / (hi - lo)

            self.slope = slope


def _check_multiple(span: float, step: float, what: str) -> int:
    n = int(round(span / step))
    if n < 1 or abs(n * step - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"{what} = {span!r} must be a whole number of steps")
    return n


def integrate(
    model: FeedbackModel,
    delay_model,
    phi,
    cfg: IntegratorConfig,
    space: PhaseSpace,
) -> Trajectory:
    """Advance the equation from the history phi over [0, horizon].

    phi is a callable on [-K, 0] or a SegmentView (restart).  The returned
    trajectory spans [-K, horizon] and carries per-node lag and delayed
    argument columns under extras["r"] and extras["eta"] (NaN on t < 0).
    Raises BoundViolation as soon as any value reaches |x| >= M.
    """
    h = cfg.step
    K, M, L0 = space.K, space.M, space.L0
    tau0 = delay_model.tau_floor(M)
    if tau0 <= 0:
        raise ValueError(f"delay floor {tau0!r} must be positive")
    if h > tau0 / STEP_FRACTION + 1e-15:
        raise ValueError(
            f"step {h!r} exceeds tau_floor/{STEP_FRACTION} = {tau0 / STEP_FRACTION!r}"
        )
    n_hist = _check_multiple(K, h, "history span K")
    n_steps = _check_multiple(cfg.horizon, h, "horizon")

    f = model.f
    phi_w = _Phi(phi, K)
    phi_val = phi_w.val

    # --- sample and admit the initial history -----------------------------
    hist_times = [(j - n_hist) * h for j in range(n_hist + 1)]  # -K .. 0
    hist_vals = [phi_val(t) for t in hist_times]
    sup_phi = max(abs(v) for v in hist_vals)
    if sup_phi >= M:
        raise BoundViolation(f"initial history reaches |phi| = {sup_phi!r} >= M = {M!r}")
    for j in range(n_hist):
        if abs(hist_vals[j + 1] - hist_vals[j]) > h * L0 * (1.0 + 1e-6) + 1e-12:
            raise ValueError("initial history violates the Lipschitz bound L0")

    inv_h = 1.0 / h
    vals = [hist_vals[-1]]  # x at nodes 0, h, 2h, ...
    ders = [0.0]  # filled once the first lag is known
    rs = [0.0]
    count = 1  # committed solution nodes

    def eval_hist(tq: float) -> float:
        # delayed arguments: exact phi for t <= 0, Hermite cell beyond
        if tq <= 0.0:
            return phi_val(tq)
        j = int(tq * inv_h)
        if j >= count - 1:
            j = count - 2
        t0 = j * h
        s = (tq - t0) * inv_h
        if s == 0.0:
            return vals[j]
        s2 = s * s
        s3 = s2 * s
        return (
            vals[j] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + ders[j] * h * (s3 - 2.0 * s2 + s)
            + vals[j + 1] * (-2.0 * s3 + 3.0 * s2)
            + ders[j + 1] * (s3 - s2) * h
        )

    # --- lag evaluators ----------------------------------------------------
    kind = delay_model.kind
    if kind == "constant":
        r0 = delay_model.r0
        if r0 > K + 1e-12:
            raise NoRoot(f"constant lag {r0!r} exceeds the window K = {K!r}")

        def stage_r(T: float, x_tip: float) -> float:
            return r0

        node_r = stage_r

    elif kind == "threshold":
        kernel = delay_model.kernel
        # prefix[j] = integral of kernel(x) from -K to node j of the
        # combined mesh: history nodes first, then solution nodes.
        prefix = [0.0]
        prefix_times = [hist_times[0]]

        def _cell(a: float, b: float, value_at) -> float:
            acc = 0.0
            w = b - a
            for gi in range(8):
                acc += _GL8W01[gi] * kernel(value_at(a + w * _GL8N01[gi]))
            return acc * w

        for j in range(n_hist):
            prefix.append(prefix[-1] + _cell(hist_times[j], hist_times[j + 1], phi_val))
            prefix_times.append(hist_times[j + 1])

        def _sliver(t_last: float, x_last: float, T: float, x_tip: float) -> float:
            # short extension past the last committed node, linear in x
            w = T - t_last
            if w <= 0.0:
                return 0.0
            acc = 0.0
            for gi in range(4):
                u = _GL4N01[gi]
                acc += _GL4W01[gi] * kernel(x_last + (x_tip - x_last) * u)
            return acc * w

        def _solve_back(T: float, p_T: float) -> float:
            """u with prefix(u) = p_T - 1, i.e. the delayed argument."""
            target = p_T - 1.0
            if target < prefix[0] - THRESHOLD_TOL:
                raise NoRoot(f"threshold integral below 1 at t={T!r}")
            j = bisect.bisect_right(prefix, target) - 1
            j = min(max(j, 0), len(prefix_times) - 2)
            lo, hi = prefix_times[j], prefix_times[j + 1]
            base = prefix[j]
            u = lo + (hi - lo) * 0.5
            blo, bhi = lo, hi
            for _ in range(60):
                w = u - lo
                acc = 0.0
                for gi in range(8):
                    acc += _GL8W01[gi] * kernel(eval_hist(lo + w * _GL8N01[gi]))
                g = base + acc * w - target
                if abs(g) <= THRESHOLD_TOL:
                    break
                if g < 0.0:
                    blo = u
                else:
                    bhi = u
                slope = kernel(eval_hist(u))
                u_new = u - g / slope if slope > 0.0 else 0.5 * (blo + bhi)
                if not (blo < u_new < bhi):
                    u_new = 0.5 * (blo + bhi)
                if bhi - blo <= 1e-16 * max(1.0, abs(T)):
                    u = u_new
                    break
                u = u_new
            return u

        def stage_r(T: float, x_tip: float) -> float:
            t_last = prefix_times[-1]
            p_T = prefix[-1] + _sliver(t_last, vals[count - 1], T, x_tip)
            return T - _solve_back(T, p_T)

        node_r = stage_r

    elif kind == "implicit":
        Rmap = delay_model.R
        warm_box = [0.5 * K]

        def stage_r(T: float, x_tip: float) -> float:
            s = warm_box[0]
            for _ in range(IMPLICIT_BUDGET):
                arg = T - min(max(s, 0.0), K)
                s_new = Rmap(x_tip, eval_hist(arg))
                if abs(s_new - s) < IMPLICIT_TOL:
                    if not 0.0 < s_new <= K + 1e-12:
                        raise NoRoot(f"implicit lag {s_new!r} outside (0, K] at t={T!r}")
                    warm_box[0] = s_new
                    return s_new
                s = s_new
            raise NonConvergence(f"implicit lag did not settle at t={T!r}")

        node_r = stage_r

    else:
        raise TypeError(f"unknown delay model {delay_model!r}")

    # --- main loop ----------------------------------------------------------
    r_first = node_r(0.0, vals[0])
    rs[0] = r_first
    ders[0] = f(vals[0], eval_hist(-r_first))

    half = 0.5 * h
    sixth = h / 6.0
    if kind == "constant":
        # fast path: the delayed time is known per stage, so the two
        # half-step stages share a single history lookup
        r0c = delay_model.r0
        for i in range(n_steps):
            t = i * h
            x = vals[i]
            k1 = ders[i]
            xd_mid = eval_hist(t + half - r0c)
            k2 = f(x + half * k1, xd_mid)
            k3 = f(x + half * k2, xd_mid)
            t_next = t + h
            xd_next = eval_hist(t_next - r0c)
            k4 = f(x + h * k3, xd_next)
            x_next = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            if abs(x_next) >= M:
                raise BoundViolation(
                    f"|x({t_next!r})| = {abs(x_next)!r} reached M = {M!r}"
                )
            vals.append(x_next)
            ders.append(f(x_next, xd_next))
            rs.append(r0c)
            count += 1
    else:
        for i in range(n_steps):
            t = i * h
            x = vals[i]
            k1 = ders[i]
            t_mid = t + half
            y2 = x + half * k1
            k2 = f(y2, eval_hist(t_mid - stage_r(t_mid, y2)))
            y3 = x + half * k2
            k3 = f(y3, eval_hist(t_mid - stage_r(t_mid, y3)))
            t_next = t + h
            y4 = x + h * k3
            k4 = f(y4, eval_hist(t_next - stage_r(t_next, y4)))
            x_next = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            if abs(x_next) >= M:
                raise BoundViolation(
                    f"|x({t_next!r})| = {abs(x_next)!r} reached M = {M!r}"
                )
            vals.append(x_next)
            r_next = node_r(t_next, x_next)
            d_next = f(x_next, eval_hist(t_next - r_next))
            ders.append(d_next)
            count += 1
            if kind == "threshold":
                # commit the finished Hermite cell to the prefix integral,
                # then refine the recorded lag with the exact prefix
                acc = 0.0
                for gi in range(8):
                    acc += _GL8W01[gi] * kernel(eval_hist(t + h * _GL8N01[gi]))
                prefix.append(prefix[-1] + acc * h)
                prefix_times.append(t_next)
                r_next = t_next - _solve_back(t_next, prefix[-1])
            rs.append(r_next)

    # --- assemble the exported trajectory -----------------------------------
    ladder = [-h * (0.5 ** j) for j in range(1, JUNCTION_LEVELS + 1)]
    mesh_parts = [np.array(hist_times[:-1]), np.array(ladder), h * np.arange(n_steps + 1)]
    mesh = np.concatenate(mesh_parts)

    out_vals = np.empty(mesh.size)
    out_ders = np.empty(mesh.size)
    n_lead = n_hist  # uniform history nodes strictly before the ladder

    for j in range(n_lead):
        out_vals[j] = hist_vals[j]
        t = hist_times[j]
        if phi_w.exact_slopes:
            out_ders[j] = phi_w.slope(t, h)
        elif j == 0:
            out_ders[j] = (phi_val(t + h) - phi_val(t)) / h
        else:
            out_ders[j] = (phi_val(t + h) - phi_val(t - h)) / (2.0 * h)
    for idx, t in enumerate(ladder):
        j = n_lead + idx
        out_vals[j] = phi_val(t)
        out_ders[j] = phi_w.slope(t, -t * 0.25)
    base = n_lead + len(ladder)
    out_vals[base:] = vals
    out_ders[base:] = ders

    r_col = np.full(mesh.size, np.nan)
    eta_col = np.full(mesh.size, np.nan)
    r_col[base:] = rs
    eta_col[base:] = mesh[base:] - np.asarray(rs)

    return Trajectory(
        mesh,
        out_vals,
        out_ders,
        space=space,
        extras={"r": r_col, "eta": eta_col},
    )


def residual_check(
    traj: Trajectory,
    model: FeedbackModel,
    dmap,
    grid: int = 2000,
    t_min: float = 0.0,
    t_max: float | None = None,
) -> float:
    """Max |x'(t) - f(x(t), x(eta(t)))| of the interpolant on a uniform grid.

    The grid spans [t_min, t_max] (defaults: 0 to the trajectory end), so
    it measures how well the exported dense output satisfies the equation
    between mesh nodes, not just at them.
    """
    if t_max is None:
        t_max = traj.t_end
    worst = 0.0
    for t in np.linspace(t_min, t_max, grid):
        t = float(t)
        lhs = traj.eval_deriv(t)
        rhs = model.f(traj.eval(t), traj.eval(dmap.eta(t)))
        worst = max(worst, abs(lhs - rhs))
    return worst
