"""Delay evaluators: constant lags, threshold integrals, implicit lags.

Three ways the lag r(x_t) can depend on the history segment:

* constant -- r is a fixed number in (0, K];
* threshold -- r is the unique root of int_{-r}^{0} a(phi(s)) ds = 1 for a
  positive rate kernel a;
* implicit -- r solves r = R(phi(0), phi(-r)) for a two-point lag map R
  whose Lipschitz constants make the fixed-point map a contraction.

The delayed argument eta(t) = t - r(x_t) and its iterates are served by a
cached map over a finished trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .phase import InsufficientHistory, SegmentView, Trajectory, segment
from .segments import SplitMix64, random_segment

__all__ = [
    "NoRoot",
    "NonConvergence",
    "ConstantDelay",
    "ThresholdDelay",
    "ImplicitDelay",
    "affine_kernel",
    "quadratic_kernel",
    "table_kernel",
    "lag_affine",
    "lag_echo",
    "lag_mill",
    "delay_eval",
    "validate_delay",
    "DelayReport",
    "DelayedArgumentMap",
]

THRESHOLD_TOL = 1e-12  # |integral - 1| target for the threshold root
IMPLICIT_TOL = 1e-13  # successive-change target for the implicit fixed point
IMPLICIT_BUDGET = 200

_GLN, _GLW = leggauss(16)
_GLN01 = 0.5 * (_GLN + 1.0)
_GLW01 = 0.5 * _GLW


class NoRoot(ValueError):
    """The threshold integral over the whole window stays below 1."""


class NonConvergence(RuntimeError):
    """The implicit fixed-point iteration exhausted its budget."""


# ---------------------------------------------------------------------------
# rate kernels a(xi) and two-point lag maps R(u, v); all accept ndarrays


def affine_kernel(p: float, q: float):
    """a(xi) = p + q*xi."""

    def a(xi):
        return p + q * xi

    return a


def quadratic_kernel(p: float, q: float):
    """a(xi) = p + q*xi**2."""

    def a(xi):
        return p + q * xi * xi

    return a


def table_kernel(xs, ys):
    """Piecewise-linear kernel through the given table."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("table needs matching 1-d arrays, length >= 2")
    if not np.all(np.diff(xs) > 0):
        raise ValueError("table abscissae must be strictly increasing")

    def a(xi):
        return np.interp(xi, xs, ys)

    return a


def lag_affine(p: float, qu: float, qv: float):
    """R(u, v) = p + qu*u + qv*v."""

    def R(u, v):
        return p + qu * u + qv * v

    return R


def lag_echo(p: float, q: float):
    """R(u, v) = p + q*(u + v): lag grows with the state sum."""

    def R(u, v):
        return p + q * (u + v)

    return R


def lag_mill(p: float, q: float):
    """R(u, v) = p + q*(u - v): lag driven by the state difference."""

    def R(u, v):
        return p + q * (u - v)

    return R


# ---------------------------------------------------------------------------
# delay models


@dataclass(frozen=True)
class ConstantDelay:
    r0: float

    def __post_init__(self) -> None:
        if self.r0 <= 0:
            raise ValueError("constant delay must be positive")

    kind = "constant"

    def tau_floor(self, M: float) -> float:
        return self.r0

    def lip_bound(self, L0: float, K: float) -> float:
        return 0.0


@dataclass(frozen=True)
class ThresholdDelay:
    """Lag defined by int_{-r}^{0} kernel(phi(s)) ds = 1.

    kernel must be positive on [-M, M] (at least 1/K, so the root exists
    inside the window); lip_a is the declared Lipschitz constant of the
    kernel, audited by validate_delay.
    """

    kernel: object
    lip_a: float

    kind = "threshold"

    def kernel_range(self, M: float, n: int = 4097) -> tuple[float, float]:
        vals = np.asarray(self.kernel(np.linspace(-M, M, n)), dtype=float)
        return float(vals.min()), float(vals.max())

    def tau_floor(self, M: float) -> float:
        _, hi = self.kernel_range(M)
        return 1.0 / hi

    def lip_bound(self, L0: float, K: float) -> float:
        return K * K * self.lip_a


@dataclass(frozen=True)
class ImplicitDelay:
    """Lag solving r = R(phi(0), phi(-r)).

    lip_r1, lip_r2 are declared Lipschitz constants of R in its two slots;
    the contraction condition lip_r1 + 2*lip_r2 < 1/L0 is what
    validate_delay enforces, and lip_r2 * L0 < 1/2 follows from it.
    """

    R: object
    lip_r1: float
    lip_r2: float

    kind = "implicit"

    def lag_range(self, M: float, n: int = 129) -> tuple[float, float]:
        g = np.linspace(-M, M, n)
        vals = np.asarray(self.R(g[:, None], g[None, :]), dtype=float)
        return float(vals.min()), float(vals.max())

    def tau_floor(self, M: float) -> float:
        lo, _ = self.lag_range(M)
        return lo

    def lip_bound(self, L0: float, K: float) -> float:
        denom = 1.0 - self.lip_r2 * L0
        if denom <= 0:
            return math.inf
        return (self.lip_r1 + self.lip_r2) / denom


# ---------------------------------------------------------------------------
# evaluation


def _cell_integrals(traj: Trajectory, kernel, nodes: np.ndarray) -> np.ndarray:
    """Integral of kernel(x(s)) over each cell [nodes[j], nodes[j+1]]."""
    lo = nodes[:-1]
    width = np.diff(nodes)
    pts = lo[:, None] + width[:, None] * _GLN01[None, :]
    vals = kernel(traj.eval_many(pts))
    return width * (vals * _GLW01[None, :]).sum(axis=1)


def _partial_cell_integral(traj: Trajectory, kernel, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    pts = a + (b - a) * _GLN01
    vals = kernel(traj.eval_many(pts))
    return float((b - a) * np.dot(vals, _GLW01))


def _threshold_root(traj: Trajectory, kernel, t: float, K: float) -> float:
    """Solve int_{t-r}^{t} kernel(x) ds = 1 for r in (0, K]."""
    seg = segment(traj, t, K)
    nodes = seg.node_times()
    cells = _cell_integrals(traj, kernel, nodes)
    # cumulative integral from each node to the anchor t
    tail = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    total = float(tail[0])
    if total < 1.0 - THRESHOLD_TOL:
        raise NoRoot(
            f"threshold integral over the full window is {total!r} < 1 at t={t!r}"
        )
    if total <= 1.0:
        return K
    # find the cell [nodes[j], nodes[j+1]] containing the root
    j = int(np.searchsorted(-tail, -1.0, side="right")) - 1
    j = min(max(j, 0), nodes.size - 2)
    cell_lo, cell_hi = float(nodes[j]), float(nodes[j + 1])
    # g(u) = int_u^t kernel - 1, decreasing in u
    residual_hi = float(tail[j + 1])

    def g(u: float) -> float:
        return _partial_cell_integral(traj, kernel, u, cell_hi) + residual_hi - 1.0

    lo, hi = cell_lo, cell_hi
    u = 0.5 * (lo + hi)
    for _ in range(100):
        gu = g(u)
        if abs(gu) <= THRESHOLD_TOL:
            break
        if gu > 0.0:
            lo = u
        else:
            hi = u
        slope = -float(kernel(traj.eval(u)))
        step = gu / slope if slope != 0.0 else 0.0
        u_new = u - step
        if not (lo < u_new < hi):
            u_new = 0.5 * (lo + hi)
        if hi - lo <= 1e-17 * max(1.0, abs(t)):
            u = u_new
            break
        u = u_new
    return t - u


def _implicit_root(
    model: ImplicitDelay, seg: SegmentView, warm: float | None
) -> float:
    u0 = seg(0.0)
    K = seg.K
    s = warm if warm is not None and 0.0 < warm <= K else 0.5 * K
    for _ in range(IMPLICIT_BUDGET):
        s_new = float(model.R(u0, seg(-min(s, K))))
        if abs(s_new - s) < IMPLICIT_TOL:
            return s_new
        s = s_new
    raise NonConvergence(
        f"implicit lag iteration did not settle within {IMPLICIT_BUDGET} steps"
    )


def delay_eval(model, seg: SegmentView, warm: float | None = None) -> float:
    """The lag r(phi) of a history segment, in (0, K].

    warm optionally seeds the implicit fixed-point iteration with the lag
    of a nearby segment.
    """
    if isinstance(model, ConstantDelay):
        r = model.r0
    elif isinstance(model, ThresholdDelay):
        r = _threshold_root(seg.traj, model.kernel, seg.t, seg.K)
    elif isinstance(model, ImplicitDelay):
        r = _implicit_root(model, seg, warm)
    else:
        raise TypeError(f"unknown delay model {model!r}")
    if not (0.0 < r <= seg.K * (1.0 + 1e-12)):
        raise NoRoot(f"lag {r!r} escapes (0, K] at t={seg.t!r}")
    return min(float(r), seg.K)


# ---------------------------------------------------------------------------
# validation


@dataclass
class DelayReport:
    kind: str
    lip_bound: float
    pairs_checked: int
    max_ratio: float
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lip_bound": self.lip_bound,
            "pairs_checked": self.pairs_checked,
            "max_ratio": self.max_ratio,
            "failures": list(self.failures),
        }


def _path_to_trajectory(path, K: float, step: float) -> Trajectory:
    # mesh-matched differences keep kink steepening within 4/3
    return Trajectory.from_function(path, -K, 0.0, step, fd_step=step)


def validate_delay(model, space, samples: int = 200, seed: int = 20260822) -> DelayReport:
    """Audit structural conditions and the pairwise Lipschitz bound.

    Structural checks (grid-based): positive kernel with a(xi) >= 1/K and
    declared Lipschitz constant for threshold lags; lag range inside
    (0, K], declared slot constants and the contraction inequality
    (ID4) lip_r1 + 2*lip_r2 < 1/L0 for implicit lags.  Then `samples`
    random admissible segment pairs are drawn and |r(phi) - r(psi)| is
    compared against the class Lipschitz bound times the sup distance.
    samples = 0 runs the structural checks alone (the fail-fast mode).
    """
    if samples != 0 and samples < 100:
        raise ValueError("samples must be 0 (structural only) or at least 100")
    M, K, L0 = space.M, space.K, space.L0
    failures: list[str] = []

    if isinstance(model, ConstantDelay):
        if not (0.0 < model.r0 <= K):
            failures.append(f"(H4) violated: constant lag {model.r0!r} outside (0, K]")
        return DelayReport("constant", 0.0, 0, 0.0, failures)

    if isinstance(model, ThresholdDelay):
        grid = np.linspace(-M, M, 4097)
        vals = np.asarray(model.kernel(grid), dtype=float)
        if vals.min() < 1.0 / K - 1e-12:
            failures.append(
                f"(TD3) violated: kernel minimum {vals.min()!r} below 1/K = {1.0 / K!r}"
            )
        slopes = np.abs(np.diff(vals) / np.diff(grid))
        if slopes.max() > model.lip_a * (1.0 + 1e-6) + 1e-12:
            failures.append(
                f"(TD2) declared Lip a = {model.lip_a!r} below grid slope {slopes.max()!r}"
            )
    elif isinstance(model, ImplicitDelay):
        g = np.linspace(-M, M, 257)
        vals = np.asarray(model.R(g[:, None], g[None, :]), dtype=float)
        if vals.min() <= 0.0 or vals.max() > K + 1e-12:
            failures.append(
                f"(ID2) violated: lag range [{vals.min()!r}, {vals.max()!r}] escapes (0, K]"
            )
        du = np.abs(np.diff(vals, axis=0) / np.diff(g)[:, None])
        dv = np.abs(np.diff(vals, axis=1) / np.diff(g)[None, :])
        if du.max() > model.lip_r1 * (1.0 + 1e-6) + 1e-12:
            failures.append(
                f"(ID3) declared Lip R1 = {model.lip_r1!r} below grid slope {du.max()!r}"
            )
        if dv.max() > model.lip_r2 * (1.0 + 1e-6) + 1e-12:
            failures.append(
                f"(ID3) declared Lip R2 = {model.lip_r2!r} below grid slope {dv.max()!r}"
            )
        if model.lip_r1 + 2.0 * model.lip_r2 >= 1.0 / L0:
            failures.append(
                "(ID4) violated: Lip R1 + 2*Lip R2 = "
                f"{model.lip_r1 + 2.0 * model.lip_r2!r} >= 1/L0 = {1.0 / L0!r}"
            )
    else:
        raise TypeError(f"unknown delay model {model!r}")

    bound = model.lip_bound(L0, K)
    max_ratio = 0.0
    pairs = 0
    if not failures:
        rng = SplitMix64(seed)
        step = K / 128.0
        fine = np.linspace(-K, 0.0, 1025)
        # slope cap below L0: the cubic resampling of a piecewise-linear
        # path can steepen a kink by up to 4/3
        amp, slope = 0.9 * M, 0.7 * L0
        for _ in range(samples):
            p1 = random_segment(rng.spawn(), K, amp, slope)
            p2 = random_segment(rng.spawn(), K, amp, slope)
            t1 = _path_to_trajectory(p1, K, step)
            t2 = _path_to_trajectory(p2, K, step)
            s1 = segment(t1, 0.0, K)
            s2 = segment(t2, 0.0, K)
            r1 = delay_eval(model, s1)
            r2 = delay_eval(model, s2)
            dist = float(np.max(np.abs(t1.eval_many(fine) - t2.eval_many(fine))))
            pairs += 1
            if dist > 0.0:
                max_ratio = max(max_ratio, abs(r1 - r2) / dist)
            if abs(r1 - r2) > bound * dist + 1e-12:
                failures.append(
                    f"Lipschitz bound violated: |dr| = {abs(r1 - r2)!r} > "
                    f"{bound!r} * {dist!r}"
                )
                break
    return DelayReport(model.kind, bound, pairs, max_ratio, failures)


# ---------------------------------------------------------------------------
# delayed-argument map


class DelayedArgumentMap:
    """Cached t -> eta(t) = t - r(x_t) over a finished trajectory.

    Lags are recomputed from the stored interpolant via delay_eval, with a
    cache keyed on t rounded to a fraction of the mesh resolution, so
    repeated queries (and concurrent ones) return identical values.  For
    threshold lags a prefix integral of the kernel along the whole mesh is
    built once and reused by every evaluation.
    """

    def __init__(self, traj: Trajectory, model, K: float | None = None) -> None:
        self.traj = traj
        self.model = model
        if K is None:
            if traj.space is None:
                raise ValueError("K not given and trajectory carries no phase space")
            K = traj.space.K
        self.K = float(K)
        self._cache: dict[int, float] = {}
        self._tick = float(np.min(np.diff(traj.mesh))) / 16.0
        self._prefix: np.ndarray | None = None
        self._warm: float | None = None

    def _key(self, t: float) -> int:
        return int(round((t - self.traj.t_start) / self._tick))

    def _prefix_integral(self) -> np.ndarray:
        if self._prefix is None:
            cells = _cell_integrals(self.traj, self.model.kernel, self.traj.mesh)
            self._prefix = np.concatenate([[0.0], np.cumsum(cells)])
        return self._prefix

    def _prefix_at(self, u: float) -> float:
        """Kernel integral from the mesh start to u."""
        mesh = self.traj.mesh
        prefix = self._prefix_integral()
        i = min(max(int(np.searchsorted(mesh, u, side="right")) - 1, 0), mesh.size - 2)
        return float(prefix[i]) + _partial_cell_integral(
            self.traj, self.model.kernel, float(mesh[i]), u
        )

    def _threshold_eta(self, t: float) -> float:
        mesh = self.traj.mesh
        prefix = self._prefix_integral()
        kernel = self.model.kernel
        target = self._prefix_at(t) - 1.0
        if target < self._prefix_at(t - self.K) - THRESHOLD_TOL:
            raise NoRoot(f"threshold integral over the window is below 1 at t={t!r}")
        j = min(max(int(np.searchsorted(prefix, target, side="right")) - 1, 0), mesh.size - 2)
        lo, hi = float(mesh[j]), float(mesh[j + 1])
        base = float(prefix[j])

        def g(u: float) -> float:
            return base + _partial_cell_integral(self.traj, kernel, lo, u) - target

        u = 0.5 * (lo + hi)
        blo, bhi = lo, hi
        for _ in range(100):
            gu = g(u)
            if abs(gu) <= THRESHOLD_TOL:
                break
            if gu < 0.0:
                blo = u
            else:
                bhi = u
            slope = float(kernel(self.traj.eval(u)))
            u_new = u - gu / slope if slope != 0.0 else 0.5 * (blo + bhi)
            if not (blo < u_new < bhi):
                u_new = 0.5 * (blo + bhi)
            if bhi - blo <= 1e-17 * max(1.0, abs(t)):
                u = u_new
                break
            u = u_new
        return u

    def r(self, t: float) -> float:
        """The lag at anchor time t."""
        return t - self.eta(t)

    def eta(self, t: float) -> float:
        """Delayed argument t - r(x_t); needs the window [t-K, t] stored."""
        key = self._key(t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if isinstance(self.model, ConstantDelay):
            if t - self.K < self.traj.t_start - 1e-12 or t > self.traj.t_end + 1e-12:
                raise InsufficientHistory(f"no full window at t={t!r}")
            value = t - self.model.r0
        elif isinstance(self.model, ThresholdDelay):
            if t - self.K < self.traj.t_start - 1e-12 or t > self.traj.t_end + 1e-12:
                raise InsufficientHistory(f"no full window at t={t!r}")
            value = self._threshold_eta(t)
        else:
            seg = segment(self.traj, t, self.K)
            r = delay_eval(self.model, seg, warm=self._warm)
            self._warm = r
            value = t - r
        self._cache[key] = value
        return value

    def eta_iter(self, t: float, k: int) -> float:
        """k-fold iterate of eta; raises InsufficientHistory with the
        deepest reachable iterate recorded on the exception."""
        value = t
        for j in range(k):
            try:
                value = self.eta(value)
            except InsufficientHistory as exc:
                exc.reached = j  # type: ignore[attr-defined]
                raise
        return value

    def eta_deriv(self, t: float) -> float:
        """d(eta)/dt for threshold lags: kernel(x(t)) / kernel(x(eta(t)))."""
        if not isinstance(self.model, ThresholdDelay):
            raise TypeError("eta_deriv is defined for threshold lags only")
        e = self.eta(t)
        return float(self.model.kernel(self.traj.eval(t))) / float(
            self.model.kernel(self.traj.eval(e))
        )
