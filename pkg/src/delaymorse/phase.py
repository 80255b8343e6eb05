"""Phase space primitives: bounded Lipschitz histories and dense trajectories.

A trajectory is a cubic Hermite spline through (t, x, dx) samples on a
strictly increasing mesh.  Values and derivatives are exact at the nodes,
and any window of length K ending at time t can be viewed as a history
segment, which is the state object every other module consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OutOfDomain",
    "InsufficientHistory",
    "PhaseSpace",
    "Trajectory",
    "SegmentView",
    "segment",
    "lipschitz_estimate",
    "write_trajectory_csv",
]


class OutOfDomain(ValueError):
    """Evaluation time lies outside [t_start, t_end]."""


class InsufficientHistory(ValueError):
    """A requested window reaches back before the stored history."""


@dataclass(frozen=True)
class PhaseSpace:
    """Bounds defining the admissible set of histories.

    M is the open sup-norm bound, K the maximal lag (window length) and
    L0 the Lipschitz bound, conventionally the sup of |f| over the square
    [-M, M]^2 of the feedback nonlinearity in use.
    """

    M: float
    K: float
    L0: float

    def __post_init__(self) -> None:
        if not (self.M > 0 and self.K > 0 and self.L0 > 0):
            raise ValueError("PhaseSpace requires M, K, L0 > 0")


def _hermite_eval(t, t0, t1, v0, v1, m0, m1):
    # value-difference form: constant data comes back exactly
    h = t1 - t0
    s = (t - t0) / h
    u = 1.0 - s
    q = s * s * (3.0 - 2.0 * s)
    return v0 + q * (v1 - v0) + h * (m0 * (s * u * u) + m1 * (s * s * (s - 1.0)))


def _hermite_deriv(t, t0, t1, v0, v1, m0, m1):
    h = t1 - t0
    s = (t - t0) / h
    u = 1.0 - s
    return (
        (v1 - v0) * ((6.0 * s - 6.0 * s * s) / h)
        + m0 * (u * (1.0 - 3.0 * s))
        + m1 * (s * (3.0 * s - 2.0))
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Immutable dense solution path with cubic Hermite interpolation.

    mesh, values and derivs are equal-length 1-d arrays; the mesh is
    strictly increasing.  Between nodes the path is the cubic matching
    values and derivatives at both ends, so node data is reproduced
    exactly and cubic polynomials are interpolated without error.
    """

    mesh: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    space: PhaseSpace | None = None
    # extra per-node columns (e.g. delay, delayed argument) for export
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        mesh = np.asarray(self.mesh, dtype=float)
        values = np.asarray(self.values, dtype=float)
        derivs = np.asarray(self.derivs, dtype=float)
        if mesh.ndim != 1 or mesh.shape != values.shape or mesh.shape != derivs.shape:
            raise ValueError("mesh, values, derivs must be equal-length 1-d arrays")
        if mesh.size < 2:
            raise ValueError("a trajectory needs at least two nodes")
        if not np.all(np.diff(mesh) > 0):
            raise ValueError("mesh must be strictly increasing")
        for arr in (mesh, values, derivs):
            arr.setflags(write=False)
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "derivs", derivs)

    @property
    def t_start(self) -> float:
        return float(self.mesh[0])

    @property
    def t_end(self) -> float:
        return float(self.mesh[-1])

    @classmethod
    def from_function(
        cls,
        fn,
        t0: float,
        t1: float,
        step: float,
        deriv=None,
        fd_step: float | None = None,
        space: PhaseSpace | None = None,
    ) -> "Trajectory":
        """Sample a callable onto a uniform mesh.

        Derivatives come from `deriv` when given, otherwise from central
        differences with a small stencil (one-sided at the ends).
        """
        n = int(round((t1 - t0) / step))
        if n < 1 or abs(t0 + n * step - t1) > 1e-9 * max(1.0, abs(t1 - t0)):
            raise ValueError("span must be a whole number of steps")
        mesh = t0 + step * np.arange(n + 1)
        mesh[-1] = t1
        vals = np.array([float(fn(t)) for t in mesh])
        if deriv is not None:
            ders = np.array([float(deriv(t)) for t in mesh])
        else:
            d = fd_step if fd_step is not None else step * 1e-2
            ders = np.empty_like(vals)
            for i, t in enumerate(mesh):
                if t - d < t0:
                    ders[i] = (fn(t + d) - fn(t)) / d
                elif t + d > t1:
                    ders[i] = (fn(t) - fn(t - d)) / d
                else:
                    ders[i] = (fn(t + d) - fn(t - d)) / (2.0 * d)
        return cls(mesh, vals, ders, space=space)

    def _locate(self, t: float) -> int:
        if t < self.mesh[0] or t > self.mesh[-1]:
            raise OutOfDomain(
                f"t={t!r} outside [{self.mesh[0]!r}, {self.mesh[-1]!r}]"
            )
        i = int(np.searchsorted(self.mesh, t, side="right")) - 1
        if i >= self.mesh.size - 1:
            i = self.mesh.size - 2
        return i

    def eval(self, t: float) -> float:
        """Value of the interpolant; exact at mesh nodes."""
        i = self._locate(t)
        m = self.mesh
        if t == m[i]:
            return float(self.values[i])
        if t == m[i + 1]:
            return float(self.values[i + 1])
        return float(
            _hermite_eval(
                t, m[i], m[i + 1],
                self.values[i], self.values[i + 1],
                self.derivs[i], self.derivs[i + 1],
            )
        )

    def eval_deriv(self, t: float) -> float:
        """Derivative of the interpolant; equals the stored slope at nodes."""
        i = self._locate(t)
        m = self.mesh
        if t == m[i]:
            return float(self.derivs[i])
        if t == m[i + 1]:
            return float(self.derivs[i + 1])
        return float(
            _hermite_deriv(
                t, m[i], m[i + 1],
                self.values[i], self.values[i + 1],
                self.derivs[i], self.derivs[i + 1],
            )
        )

    def eval_many(self, ts) -> np.ndarray:
        """Vectorized interpolant evaluation (values only)."""
        ts = np.asarray(ts, dtype=float)
        flat = ts.ravel()
        if flat.size == 0:
            return np.zeros(ts.shape)
        if flat.min() < self.mesh[0] or flat.max() > self.mesh[-1]:
            raise OutOfDomain("evaluation times outside trajectory domain")
        idx = np.clip(np.searchsorted(self.mesh, flat, side="right") - 1, 0, self.mesh.size - 2)
        t0 = self.mesh[idx]
        h = self.mesh[idx + 1] - t0
        s = (flat - t0) / h
        u = 1.0 - s
        q = s * s * (3.0 - 2.0 * s)
        v0 = self.values[idx]
        m0 = self.derivs[idx]
        m1 = self.derivs[idx + 1]
        out = v0 + q * (self.values[idx + 1] - v0) + h * (
            m0 * (s * u * u) + m1 * (s * s * (s - 1.0))
        )
        # the final node is the one point whose cell clamp puts s at 1
        at_end = flat == self.mesh[-1]
        if np.any(at_end):
            out[at_end] = self.values[-1]
        return out.reshape(ts.shape)

    def segment(self, t: float, K: float | None = None) -> "SegmentView":
        return segment(self, t, K)

    def sup_norm(self, a: float | None = None, b: float | None = None, refine: int = 1) -> float:
        """Max |value| over mesh nodes of [a, b], optionally on a refined grid."""
        a = self.t_start if a is None else a
        b = self.t_end if b is None else b
        lo = int(np.searchsorted(self.mesh, a, side="left"))
        hi = int(np.searchsorted(self.mesh, b, side="right"))
        if refine <= 1:
            sel = np.abs(self.values[lo:hi])
            return float(sel.max()) if sel.size else abs(self.eval(a))
        grid = np.linspace(a, b, max(2, (hi - lo) * refine))
        return float(np.max(np.abs(self.eval_many(grid))))


@dataclass(frozen=True)
class SegmentView:
    """History window [t - K, t] of a trajectory, addressed by s in [-K, 0]."""

    traj: Trajectory
    t: float
    K: float

    def __post_init__(self) -> None:
        if self.K <= 0:
            raise ValueError("window length K must be positive")
        if self.t > self.traj.t_end + 1e-12 * max(1.0, abs(self.traj.t_end)):
            raise OutOfDomain(f"anchor t={self.t} beyond trajectory end")
        if self.t - self.K < self.traj.t_start - 1e-12 * max(1.0, abs(self.traj.t_start)):
            raise InsufficientHistory(
                f"window [{self.t - self.K}, {self.t}] starts before stored history"
            )

    def __call__(self, s: float) -> float:
        if s < -self.K or s > 0.0:
            raise OutOfDomain(f"segment argument s={s} outside [-K, 0]")
        return self.traj.eval(self.t + s)

    def deriv(self, s: float) -> float:
        if s < -self.K or s > 0.0:
            raise OutOfDomain(f"segment argument s={s} outside [-K, 0]")
        return self.traj.eval_deriv(self.t + s)

    @property
    def window(self) -> tuple[float, float]:
        return (self.t - self.K, self.t)

    def node_times(self) -> np.ndarray:
        """Mesh nodes inside the window, including both window endpoints."""
        a, b = self.window
        lo = int(np.searchsorted(self.traj.mesh, a, side="right"))
        hi = int(np.searchsorted(self.traj.mesh, b, side="left"))
        inner = self.traj.mesh[lo:hi]
        return np.concatenate(([a], inner, [b]))

    def sup_norm(self) -> float:
        ts = self.node_times()
        return float(np.max(np.abs([self.traj.eval(float(t)) for t in ts])))


def segment(traj: Trajectory, t: float, K: float | None = None) -> SegmentView:
    """The state x_t of a trajectory: its restriction to [t - K, t]."""
    if K is None:
        if traj.space is None:
            raise ValueError("K not given and trajectory carries no phase space")
        K = traj.space.K
    return SegmentView(traj, float(t), float(K))


def lipschitz_estimate(seg: SegmentView, grid: int = 512) -> float:
    """Max difference quotient of the segment over a uniform grid.

    A sampled lower estimate of the Lipschitz constant; it converges to
    the true constant as the grid refines.
    """
    if grid < 2:
        raise ValueError("grid must have at least two points")
    a, b = seg.window
    ts = np.linspace(a, b, grid)
    vs = np.array([seg.traj.eval(float(t)) for t in ts])
    return float(np.max(np.abs(np.diff(vs) / np.diff(ts))))


def write_trajectory_csv(traj: Trajectory, path, extra_order: tuple[str, ...] = ()) -> None:
    """Write t,x,dx (plus any extra columns) with 17 significant digits."""
    names = ["t", "x", "dx"]
    cols = [traj.mesh, traj.values, traj.derivs]
    order = extra_order if extra_order else tuple(sorted(traj.extras))
    for name in order:
        names.append(name)
        cols.append(np.asarray(traj.extras[name], dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
