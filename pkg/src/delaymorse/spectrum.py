"""Characteristic roots of the linearization and the damping transform.

The linearization at the origin is u'(t) = A u(t) + B u(t - tau) with
characteristic function h(z) = z - A - B e^(-z tau).  The count of roots
with positive real part comes from the argument principle on a rectangle
hugging (but excluding) the imaginary axis; proximity of roots to the
axis is detected separately by minimizing |h| along it.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .delay import ConstantDelay, ImplicitDelay, NoRoot, ThresholdDelay
from .feedback import FeedbackModel, coefficient_a, coefficient_b
from .phase import Trajectory

__all__ = [
    "ContourThroughRoot",
    "Linearization",
    "SpectrumReport",
    "TransformedPath",
    "analyze",
    "count_unstable",
    "linearize",
    "n_star",
    "smallest_odd_above",
    "transform",
]

EPS_AXIS = 1e-8  # left contour edge: roots with Re z > this are counted
_MAX_RETRIES = 5


class ContourThroughRoot(RuntimeError):
    """The counting contour passed too close to a characteristic root."""


@dataclass(frozen=True)
class Linearization:
    """Coefficients of the linearized equation at the zero state."""

    A: float
    B: float
    tau: float

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def h(self, z: complex) -> complex:
        return z - self.A - self.B * cmath.exp(-z * self.tau)

    def h_deriv(self, z: complex) -> complex:
        return 1.0 + self.B * self.tau * cmath.exp(-z * self.tau)

    @property
    def rho(self) -> float:
        # all roots with Re z >= 0 satisfy |z| <= |A| + |B|
        return abs(self.A) + abs(self.B) + 1.0


def linearize(model: FeedbackModel, delay_model) -> Linearization:
    """Linearization coefficients and the lag frozen at the zero state."""
    A = float(model.d1f(0.0, 0.0))
    B = float(model.d2f(0.0, 0.0))
    if isinstance(delay_model, ConstantDelay):
        tau = delay_model.r0
    elif isinstance(delay_model, ThresholdDelay):
        k0 = float(delay_model.kernel(0.0))
        if k0 <= 0:
            raise NoRoot("kernel vanishes at the origin")
        tau = 1.0 / k0
    elif isinstance(delay_model, ImplicitDelay):
        # R(0, 0) is already the fixed point at the zero state
        tau = float(delay_model.R(0.0, 0.0))
    else:
        raise TypeError(f"unknown delay model {delay_model!r}")
    return Linearization(A, B, tau)


@dataclass(frozen=True)
class SpectrumReport:
    """Root counts and axis diagnostics of one linearization."""

    A: float
    B: float
    tau: float
    m_star: int
    hyperbolic: bool
    n_star: int
    axis_min: float
    tol_imag: float
    roots: tuple
    notes: tuple

    def as_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "tau": self.tau,
            "m_star": self.m_star,
            "hyperbolic": self.hyperbolic,
            "n_star": self.n_star,
            "axis_min": self.axis_min,
            "tol_imag": self.tol_imag,
            "roots": [[z.real, z.imag] for z in self.roots],
            "notes": list(self.notes),
        }


def _axis_minimum(lin: Linearization) -> tuple[float, float]:
    """Minimum of |h(i w)| for w in [0, rho], and its location."""
    rho = lin.rho
    ws = np.linspace(0.0, rho, 2048)
    mags = np.abs([lin.h(1j * float(w)) for w in ws])
    best_w = float(ws[int(np.argmin(mags))])
    best = float(np.min(mags))
    # refine every discrete local minimum; the landscape is smooth
    interior = np.nonzero((mags[1:-1] <= mags[:-2]) & (mags[1:-1] <= mags[2:]))[0] + 1
    for i in interior:
        res = minimize_scalar(
            lambda w: abs(lin.h(1j * w)) ** 2,
            bounds=(float(ws[i - 1]), float(ws[i + 1])),
            method="bounded",
            options={"xatol": 1e-12},
        )
        m = math.sqrt(max(float(res.fun), 0.0))
        if m < best:
            best, best_w = m, float(res.x)
    return best, best_w


def _winding(lin: Linearization, left: float, rho: float) -> float:
    """Winding number of h around the rectangle [left, rho] x [-rho, rho]."""
    floor = 1e-12 * (1.0 + abs(lin.A) + abs(lin.B) + rho)
    corners = [
        complex(left, -rho),
        complex(rho, -rho),
        complex(rho, rho),
        complex(left, rho),
        complex(left, -rho),
    ]
    h = lin.h
    total = 0.0
    cap = 0.45 * math.pi
    for a, b in zip(corners[:-1], corners[1:]):
        base = 16
        seg = [(a + (b - a) * i / base) for i in range(base + 1)]
        stack = []
        hv = [h(z) for z in seg]
        for hz, z in zip(hv, seg):
            if abs(hz) < floor:
                raise ContourThroughRoot(f"|h({z})| = {abs(hz)} on the contour")
        for i in range(base):
            stack.append((seg[i], hv[i], seg[i + 1], hv[i + 1], 0))
        while stack:
            z0, h0, z1, h1, depth = stack.pop()
            dphi = cmath.phase(h1 / h0)
            if abs(dphi) < cap or depth >= 52:
                total += dphi
                continue
            zm = 0.5 * (z0 + z1)
            hm = h(zm)
            if abs(hm) < floor:
                raise ContourThroughRoot(f"|h({zm})| = {abs(hm)} on the contour")
            stack.append((z0, h0, zm, hm, depth + 1))
            stack.append((zm, hm, z1, h1, depth + 1))
    return total / (2.0 * math.pi)


def _report_roots(lin: Linearization) -> tuple:
    """Newton sweep for individual roots near and right of the axis."""
    rho = lin.rho
    scale = 1.0 + abs(lin.A) + abs(lin.B)
    found = []
    box = 4.0 * rho + 10.0
    for re0 in np.linspace(-0.5, rho, 18):
        for im0 in np.linspace(0.0, rho, 18):
            z = complex(float(re0), float(im0))
            try:
                for _ in range(60):
                    hz = lin.h(z)
                    dz = lin.h_deriv(z)
                    if abs(dz) < 1e-14 or abs(z) > box:
                        break
                    step = hz / dz
                    z -= step
                    if abs(step) < 1e-13:
                        break
                if abs(lin.h(z)) > 1e-9 * scale:
                    continue
            except OverflowError:
                continue
            if not (-1e-3 <= z.real <= rho + 1.0 and -1e-9 <= z.imag <= rho + 1.0):
                continue
            if all(abs(z - w) > 1e-6 for w in found):
                found.append(z)
    out = []
    for z in found:
        if abs(z.imag) <= 1e-12:
            out.append(complex(z.real, 0.0))
        else:
            out.append(z)
            out.append(z.conjugate())
    out.sort(key=lambda z: (-z.real, abs(z.imag), z.imag))
    return tuple(out[:40])


def analyze(lin: Linearization, eps_axis: float = EPS_AXIS) -> SpectrumReport:
    """Count strictly unstable roots and assess hyperbolicity.

    The count m_star is the winding number of the characteristic function
    over a rectangle whose left edge sits at Re z = eps_axis; roots within
    eps_axis of the axis therefore do not enter the count.  A state is
    flagged nonhyperbolic when the minimum of |h| on the axis drops below
    tol_imag = 1e-6 (1 + |A| + |B|).
    """
    notes = []
    axis_min, axis_w = _axis_minimum(lin)
    tol_imag = 1e-6 * (1.0 + abs(lin.A) + abs(lin.B))
    hyperbolic = axis_min >= tol_imag
    if not hyperbolic:
        notes.append(f"axis root near w = {axis_w:.9g} (|h| = {axis_min:.3e})")

    left = eps_axis
    rho = lin.rho
    last_err: Exception | None = None
    m_star = None
    for attempt in range(_MAX_RETRIES):
        try:
            w = _winding(lin, left, rho)
        except ContourThroughRoot as err:
            last_err = err
            left *= 3.0
            rho *= 1.013
            continue
        if abs(w - round(w)) > 0.01:
            last_err = ContourThroughRoot(f"winding {w!r} is not near an integer")
            left *= 3.0
            rho *= 1.013
            continue
        m_star = int(round(w))
        if attempt:
            notes.append(f"contour retried {attempt} time(s), left edge {left:.3e}")
        break
    if m_star is None:
        raise last_err if last_err is not None else RuntimeError("winding failed")

    n = m_star + 1 if (not hyperbolic and m_star % 2 == 0) else m_star
    if hyperbolic and lin.A + lin.B < 0.0 and m_star % 2 == 1:
        raise RuntimeError(
            f"odd unstable count {m_star} contradicts negative feedback at zero"
        )
    return SpectrumReport(
        A=lin.A,
        B=lin.B,
        tau=lin.tau,
        m_star=m_star,
        hyperbolic=hyperbolic,
        n_star=n,
        axis_min=axis_min,
        tol_imag=tol_imag,
        roots=_report_roots(lin),
        notes=tuple(notes),
    )


def count_unstable(lin: Linearization, eps_axis: float = EPS_AXIS) -> tuple[int, bool]:
    rep = analyze(lin, eps_axis)
    return rep.m_star, rep.hyperbolic


def n_star(lin: Linearization, eps_axis: float = EPS_AXIS) -> int:
    return analyze(lin, eps_axis).n_star


def smallest_odd_above(n: int) -> int:
    """Least odd integer strictly greater than n."""
    m = n + 1
    return m if m % 2 == 1 else m + 1


# --- damping transform ------------------------------------------------------


@dataclass(frozen=True)
class TransformedPath:
    """y(t) = exp(-int_0^t a) x(t) with the running coefficient frame.

    Arrays are aligned with ts: a and b are the instantaneous feedback
    coefficients, A_int the running integral of a, c the delayed-term
    coefficient in the y frame (NaN before the delayed argument enters
    the transformed span).
    """

    ts: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    A_int: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    t_c: float
    a_sup: float
    b_lo: float
    b_hi: float
    c_lo: float
    c_hi: float
    K: float
    degenerate: bool

    def y_trajectory(self) -> Trajectory:
        return Trajectory(self.ts, self.y, self.ydot)


def transform(
    traj: Trajectory,
    model: FeedbackModel,
    dmap,
    t0: float = 0.0,
    t1: float | None = None,
    stride: int = 1,
) -> TransformedPath:
    """Factor the sign-definite instantaneous part out of a solution.

    Works on the trajectory's own nodes in [t0, t1] (every stride-th).
    The rescaling exp(-A_int) can overflow for strongly damped models on
    long spans; spans with |A_int| beyond 700 raise OverflowError.
    """
    if t1 is None:
        t1 = traj.t_end
    lo = int(np.searchsorted(traj.mesh, t0 - 1e-12))
    hi = int(np.searchsorted(traj.mesh, t1 + 1e-12))
    sel = slice(lo, hi, max(1, int(stride)))
    ts = traj.mesh[sel].astype(float)
    if ts.size < 2:
        raise ValueError("transform span holds fewer than two nodes")
    x = traj.values[sel].astype(float)
    xd = traj.derivs[sel].astype(float)
    etas = np.array([dmap.eta(float(t)) for t in ts])
    x_eta = traj.eval_many(etas)
    a = np.array(
        [coefficient_a(model, float(xi), float(xe)) for xi, xe in zip(x, x_eta)]
    )
    b = np.array([coefficient_b(model, float(xe)) for xe in x_eta])
    A_int = cumulative_trapezoid(a, ts, initial=0.0)
    if float(np.max(np.abs(A_int))) > 700.0:
        raise OverflowError("integral of a exceeds the floating-point range of exp")
    damp = np.exp(-A_int)
    y = damp * x
    ydot = damp * (xd - a * x)
    c = np.full(ts.size, np.nan)
    inside = etas >= ts[0] - 1e-12
    if np.any(inside):
        A_eta = np.interp(etas[inside], ts, A_int)
        c[inside] = b[inside] * np.exp(A_eta - A_int[inside])
        t_c = float(ts[inside][0])
    else:
        t_c = math.inf
    a_sup = float(np.max(np.abs(a)))
    b_pos = -b
    b_lo = float(np.min(b_pos))
    b_hi = float(np.max(b_pos))
    K = dmap.K
    return TransformedPath(
        ts=ts,
        a=a,
        b=b,
        c=c,
        A_int=A_int,
        y=y,
        ydot=ydot,
        t_c=t_c,
        a_sup=a_sup,
        b_lo=b_lo,
        b_hi=b_hi,
        c_lo=b_lo * math.exp(-K * a_sup),
        c_hi=b_hi * math.exp(K * a_sup),
        K=K,
        degenerate=float(np.max(np.abs(x))) == 0.0,
    )
