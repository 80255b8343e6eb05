"""Discrete Lyapunov functional: sign changes over delay windows.

The count uses witnesses: interpolant values at mesh nodes and at interior
critical points of each Hermite cell, kept when their magnitude exceeds a
zero tolerance.  Between consecutive candidates the interpolant is strictly
monotone, so alternating witness signs pin down transversal zero crossings
without any root search.  V is the count rounded up to the nearest odd
value, the parity the feedback sign forces on limiting profiles.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .phase import Trajectory

__all__ = [
    "AllZero",
    "V_CAP",
    "sign_changes",
    "vfunc",
    "v_along",
    "is_regular",
    "v_limit",
    "v_trace",
    "write_vtrace_csv",
]

V_CAP = 99  # alternation counts beyond this report as infinite
TOL_ZERO_FACTOR = 1e-9


class AllZero(ValueError):
    """Every witness in the window is below the zero tolerance."""


@dataclass(frozen=True)
class _Scan:
    """Witness candidates of one trajectory at one zero tolerance."""

    times: np.ndarray
    values: np.ndarray


_scan_cache: "weakref.WeakKeyDictionary[Trajectory, dict[float, _Scan]]"
_scan_cache = weakref.WeakKeyDictionary()


def default_tol_zero(traj: Trajectory) -> float:
    scale = traj.space.M if traj.space is not None else max(1.0, float(np.max(np.abs(traj.values))))
    return TOL_ZERO_FACTOR * scale


def _build_scan(traj: Trajectory) -> _Scan:
    mesh, vals, ders = traj.mesh, traj.values, traj.derivs
    width = np.diff(mesh)
    v0, v1 = vals[:-1], vals[1:]
    m0, m1 = ders[:-1], ders[1:]
    delta = v1 - v0
    # cubic in the local coordinate s = (t - t_i) / width
    c1 = width * m0
    c2 = 3.0 * delta - width * (2.0 * m0 + m1)
    c3 = -2.0 * delta + width * (m0 + m1)
    # derivative 3 c3 s^2 + 2 c2 s + c1 = 0
    aq = 3.0 * c3
    bq = 2.0 * c2
    cq = c1
    scale = np.maximum(np.abs(aq), np.maximum(np.abs(bq), np.abs(cq)))
    quad = np.abs(aq) > 1e-13 * np.maximum(scale, 1e-300)

    roots_t = []
    roots_v = []

    def keep(cell_idx: np.ndarray, s: np.ndarray) -> None:
        ok = np.isfinite(s) & (s > 0.0) & (s < 1.0)
        if not np.any(ok):
            return
        idx = cell_idx[ok]
        sv = s[ok]
        roots_t.append(mesh[idx] + sv * width[idx])
        roots_v.append(v0[idx] + sv * (c1[idx] + sv * (c2[idx] + sv * c3[idx])))

    with np.errstate(divide="ignore", invalid="ignore"):
        idx_q = np.nonzero(quad)[0]
        if idx_q.size:
            a, b, c = aq[idx_q], bq[idx_q], cq[idx_q]
            disc = b * b - 4.0 * a * c
            good = disc >= 0.0
            a, b, c = a[good], b[good], c[good]
            sub = idx_q[good]
            root = np.sqrt(disc[good])
            q = -0.5 * (b + np.where(b >= 0.0, root, -root))
            keep(sub, q / a)
            keep(sub, np.where(q != 0.0, c / q, np.nan))
        idx_l = np.nonzero(~quad)[0]
        if idx_l.size:
            b, c = bq[idx_l], cq[idx_l]
            keep(idx_l, np.where(b != 0.0, -c / b, np.nan))

    if roots_t:
        times = np.concatenate([mesh] + roots_t)
        values = np.concatenate([vals] + roots_v)
    else:
        times = mesh.copy()
        values = vals.copy()
    order = np.argsort(times, kind="stable")
    return _Scan(times[order], values[order])


def _get_scan(traj: Trajectory) -> _Scan:
    entry = _scan_cache.get(traj)
    if entry is None:
        entry = _build_scan(traj)
        _scan_cache[traj] = entry
    return entry


def _window_witnesses(traj: Trajectory, a: float, b: float, tol: float):
    scan = _get_scan(traj)
    lo = int(np.searchsorted(scan.times, a, side="right"))
    hi = int(np.searchsorted(scan.times, b, side="left"))
    times = np.concatenate(([a], scan.times[lo:hi], [b]))
    values = np.concatenate(([traj.eval(a)], scan.values[lo:hi], [traj.eval(b)]))
    keep = np.abs(values) > tol
    return times[keep], values[keep]


def sign_changes(
    traj: Trajectory, a: float, b: float, tol_zero: float | None = None
) -> int | float:
    """Sign alternation count of the interpolant on [a, b].

    Returns math.inf past V_CAP alternations, and also when two adjacent
    mesh cells each carry two or more alternations (unresolvably fast
    oscillation at the mesh scale).  Raises AllZero when no value in the
    window clears the tolerance.
    """
    if not (traj.t_start <= a < b <= traj.t_end + 1e-12 * max(1.0, abs(traj.t_end))):
        raise ValueError(f"bad window [{a!r}, {b!r}]")
    b = min(b, traj.t_end)
    tol = default_tol_zero(traj) if tol_zero is None else tol_zero
    times, values = _window_witnesses(traj, a, b, tol)
    if times.size == 0:
        raise AllZero(f"no witnesses above {tol!r} in [{a!r}, {b!r}]")
    signs = np.sign(values)
    flips = np.nonzero(signs[1:] != signs[:-1])[0]
    count = int(flips.size)
    if count > V_CAP:
        return math.inf
    if count >= 4:
        mids = 0.5 * (times[flips] + times[flips + 1])
        cells = np.searchsorted(traj.mesh, mids, side="right") - 1
        per_cell = np.bincount(cells, minlength=traj.mesh.size)
        busy = per_cell >= 2
        if np.any(busy[1:] & busy[:-1]):
            return math.inf
    return count


def vfunc(count: int | float) -> int | float:
    """Lift an alternation count to the odd-valued functional."""
    if count is math.inf or count == math.inf:
        return math.inf
    count = int(count)
    if count < 0:
        raise ValueError("negative count")
    return count if count % 2 == 1 else count + 1


def v_along(traj: Trajectory, dmap, t: float, tol_zero: float | None = None) -> int | float:
    """V on the state window [eta(t), t] of a solution."""
    return vfunc(sign_changes(traj, dmap.eta(t), t, tol_zero))


def is_regular(
    traj: Trajectory,
    a: float,
    b: float,
    tol_zero: float | None = None,
    tol_deriv: float | None = None,
) -> bool:
    """Conservative regularity test for the window [a, b].

    True when every witness candidate near zero crosses transversally
    (slope clears the derivative tolerance, so every zero sits between
    two strictly monotone arcs), the alternation count is finite, and
    the right endpoint is nondegenerate (value or slope away from zero).
    """
    tol = default_tol_zero(traj) if tol_zero is None else tol_zero
    told = tol if tol_deriv is None else tol_deriv
    scan = _get_scan(traj)
    lo = int(np.searchsorted(scan.times, a, side="right"))
    hi = int(np.searchsorted(scan.times, b, side="left"))
    times = np.concatenate(([a], scan.times[lo:hi], [b]))
    values = np.concatenate(([traj.eval(a)], scan.values[lo:hi], [traj.eval(b)]))
    for t_near in times[np.abs(values) <= tol]:
        if abs(traj.eval_deriv(float(t_near))) <= told:
            return False
    try:
        return sign_changes(traj, a, b, tol) != math.inf
    except AllZero:
        return False


def v_limit(
    traj: Trajectory,
    dmap,
    window: float | None = None,
    step: float | None = None,
    tol_zero: float | None = None,
) -> tuple[int | float, bool]:
    """Terminal V and whether it held constant over the whole tail window."""
    K = dmap.K
    w = 5.0 * K if window is None else window
    if w < 5.0 * K - 1e-9 * K:
        raise ValueError(f"window {w!r} shorter than 5 K = {5.0 * K!r}")
    dt = 0.25 * K if step is None else step
    t_hi = traj.t_end
    if t_hi - w < traj.t_start + K - 1e-9 * K:
        raise ValueError("trajectory too short for the requested tail window")
    t_lo = max(t_hi - w, traj.t_start + K)
    ts = np.arange(t_lo, t_hi + 0.5 * dt, dt)
    ts[-1] = min(float(ts[-1]), t_hi)
    vs = [v_along(traj, dmap, float(t), tol_zero) for t in ts]
    last = vs[-1]
    return last, all(v == last for v in vs)


def v_trace(
    traj: Trajectory,
    dmap,
    t_start: float = 0.0,
    t_stop: float | None = None,
    step: float | None = None,
    tol_zero: float | None = None,
) -> dict:
    """Sampled course of V along the run, for export and monotone checks.

    Keys: t, eta, sc, v, regular.  sc and v are float arrays (inf for the
    sentinel); windows with no witnesses get NaN in sc and v.
    """
    K = dmap.K
    dt = 0.125 * K if step is None else step
    t1 = traj.t_end if t_stop is None else t_stop
    ts = np.arange(t_start, t1 + 0.5 * dt, dt)
    ts[-1] = min(float(ts[-1]), t1)
    n = ts.size
    eta = np.empty(n)
    sc = np.empty(n)
    vv = np.empty(n)
    reg = np.zeros(n)
    for i, t in enumerate(ts):
        t = float(t)
        e = dmap.eta(t)
        eta[i] = e
        try:
            c = sign_changes(traj, e, t, tol_zero)
        except AllZero:
            sc[i] = np.nan
            vv[i] = np.nan
            continue
        sc[i] = float(c)
        vv[i] = float(vfunc(c))
        reg[i] = 1.0 if is_regular(traj, e, t, tol_zero) else 0.0
    return {"t": ts, "eta": eta, "sc": sc, "v": vv, "regular": reg}


def write_vtrace_csv(path, trace: dict) -> None:
    cols = ("t", "eta", "sc", "v", "regular")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(trace["t"].size):
            fh.write(",".join(format(float(trace[c][i]), ".17g") for c in cols) + "\n")
