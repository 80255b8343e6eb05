"""Empirical Morse-level classification of long solutions.

A run lands in one of four buckets: decay to the origin, a stabilized
finite V below the spectral threshold, a tail at or above the threshold,
or undetermined when the tail window is too short for V to settle.  The
threshold N0 is the smallest odd level strictly above the unstable root
count of the linearization, the first level the origin's unstable set
cannot reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lyapunov import AllZero, default_tol_zero, v_along, v_limit, _get_scan
from .phase import InsufficientHistory, OutOfDomain, Trajectory
from .spectrum import smallest_odd_above

__all__ = [
    "DiagnosticResult",
    "MorseLabel",
    "classify",
    "iterated_zero_diagnostic",
    "morse_report",
    "vkey",
]

EPS_ORIGIN_FACTOR = 1e-6


@dataclass(frozen=True)
class MorseLabel:
    """Classification outcome with the evidence it rests on."""

    category: str  # origin | equals | at_least | undetermined
    n: int | None
    n0: int
    evidence: dict

    def __str__(self) -> str:
        if self.category == "origin":
            return "OriginLimit"
        if self.category == "equals":
            return f"EqualsN[{self.n}]"
        if self.category == "at_least":
            return f"AtLeastN0[{self.n0}]"
        return "Undetermined"


def vkey(v) -> str:
    """Stable string form of a V value for JSON keys ('inf' or an int)."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "none"
    if v == math.inf:
        return "inf"
    return str(int(v))


def classify(
    traj: Trajectory,
    dmap,
    n_star_value: int,
    eps_origin: float | None = None,
    tail_window: float | None = None,
    v_step: float | None = None,
    tol_zero: float | None = None,
) -> MorseLabel:
    """Bucket one run by its tail behaviour.

    The horizon must leave room for the tail window (default 5 K) after
    transients; shorter runs come back undetermined rather than wrong.
    """
    K = dmap.K
    M = traj.space.M if traj.space is not None else float(np.max(np.abs(traj.values)))
    eps = EPS_ORIGIN_FACTOR * M if eps_origin is None else eps_origin
    w = 5.0 * K if tail_window is None else tail_window
    if traj.t_end < 2.0 * K + w - 1e-9 * K:
        raise ValueError("horizon shorter than burn-in plus tail window")
    n0 = smallest_odd_above(n_star_value)
    t_hi = traj.t_end
    t_lo = max(t_hi - w, 0.0)
    tail_sup = traj.sup_norm(t_lo, t_hi)
    base = {
        "tail_sup": tail_sup,
        "eps_origin": eps,
        "tail_window": [t_lo, t_hi],
        "n_star": n_star_value,
    }
    if tail_sup < eps:
        return MorseLabel("origin", None, n0, base)
    try:
        v_tail, stabilized = v_limit(traj, dmap, window=w, step=v_step, tol_zero=tol_zero)
    except AllZero:
        return MorseLabel("origin", None, n0, base | {"note": "all witnesses below tol"})
    base |= {"v_tail": vkey(v_tail), "stabilized": stabilized}
    if not stabilized:
        return MorseLabel("undetermined", None, n0, base)
    if v_tail == math.inf or v_tail >= n0:
        return MorseLabel("at_least", None, n0, base)
    return MorseLabel("equals", int(v_tail), n0, base)


def morse_report(records: list[dict]) -> dict:
    """Aggregate run records into counts, V transitions and violations.

    Each record carries seed, label (MorseLabel), and a trace dict from
    v_trace.  A violation is any strict increase of V between consecutive
    defined trace samples; under the theory V never increases, so entries
    here point at resolution problems rather than dynamics.
    """
    counts: dict[str, int] = {}
    transitions: dict[str, int] = {}
    violations = []
    for rec in records:
        label = str(rec["label"])
        counts[label] = counts.get(label, 0) + 1
        trace = rec.get("trace")
        if not trace:
            continue
        ts = trace["t"]
        vs = trace["v"]
        defined = np.nonzero(~np.isnan(vs))[0]
        if defined.size:
            key = f"{vkey(vs[defined[0]])}->{vkey(vs[defined[-1]])}"
            transitions[key] = transitions.get(key, 0) + 1
        for i, j in zip(defined[:-1], defined[1:]):
            if vs[j] > vs[i]:
                violations.append(
                    {
                        "seed": rec.get("seed"),
                        "t_from": float(ts[i]),
                        "t_to": float(ts[j]),
                        "v_from": vkey(vs[i]),
                        "v_to": vkey(vs[j]),
                    }
                )
    return {
        "runs": len(records),
        "label_counts": dict(sorted(counts.items())),
        "transitions": dict(sorted(transitions.items())),
        "ordering_violations": violations,
    }


@dataclass(frozen=True)
class DiagnosticResult:
    """Zeros whose delayed arguments are themselves zeros, per depth."""

    findings: tuple
    trivial: bool
    warning: str | None


def _zero_times(traj: Trajectory, t_lo: float, t_hi: float, tol: float) -> list[float]:
    scan = _get_scan(traj)
    lo = int(np.searchsorted(scan.times, t_lo, side="left"))
    hi = int(np.searchsorted(scan.times, t_hi, side="right"))
    ts = scan.times[lo:hi]
    vs = scan.values[lo:hi]
    zeros: list[float] = []
    for i in range(ts.size):
        if abs(vs[i]) <= tol:
            zeros.append(float(ts[i]))
        if i and vs[i - 1] * vs[i] < 0.0 and abs(vs[i - 1]) > tol and abs(vs[i]) > tol:
            zeros.append(float(brentq(traj.eval, float(ts[i - 1]), float(ts[i]))))
    zeros.sort()
    dedup: list[float] = []
    for z in zeros:
        if not dedup or z - dedup[-1] > 1e-10 * max(1.0, abs(z)):
            dedup.append(z)
    return dedup


def iterated_zero_diagnostic(
    traj: Trajectory,
    dmap,
    k_max: int = 3,
    tol: float | None = None,
    t_lo: float | None = None,
    t_hi: float | None = None,
) -> DiagnosticResult:
    """Search for zeros that stay zero under iterated delayed arguments.

    A finding (sigma, d) means x vanishes at sigma and at its first d
    iterated delayed times; depth k_max marks data degenerate enough to
    trivialize sign-change arguments.  The tolerance defaults to the
    witness tolerance; a tolerance at or above the phase-space bound M
    would declare everything zero, hence the warning.
    """
    tol = default_tol_zero(traj) if tol is None else tol
    warning = None
    M = traj.space.M if traj.space is not None else None
    if M is not None and tol >= M:
        warning = f"tolerance {tol!r} reaches the bound M = {M!r}; every value passes"
    a = 0.0 if t_lo is None else t_lo
    b = traj.t_end if t_hi is None else t_hi
    findings = []
    trivial = False
    for sigma in _zero_times(traj, a, b, tol):
        depth = 0
        u = sigma
        for _ in range(k_max):
            try:
                u = dmap.eta(u)
                if abs(traj.eval(u)) <= tol:
                    depth += 1
                else:
                    break
            except (InsufficientHistory, OutOfDomain):
                break
        if depth >= 1:
            findings.append((sigma, depth))
        if depth >= k_max:
            trivial = True
    return DiagnosticResult(tuple(findings), trivial, warning)
