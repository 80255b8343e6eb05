"""Negative-feedback nonlinearities and their coefficient decomposition.

A feedback model is a scalar field f(x, y) driving x'(t) = f(x(t), x(t-r))
together with its partial derivatives and the bounds M, L0 of the phase
space it is used on.  The decomposition splits f along a trajectory into
a(t)*x(t) + b(t)*x(t-r) with b < 0, which is what the sign-counting and
spectral machinery consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "NonNegativeB",
    "FeedbackModel",
    "FeedbackReport",
    "tanh_family",
    "linear_family",
    "validate_feedback",
    "coefficient_a",
    "coefficient_b",
]

TOL_ZERO = 1e-12  # |y| below this uses the derivative limit for b


class NonNegativeB(ValueError):
    """The delayed coefficient b came out >= 0: feedback is not negative."""


@dataclass(frozen=True)
class FeedbackModel:
    """f with partials and the phase-space bounds it is declared on.

    Requirements checked at construction: f(0, 0) = 0 and D2 f(0, 0) < 0.
    The sign conditions on the whole domain are grid-checked separately by
    validate_feedback.
    """

    f: object
    d1f: object
    d2f: object
    M: float
    L0: float
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.M <= 0 or self.L0 <= 0:
            raise ValueError("M and L0 must be positive")
        f00 = float(self.f(0.0, 0.0))
        if abs(f00) > 1e-12 * max(1.0, self.L0):
            raise ValueError(f"f(0,0) = {f00!r}, expected 0")
        if float(self.d2f(0.0, 0.0)) >= 0.0:
            raise ValueError("D2 f(0,0) must be negative")


def tanh_family(a: float, b: float, c: float, M: float) -> FeedbackModel:
    """f(x, y) = -a*x - b*tanh(c*y) with a >= 0 and b, c > 0.

    L0 is the exact sup of |f| over [-M, M]^2.
    """
    if a < 0 or b <= 0 or c <= 0:
        raise ValueError("tanh family needs a >= 0 and b, c > 0")
    L0 = a * M + b * math.tanh(c * M)

    def f(x, y):
        return -a * x - b * math.tanh(c * y)

    def d1f(x, y):
        return -a

    def d2f(x, y):
        t = math.tanh(c * y)
        return -b * c * (1.0 - t * t)

    return FeedbackModel(f, d1f, d2f, M=M, L0=L0, name="tanh")


def linear_family(A: float, B: float, M: float) -> FeedbackModel:
    """f(x, y) = A*x + B*y with B < 0; useful for crafted linear runs."""
    if B >= 0:
        raise ValueError("linear family needs B < 0")
    L0 = (abs(A) + abs(B)) * M

    def f(x, y):
        return A * x + B * y

    return FeedbackModel(f, lambda x, y: A, lambda x, y: B, M=M, L0=L0, name="linear")


@dataclass
class FeedbackReport:
    """Grid-check results for the standing sign and bound hypotheses."""

    h2_pass: bool
    h3_pass: bool
    l0_declared: float
    l0_estimated: float
    l0_pass: bool
    derivatives_pass: bool
    d2f_origin: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.h2_pass and self.h3_pass and self.l0_pass and self.derivatives_pass

    def as_dict(self) -> dict:
        return {
            "h2_pass": self.h2_pass,
            "h3_pass": self.h3_pass,
            "l0_declared": self.l0_declared,
            "l0_estimated": self.l0_estimated,
            "l0_pass": self.l0_pass,
            "derivatives_pass": self.derivatives_pass,
            "d2f_origin": self.d2f_origin,
            "failures": list(self.failures),
        }


def validate_feedback(model: FeedbackModel, samples: int = 400) -> FeedbackReport:
    """Grid-check the delayed-sign, boundary-sign and Lipschitz declarations.

    The delayed sign condition y*f(0, y) < 0 is sampled on log-spaced y so
    behaviour near the origin is exercised; the boundary condition
    u*f(u, v) < 0 is sampled on {|u| >= max(M, |v|)} extended slightly
    beyond M; L0 is re-estimated as the grid sup of |f| over [-M, M]^2.
    """
    if samples < 100:
        raise ValueError("samples must be at least 100")
    M = model.M
    failures: list[str] = []

    # (H2): y * f(0, y) < 0 away from 0 on a log-spaced grid.
    ys = np.geomspace(1e-8 * M, M, samples)
    h2_pass = True
    for y in np.concatenate([-ys[::-1], ys]):
        if y * model.f(0.0, float(y)) >= 0.0:
            h2_pass = False
            failures.append(f"(H2) violated: y*f(0,y) >= 0 at y={float(y):g}")
            break
    d2f_origin = float(model.d2f(0.0, 0.0))
    if d2f_origin >= 0.0:
        h2_pass = False
        failures.append("(H2) violated: D2 f(0,0) >= 0")

    # (H3): u * f(u, v) < 0 on |u| >= max(M, |v|), sampled a little past M.
    h3_pass = True
    n_u = max(8, samples // 16)
    n_v = max(17, samples // 8)
    us = np.linspace(M, 1.25 * M, n_u)
    for u0 in us:
        vs = np.linspace(-u0, u0, n_v)
        for sgn in (1.0, -1.0):
            u = sgn * u0
            for v in vs:
                if u * model.f(float(u), float(v)) >= 0.0:
                    h3_pass = False
                    failures.append(
                        f"(H3) violated: u*f(u,v) >= 0 at (u,v)=({float(u):g},{float(v):g})"
                    )
                    break
            if not h3_pass:
                break
        if not h3_pass:
            break

    # L0 re-estimate: grid sup of |f| over the closed square.
    n = max(64, int(math.isqrt(samples)) * 8)
    grid = np.linspace(-M, M, n)
    l0_est = 0.0
    for x in grid:
        fx = max(abs(model.f(float(x), float(y))) for y in grid)
        l0_est = max(l0_est, fx)
    l0_pass = bool(abs(model.L0 - l0_est) <= 0.02 * max(model.L0, l0_est))
    if not l0_pass:
        failures.append(
            f"(H1) mismatch: declared L0={model.L0!r}, grid estimate {l0_est!r}"
        )

    # Declared partials vs central differences on an interior grid.
    d = 1e-6 * max(1.0, M)
    derivatives_pass = True
    pts = np.linspace(-0.9 * M, 0.9 * M, 9)
    for x in pts:
        for y in pts:
            x = float(x)
            y = float(y)
            fd1 = (model.f(x + d, y) - model.f(x - d, y)) / (2.0 * d)
            fd2 = (model.f(x, y + d) - model.f(x, y - d)) / (2.0 * d)
            scale = max(1.0, abs(fd1), abs(fd2))
            if abs(fd1 - model.d1f(x, y)) > 1e-6 * scale or abs(
                fd2 - model.d2f(x, y)
            ) > 1e-6 * scale:
                derivatives_pass = False
                failures.append(f"partials disagree with central differences at ({x},{y})")
                break
        if not derivatives_pass:
            break

    return FeedbackReport(
        h2_pass=h2_pass,
        h3_pass=h3_pass,
        l0_declared=model.L0,
        l0_estimated=l0_est,
        l0_pass=l0_pass,
        derivatives_pass=derivatives_pass,
        d2f_origin=d2f_origin,
        failures=failures,
    )


_GL_NODES, _GL_WEIGHTS = leggauss(16)
# shifted to [0, 1]
_GL01_NODES = 0.5 * (_GL_NODES + 1.0)
_GL01_WEIGHTS = 0.5 * _GL_WEIGHTS


def coefficient_a(model: FeedbackModel, x_val: float, x_delayed: float) -> float:
    """Mean of D1 f(s*x_val, x_delayed) over s in [0, 1] (16-node Gauss).

    This is the instantaneous coefficient in the exact identity
    a*x_val + b*x_delayed = f(x_val, x_delayed).
    """
    d1f = model.d1f
    total = 0.0
    for s, w in zip(_GL01_NODES, _GL01_WEIGHTS):
        total += w * d1f(s * x_val, x_delayed)
    return float(total)


def coefficient_b(model: FeedbackModel, x_delayed: float) -> float:
    """Delayed coefficient f(0, y)/y, continued by D2 f(0,0) through y = 0.

    Raises NonNegativeB when the result is not negative, since every
    downstream argument needs strictly negative delayed feedback.
    """
    y = float(x_delayed)
    if abs(y) < TOL_ZERO:
        b = float(model.d2f(0.0, 0.0))
    else:
        b = float(model.f(0.0, y)) / y
    if b >= 0.0:
        raise NonNegativeB(f"b({y!r}) = {b!r} >= 0")
    return b
