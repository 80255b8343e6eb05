"""Shared fixtures: one reference run per delay family, reused read-only."""

from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest

from delaymorse import (
    ConstantDelay,
    DelayedArgumentMap,
    ImplicitDelay,
    IntegratorConfig,
    PhaseSpace,
    ThresholdDelay,
    affine_kernel,
    integrate,
    lag_echo,
    tanh_family,
)


def _bundle(model, delay, space, cfg, phi):
    traj = integrate(model, delay, phi, cfg, space)
    dmap = DelayedArgumentMap(traj, delay)
    return SimpleNamespace(
        model=model, delay=delay, space=space, cfg=cfg, phi=phi, traj=traj, dmap=dmap
    )


@pytest.fixture(scope="session")
def wright_run():
    """Delayed tanh feedback past the oscillatory instability (V -> 1)."""
    model = tanh_family(0.0, 1.6, 1.0, 2.5)
    space = PhaseSpace(M=2.5, K=1.0, L0=model.L0)
    cfg = IntegratorConfig(step=0.005, horizon=60.0)
    return _bundle(model, ConstantDelay(1.0), space, cfg, lambda s: 0.1)


@pytest.fixture(scope="session")
def damped_run():
    """Variant with instantaneous damping, so the a-coefficient is active."""
    model = tanh_family(1.0, 1.6, 1.0, 2.0)
    space = PhaseSpace(M=2.0, K=1.0, L0=model.L0)
    cfg = IntegratorConfig(step=0.005, horizon=40.0)
    return _bundle(model, ConstantDelay(1.0), space, cfg, lambda s: 0.3)


@pytest.fixture(scope="session")
def threshold_run():
    """Threshold lag with an affine kernel, smooth history."""
    model = tanh_family(0.0, 1.8, 1.0, 2.5)
    space = PhaseSpace(M=2.5, K=2.7, L0=model.L0)
    delay = ThresholdDelay(affine_kernel(1.0, 0.25), lip_a=0.25)
    cfg = IntegratorConfig(step=0.025, horizon=50.0)
    return _bundle(model, delay, space, cfg, lambda s: 0.3)


@pytest.fixture(scope="session")
def implicit_run():
    """Implicit two-value lag (echo form), smooth history."""
    model = tanh_family(0.0, 1.6, 1.0, 2.5)
    space = PhaseSpace(M=2.5, K=1.5, L0=model.L0)
    delay = ImplicitDelay(lag_echo(1.0, 0.05), lip_r1=0.05, lip_r2=0.05)
    cfg = IntegratorConfig(step=0.025, horizon=50.0)
    return _bundle(model, delay, space, cfg, lambda s: 0.25)


@pytest.fixture(scope="session")
def oscillatory_phi():
    """History with several sign changes inside one delay interval.

    Slope stays below the slowly-oscillating families' L0 so the
    integrator admits it.
    """

    def phi(s: float) -> float:
        return 0.1 * math.sin(15.0 * s)

    return phi


@pytest.fixture()
def rng_values():
    """Fresh deterministic float grid for sampling-style property tests."""
    rng = np.random.default_rng(20260822)
    return rng
