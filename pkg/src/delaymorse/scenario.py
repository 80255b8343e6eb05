"""Scenario configs and the ensemble drivers behind the CLI.

A scenario is a flat key = value file (with # comments) naming a feedback
family, a phase-space ball, a delay law, run controls and an ensemble.
Everything downstream is rebuilt from those strings, so a worker process
can recreate the exact same objects from the raw dict and outputs stay
bit-identical whatever the thread count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .delay import (
    ConstantDelay,
    ImplicitDelay,
    NoRoot,
    NonConvergence,
    ThresholdDelay,
    DelayedArgumentMap,
    affine_kernel,
    lag_echo,
    lag_mill,
    quadratic_kernel,
    validate_delay,
)
from .feedback import FeedbackModel, linear_family, tanh_family, validate_feedback
from .integrator import BoundViolation, IntegratorConfig, integrate
from .lyapunov import v_trace, write_vtrace_csv
from .morse import classify, morse_report, vkey
from .phase import PhaseSpace, write_trajectory_csv
from .segments import SplitMix64, random_segment
from .spectrum import Linearization, analyze, linearize

__all__ = [
    "ConfigError",
    "ValidationError",
    "Scenario",
    "parse_config",
    "load_scenario",
    "run_scenario",
    "run_validate",
    "run_sweep",
]


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


class ValidationError(RuntimeError):
    """A structural hypothesis failed its numerical check."""


_KNOWN_KEYS = {
    "name",
    "feedback.family",
    "feedback.a",
    "feedback.b",
    "feedback.c",
    "feedback.A",
    "feedback.B",
    "space.M",
    "space.K",
    "delay.kind",
    "delay.r0",
    "delay.kernel",
    "delay.lag",
    "delay.p",
    "delay.q",
    "run.step",
    "run.horizon",
    "run.tail_window",
    "run.v_step",
    "ensemble.size",
    "ensemble.seed",
    "ensemble.amplitude",
    "ensemble.slope",
    "ensemble.knots",
    "v.tol_zero",
    "validate.skip",
    "sweep.A",
    "sweep.B_from",
    "sweep.B_to",
    "sweep.B_steps",
    "sweep.tau",
}


def parse_config(text: str) -> dict:
    """Flat key = value lines; # starts a comment; keys are unique."""
    raw: dict[str, str] = {}
    for no, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {no}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError(f"line {no}: empty key")
        if key in raw:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        raw[key] = value
    if "name" not in raw or not raw["name"]:
        raise ConfigError("config needs a 'name'")
    return raw


def _need(raw: dict, key: str) -> str:
    if key not in raw:
        raise ConfigError(f"missing key {key!r}")
    return raw[key]


def _as_float(raw: dict, key: str, default: float | None = None) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return float(raw[key])
    except ValueError as err:
        raise ConfigError(f"{key} = {raw[key]!r} is not a number") from err


def _as_int(raw: dict, key: str, default: int | None = None) -> int:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return int(raw[key])
    except ValueError as err:
        raise ConfigError(f"{key} = {raw[key]!r} is not an integer") from err


def _float_list(raw: dict, key: str) -> list[float]:
    try:
        return [float(tok) for tok in _need(raw, key).split(",") if tok.strip()]
    except ValueError as err:
        raise ConfigError(f"{key} = {raw[key]!r} is not a comma list of numbers") from err


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs, rebuilt deterministically from raw strings."""

    name: str
    raw: dict
    model: FeedbackModel | None
    space: PhaseSpace | None
    delay_model: object | None
    run_cfg: IntegratorConfig | None
    ensemble: dict | None
    tail_window: float | None
    v_step: float | None
    tol_zero: float | None
    skips: frozenset
    sweep: dict | None


def _build_feedback(raw: dict, M: float) -> FeedbackModel:
    family = _need(raw, "feedback.family")
    if family == "tanh":
        return tanh_family(
            _as_float(raw, "feedback.a", 0.0),
            _as_float(raw, "feedback.b"),
            _as_float(raw, "feedback.c", 1.0),
            M,
        )
    if family == "linear":
        return linear_family(_as_float(raw, "feedback.A"), _as_float(raw, "feedback.B"), M)
    raise ConfigError(f"feedback.family = {family!r} (want tanh or linear)")


def _build_delay(raw: dict, space: PhaseSpace):
    kind = _need(raw, "delay.kind")
    if kind == "constant":
        return ConstantDelay(_as_float(raw, "delay.r0"))
    if kind == "threshold":
        shape = raw.get("delay.kernel", "affine")
        p = _as_float(raw, "delay.p")
        q = _as_float(raw, "delay.q")
        if shape == "affine":
            return ThresholdDelay(affine_kernel(p, q), lip_a=abs(q))
        if shape == "quadratic":
            return ThresholdDelay(quadratic_kernel(p, q), lip_a=2.0 * abs(q) * space.M)
        raise ConfigError(f"delay.kernel = {shape!r} (want affine or quadratic)")
    if kind == "implicit":
        shape = raw.get("delay.lag", "echo")
        p = _as_float(raw, "delay.p")
        q = _as_float(raw, "delay.q")
        if shape == "echo":
            return ImplicitDelay(lag_echo(p, q), lip_r1=abs(q), lip_r2=abs(q))
        if shape == "mill":
            return ImplicitDelay(lag_mill(p, q), lip_r1=abs(q), lip_r2=abs(q))
        raise ConfigError(f"delay.lag = {shape!r} (want echo or mill)")
    raise ConfigError(f"delay.kind = {kind!r} (want constant, threshold or implicit)")


def load_scenario(raw: dict | str) -> Scenario:
    if isinstance(raw, str):
        raw = parse_config(raw)
    name = raw["name"]
    skips = frozenset(
        tok.strip() for tok in raw.get("validate.skip", "").split(",") if tok.strip()
    )
    sweep = None
    if any(k.startswith("sweep.") for k in raw):
        sweep = {
            "A": _float_list(raw, "sweep.A"),
            "B_from": _as_float(raw, "sweep.B_from"),
            "B_to": _as_float(raw, "sweep.B_to"),
            "B_steps": _as_int(raw, "sweep.B_steps"),
            "tau": _float_list(raw, "sweep.tau"),
        }
        if sweep["B_steps"] < 1:
            raise ConfigError("sweep.B_steps must be at least 1")

    model = space = delay_model = run_cfg = None
    ensemble = None
    tail_window = v_step = tol_zero = None
    if "space.M" in raw:
        M = _as_float(raw, "space.M")
        K = _as_float(raw, "space.K")
        model = _build_feedback(raw, M)
        space = PhaseSpace(M=M, K=K, L0=model.L0)
        delay_model = _build_delay(raw, space)
        if "run.step" in raw:
            run_cfg = IntegratorConfig(
                step=_as_float(raw, "run.step"),
                horizon=_as_float(raw, "run.horizon"),
            )
        if "ensemble.size" in raw:
            ensemble = {
                "size": _as_int(raw, "ensemble.size"),
                "seed": _as_int(raw, "ensemble.seed"),
                "amplitude": _as_float(raw, "ensemble.amplitude", 0.9),
                "slope": _as_float(raw, "ensemble.slope", 0.55),
                "knots": _as_int(raw, "ensemble.knots", 6),
            }
            if ensemble["size"] < 1:
                raise ConfigError("ensemble.size must be at least 1")
            if not 0.0 < ensemble["amplitude"] < 1.0:
                raise ConfigError("ensemble.amplitude must sit strictly inside (0, 1)")
            if not 0.0 < ensemble["slope"] < 0.75:
                raise ConfigError(
                    "ensemble.slope must sit in (0, 0.75): mesh resampling can "
                    "steepen a kink by up to 4/3, which must stay below L0"
                )
        tail_window = (
            _as_float(raw, "run.tail_window") if "run.tail_window" in raw else None
        )
        v_step = _as_float(raw, "run.v_step") if "run.v_step" in raw else None
        if raw.get("v.tol_zero", "auto") != "auto":
            tol_zero = _as_float(raw, "v.tol_zero")
    return Scenario(
        name=name,
        raw=dict(raw),
        model=model,
        space=space,
        delay_model=delay_model,
        run_cfg=run_cfg,
        ensemble=ensemble,
        tail_window=tail_window,
        v_step=v_step,
        tol_zero=tol_zero,
        skips=skips,
        sweep=sweep,
    )


def _skip_filter(failures, skips) -> list[str]:
    return [
        msg
        for msg in failures
        if not any(f"({tag})" in msg for tag in skips)
    ]


def _check_hypotheses(scn: Scenario, samples: int = 0, seed: int = 0) -> dict:
    """Fail-fast hypothesis checks; honors validate.skip tags."""
    out: dict = {}
    if scn.model is None:
        return out
    fb = validate_feedback(scn.model)
    fb_failures = _skip_filter(fb.failures, scn.skips)
    out["feedback"] = fb.as_dict() | {"effective_failures": fb_failures}
    if fb_failures:
        raise ValidationError("; ".join(fb_failures))
    if scn.delay_model is not None and scn.space is not None:
        dl = validate_delay(scn.delay_model, scn.space, samples=samples, seed=seed)
        dl_failures = _skip_filter(dl.failures, scn.skips)
        out["delay"] = dl.as_dict() | {"effective_failures": dl_failures}
        if dl_failures:
            raise ValidationError("; ".join(dl_failures))
    return out


def _run_member(raw: dict, index: int, n_star_value: int, out_dir: str | None) -> dict:
    """One ensemble member, rebuilt from raw strings (process-safe)."""
    scn = load_scenario(raw)
    ens = scn.ensemble
    space = scn.space
    rng = SplitMix64(ens["seed"]).spawn(index)
    phi = random_segment(
        rng,
        K=space.K,
        amplitude=ens["amplitude"] * space.M,
        slope=ens["slope"] * space.L0,
        knots=ens["knots"],
    )
    record: dict = {"member": index, "seed": ens["seed"]}
    try:
        traj = integrate(scn.model, scn.delay_model, phi, scn.run_cfg, space)
    except (BoundViolation, NonConvergence, NoRoot) as err:
        record["error"] = f"{type(err).__name__}: {err}"
        return record
    dmap = DelayedArgumentMap(traj, scn.delay_model, K=space.K)
    trace = v_trace(traj, dmap, t_start=0.0, step=scn.v_step, tol_zero=scn.tol_zero)
    label = classify(
        traj,
        dmap,
        n_star_value,
        tail_window=scn.tail_window,
        v_step=scn.v_step,
        tol_zero=scn.tol_zero,
    )
    record["label"] = label
    record["trace"] = trace
    record["tail_sup"] = label.evidence["tail_sup"]
    if out_dir is not None:
        write_trajectory_csv(
            traj, os.path.join(out_dir, f"traj_{index:03d}.csv"), extra_order=("r", "eta")
        )
        write_vtrace_csv(os.path.join(out_dir, f"vtrace_{index:03d}.csv"), trace)
    return record


def run_scenario(
    scn: Scenario,
    out_dir: str,
    threads: int = 1,
    seed_override: int | None = None,
    plots: bool = False,
) -> dict:
    """Integrate the ensemble, classify every member, write the report set.

    Outputs in out_dir: traj_NNN.csv and vtrace_NNN.csv per member,
    spectrum.json, morse.json, and figures when plots is requested.
    Returns the morse report dict.
    """
    if scn.ensemble is None or scn.run_cfg is None:
        raise ConfigError(f"scenario {scn.name!r} has no ensemble/run section")
    raw = dict(scn.raw)
    if seed_override is not None:
        raw["ensemble.seed"] = str(int(seed_override))
        scn = load_scenario(raw)
    _check_hypotheses(scn)
    os.makedirs(out_dir, exist_ok=True)

    lin = linearize(scn.model, scn.delay_model)
    rep = analyze(lin)
    with open(os.path.join(out_dir, "spectrum.json"), "w") as fh:
        json.dump({"scenario": scn.name} | rep.as_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    size = scn.ensemble["size"]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_member, raw, i, rep.n_star, out_dir)
                for i in range(size)
            ]
            records = [f.result() for f in futures]
    else:
        records = [_run_member(raw, i, rep.n_star, out_dir) for i in range(size)]

    report = morse_report([r for r in records if "label" in r])
    failures = [
        {"member": r["member"], "error": r["error"]} for r in records if "error" in r
    ]
    doc = {
        "scenario": scn.name,
        "spectrum": rep.as_dict(),
        "runs": [
            {
                "member": r["member"],
                "seed": r["seed"],
                "label": str(r["label"]) if "label" in r else None,
                "v_tail": r["label"].evidence.get("v_tail") if "label" in r else None,
                "tail_sup": r.get("tail_sup"),
                "error": r.get("error"),
            }
            for r in records
        ],
        "report": report,
        "failures": failures,
    }
    with open(os.path.join(out_dir, "morse.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")

    if plots:
        from . import plots as _plots

        _plots.plot_trajectories(out_dir)
        _plots.plot_vtraces(out_dir)
    if failures:
        raise NonConvergence(
            f"{len(failures)} member(s) failed: " + "; ".join(f["error"] for f in failures)
        )
    return doc


def run_validate(scn: Scenario, samples: int = 200, seed: int = 20260822) -> dict:
    """Full hypothesis validation including sampled Lipschitz ratios."""
    if samples != 0 and samples < 100:
        raise ConfigError("validate needs samples = 0 (structural) or at least 100")
    return _check_hypotheses(scn, samples=samples, seed=seed)


def run_sweep(scn: Scenario, out_dir: str, plots: bool = False) -> list[dict]:
    """Root-count chart over a grid of linearizations; writes sweep.csv."""
    if scn.sweep is None:
        raise ConfigError(f"scenario {scn.name!r} has no sweep section")
    sw = scn.sweep
    if sw["B_steps"] == 1:
        bs = [sw["B_from"]]
    else:
        bs = list(np.linspace(sw["B_from"], sw["B_to"], sw["B_steps"]))
    rows = []
    for A in sw["A"]:
        for B in bs:
            for tau in sw["tau"]:
                rep = analyze(Linearization(float(A), float(B), float(tau)))
                rows.append(
                    {
                        "A": float(A),
                        "B": float(B),
                        "tau": float(tau),
                        "m_star": rep.m_star,
                        "hyperbolic": int(rep.hyperbolic),
                        "n_star": rep.n_star,
                        "axis_min": rep.axis_min,
                    }
                )
    os.makedirs(out_dir, exist_ok=True)
    cols = ("A", "B", "tau", "m_star", "hyperbolic", "n_star", "axis_min")
    with open(os.path.join(out_dir, "sweep.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(format(float(row[c]), ".17g") for c in cols) + "\n")
    if plots:
        from . import plots as _plots

        _plots.plot_stability(os.path.join(out_dir, "sweep.csv"))
    return rows
