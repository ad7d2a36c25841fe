"""Experiment configuration: schema validation, presets, and builders.

A configuration is a JSON object with six blocks (system, policy, initial,
sim, perturbation, outputs).  Unknown keys are rejected; all dimension
consistency is checked when the experiment objects are built.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .hybridsim import PerturbationSpec, SimConfig
from .policy import (TabuadaBaseline, TimerParams, design_async, design_sync)
from .system import Cascade, ObserverConfig, build_error_system


class ParseError(Exception):
    """Configuration rejected; the message carries the offending field path."""


_BLOCKS = ("system", "policy", "initial", "sim", "perturbation", "outputs")

_BLOCK_KEYS = {
    "system": {"A", "B", "C", "L"},
    "policy": {"kind", "delta", "rho", "lambda", "Q", "gamma_x", "gamma_e",
               "P2", "epsilon", "alpha", "p", "relaxed_norm",
               "sigma", "alpha_rate", "gamma_gain"},
    "initial": {"x0", "nu0", "xhat0"},
    "sim": {"dt", "event_tol", "t_max", "j_max", "convergence_radius"},
    "perturbation": {"sample_noise_amp", "guard_noise_amp", "timer_drift_amp",
                     "delay_slack", "noise_kind", "seed"},
    "outputs": {"dir", "formats"},
}

_POLICY_KEYS = {
    "sync": {"kind", "delta", "rho", "lambda", "Q", "gamma_x", "gamma_e",
             "P2"},
    "async": {"kind", "delta", "rho", "lambda", "Q", "gamma_x", "epsilon",
              "alpha", "p", "relaxed_norm"},
    "tabuada": {"kind", "delta", "rho", "sigma", "alpha_rate", "gamma_gain"},
}


@dataclass
class ExperimentConfig:
    system: dict
    policy: dict
    initial: dict
    sim: dict
    perturbation: dict
    outputs: dict = field(default_factory=dict)

    def to_dict(self):
        return copy.deepcopy({
            "system": self.system, "policy": self.policy,
            "initial": self.initial, "sim": self.sim,
            "perturbation": self.perturbation, "outputs": self.outputs})


def _fail(path, msg):
    raise ParseError(f"{path}: {msg}")


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    if not np.isfinite(v):
        _fail(path, "value must be finite")
    return float(v)


def _vector(v, path):
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of numbers")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _matrix(v, path):
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of rows")
    rows = []
    width = None
    for i, row in enumerate(v):
        r = _vector(row, f"{path}[{i}]")
        if width is None:
            width = len(r)
        elif len(r) != width:
            _fail(path, "ragged matrix rows")
        rows.append(r)
    return rows


def _check_keys(block, allowed, path):
    if not isinstance(block, dict):
        _fail(path, "expected an object")
    unknown = set(block) - allowed
    if unknown:
        _fail(path, f"unknown keys {sorted(unknown)}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate the raw object tree and return a normalized config."""
    if not isinstance(raw, dict):
        raise ParseError("config: expected a top-level object")
    unknown = set(raw) - set(_BLOCKS)
    if unknown:
        raise ParseError(f"config: unknown blocks {sorted(unknown)}")
    for name in ("system", "policy", "initial"):
        if name not in raw:
            raise ParseError(f"config: missing block '{name}'")
    for name in _BLOCKS:
        _check_keys(raw.get(name, {}), _BLOCK_KEYS[name], name)

    sysblock = raw["system"]
    system = {}
    for key in ("A", "B", "C"):
        if key not in sysblock:
            _fail("system", f"missing matrix '{key}'")
        system[key] = _matrix(sysblock[key], f"system.{key}")
    if sysblock.get("L") is not None:
        system["L"] = _matrix(sysblock["L"], "system.L")
    else:
        system["L"] = None

    pol = raw["policy"]
    kind = pol.get("kind")
    if kind not in _POLICY_KEYS:
        _fail("policy.kind", f"must be one of {sorted(_POLICY_KEYS)}, "
                             f"got {kind!r}")
    _check_keys(pol, _POLICY_KEYS[kind], "policy")
    policy = {"kind": kind,
              "delta": _number(pol.get("delta", 1e-3), "policy.delta"),
              "rho": _number(pol.get("rho", 2e-3), "policy.rho")}
    if kind == "sync":
        policy.update(
            Q=_matrix(pol["Q"], "policy.Q"),
            gamma_x=_number(pol["gamma_x"], "policy.gamma_x"),
            gamma_e=_number(pol["gamma_e"], "policy.gamma_e"),
            P2=_matrix(pol["P2"], "policy.P2"),
            **{"lambda": _number(pol.get("lambda", 1.0), "policy.lambda")})
    elif kind == "async":
        relaxed = pol.get("relaxed_norm", False)
        if not isinstance(relaxed, bool):
            _fail("policy.relaxed_norm", "expected a boolean")
        policy.update(
            Q=_matrix(pol["Q"], "policy.Q"),
            gamma_x=_number(pol["gamma_x"], "policy.gamma_x"),
            epsilon=_number(pol["epsilon"], "policy.epsilon"),
            alpha=_vector(pol["alpha"], "policy.alpha"),
            p=_vector(pol["p"], "policy.p"),
            relaxed_norm=relaxed,
            **{"lambda": _number(pol.get("lambda", 1.0), "policy.lambda")})
    else:
        policy.update(
            sigma=_number(pol["sigma"], "policy.sigma"),
            alpha_rate=_number(pol["alpha_rate"], "policy.alpha_rate"),
            gamma_gain=_number(pol["gamma_gain"], "policy.gamma_gain"))

    init = raw["initial"]
    initial = {"x0": _vector(init["x0"], "initial.x0"),
               "nu0": _vector(init["nu0"], "initial.nu0"),
               "xhat0": (None if init.get("xhat0") is None
                         else _vector(init["xhat0"], "initial.xhat0"))}
    for key in ("x0", "nu0"):
        if key not in init:
            _fail("initial", f"missing '{key}'")

    simblock = raw.get("sim", {})
    sim = {"dt": _number(simblock.get("dt", 1e-3), "sim.dt"),
           "event_tol": _number(simblock.get("event_tol", 1e-6),
                                "sim.event_tol"),
           "t_max": _number(simblock.get("t_max", 10.0), "sim.t_max"),
           "j_max": int(_number(simblock.get("j_max", 200000), "sim.j_max")),
           "convergence_radius": _number(
               simblock.get("convergence_radius", 1e-4),
               "sim.convergence_radius")}

    pert = raw.get("perturbation", {})
    kind_noise = pert.get("noise_kind", "none")
    if kind_noise not in ("none", "uniform"):
        _fail("perturbation.noise_kind", "must be 'none' or 'uniform'")
    perturbation = {
        "sample_noise_amp": _number(pert.get("sample_noise_amp", 0.0),
                                    "perturbation.sample_noise_amp"),
        "guard_noise_amp": _number(pert.get("guard_noise_amp", 0.0),
                                   "perturbation.guard_noise_amp"),
        "timer_drift_amp": _number(pert.get("timer_drift_amp", 0.0),
                                   "perturbation.timer_drift_amp"),
        "delay_slack": _number(pert.get("delay_slack", 0.0),
                               "perturbation.delay_slack"),
        "noise_kind": kind_noise,
        "seed": int(_number(pert.get("seed", 0), "perturbation.seed"))}

    out = raw.get("outputs", {})
    formats = out.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or any(
            f not in ("csv", "json") for f in formats):
        _fail("outputs.formats", "must be a list drawn from ['csv', 'json']")
    outputs = {"dir": out.get("dir", "out"), "formats": list(formats)}

    return ExperimentConfig(system=system, policy=policy, initial=initial,
                            sim=sim, perturbation=perturbation,
                            outputs=outputs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)


@dataclass
class Experiment:
    """Fully built simulation inputs derived from a config."""

    cascade: Cascade
    policy: object
    observer: ObserverConfig | None
    sim: SimConfig
    pert: PerturbationSpec
    x0: np.ndarray
    nu0: np.ndarray
    xhat0: np.ndarray | None
    lam: float


def build_experiment(cfg: ExperimentConfig, seed=None) -> Experiment:
    """Instantiate cascade, designed policy, and simulation settings.

    Raises ValueError / DesignInfeasible / NotStabilized on inconsistent
    dimensions or infeasible policy parameters.
    """
    cascade = Cascade(A=cfg.system["A"], B=cfg.system["B"], C=cfg.system["C"])
    observer = None
    if cfg.system["L"] is not None:
        observer = ObserverConfig(L=cfg.system["L"])
        if observer.L.shape != (cascade.n, cascade.q):
            raise ValueError(
                f"L must be {cascade.n}x{cascade.q}, got {observer.L.shape}")

    p = cfg.policy
    timer = TimerParams(delta=p["delta"], rho=p["rho"])
    if p["kind"] == "sync":
        err = build_error_system(cascade)
        pol = design_sync(err, np.array(p["Q"]), p["gamma_x"], p["gamma_e"],
                          np.array(p["P2"]), timer)
        lam = p["lambda"]
    elif p["kind"] == "async":
        err = build_error_system(cascade)
        pol = design_async(err, np.array(p["Q"]), p["gamma_x"], p["epsilon"],
                           np.array(p["alpha"]), np.array(p["p"]), timer,
                           relaxed_norm_variant=p["relaxed_norm"])
        lam = p["lambda"]
    else:
        pol = TabuadaBaseline(sigma=p["sigma"], alpha_rate=p["alpha_rate"],
                              gamma_gain=p["gamma_gain"], timer=timer)
        lam = 1.0

    x0 = np.array(cfg.initial["x0"], dtype=float)
    nu0 = np.array(cfg.initial["nu0"], dtype=float)
    if x0.shape != (cascade.n,):
        raise ValueError(f"x0 must have length {cascade.n}")
    if nu0.shape != (cascade.q,):
        raise ValueError(f"nu0 must have length {cascade.q}")
    xhat0 = None
    if cfg.initial["xhat0"] is not None:
        xhat0 = np.array(cfg.initial["xhat0"], dtype=float)
        if xhat0.shape != (cascade.n,):
            raise ValueError(f"xhat0 must have length {cascade.n}")

    s = cfg.sim
    sim = SimConfig(dt=s["dt"], event_tol=s["event_tol"], t_max=s["t_max"],
                    j_max=s["j_max"],
                    convergence_radius=s["convergence_radius"])
    pb = dict(cfg.perturbation)
    if seed is not None:
        pb["seed"] = int(seed)
    pert = PerturbationSpec(**pb)
    return Experiment(cascade=cascade, policy=pol, observer=observer,
                      sim=sim, pert=pert, x0=x0, nu0=nu0, xhat0=xhat0,
                      lam=lam)


_SYS_71 = {"A": [[2.0, 1.5], [2.0, 0.0]],
           "B": [[-18.0], [0.0]],
           "C": [[0.5, 0.5]]}

# observer gain for the xhatdot = A xhat + B nu + L(y - C xhat) convention;
# A - LC must be Hurwitz
_L_71 = [[14.77], [6.68]]

_SYS_72 = {"A": [[1.0, 1.0], [0.0, 1.0]],
           "B": [[-2.1961, -0.7545], [-0.7545, -2.7146]],
           "C": [[1.0, 0.0], [0.0, 1.0]]}

_SIM_DEFAULTS = {"dt": 1e-3, "event_tol": 1e-6, "t_max": 10.0,
                 "j_max": 200000, "convergence_radius": 1e-4}

_PERT_QUIET = {"sample_noise_amp": 0.0, "guard_noise_amp": 0.0,
               "timer_drift_amp": 0.0, "delay_slack": 0.0,
               "noise_kind": "none", "seed": 0}


def presets():
    """Built-in experiment presets reproducing the published studies."""
    sync_policy = {"kind": "sync", "Q": [[1.0, 0.0], [0.0, 1.0]],
                   "gamma_x": 1e-3, "gamma_e": 1e3, "P2": [[0.1]],
                   "delta": 1e-3, "rho": 2e-3, "lambda": 1.0}
    return {
        "paper-7.1-sync": {
            "system": dict(_SYS_71, L=None),
            "policy": dict(sync_policy),
            "initial": {"x0": [1.0, 1.0], "nu0": [0.0], "xhat0": None},
            "sim": dict(_SIM_DEFAULTS),
            # amplitude of the published noise study; disabled by default
            "perturbation": dict(_PERT_QUIET, sample_noise_amp=0.1),
            "outputs": {"dir": "out/paper-7.1-sync",
                        "formats": ["csv", "json"]},
        },
        "paper-7.1-tabuada": {
            "system": dict(_SYS_71, L=None),
            "policy": {"kind": "tabuada", "sigma": 0.9, "alpha_rate": 1.0,
                       "gamma_gain": 4.046, "delta": 1e-3, "rho": 2e-3},
            "initial": {"x0": [10.0, 1.0], "nu0": [0.0], "xhat0": None},
            "sim": dict(_SIM_DEFAULTS),
            "perturbation": dict(_PERT_QUIET),
            "outputs": {"dir": "out/paper-7.1-tabuada",
                        "formats": ["csv", "json"]},
        },
        "paper-7.1-observer": {
            "system": dict(_SYS_71, L=_L_71),
            "policy": dict(sync_policy),
            "initial": {"x0": [1.0, 1.0], "nu0": [0.0], "xhat0": [0.0, 0.0]},
            "sim": dict(_SIM_DEFAULTS, t_max=15.0),
            "perturbation": dict(_PERT_QUIET),
            "outputs": {"dir": "out/paper-7.1-observer",
                        "formats": ["csv", "json"]},
        },
        "paper-7.2-async": {
            "system": dict(_SYS_72, L=None),
            "policy": {"kind": "async", "Q": [[1.0, 0.0], [0.0, 1.0]],
                       "gamma_x": 1e-3, "epsilon": 0.05,
                       "alpha": [0.9, 0.1], "p": [1.0, 1.0],
                       "delta": 1e-3, "rho": 2e-3, "lambda": 1.0,
                       "relaxed_norm": False},
            "initial": {"x0": [1.0, 1.0], "nu0": [0.0, 0.0], "xhat0": None},
            "sim": dict(_SIM_DEFAULTS),
            "perturbation": dict(_PERT_QUIET),
            "outputs": {"dir": "out/paper-7.2-async",
                        "formats": ["csv", "json"]},
        },
    }


def preset_config(name, seed=None) -> ExperimentConfig:
    table = presets()
    if name not in table:
        raise ParseError(
            f"unknown preset {name!r}; available: {sorted(table)}")
    cfg = parse_config(table[name])
    if seed is not None:
        cfg.perturbation["seed"] = int(seed)
    return cfg
