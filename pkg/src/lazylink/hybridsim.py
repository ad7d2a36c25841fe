"""Hybrid solution engine: RK4 flow, bisection event localization, jumps.

A run produces a :class:`HybridArc`: samples indexed by hybrid time (t, j)
plus an event log of transmissions.  One integration uses a fixed step with
bisection refinement at guard crossings, which keeps runs deterministic for
a given seed.  Nondeterminism of the underlying hybrid inclusion on the
overlap of flow and jump sets is resolved with jump priority.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .policy import (AsyncPolicy, Classification, SyncPolicy, TabuadaBaseline,
                     async_triggered, sync_classify, tabuada_classify,
                     timer_rate)
from .system import Cascade, ObserverConfig, build_error_system

APPARENT_EPS = 1e-12      # |e_i| below this at a trigger => apparent event


class NonFiniteState(Exception):
    pass


class Mode(enum.Enum):
    STATE_FEEDBACK = "state_feedback"
    OUTPUT_FEEDBACK = "output_feedback"


@dataclass
class HybridState:
    x: np.ndarray
    e: np.ndarray
    tau: np.ndarray
    xhat: np.ndarray | None = None
    mode: Mode = Mode.STATE_FEEDBACK

    def copy(self):
        return HybridState(
            x=self.x.copy(), e=self.e.copy(), tau=self.tau.copy(),
            xhat=None if self.xhat is None else self.xhat.copy(),
            mode=self.mode)

    @property
    def eta(self):
        """Estimation error x - xhat (output feedback only)."""
        if self.xhat is None:
            return None
        return self.x - self.xhat


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    event_tol: float = 1e-6
    t_max: float = 10.0
    j_max: int = 200000
    convergence_radius: float = 1e-4

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.event_tol >= self.dt:
            raise ValueError("event_tol must be smaller than dt")
        if self.t_max < 0.0:
            raise ValueError("t_max must be nonnegative")


@dataclass(frozen=True)
class PerturbationSpec:
    """Knobs of the perturbed model: measurement noise on samples and guard
    inputs, timer drift, and delay realized as excess flow after a trigger."""

    sample_noise_amp: float = 0.0
    guard_noise_amp: float = 0.0
    timer_drift_amp: float = 0.0
    delay_slack: float = 0.0
    noise_kind: str = "none"     # "none" | "uniform"
    seed: int = 0

    def __post_init__(self):
        for name in ("sample_noise_amp", "guard_noise_amp",
                     "timer_drift_amp", "delay_slack"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.noise_kind not in ("none", "uniform"):
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}")

    @property
    def noisy(self):
        return self.noise_kind == "uniform"


@dataclass
class Event:
    t: float
    j: int
    kind: str                  # "transmission" | "apparent"
    sensors: tuple
    payload: dict = field(default_factory=dict)


@dataclass
class Sample:
    t: float
    j: int
    state: HybridState
    monitors: dict = field(default_factory=dict)


@dataclass
class HybridArc:
    samples: list
    events: list
    converged: bool = False
    budget_exceeded: bool = False

    @property
    def t_final(self):
        return self.samples[-1].t

    @property
    def j_final(self):
        return self.samples[-1].j


def distance_to_target(state: HybridState) -> float:
    """Distance to the target set {0}x{0}x[0,2rho] (timers contribute zero)."""
    d2 = float(state.x @ state.x) + float(state.e @ state.e)
    if state.xhat is not None:
        eta = state.eta
        d2 += float(eta @ eta)
    return float(np.sqrt(d2))


class _Dynamics:
    """Flow map, guard classification and jump map for one experiment."""

    def __init__(self, cascade: Cascade, pol, observer: ObserverConfig = None,
                 pert: PerturbationSpec = None):
        self.cascade = cascade
        self.pol = pol
        self.observer = observer
        self.pert = pert if pert is not None else PerturbationSpec()
        self.rng = np.random.default_rng(self.pert.seed)
        if isinstance(pol, (SyncPolicy, AsyncPolicy)):
            self.err = pol.err
        else:
            self.err = build_error_system(cascade)
        self.n = cascade.n
        self.q = cascade.q
        self.p = pol.timer_count
        self.mode = (Mode.OUTPUT_FEEDBACK if observer is not None
                     else Mode.STATE_FEEDBACK)
        if observer is not None:
            self.LC = observer.L @ cascade.C
            self.CLC = cascade.C @ self.LC
            self.A_err = cascade.A - self.LC

    # --- packed vector layout: [x, e, tau, (xhat)] ---

    def pack(self, state: HybridState):
        parts = [state.x, state.e, state.tau]
        if self.mode is Mode.OUTPUT_FEEDBACK:
            parts.append(state.xhat)
        return np.concatenate(parts)

    def unpack(self, y) -> HybridState:
        n, q, p = self.n, self.q, self.p
        xhat = None
        if self.mode is Mode.OUTPUT_FEEDBACK:
            xhat = y[n + q + p:n + q + p + n].copy()
        return HybridState(x=y[:n].copy(), e=y[n:n + q].copy(),
                           tau=y[n + q:n + q + p].copy(), xhat=xhat,
                           mode=self.mode)

    def deriv(self, y, timer_noise):
        n, q, p = self.n, self.q, self.p
        x = y[:n]
        e = y[n:n + q]
        tau = y[n + q:n + q + p]
        f = self.err
        out = np.empty_like(y)
        if self.mode is Mode.STATE_FEEDBACK:
            out[:n] = f.F11 @ x + f.F12 @ e
            out[n:n + q] = f.F21 @ x + f.F22 @ e
        else:
            xhat = y[n + q + p:n + q + p + n]
            eta = x - xhat
            xhatdot = f.F11 @ xhat + f.F12 @ e + self.LC @ eta
            out[:n] = xhatdot + self.A_err @ eta
            out[n:n + q] = f.F21 @ xhat + f.F22 @ e - self.CLC @ eta
            out[n + q + p:n + q + p + n] = xhatdot
        out[n + q:n + q + p] = timer_rate(tau + timer_noise, self.pol.timer)
        return out

    def rk4(self, y, h, timer_noise=0.0):
        k1 = self.deriv(y, timer_noise)
        k2 = self.deriv(y + 0.5 * h * k1, timer_noise)
        k3 = self.deriv(y + 0.5 * h * k2, timer_noise)
        k4 = self.deriv(y + h * k3, timer_noise)
        out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(out)):
            raise NonFiniteState("state became non-finite during flow")
        return out

    def draw_timer_noise(self):
        if self.pert.noisy and self.pert.timer_drift_amp > 0.0:
            return float(self.rng.uniform(-self.pert.timer_drift_amp,
                                          self.pert.timer_drift_amp))
        return 0.0

    def _guard_inputs(self, y):
        n, q, p = self.n, self.q, self.p
        z = (y[n + q + p:n + q + p + n] if self.mode is Mode.OUTPUT_FEEDBACK
             else y[:n])
        e = y[n:n + q]
        if self.pert.noisy and self.pert.guard_noise_amp > 0.0:
            amp = self.pert.guard_noise_amp
            z = z + self.rng.uniform(-amp, amp, size=z.shape)
            e = e + self.rng.uniform(-amp, amp, size=e.shape)
        return z, e

    def classify(self, y):
        """Returns (classification, triggered sensor tuple)."""
        n, q, p = self.n, self.q, self.p
        tau = y[n + q:n + q + p]
        z, e = self._guard_inputs(y)
        if isinstance(self.pol, SyncPolicy):
            cls = sync_classify(z, e, float(tau[0]), self.pol)
            trig = tuple(range(q)) if cls is Classification.MAY_JUMP else ()
        elif isinstance(self.pol, AsyncPolicy):
            trig = async_triggered(z, e, tau, self.pol)
            cls = (Classification.MAY_JUMP if trig
                   else Classification.MUST_FLOW)
        elif isinstance(self.pol, TabuadaBaseline):
            cls = tabuada_classify(z, e, float(tau[0]), self.pol)
            trig = tuple(range(q)) if cls is Classification.MAY_JUMP else ()
        else:
            raise TypeError(f"unsupported policy type {type(self.pol)}")
        return cls, trig

    def jump(self, y, sensors):
        """Apply one transmission reset; with sample noise the transmitted
        value is corrupted, so e_i lands at d4 instead of 0."""
        y = y.copy()
        n, q, p = self.n, self.q, self.p
        amp = self.pert.sample_noise_amp
        for i in sensors:
            if self.pert.noisy and amp > 0.0:
                y[n + i] = float(self.rng.uniform(-amp, amp))
            else:
                y[n + i] = 0.0
        if p == 1:
            y[n + q] = 0.0
        else:
            for i in sensors:
                y[n + q + i] = 0.0
        return y


def flow_step(state: HybridState, cascade: Cascade, pol, dt,
              observer: ObserverConfig = None) -> HybridState:
    """One unperturbed fixed RK4 step of the active flow map."""
    dyn = _Dynamics(cascade, pol, observer)
    return dyn.unpack(dyn.rk4(dyn.pack(state), dt))


def locate_event(state_a: HybridState, state_b: HybridState,
                 cascade: Cascade, pol, h, observer: ObserverConfig = None,
                 event_tol=1e-6):
    """Bisect a guard crossing within a step of length h starting at state_a.

    state_a must classify as MustFlow and state_b (the h-step endpoint) as
    MayJump.  Returns (dt_event, state_at_event); state_b is the fallback
    when bisection stagnates.
    """
    dyn = _Dynamics(cascade, pol, observer)
    ya = dyn.pack(state_a)
    frac, ye = _bisect(dyn, ya, h, 0.0, event_tol)
    if ye is None:
        return h, state_b
    return frac, dyn.unpack(ye)


def _bisect(dyn: _Dynamics, ya, h, timer_noise, event_tol):
    """Earliest MayJump point along the step [0, h] from ya, within event_tol.

    Returns (offset, packed state) at the MayJump end of the bracket.
    """
    lo, hi = 0.0, h
    y_hi = dyn.rk4(ya, h, timer_noise)
    while hi - lo > event_tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        y_mid = dyn.rk4(ya, mid, timer_noise)
        cls, _ = dyn.classify(y_mid)
        if cls is Classification.MAY_JUMP:
            hi, y_hi = mid, y_mid
        else:
            lo = mid
    return hi, y_hi


def simulate(cascade: Cascade, pol, x0, nu0, config: SimConfig,
             pert: PerturbationSpec = None, observer: ObserverConfig = None,
             xhat0=None, tau0=None) -> HybridArc:
    """Run one hybrid solution until convergence or budget exhaustion.

    x0 is the cascade state, nu0 the initial held samples.  With an observer,
    the guards read the estimate; xhat0 defaults to x0.  Timers start
    saturated at 2*rho (no prior transmission to enforce a dwell against)
    unless tau0 overrides them.  The returned arc is flagged
    ``budget_exceeded`` when t_max or j_max is hit before the state enters
    the convergence radius.
    """
    dyn = _Dynamics(cascade, pol, observer, pert)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    if x0.shape != (cascade.n,):
        raise ValueError(f"x0 must have length {cascade.n}")
    if nu0.shape != (cascade.q,):
        raise ValueError(f"nu0 must have length {cascade.q}")
    if observer is not None:
        xhat = (x0.copy() if xhat0 is None
                else np.atleast_1d(np.asarray(xhat0, dtype=float)))
        e0 = nu0 - cascade.C @ xhat
    else:
        xhat = None
        e0 = nu0 - cascade.C @ x0
    if tau0 is None:
        tau = np.full(dyn.p, 2.0 * pol.timer.rho)
    else:
        tau = np.atleast_1d(np.asarray(tau0, dtype=float))
        if tau.shape != (dyn.p,):
            raise ValueError(f"tau0 must have length {dyn.p}")
    state = HybridState(x=x0.copy(), e=e0, tau=tau, xhat=xhat,
                        mode=dyn.mode)
    y = dyn.pack(state)

    t, j = 0.0, 0
    samples = [Sample(t, j, dyn.unpack(y))]
    events = []
    converged = False
    slack_left = 0.0           # pending excess flow after a located trigger
    pending_sensors = ()

    def record():
        samples.append(Sample(t, j, dyn.unpack(y)))

    while True:
        if distance_to_target(samples[-1].state) < config.convergence_radius:
            converged = True
            break
        if j >= config.j_max or t >= config.t_max - 1e-12:
            break

        if pending_sensors and slack_left <= 0.0:
            # apply the (possibly deferred) transmission
            trig = pending_sensors
            pending_sensors = ()
            n = dyn.n
            for i in sorted(trig):
                sensors = trig if dyn.p == 1 else (i,)
                mags = [abs(float(y[n + k])) for k in sensors]
                kind = ("apparent" if max(mags) <= APPARENT_EPS
                        else "transmission")
                y = dyn.jump(y, sensors)
                j += 1
                events.append(Event(t, j, kind, tuple(sorted(sensors)),
                                    payload={"pre_error": mags}))
                record()
                if dyn.p == 1:
                    break
            continue

        if not pending_sensors:
            cls, trig = dyn.classify(y)
            if cls is Classification.MAY_JUMP:
                pending_sensors = trig
                slack_left = dyn.pert.delay_slack
                continue

        # flow one step (a plain step, or excess flow while deferring)
        h = min(config.dt, config.t_max - t)
        if pending_sensors:
            h = min(h, slack_left)
        timer_noise = dyn.draw_timer_noise()
        y_next = dyn.rk4(y, h, timer_noise)
        if not pending_sensors:
            cls2, _ = dyn.classify(y_next)
            if cls2 is Classification.MAY_JUMP:
                h, y_next = _bisect(dyn, y, h, timer_noise, config.event_tol)
        else:
            slack_left -= h
        y = y_next
        t += h
        record()

    budget_exceeded = (not converged) and (
        t >= config.t_max - 1e-12 or j >= config.j_max)
    return HybridArc(samples=samples, events=events, converged=converged,
                     budget_exceeded=budget_exceeded)
