"""Verification tools for produced arcs: Lyapunov monitors, decay fits,
transmission statistics, and run comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matlib
from .hybridsim import HybridArc, HybridState, Mode, distance_to_target
from .policy import AsyncPolicy, SyncPolicy
from .system import Cascade, ObserverConfig, estimation_error_matrix

JUMP_RTOL = 1e-9           # relative tolerance for W-increase detection
TIMER_BOUND_TOL = 1e-6


class InsufficientData(Exception):
    pass


@dataclass(frozen=True)
class LyapunovMonitor:
    """Weighted Lyapunov certificate W evaluated along arcs.

    The timer weight is exp((2*rho - tau) * lam); lam is a monitor knob, not
    a policy parameter (the certificate, not the trajectory, depends on it).
    For output feedback, observer_weight = (gamma, P_o) adds gamma*eta'P_o*eta.
    """

    policy: object             # SyncPolicy or AsyncPolicy
    lam: float = 1.0
    observer_weight: tuple | None = None

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")

    def with_lambda(self, lam):
        return LyapunovMonitor(policy=self.policy, lam=lam,
                               observer_weight=self.observer_weight)


def observer_monitor(policy, cascade: Cascade, obs: ObserverConfig,
                     lam=1.0, gamma=None) -> LyapunovMonitor:
    """Monitor for output-feedback runs; P_o solves the estimation-error
    Lyapunov equation (A - LC)'P_o + P_o(A - LC) = -I.

    The estimate dynamics carry the innovation term L C eta, which couples
    the estimation error into the certificate.  When gamma is None it is
    sized so that -gamma*|eta|^2 absorbs both cross terms by completing the
    square, leaving the state-feedback decrease intact:
        2 xhat'P1 LC eta      <= gamma_x|xhat|^2 + (|P1 LC|^2/gamma_x)|eta|^2
        2 phi e'P2 CLC eta    <= (lam/2) phi lmin(P2)|e|^2
                                 + (2 phi |P2 CLC|^2 / (lam lmin(P2)))|eta|^2
    """
    Po = matlib.solve_lyapunov(estimation_error_matrix(cascade, obs),
                               np.eye(cascade.n))
    if gamma is None:
        LC = obs.L @ cascade.C
        pol = policy
        t1 = matlib.spectral_norm(pol.P1 @ LC) ** 2 / pol.gamma_x
        if isinstance(pol, SyncPolicy):
            P2 = pol.P2
        else:
            P2 = np.diag(pol.p)
        phi_max = math.exp(2.0 * pol.timer.rho * lam)
        p_min, _ = matlib.sym_eig_bounds(P2)
        t2 = (2.0 * phi_max
              * matlib.spectral_norm(P2 @ cascade.C @ LC) ** 2
              / (lam * p_min))
        gamma = 1.0 + t1 + t2
    return LyapunovMonitor(policy=policy, lam=lam,
                           observer_weight=(float(gamma), Po))


def evaluate_W(state: HybridState, monitor: LyapunovMonitor) -> float:
    pol = monitor.policy
    rho = pol.timer.rho
    x = state.xhat if state.mode is Mode.OUTPUT_FEEDBACK else state.x
    w = float(x @ pol.P1 @ x)
    if isinstance(pol, SyncPolicy):
        phi = math.exp((2.0 * rho - float(state.tau[0])) * monitor.lam)
        w += phi * float(state.e @ pol.P2 @ state.e)
    elif isinstance(pol, AsyncPolicy):
        for i in range(pol.q):
            phi = math.exp((2.0 * rho - float(state.tau[i])) * monitor.lam)
            w += float(pol.p[i]) * phi * float(state.e[i]) ** 2
    else:
        raise TypeError(f"no Lyapunov monitor for policy type {type(pol)}")
    if state.mode is Mode.OUTPUT_FEEDBACK:
        if monitor.observer_weight is None:
            raise ValueError("output-feedback arc requires observer_weight")
        gamma, Po = monitor.observer_weight
        eta = state.eta
        w += gamma * float(eta @ Po @ eta)
    return w


@dataclass
class AuditReport:
    """Violation lists from auditing one arc; all empty on a clean run."""

    jump_increases: list = field(default_factory=list)
    flow_increases: list = field(default_factory=list)
    residual_flow_increases: list = field(default_factory=list)
    dwell_violations: list = field(default_factory=list)
    timer_bound_violations: list = field(default_factory=list)
    max_tau: float = 0.0
    min_gap: dict = field(default_factory=dict)

    @property
    def clean(self):
        return not (self.jump_increases or self.flow_increases
                    or self.dwell_violations or self.timer_bound_violations)


def audit_arc(arc: HybridArc, monitor: LyapunovMonitor,
              convergence_radius=0.0, event_tol=1e-6,
              rtol=JUMP_RTOL) -> AuditReport:
    """Audit Lyapunov monotonicity, dwell times, and timer bounds.

    Jump pairs where W grew beyond rtol*(1+W) are reported; likewise flow
    pairs, split by whether the pre-state lies outside the convergence
    radius (``flow_increases``) or inside it (``residual_flow_increases``,
    tolerated under perturbations).  Dwell times are recomputed from the
    event log, independently of the simulator's own guarantee.
    """
    pol = monitor.policy
    report = AuditReport()
    w_vals = [evaluate_W(s.state, monitor) for s in arc.samples]
    for (prev, cur), (w0, w1) in zip(zip(arc.samples, arc.samples[1:]),
                                     zip(w_vals, w_vals[1:])):
        tol = rtol * (1.0 + abs(w0))
        if cur.j > prev.j:
            if w1 - w0 > tol:
                report.jump_increases.append(
                    {"t": cur.t, "j": cur.j, "W_before": w0, "W_after": w1})
        elif w1 - w0 > tol:
            entry = {"t": prev.t, "j": prev.j, "W_before": w0, "W_after": w1}
            if distance_to_target(prev.state) > convergence_radius:
                report.flow_increases.append(entry)
            else:
                report.residual_flow_increases.append(entry)

    # timer bound from the samples
    report.max_tau = max(float(np.max(s.state.tau)) for s in arc.samples)
    bound = 2.0 * pol.timer.rho + TIMER_BOUND_TOL
    for s in arc.samples:
        if float(np.max(s.state.tau)) > bound:
            report.timer_bound_violations.append(
                {"t": s.t, "j": s.j, "tau": s.state.tau.tolist()})

    # dwell time per sensor from the event log
    last_t = {}
    min_gap = {}
    for ev in arc.events:
        for i in ev.sensors:
            if i in last_t:
                gap = ev.t - last_t[i]
                min_gap[i] = min(min_gap.get(i, np.inf), gap)
                if gap < pol.timer.delta - event_tol:
                    report.dwell_violations.append(
                        {"sensor": i, "t": ev.t, "gap": gap})
            last_t[i] = ev.t
    report.min_gap = min_gap
    return report


def find_certifying_lambda(arc: HybridArc, monitor: LyapunovMonitor,
                           convergence_radius=0.0, event_tol=1e-6,
                           lam_max=16.0):
    """Double lam from the monitor's value until the audit is clean.

    Returns (lam, report) for the first clean audit, or (None, last report)
    when lam_max is exhausted.
    """
    lam = monitor.lam
    report = None
    while lam <= lam_max:
        report = audit_arc(arc, monitor.with_lambda(lam),
                           convergence_radius, event_tol)
        if report.clean:
            return lam, report
        lam *= 2.0
    return None, report


@dataclass
class DecayFit:
    k: float
    gamma_rate: float
    r2: float
    n_samples: int

    @property
    def convergent(self):
        return self.gamma_rate > 0.0


def fit_decay(arc: HybridArc, convergence_radius=0.0,
              min_samples=10) -> DecayFit:
    """Least-squares fit of log(distance) against hybrid time t + j."""
    ts, ds = [], []
    for s in arc.samples:
        d = distance_to_target(s.state)
        if d > max(convergence_radius, 0.0) and d > 0.0:
            ts.append(s.t + s.j)
            ds.append(d)
    if len(ds) < min_samples:
        raise InsufficientData(
            f"need >= {min_samples} pre-convergence samples, got {len(ds)}")
    u = np.asarray(ts)
    v = np.log(np.asarray(ds))
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0.0 else 0.0
    d0 = distance_to_target(arc.samples[0].state)
    k = math.exp(intercept) / d0 if d0 > 0.0 else math.exp(intercept)
    return DecayFit(k=float(k), gamma_rate=float(-slope), r2=float(r2),
                    n_samples=len(ds))


@dataclass
class TransmissionStats:
    total: int
    apparent: int
    per_sensor: dict
    intervals: list
    min_interval: float | None
    mean_interval: float | None
    max_interval: float | None
    rate: float


def transmission_stats(arc: HybridArc) -> TransmissionStats:
    """Counts and inter-transmission interval statistics; apparent events
    (triggers at e = 0) are tallied separately."""
    real = [ev for ev in arc.events if ev.kind == "transmission"]
    apparent = sum(1 for ev in arc.events if ev.kind == "apparent")
    per_sensor = {}
    for ev in real:
        for i in ev.sensors:
            per_sensor[i] = per_sensor.get(i, 0) + 1
    times = [ev.t for ev in real]
    intervals = [b - a for a, b in zip(times, times[1:])]
    horizon = arc.t_final
    return TransmissionStats(
        total=len(real), apparent=apparent, per_sensor=per_sensor,
        intervals=intervals,
        min_interval=min(intervals) if intervals else None,
        mean_interval=(sum(intervals) / len(intervals)) if intervals else None,
        max_interval=max(intervals) if intervals else None,
        rate=len(real) / horizon if horizon > 0.0 else 0.0)


def compare_runs(labeled_arcs, convergence_radius=0.0):
    """Aligned comparison rows for a list of (label, arc) pairs."""
    rows = []
    for label, arc in labeled_arcs:
        stats = transmission_stats(arc)
        try:
            fit = fit_decay(arc, convergence_radius)
            gamma_rate, r2 = fit.gamma_rate, fit.r2
        except InsufficientData:
            gamma_rate, r2 = None, None
        rows.append({
            "label": label,
            "transmissions": stats.total,
            "apparent": stats.apparent,
            "per_sensor": stats.per_sensor,
            "rate": stats.rate,
            "decay_gamma": gamma_rate,
            "decay_r2": r2,
            "final_distance": distance_to_target(arc.samples[-1].state),
            "t_final": arc.t_final,
            "j_final": arc.j_final,
            "converged": arc.converged,
        })
    return rows
