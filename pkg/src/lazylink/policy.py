"""Transmission policies: timers, flow/jump guards, jump maps, and design.

Three policy kinds are provided:

* ``SyncPolicy`` -- a single shared timer; the whole sample vector is
  transmitted when a Lyapunov-drift or error-proportionality guard fires.
* ``AsyncPolicy`` -- one timer per sensor; each sensor decides autonomously
  from a per-sensor quadratic margin.
* ``TabuadaBaseline`` -- the classical norm-threshold trigger used as a
  comparison baseline.

Guard boundaries are resolved with jump priority: whenever the jump condition
holds (including exactly on the boundary), the simulator transmits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import matlib
from .system import ErrorSystem

NEG_SEMIDEF_RTOL = 1e-8   # tolerance on F11'P1 + P1 F11 + Q <= 0
ALPHA_SUM_TOL = 1e-9


class DesignInfeasible(Exception):
    """A policy design condition is violated; the message names it."""


class Classification(enum.Enum):
    MUST_FLOW = "must_flow"
    MAY_JUMP = "may_jump"


@dataclass(frozen=True)
class TimerParams:
    """Dwell-time timer: rate 1 up to rho, saturates at 2*rho, resettable
    once tau >= delta."""

    delta: float
    rho: float

    def __post_init__(self):
        if not (0.0 < self.delta < self.rho):
            raise DesignInfeasible(
                f"timer requires 0 < delta < rho, got delta={self.delta}, "
                f"rho={self.rho}")


def deadzone(s):
    """Elementwise deadzone: 0 for |s| <= 1, sgn(s)(|s|-1) beyond."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.maximum(np.abs(s) - 1.0, 0.0)


def timer_rate(tau, timer: TimerParams):
    """Timer flow rate 1 - dz(tau / rho), componentwise."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return 1.0 - deadzone(tau / timer.rho)


@dataclass(frozen=True)
class SyncPolicy:
    err: ErrorSystem
    P1: np.ndarray
    P2: np.ndarray
    Q: np.ndarray
    gamma_x: float
    gamma_e: float
    timer: TimerParams

    @property
    def n(self):
        return self.err.n

    @property
    def q(self):
        return self.err.q

    @property
    def timer_count(self):
        return 1


@dataclass(frozen=True)
class AsyncPolicy:
    err: ErrorSystem
    P1: np.ndarray
    p: np.ndarray             # diagonal of P2, one weight per sensor
    Q: np.ndarray
    gamma_x: float
    epsilon: float
    alpha: np.ndarray
    a: float
    b: float
    c: float
    timer: TimerParams
    relaxed_norm_variant: bool = False
    lam_min_Q: float = 0.0

    @property
    def n(self):
        return self.err.n

    @property
    def q(self):
        return self.err.q

    @property
    def timer_count(self):
        return self.q


@dataclass(frozen=True)
class TabuadaBaseline:
    """Threshold trigger: transmit when gamma_gain*|e| >= sigma*alpha_rate*|x|."""

    sigma: float
    alpha_rate: float
    gamma_gain: float
    timer: TimerParams

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise DesignInfeasible(f"sigma must lie in (0,1), got {self.sigma}")
        if self.alpha_rate <= 0.0 or self.gamma_gain <= 0.0:
            raise DesignInfeasible("alpha_rate and gamma_gain must be positive")

    @property
    def timer_count(self):
        return 1


def sync_drift(x, e, policy: SyncPolicy) -> float:
    """Directional derivative of the design Lyapunov form along the flow:
    x'P1(F11 x + F12 e) + e'P2(F21 x + F22 e)."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    f = policy.err
    return float(x @ policy.P1 @ (f.F11 @ x + f.F12 @ e)
                 + e @ policy.P2 @ (f.F21 @ x + f.F22 @ e))


def sync_classify(x, e, tau, policy: SyncPolicy) -> Classification:
    """Jump is allowed once the timer passed delta and either the drift
    guard or the error-proportionality guard is active."""
    if tau < policy.timer.delta:
        return Classification.MUST_FLOW
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    xn2 = float(x @ x)
    drift_guard = sync_drift(x, e, policy) >= -policy.gamma_x * xn2
    norm_guard = float(np.linalg.norm(e)) >= policy.gamma_e * np.sqrt(xn2)
    if drift_guard or norm_guard:
        return Classification.MAY_JUMP
    return Classification.MUST_FLOW


def sync_jump(x, e, tau):
    """Synchronous transmission: x kept, e and tau reset to zero."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    return x.copy(), np.zeros_like(e), np.zeros_like(np.atleast_1d(tau))


def async_margin_i(x, e_i, i, policy: AsyncPolicy) -> float:
    """Per-sensor jump margin (0-based sensor index).

    Nonnegative margin means sensor i may transmit; negative means it may
    keep flowing.  With ``relaxed_norm_variant`` the quadratic form x'Qx is
    replaced by its lower bound lambda_min(Q)|x|^2, so the sensor needs only
    |x|, not x.
    """
    if not 0 <= i < policy.q:
        raise IndexError(f"sensor index {i} out of range for q={policy.q}")
    x = np.asarray(x, dtype=float)
    xn2 = float(x @ x)
    if policy.relaxed_norm_variant:
        s = policy.lam_min_Q * xn2
    else:
        s = float(x @ policy.Q @ x)
    p_i = float(policy.p[i])
    return (-float(policy.alpha[i]) * s
            + (policy.a + policy.b * p_i) * np.sqrt(xn2) * abs(e_i)
            + policy.c * p_i * e_i * e_i
            + policy.gamma_x * xn2)


def async_triggered(x, e, tau, policy: AsyncPolicy):
    """Sensors allowed to jump: margin >= 0 and own timer past delta."""
    e = np.asarray(e, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return tuple(i for i in range(policy.q)
                 if tau[i] >= policy.timer.delta
                 and async_margin_i(x, e[i], i, policy) >= 0.0)


def async_jump(x, e, tau, triggered):
    """Reset e_i and tau_i for the triggered sensors, all else untouched."""
    if not triggered:
        raise ValueError("async_jump requires a nonempty triggered set")
    x = np.asarray(x, dtype=float)
    e_new = np.asarray(e, dtype=float).copy()
    tau_new = np.asarray(tau, dtype=float).copy()
    for i in triggered:
        e_new[i] = 0.0
        tau_new[i] = 0.0
    return x.copy(), e_new, tau_new


def tabuada_classify(x, e, tau, baseline: TabuadaBaseline) -> Classification:
    if tau < baseline.timer.delta:
        return Classification.MUST_FLOW
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    if (baseline.gamma_gain * np.linalg.norm(e)
            >= baseline.sigma * baseline.alpha_rate * np.linalg.norm(x)):
        return Classification.MAY_JUMP
    return Classification.MUST_FLOW


def _require_decay_condition(err: ErrorSystem, P1, Q):
    lhs = err.F11.T @ P1 + P1 @ err.F11 + Q
    _, lam_max = matlib.sym_eig_bounds(0.5 * (lhs + lhs.T))
    if lam_max > NEG_SEMIDEF_RTOL * max(np.linalg.norm(Q), 1.0):
        raise DesignInfeasible(
            "F11'P1 + P1 F11 + Q is not negative semidefinite "
            f"(lambda_max = {lam_max:.3e})")


def design_sync(err: ErrorSystem, Q, gamma_x, gamma_e, P2,
                timer: TimerParams) -> SyncPolicy:
    """Build and validate a synchronous policy; P1 solves the Lyapunov
    equation F11'P1 + P1 F11 = -Q."""
    Q = matlib.require_symmetric(Q, name="Q")
    if not matlib.is_positive_definite(Q):
        raise DesignInfeasible("Q is not positive definite")
    if gamma_x <= 0.0:
        raise DesignInfeasible("gamma_x must be positive")
    if gamma_e <= 0.0:
        raise DesignInfeasible("gamma_e must be positive")
    lam_min_Q, _ = matlib.sym_eig_bounds(Q)
    if gamma_x >= lam_min_Q:
        raise DesignInfeasible(
            f"gamma_x I < Q violated: gamma_x={gamma_x}, "
            f"lambda_min(Q)={lam_min_Q:.6g}")
    P2 = matlib.require_symmetric(P2, name="P2")
    if P2.shape[0] != err.q:
        raise DesignInfeasible(f"P2 must be {err.q}x{err.q}, got {P2.shape}")
    if not matlib.is_positive_definite(P2):
        raise DesignInfeasible("P2 is not positive definite")
    try:
        P1 = matlib.solve_lyapunov(err.F11, Q)
    except matlib.SingularLyapunov as exc:
        raise DesignInfeasible(f"Lyapunov solve for P1 failed: {exc}") from exc
    if not matlib.is_positive_definite(P1):
        raise DesignInfeasible("P1 is not positive definite (F11 not Hurwitz)")
    _require_decay_condition(err, P1, Q)
    return SyncPolicy(err=err, P1=P1, P2=P2, Q=Q, gamma_x=float(gamma_x),
                      gamma_e=float(gamma_e), timer=timer)


def design_async(err: ErrorSystem, Q, gamma_x, epsilon, alpha, p,
                 timer: TimerParams,
                 relaxed_norm_variant=False) -> AsyncPolicy:
    """Build and validate an asynchronous policy.

    The constants a, b, c are the spectral-norm bounds used by the
    per-sensor margins: a = 2|P1 F12|, b = 2|F21|, c = 2|F22|.
    """
    q = err.q
    Q = matlib.require_symmetric(Q, name="Q")
    if not matlib.is_positive_definite(Q):
        raise DesignInfeasible("Q is not positive definite")
    if gamma_x <= 0.0:
        raise DesignInfeasible("gamma_x must be positive")
    if not (0.0 < epsilon <= 1.0 / q):
        raise DesignInfeasible(
            f"epsilon must lie in (0, 1/q] = (0, {1.0 / q:.6g}], got {epsilon}")
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if alpha.shape != (q,) or p.shape != (q,):
        raise DesignInfeasible(f"alpha and p must have length q={q}")
    _check_alpha(alpha, epsilon)
    if np.any(p <= 0.0):
        raise DesignInfeasible("all sensor weights p_i must be positive")
    lam_min_Q, _ = matlib.sym_eig_bounds(Q)
    if gamma_x / epsilon >= lam_min_Q:
        raise DesignInfeasible(
            f"(gamma_x/epsilon) I < Q violated: gamma_x/epsilon="
            f"{gamma_x / epsilon:.6g}, lambda_min(Q)={lam_min_Q:.6g}")
    try:
        P1 = matlib.solve_lyapunov(err.F11, Q)
    except matlib.SingularLyapunov as exc:
        raise DesignInfeasible(f"Lyapunov solve for P1 failed: {exc}") from exc
    if not matlib.is_positive_definite(P1):
        raise DesignInfeasible("P1 is not positive definite (F11 not Hurwitz)")
    _require_decay_condition(err, P1, Q)
    return AsyncPolicy(
        err=err, P1=P1, p=p, Q=Q, gamma_x=float(gamma_x),
        epsilon=float(epsilon), alpha=alpha,
        a=2.0 * matlib.spectral_norm(P1 @ err.F12),
        b=2.0 * matlib.spectral_norm(err.F21),
        c=2.0 * matlib.spectral_norm(err.F22),
        timer=timer, relaxed_norm_variant=bool(relaxed_norm_variant),
        lam_min_Q=lam_min_Q)


def _check_alpha(alpha, epsilon):
    if abs(float(np.sum(alpha)) - 1.0) > ALPHA_SUM_TOL:
        raise DesignInfeasible(
            f"alpha must sum to 1, got {float(np.sum(alpha)):.12g}")
    if np.any(alpha <= epsilon):
        raise DesignInfeasible(
            f"each alpha_i must exceed epsilon={epsilon}, got {alpha}")


def retune_alpha(policy: AsyncPolicy, alpha_new) -> AsyncPolicy:
    """Runtime re-weighting of sensor rates; P1, a, b, c are kept."""
    alpha_new = np.atleast_1d(np.asarray(alpha_new, dtype=float))
    if alpha_new.shape != (policy.q,):
        raise DesignInfeasible(f"alpha must have length q={policy.q}")
    _check_alpha(alpha_new, policy.epsilon)
    return replace(policy, alpha=alpha_new)
