"""Plant-controller cascade, error-coordinate system, and observer model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matlib


class NotStabilized(Exception):
    """The nominal closed loop is not exponentially stable."""


@dataclass(frozen=True)
class Cascade:
    """Linear plant-controller cascade xdot = A x + B u, y = C x."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = matlib.as_matrix(self.A, "A")
        B = matlib.as_matrix(self.B, "B")
        C = matlib.as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B row count {B.shape[0]} != state dim {n}")
        q = B.shape[1]
        if C.shape != (q, n):
            raise ValueError(f"C must be {q}x{n}, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.B.shape[1]

    def closed_loop_matrix(self):
        """A + BC, the nominal loop under u = y."""
        return self.A + self.B @ self.C


def check_assumption1(cascade: Cascade) -> bool:
    """Exponential stability of the nominal loop: A + BC Hurwitz."""
    return matlib.is_hurwitz(cascade.closed_loop_matrix())


@dataclass(frozen=True)
class ErrorSystem:
    """Block matrix of the (x, e) error coordinates, e = nu - y."""

    F11: np.ndarray
    F12: np.ndarray
    F21: np.ndarray
    F22: np.ndarray
    F: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.F11.shape[0]

    @property
    def q(self):
        return self.F22.shape[0]


def build_error_system(cascade: Cascade) -> ErrorSystem:
    """Assemble F11 = A+BC, F12 = B, F21 = -C(A+BC), F22 = -CB.

    Raises NotStabilized when A + BC is not Hurwitz.
    """
    F11 = cascade.closed_loop_matrix()
    if not matlib.is_hurwitz(F11):
        raise NotStabilized("A + BC is not Hurwitz")
    F12 = cascade.B.copy()
    F21 = -cascade.C @ F11
    F22 = -cascade.C @ cascade.B
    F = np.block([[F11, F12], [F21, F22]])
    return ErrorSystem(F11=F11, F12=F12, F21=F21, F22=F22, F=F)


@dataclass(frozen=True)
class ObserverConfig:
    """Luenberger observer gain; the estimate obeys
    xhatdot = A xhat + B nu + L (y - C xhat)."""

    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", matlib.as_matrix(self.L, "L"))


def estimation_error_matrix(cascade: Cascade, obs: ObserverConfig):
    """Matrix driving eta = x - xhat, i.e. A - LC."""
    return cascade.A - obs.L @ cascade.C


def check_observer(cascade: Cascade, obs: ObserverConfig) -> bool:
    if obs.L.shape != (cascade.n, cascade.q):
        raise ValueError(
            f"L must be {cascade.n}x{cascade.q}, got {obs.L.shape}")
    return matlib.is_hurwitz(estimation_error_matrix(cascade, obs))


def observer_flow(cascade: Cascade, obs: ObserverConfig, x, xhat, nu):
    """Flow of the plant state and its estimate under held input nu."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    nu = np.asarray(nu, dtype=float)
    innovation = cascade.C @ x - cascade.C @ xhat
    xdot = cascade.A @ x + cascade.B @ nu
    xhatdot = cascade.A @ xhat + cascade.B @ nu + obs.L @ innovation
    return xdot, xhatdot
