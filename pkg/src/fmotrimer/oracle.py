"""Exact references used to validate the propagators.

Closed forms for the two-level Rabi problem and for pure dephasing, plus a
brute-force pseudomode solver: a single damped harmonic mode coupled to one
site reproduces a zero-temperature correlation function p exp(z tau)
exactly, so the enlarged Lindblad problem is an independent check of the
ZOFE equations in that case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bath import BathExpansion
from .model import CM_TO_RAD_PS
from .propagator import PropagationError, Trajectory, lindblad_general_propagate

FOCK_TOLERANCE = 1e-6
MAX_FOCK = 40


class TruncationError(PropagationError):
    """Fock-space truncation did not converge."""


def rabi_analytic(delta, J, t):
    """Population of site 1 for a dimer started on site 1.

    ``delta`` and ``J`` in cm^-1, ``t`` in ps.
    """
    t = np.asarray(t, dtype=float)
    omega2 = delta**2 + 4.0 * J**2
    if omega2 == 0.0:
        return np.ones_like(t)
    amp = 4.0 * J**2 / omega2
    return 1.0 - amp * np.sin(0.5 * math.sqrt(omega2) * CM_TO_RAD_PS * t) ** 2


def double_integral(b: BathExpansion, t):
    """Phi(t) = int_0^t ds int_0^s dtau alpha(tau), closed form per term."""
    t = np.asarray(t, dtype=float)
    if b.n_terms == 0:
        return np.zeros(t.shape, dtype=complex)
    ez = np.exp(np.multiply.outer(t, b.z))
    return (ez - 1.0) @ (b.p / b.z**2) - np.multiply.outer(t, np.sum(b.p / b.z))


def pure_dephasing_analytic(delta, baths, t, J: float = 0.0):
    """rho_12(t) / rho_12(0) for an uncoupled dimer with site-diagonal baths.

    ``delta`` = eps_1 - eps_2 in cm^-1; ``baths`` is one expansion shared by
    both sites or a pair.
    """
    if J != 0:
        raise ValueError("pure dephasing solution requires zero electronic coupling")
    if isinstance(baths, BathExpansion) or baths is None:
        baths = (baths or BathExpansion.empty(),) * 2
    b1, b2 = baths
    t = np.asarray(t, dtype=float)
    phi1, phi2 = double_integral(b1, t), double_integral(b2, t)
    return np.exp(-1j * delta * CM_TO_RAD_PS * t) * np.exp(-phi1 - np.conj(phi2))


@dataclass(frozen=True)
class PseudomodeConfig:
    """Small system with one zero-temperature exponential bath on one site.

    ``h_sys`` in cm^-1; ``p`` in (rad/ps)^2 (real); ``z`` in rad/ps with
    Re z < 0.  The mode frequency is -Im z so that its free correlation is
    exactly ``p exp(z tau)``.
    """

    h_sys: np.ndarray
    p: float
    z: complex
    site: int = 0
    fock: int = 8

    def __post_init__(self):
        h = np.asarray(self.h_sys, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] > 3:
            raise ValueError("pseudomode oracle supports systems of at most 3 sites")
        if not np.allclose(h, h.T):
            raise ValueError("system Hamiltonian must be symmetric")
        if self.p < 0 or complex(self.z).real >= 0:
            raise ValueError("need p >= 0 and Re z < 0")
        if self.fock < 4:
            raise ValueError("Fock truncation must be at least 4")
        if not 0 <= self.site < h.shape[0]:
            raise ValueError("coupled site out of range")
        object.__setattr__(self, "h_sys", h)

    @property
    def expansion(self) -> BathExpansion:
        return BathExpansion([self.p], [self.z])


def _enlarged(cfg: PseudomodeConfig, M: int):
    n = cfg.h_sys.shape[0]
    a = np.diag(np.sqrt(np.arange(1, M)), 1).astype(complex)
    num = a.conj().T @ a
    eye_s, eye_m = np.eye(n), np.eye(M)
    L = np.zeros((n, n))
    L[cfg.site, cfg.site] = 1.0
    omega = -complex(cfg.z).imag
    gamma = -complex(cfg.z).real
    h = (np.kron(cfg.h_sys * CM_TO_RAD_PS, eye_m) + omega * np.kron(eye_s, num)
         + math.sqrt(cfg.p) * np.kron(L, a + a.conj().T))
    c = math.sqrt(2.0 * gamma) * np.kron(eye_s, a)
    return h, [c]


def _run(cfg, rho0, M, dt, t_max, save_every):
    n = cfg.h_sys.shape[0]
    vac = np.zeros((M, M))
    vac[0, 0] = 1.0
    h, c_ops = _enlarged(cfg, M)
    times, rhos = lindblad_general_propagate(h, c_ops, np.kron(rho0, vac), dt, t_max,
                                             save_every=save_every)
    r = rhos.reshape(-1, n, M, n, M)
    sys_rho = np.einsum("tiaja->tij", r)
    mode_pop = np.real(np.einsum("tiaia->ta", r))
    return times, sys_rho, mode_pop


def pseudomode_propagate(cfg: PseudomodeConfig, rho0, dt: float = 0.0005, t_max: float = 1.0,
                         *, save_every: int = 1, tol: float = FOCK_TOLERANCE,
                         max_fock: int = MAX_FOCK) -> Trajectory:
    """Exact propagation via an explicit damped mode; returns site populations.

    The Fock cutoff starts at ``cfg.fock`` and grows by two until the
    population of the highest retained level stays below ``tol``.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    M = cfg.fock
    while True:
        times, sys_rho, mode_pop = _run(cfg, rho0, M, dt, t_max, save_every)
        top = float(mode_pop[:, -1].max())
        if top <= tol:
            break
        if M + 2 > max_fock:
            raise TruncationError(f"Fock level {M - 1} still holds population {top:.3g}")
        M += 2
    pops = np.real(np.diagonal(sys_rho, axis1=1, axis2=2))
    trace_err = np.abs(np.trace(sys_rho, axis1=1, axis2=2) - 1.0)
    tr = Trajectory(times, pops, trace_error=trace_err,
                    steps=int(round(t_max / dt)), final_rho=sys_rho[-1],
                    labels=tuple(str(i + 1) for i in range(pops.shape[1])))
    tr.fock = M
    tr.top_fock_population = top
    return tr


def self_convergence(cfg: PseudomodeConfig, rho0, dt: float, t_max: float,
                     save_every: int = 1) -> float:
    """Max population change between cutoffs ``cfg.fock`` and ``cfg.fock + 2``."""
    p1 = _run(cfg, np.asarray(rho0, complex), cfg.fock, dt, t_max, save_every)[1]
    p2 = _run(cfg, np.asarray(rho0, complex), cfg.fock + 2, dt, t_max, save_every)[1]
    d1 = np.real(np.diagonal(p1, axis1=1, axis2=2))
    d2 = np.real(np.diagonal(p2, axis1=1, axis2=2))
    return float(np.max(np.abs(d1 - d2)))


def weak_coupling_dimer(delta: float = 100.0, J: float = 20.0, reorg: float = 35.0,
                        width: float = 106.0, omega: float = 0.0) -> PseudomodeConfig:
    """Dimer benchmark with p = lambda*gamma (in rad/ps units) on site 1.

    ``omega`` is the mode frequency in cm^-1 (z = -gamma - i omega).
    """
    h = np.array([[delta, J], [J, 0.0]])
    p = (reorg * CM_TO_RAD_PS) * (width * CM_TO_RAD_PS)
    z = complex(-width * CM_TO_RAD_PS, -omega * CM_TO_RAD_PS)
    return PseudomodeConfig(h, p, z)
