"""Reduced density matrix propagation.

Two equations of motion share one fixed-step RK4 kernel:

* the ZOFE non-Markovian master equation with site-projector coupling
  operators L_n = |n><n| and one auxiliary operator per (site, bath term),

      drho/dt   = -i[H, rho] + sum_n ([L_n, rho Obar_n^+] + [Obar_n rho, L_n^+])
      dO_nj/dt  = p_nj L_n + z_nj O_nj + [-iH - sum_m L_m^+ Obar_m, O_nj],

  with Obar_n = sum_j O_nj and O_nj(0) = 0;

* a Lindblad equation with pure-dephasing rates Gamma_n on the same L_n.

Hamiltonians are accepted in cm^-1 and converted to rad/ps internally; times
are in ps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bath import BathExpansion
from .model import CM_TO_RAD_PS, SITE_LABELS, TrimerHamiltonian

log = logging.getLogger(__name__)

TRACE_ABORT = 1e-4
POSITIVITY_ABORT = -1e-4


class PropagationError(RuntimeError):
    """Numerical failure during propagation."""


class TraceDriftError(PropagationError):
    pass


class PositivityError(PropagationError):
    pass


@dataclass
class Trajectory:
    """Sampled propagation result.

    ``populations`` has shape (n_times, n_sites); ``coherences`` maps a site
    pair (i, j) to the complex series rho_ij(t).
    """

    times: np.ndarray
    populations: np.ndarray
    coherences: dict = field(default_factory=dict)
    trace_error: np.ndarray | None = None
    hermiticity_defect: np.ndarray | None = None
    min_eigenvalue: np.ndarray | None = None
    steps: int = 0
    final_rho: np.ndarray | None = None
    labels: tuple = ()

    @property
    def n_sites(self) -> int:
        return self.populations.shape[1]

    def population(self, site) -> np.ndarray:
        """Population series of a site given by index or label (``"A3"``)."""
        if isinstance(site, str):
            site = self.labels.index(site.upper())
        return self.populations[:, site]

    def at(self, t: float) -> np.ndarray:
        """Populations at the sample closest to time ``t``."""
        return self.populations[int(np.argmin(np.abs(self.times - t)))]

    def permuted(self, perm: np.ndarray) -> "Trajectory":
        """Relabel sites by a permutation matrix acting on the site basis."""
        idx = np.argmax(perm, axis=0)  # site i goes to idx[i]
        pops = np.empty_like(self.populations)
        pops[:, idx] = self.populations
        return Trajectory(self.times, pops, {}, self.trace_error, self.hermiticity_defect,
                          self.min_eigenvalue, self.steps, None, self.labels)


def _as_rad_ps(h) -> np.ndarray:
    mat = h.matrix if isinstance(h, TrimerHamiltonian) else np.asarray(h, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("Hamiltonian must be square")
    if not np.allclose(mat, mat.conj().T, rtol=0, atol=1e-12):
        raise ValueError("Hamiltonian must be Hermitian")
    return mat * CM_TO_RAD_PS


def _site_labels(n: int) -> tuple:
    return SITE_LABELS if n == len(SITE_LABELS) else tuple(str(i + 1) for i in range(n))


def populations(rho) -> np.ndarray:
    return np.real(np.diagonal(rho)).copy()


def diagnostics(rho) -> dict:
    """Trace error, Hermiticity defect and minimum eigenvalue of ``rho``."""
    rho = np.asarray(rho)
    herm = rho - rho.conj().T
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity_defect": float(np.max(np.abs(herm))) if herm.size else 0.0,
        "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]),
    }


def rk4_step(rhs: Callable, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step for an autonomous system."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _n_steps(dt: float, t_max: float) -> int:
    if not dt > 0:
        raise ValueError("time step must be positive")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    n = int(round(t_max / dt))
    if abs(n * dt - t_max) > 1e-9 * t_max:
        raise ValueError(f"t_max={t_max} is not a multiple of dt={dt}")
    return n


def _integrate(rhs, y0, rho_view, n_sites, dt, n_steps, save_every, watch,
               trace_abort, positivity_abort, check_positivity=True) -> Trajectory:
    """Drive ``rhs`` with RK4, symmetrizing the density-matrix block each step.

    ``rho_view(y)`` returns a writable (n, n) view of the density matrix
    inside the state vector ``y``.
    """
    n_save = n_steps // save_every + 1
    times = np.arange(n_save) * dt * save_every
    pops = np.empty((n_save, n_sites))
    trace_err = np.empty(n_save)
    herm = np.empty(n_save)
    min_eig = np.empty(n_save)
    coh = {pair: np.empty(n_save, dtype=complex) for pair in watch}

    def record(k, rho, defect):
        pops[k] = np.real(np.diagonal(rho))
        trace_err[k] = abs(np.trace(rho) - 1.0)
        herm[k] = defect
        min_eig[k] = np.linalg.eigvalsh(rho)[0]
        for (i, j), series in coh.items():
            series[k] = rho[i, j]

    y = y0.copy()
    rho = rho_view(y)
    record(0, rho, float(np.max(np.abs(rho - rho.conj().T))))
    for step in range(1, n_steps + 1):
        y = rk4_step(rhs, y, dt)
        rho = rho_view(y)
        if not np.all(np.isfinite(y)):
            raise PropagationError(f"non-finite state at t={step * dt:.6g} ps")
        defect = float(np.max(np.abs(rho - rho.conj().T)))
        rho[...] = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho) - 1.0)
        if drift > trace_abort:
            raise TraceDriftError(f"trace drift {drift:.3g} at t={step * dt:.6g} ps; "
                                  "reduce the time step")
        if check_positivity:
            lowest = np.linalg.eigvalsh(rho)[0]
            if lowest < positivity_abort:
                raise PositivityError(f"density matrix eigenvalue {lowest:.3g} at "
                                      f"t={step * dt:.6g} ps")
        if step % save_every == 0:
            record(step // save_every, rho, defect)
    return Trajectory(times, pops, coh, trace_err, herm, min_eig, n_steps,
                      rho.copy(), _site_labels(n_sites))


# --------------------------------------------------------------------------
# ZOFE
# --------------------------------------------------------------------------

def _bath_arrays(baths, n: int):
    """Stack per-site expansions into (n, K) arrays, padding with inert terms."""
    if isinstance(baths, BathExpansion) or baths is None:
        baths = [baths or BathExpansion.empty()] * n
    baths = list(baths)
    if len(baths) != n:
        raise ValueError(f"need one bath expansion per site ({n}), got {len(baths)}")
    K = max(b.n_terms for b in baths)
    p = np.zeros((n, K), dtype=complex)
    z = -np.ones((n, K), dtype=complex)
    for i, b in enumerate(baths):
        p[i, : b.n_terms] = b.p
        z[i, : b.n_terms] = b.z
    return p, z


class ZofeRHS:
    """Right-hand side of the ZOFE system on a flat state vector.

    The state holds rho (n*n entries) followed by the auxiliary operators,
    stored as ``O[row, site, term, col]`` so that the commutators with the
    common generator are two plain matrix products over all (site, term).
    """

    def __init__(self, h_rad: np.ndarray, p: np.ndarray, z: np.ndarray):
        self.h = np.asarray(h_rad, dtype=complex)
        self.n = n = self.h.shape[0]
        self.K = p.shape[1]
        self.p = p
        self.z = z[None, :, :, None]
        self.mih = -1j * self.h
        self.diag = np.arange(n)
        self.size = n * n * (1 + n * self.K)

    def split(self, y):
        n = self.n
        return y[: n * n].reshape(n, n), y[n * n:].reshape(n, n, self.K, n)

    def aux(self, y, site: int) -> np.ndarray:
        """Obar for one site, (n, n)."""
        return self.split(y)[1][:, site].sum(axis=1)

    def __call__(self, y):
        n = self.n
        rho, O = self.split(y)
        out = np.empty_like(y)
        drho, dO = self.split(out)
        d = self.diag

        drho[...] = self.mih @ rho - rho @ self.mih
        if self.K == 0:
            return out

        obar = O.sum(axis=2)  # obar[:, s, :] is Obar_s
        s = obar[d, d, :]  # sum_m L_m^+ Obar_m
        a = self.mih - s
        dO[...] = self.z * O
        dO += (a @ O.reshape(n, -1)).reshape(O.shape)
        dO -= (O.reshape(-1, n) @ a).reshape(O.shape)
        dO[d, d, :, d] += self.p

        # sum_s [L_s, rho Obar_s^+] + h.c.
        diss = np.einsum("sk,csk->sc", rho, obar.conj()) - rho @ s.conj().T
        drho += diss + diss.conj().T
        return out


def zofe_propagate(H, baths, rho0, dt: float = 0.0005, t_max: float = 1.0, *,
                   save_every: int = 1, watch: Sequence = (), trace_abort: float = TRACE_ABORT,
                   positivity_abort: float = POSITIVITY_ABORT) -> Trajectory:
    """Propagate the ZOFE master equation.

    Parameters
    ----------
    H : TrimerHamiltonian or array
        System Hamiltonian in cm^-1.
    baths : BathExpansion or sequence of them
        One expansion per site (a single expansion is shared by all sites).
    rho0 : array
        Initial density matrix.
    dt, t_max : float
        Fixed step and final time, ps.
    save_every : int
        Record every ``save_every``-th step.
    watch : sequence of (i, j)
        Coherences to record.
    """
    h = _as_rad_ps(H)
    n = h.shape[0]
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise ValueError("initial density matrix does not match the Hamiltonian")
    p, z = _bath_arrays(baths, n)
    rhs = ZofeRHS(h, p, z)
    y0 = np.zeros(rhs.size, dtype=complex)
    y0[: n * n] = rho0.ravel()
    steps = _n_steps(dt, t_max)
    if steps % save_every:
        raise ValueError("number of steps must be a multiple of save_every")
    return _integrate(rhs, y0, lambda y: y[: n * n].reshape(n, n), n, dt, steps, save_every,
                      watch, trace_abort, positivity_abort)


# --------------------------------------------------------------------------
# Lindblad
# --------------------------------------------------------------------------

class DephasingLindbladRHS:
    """Lindblad generator with site-projector dephasing, acting on rho (n x n)."""

    def __init__(self, h_rad, rates):
        self.h = np.asarray(h_rad, dtype=complex)
        g = np.asarray(rates, dtype=float)
        self.damp = 0.5 * (g[:, None] + g[None, :])
        np.fill_diagonal(self.damp, 0.0)
        self.n = self.h.shape[0]

    def __call__(self, y):
        rho = y.reshape(self.n, self.n)
        return (-1j * (self.h @ rho - rho @ self.h) - self.damp * rho).ravel()


class LindbladRHS:
    """General Lindblad generator for arbitrary Hamiltonian and jump operators."""

    def __init__(self, h_rad, c_ops: Sequence[np.ndarray] = ()):
        self.n = n = np.shape(h_rad)[0]
        self.c = [np.asarray(c, dtype=complex) for c in c_ops]
        self.cd = [c.conj().T for c in self.c]
        heff = np.asarray(h_rad, dtype=complex) - 0.5j * sum(
            (cd @ c for c, cd in zip(self.c, self.cd)), np.zeros((n, n), complex))
        self.mih = -1j * heff

    def __call__(self, y):
        rho = y.reshape(self.n, self.n)
        a = self.mih @ rho
        out = a + a.conj().T
        for c, cd in zip(self.c, self.cd):
            out += c @ rho @ cd
        return out.ravel()


def lindblad_propagate(H, rates, rho0, dt: float = 0.0005, t_max: float = 1.0, *,
                       save_every: int = 1, watch: Sequence = (),
                       trace_abort: float = TRACE_ABORT,
                       positivity_abort: float = POSITIVITY_ABORT) -> Trajectory:
    """Propagate a pure-dephasing Lindblad equation; ``rates`` in 1/ps per site."""
    h = _as_rad_ps(H)
    n = h.shape[0]
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (n,))
    if np.any(rates < 0):
        raise ValueError("dephasing rates must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    rhs = DephasingLindbladRHS(h, rates)
    steps = _n_steps(dt, t_max)
    return _integrate(rhs, rho0.ravel().copy(), lambda y: y.reshape(n, n), n, dt, steps,
                      save_every, watch, trace_abort, positivity_abort)


def lindblad_general_propagate(h_rad, c_ops, rho0, dt, t_max, *, save_every: int = 1,
                               trace_abort: float = TRACE_ABORT):
    """Propagate a general Lindblad equation (H already in rad/ps).

    Returns the list of sampled density matrices and their times.
    """
    n = np.shape(h_rad)[0]
    rhs = LindbladRHS(h_rad, c_ops)
    steps = _n_steps(dt, t_max)
    y = np.asarray(rho0, dtype=complex).ravel().copy()
    out, times = [y.reshape(n, n).copy()], [0.0]
    for step in range(1, steps + 1):
        y = rk4_step(rhs, y, dt)
        rho = y.reshape(n, n)
        rho[...] = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(y)):
            raise PropagationError(f"non-finite state at t={step * dt:.6g} ps")
        if abs(np.trace(rho) - 1.0) > trace_abort:
            raise TraceDriftError("trace drift in enlarged Lindblad propagation")
        if step % save_every == 0:
            out.append(rho.copy())
            times.append(step * dt)
    return np.array(times), np.array(out)


def unitary_propagate(H, rho0, dt: float = 0.0005, t_max: float = 1.0, **kw) -> Trajectory:
    """Closed-system limit: ZOFE with an empty bath."""
    return zofe_propagate(H, None, rho0, dt, t_max, **kw)


def energy_expectation(H, rho) -> float:
    mat = H.matrix if isinstance(H, TrimerHamiltonian) else np.asarray(H)
    return float(np.real(np.trace(mat @ rho)))
