"""Drude-Lorentz spectral densities, bath correlation functions and their
exponential-sum representation.

Conventions: spectral densities and frequencies are in cm^-1; correlation
functions are returned in (rad/ps)^2 with time in ps, i.e.

    alpha(tau) = (1/pi) int_0^inf dw J(w) [coth(w / 2 kT) cos(w tau) - i sin(w tau)]

with w converted to rad/ps.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, linalg, optimize

from .model import CM_TO_RAD_PS, KB_CM_PER_K

log = logging.getLogger(__name__)

#: correlation time 1/gamma of about 50 fs
DEFAULT_GAMMA_CM = 106.18
DEFAULT_LAMBDA_CM = 35.0
FIT_WINDOW_PS = 1.0
FIT_SAMPLES = 2000


class BathError(ValueError):
    pass


class QuadratureError(BathError):
    pass


class FitError(BathError):
    """Exponential fit did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class DrudeTerm:
    reorganization: float  # lambda, cm^-1
    width: float  # gamma, cm^-1

    def __post_init__(self):
        if not (self.reorganization > 0 and self.width > 0):
            raise BathError("Drude-Lorentz terms need lambda > 0 and gamma > 0")


@dataclass(frozen=True)
class SpectralDensity:
    """Sum of Drude-Lorentz terms ``2 lambda gamma w / (w^2 + gamma^2)``, times ``scale``."""

    terms: tuple[DrudeTerm, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        terms = tuple(t if isinstance(t, DrudeTerm) else DrudeTerm(*t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if not self.scale > 0:
            raise BathError("spectral density scale must be positive")

    @classmethod
    def default(cls, scale: float = 1.0) -> "SpectralDensity":
        return cls((DrudeTerm(DEFAULT_LAMBDA_CM, DEFAULT_GAMMA_CM),), scale)

    def scaled(self, factor: float) -> "SpectralDensity":
        return SpectralDensity(self.terms, self.scale * factor)

    def __call__(self, omega):
        return evaluate_spectral_density(self, omega)

    def over_omega(self, omega):
        """J(w)/w, finite at w = 0."""
        w = np.asarray(omega, dtype=float)
        out = np.zeros_like(w)
        for t in self.terms:
            out = out + 2.0 * t.reorganization * t.width / (w**2 + t.width**2)
        return self.scale * out

    def key(self) -> tuple:
        return (tuple((t.reorganization, t.width) for t in self.terms), self.scale)


def evaluate_spectral_density(J: SpectralDensity, omega):
    """J(omega) in cm^-1 for omega >= 0 (cm^-1)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise BathError("spectral density is only defined for omega >= 0")
    val = w * J.over_omega(w)
    return float(val) if val.ndim == 0 else val


def reorganization_energy(J: SpectralDensity) -> float:
    """(1/pi) int J(w)/w dw; analytic for Drude-Lorentz terms."""
    return J.scale * sum(t.reorganization for t in J.terms)


def reorganization_energy_quad(J: SpectralDensity) -> float:
    """Same integral as :func:`reorganization_energy`, by adaptive quadrature."""
    if not J.terms:
        return 0.0
    val, _ = integrate.quad(J.over_omega, 0.0, np.inf, limit=500)
    return val / math.pi


def _x_coth(x, kT):
    """x * coth(x / (2 kT)); tends to 2 kT at x = 0 and to |x| for kT = 0."""
    x = np.asarray(x, dtype=float)
    if kT == 0.0:
        return np.abs(x)
    y = x / (2.0 * kT)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(y) < 1e-8, 2.0 * kT, x / np.tanh(np.where(y == 0, 1.0, y)))
    return out


def _check_grid(grid) -> np.ndarray:
    tau = np.asarray(grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise BathError("time grid must be a non-empty 1-D array")
    if tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise BathError("time grid must be ascending from tau >= 0")
    return tau


def thermal_correlation(J: SpectralDensity, T: float, grid, epsabs: float = 1e-8,
                        epsrel: float = 1e-10, rtol: float = 1e-7) -> np.ndarray:
    """Bath correlation function alpha(tau) in (rad/ps)^2 on a time grid in ps.

    Evaluated by adaptive Fourier quadrature on [0, inf).  The real part at
    tau = 0 diverges logarithmically for Drude-Lorentz densities (the
    J(w) ~ 1/w tail) and is returned as ``+inf``; the imaginary part there is 0.
    """
    if T < 0:
        raise BathError("temperature must be non-negative")
    tau = _check_grid(grid)
    # linear in the scale factor: integrate the unscaled density once
    unit = J.scaled(1.0 / J.scale)
    alpha = _thermal_correlation_cached(unit.key(), float(T), tau.tobytes(), epsabs, epsrel, rtol)
    with np.errstate(invalid="ignore"):
        out = alpha * J.scale
    out[tau == 0.0] = complex(np.inf, 0.0)
    return out


@lru_cache(maxsize=64)
def _thermal_correlation_cached(jkey, T, tau_bytes, epsabs, epsrel, rtol):
    terms, scale = jkey
    J = SpectralDensity(tuple(DrudeTerm(*t) for t in terms), scale)
    tau = np.frombuffer(tau_bytes, dtype=float)
    out = np.zeros(tau.size, dtype=complex)
    if not J.terms:
        return out
    kT = KB_CM_PER_K * T

    def re_integrand(x):
        return J.over_omega(x) * _x_coth(x, kT) / math.pi

    def im_integrand(x):
        return J.over_omega(x) * x / math.pi

    errors = np.zeros(tau.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for k, t in enumerate(tau):
            if t == 0.0:
                continue
            wvar = CM_TO_RAD_PS * t
            re, re_err = integrate.quad(re_integrand, 0.0, np.inf, weight="cos", wvar=wvar,
                                        epsabs=epsabs, epsrel=epsrel, limlst=200)
            im, im_err = integrate.quad(im_integrand, 0.0, np.inf, weight="sin", wvar=wvar,
                                        epsabs=epsabs, epsrel=epsrel, limlst=200)
            out[k] = complex(re, -im)
            errors[k] = re_err + im_err
    # accuracy is judged against the size of the function, not pointwise
    achieved = errors.max()
    allowed = rtol * np.abs(out).max()
    if achieved > allowed:
        raise QuadratureError(f"correlation quadrature reached only {achieved:.3g} cm^-2 "
                              f"(allowed {allowed:.3g})")
    out *= CM_TO_RAD_PS**2
    out[tau == 0.0] = complex(np.inf, 0.0)
    out.setflags(write=False)
    return out


def drude_matsubara_correlation(J: SpectralDensity, T: float, tau, n_matsubara: int = 20000):
    """Drude-Lorentz alpha(tau) from the Matsubara series, in (rad/ps)^2.

    Independent of :func:`thermal_correlation`; used as a cross-check.  Needs T > 0.
    """
    if T <= 0:
        raise BathError("Matsubara series requires T > 0")
    tau = np.asarray(tau, dtype=float)
    kT = KB_CM_PER_K * T
    beta = 1.0 / kT
    out = np.zeros(tau.shape, dtype=complex)
    nu = 2.0 * math.pi * kT * np.arange(1, n_matsubara + 1)
    for term in J.terms:
        lam, g = J.scale * term.reorganization, term.width
        g_r = g * CM_TO_RAD_PS
        out += lam * g * (1.0 / math.tan(beta * g / 2.0) - 1j) * np.exp(-g_r * tau)
        coeff = 4.0 * lam * g / beta * nu / (nu**2 - g**2)
        out += np.exp(-np.multiply.outer(tau, nu * CM_TO_RAD_PS)) @ coeff
    return out * CM_TO_RAD_PS**2


def default_fit_grid(window: float = FIT_WINDOW_PS, samples: int = FIT_SAMPLES) -> np.ndarray:
    """Uniform grid on [0, window] with ``samples`` points."""
    return np.linspace(0.0, window, samples)


# --------------------------------------------------------------------------
# exponential-sum expansion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BathExpansion:
    """alpha(tau) ~ sum_j p_j exp(z_j tau) for tau >= 0.

    ``p`` in (rad/ps)^2, ``z`` in rad/ps; every Re z_j < 0.
    """

    p: np.ndarray
    z: np.ndarray
    residual: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=complex)).copy()
        z = np.atleast_1d(np.asarray(self.z, dtype=complex)).copy()
        if p.shape != z.shape or p.ndim != 1:
            raise BathError("prefactors and rates must be 1-D arrays of equal length")
        if np.any(z.real >= 0):
            raise BathError("every exponential rate needs Re z < 0")
        p.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z)

    @classmethod
    def empty(cls) -> "BathExpansion":
        return cls(np.zeros(0, complex), np.zeros(0, complex))

    @property
    def n_terms(self) -> int:
        return self.p.size

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.exp(np.multiply.outer(tau, self.z)) @ self.p

    def scaled(self, factor: float) -> "BathExpansion":
        return BathExpansion(self.p * factor, self.z, self.residual, dict(self.meta))

    def save(self, path) -> None:
        rows = np.column_stack([self.p.real, self.p.imag, self.z.real, self.z.imag])
        header = ["bath expansion: alpha(tau) = sum_j p_j exp(z_j tau)",
                  "columns: p_re p_im [(rad/ps)^2]  z_re z_im [rad/ps]",
                  f"residual: {self.residual!r}"]
        header += [f"{k}: {v}" for k, v in sorted(self.meta.items())]
        body = "\n".join(" ".join(repr(float(x)) for x in row) for row in rows)
        Path(path).write_text("\n".join("# " + h for h in header) + "\n" + body + "\n")

    @classmethod
    def load(cls, path) -> "BathExpansion":
        rows, residual = [], 0.0
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                if line[1:].strip().startswith("residual:"):
                    residual = float(line.split(":", 1)[1])
                continue
            if line.strip():
                rows.append([float(x) for x in line.split()])
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(arr[:, 0] + 1j * arr[:, 1], arr[:, 2] + 1j * arr[:, 3], residual)


def _relative_residual(tau, samples, p, z) -> float:
    fit = np.exp(np.multiply.outer(tau, z)) @ p
    return float(np.linalg.norm(fit - samples) / np.linalg.norm(samples))


def _amplitudes(tau, samples, z):
    basis = np.exp(np.multiply.outer(tau, z))
    p, *_ = np.linalg.lstsq(basis, samples, rcond=None)
    return p


def matrix_pencil(samples, h: float, K: int, pencil: int | None = None):
    """Matrix-pencil estimate of K complex rates from uniformly spaced samples.

    Returns rates ``z`` (1/time units of ``h``) and amplitudes referenced to
    the first sample.
    """
    y = np.asarray(samples, dtype=complex)
    n = y.size
    L = pencil or max(K, n // 3)
    if n - L < K or L < K:
        raise FitError(f"{n} samples are too few for {K} exponentials")
    Y = linalg.hankel(y[: n - L], y[n - L - 1:])
    _, _, vh = linalg.svd(Y, full_matrices=False)
    V = vh[:K].conj().T
    mu = linalg.eigvals(linalg.pinv(V[:-1]) @ V[1:])
    z = np.log(mu.astype(complex)) / h
    return z, _amplitudes(np.arange(n) * h, y, z)


def _pack(z):
    # Re z = -exp(a) keeps every rate decaying during refinement
    return np.concatenate([np.log(-z.real), z.imag])


def _unpack(x, K):
    return -np.exp(x[:K]) + 1j * x[K:]


def fit_exponentials(samples, K: int, tol: float = 0.02, grid=None,
                     max_pencil_samples: int = 600) -> BathExpansion:
    """Fit a sum of ``K`` decaying complex exponentials to correlation samples.

    ``grid`` defaults to :func:`default_fit_grid` (must be uniform).  The
    rates are seeded with a matrix-pencil estimate, unstable roots are
    pruned, and a nonlinear least-squares refinement over the rates (with
    amplitudes solved linearly) minimizes the relative L2 residual over all
    finite samples.  Raises :class:`FitError` if the residual exceeds ``tol``.
    """
    if int(K) < 1:
        raise BathError("need at least one exponential term")
    K = int(K)
    samples = np.asarray(samples, dtype=complex)
    tau = default_fit_grid(samples=samples.size) if grid is None else np.asarray(grid, float)
    if tau.shape != samples.shape:
        raise BathError("grid and samples differ in length")
    steps = np.diff(tau)
    if np.ptp(steps) > 1e-9 * steps.mean():
        raise BathError("exponential fit needs a uniform grid")
    finite = np.isfinite(samples)
    first = int(np.argmax(finite))
    if not np.all(finite[first:]):
        raise BathError("non-finite samples are only allowed at the start of the window")
    tau, samples = tau[first:], samples[first:]
    h = steps.mean()

    stride = max(1, samples.size // max_pencil_samples)
    z0 = np.zeros(0, complex)
    for k in range(K, 0, -1):
        z_try, _ = matrix_pencil(samples[::stride], h * stride, k)
        z_try = z_try[z_try.real < 0]
        if z_try.size:
            z0 = z_try
            break
    # pad pruned roots with a geometric ladder of fast real decays
    fastest = np.max(-z0.real) if z0.size else 1.0 / (tau[-1] - tau[0])
    n_extra = K - z0.size
    z0 = np.concatenate([z0, -fastest * 3.0 ** np.arange(1, n_extra + 1)])

    scale = np.linalg.norm(samples)

    def resid(x):
        z = _unpack(x, K)
        basis = np.exp(np.multiply.outer(tau, z))
        p, *_ = np.linalg.lstsq(basis, samples, rcond=None)
        r = (basis @ p - samples) / scale
        return np.concatenate([r.real, r.imag])

    best = _pack(z0)
    try:
        sol = optimize.least_squares(resid, best, method="lm", xtol=1e-14, ftol=1e-14,
                                     gtol=1e-14, max_nfev=4000 * K)
        if np.linalg.norm(sol.fun) <= np.linalg.norm(resid(best)):
            best = sol.x
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.warning("nonlinear refinement failed (%s); keeping pencil estimate", exc)
    z = _unpack(best, K)
    p = _amplitudes(tau, samples, z)
    order = np.argsort(z.real)[::-1]
    p, z = p[order], z[order]
    res = _relative_residual(tau, samples, p, z)
    meta = {"K": K, "window_ps": float(tau[-1]), "n_samples": int(samples.size),
            "skipped_leading_samples": first}
    if not res <= tol:
        raise FitError(f"relative residual {res:.4g} exceeds tol {tol} with K={K}; "
                       "increase K", residual=res)
    return BathExpansion(p, z, res, meta)


def fit_bath(J: SpectralDensity, T: float, K: int = 4, tol: float = 0.02,
             window: float = FIT_WINDOW_PS, samples: int = FIT_SAMPLES) -> BathExpansion:
    """Sample the thermal correlation function and fit it (cached).

    The fit of the unscaled density is reused for every scale factor, since
    the amplitudes are linear in it.
    """
    unit = J.scaled(1.0 / J.scale)
    fit = _fit_bath_cached(unit.key(), float(T), int(K), float(tol), float(window), int(samples))
    return fit.scaled(J.scale) if J.scale != 1.0 else fit


@lru_cache(maxsize=64)
def _fit_bath_cached(jkey, T, K, tol, window, samples):
    terms, scale = jkey
    J = SpectralDensity(tuple(DrudeTerm(*t) for t in terms), scale)
    if not J.terms:
        return BathExpansion.empty()
    grid = default_fit_grid(window, samples)
    alpha = thermal_correlation(J, T, grid)
    exp = fit_exponentials(alpha, K, tol, grid)
    exp.meta.update({"T_K": T, "reorganization_cm": reorganization_energy(J)})
    return exp


def markovian_dephasing_rate(b: BathExpansion) -> float:
    """Gamma = 2 Re int_0^inf alpha = 2 Re sum_j (-p_j / z_j), in 1/ps."""
    if b.n_terms == 0:
        return 0.0
    return float(2.0 * np.sum(-b.p / b.z).real)


def markovian_rates(baths: Sequence[BathExpansion]) -> np.ndarray:
    return np.array([markovian_dephasing_rate(b) for b in baths])
