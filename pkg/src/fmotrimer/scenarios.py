"""Experiment configuration, presets and analysis of population dynamics."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, signal

from . import model
from .bath import (DEFAULT_GAMMA_CM, DEFAULT_LAMBDA_CM, BathExpansion, DrudeTerm, FitError,
                   QuadratureError, SpectralDensity, fit_bath, markovian_dephasing_rate)
from .model import N_BCHL, StateSpec, TrimerHamiltonian, ParameterError
from .propagator import (POSITIVITY_ABORT, PropagationError, Trajectory,
                         lindblad_propagate, zofe_propagate)

log = logging.getLogger(__name__)

MODES = ("zofe", "markovian", "unitary")
PROMINENCE = 0.01
TRANSIENT_PS = 0.1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    energies: str = "OLB"
    init: str = "A1:1"
    temperature: float = 77.0
    t_max: float = 1.0
    dt_fs: float = 0.5
    bath_scale: float = 1.0
    mode: str = "zofe"
    terms: int = 4
    reorganization: float = DEFAULT_LAMBDA_CM
    gamma: float = DEFAULT_GAMMA_CM
    fit_tol: float = 0.02
    intra: str = "bundled"
    inter: str = "bundled"
    save_every: int = 1
    positivity_abort: float = POSITIVITY_ABORT
    watch: tuple = ()
    out: str | None = None
    plot: bool = False

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.type in ("float", "int"):
                conv = float if f.type == "float" else int
                object.__setattr__(self, f.name, conv(getattr(self, f.name)))
        if not self.t_max > 0:
            raise ConfigError("tmax must be positive")
        if not self.dt_fs > 0:
            raise ConfigError("dt must be positive")
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")
        if not self.bath_scale > 0:
            raise ConfigError("bath scale must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.terms < 1:
            raise ConfigError("terms must be at least 1")
        if self.save_every < 1:
            raise ConfigError("save_every must be at least 1")
        try:
            self.state()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        watch = tuple(tuple(p) if not isinstance(p, str) else tuple(p.split("-"))
                      for p in self.watch)
        object.__setattr__(self, "watch", watch)

    @property
    def dt(self) -> float:
        """Time step in ps."""
        return self.dt_fs * 1e-3

    def state(self) -> StateSpec:
        return StateSpec.parse(self.init)

    def spectral_density(self) -> SpectralDensity:
        return SpectralDensity((DrudeTerm(self.reorganization, self.gamma),), self.bath_scale)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["watch"] = ["-".join(p) for p in self.watch]
        return d

    def digest(self) -> str:
        """Hash of the physics-relevant settings (output options excluded)."""
        d = self.as_dict()
        for k in ("out", "plot", "name"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# config file: flat "key = value" lines
# --------------------------------------------------------------------------

_KEYS = {
    "name": ("name", str),
    "energies": ("energies", str),
    "init": ("init", str),
    "temp": ("temperature", float),
    "temperature": ("temperature", float),
    "tmax": ("t_max", float),
    "dt": ("dt_fs", float),
    "bath_scale": ("bath_scale", float),
    "mode": ("mode", str),
    "terms": ("terms", int),
    "reorg": ("reorganization", float),
    "gamma": ("gamma", float),
    "fit_tol": ("fit_tol", float),
    "intra": ("intra", str),
    "inter": ("inter", str),
    "save_every": ("save_every", int),
    "positivity_abort": ("positivity_abort", float),
    "watch": ("watch", lambda s: tuple(x.strip() for x in s.split(",") if x.strip())),
    "out": ("out", str),
    "plot": ("plot", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into ScenarioConfig keyword arguments.

    ``preset`` is returned under its own key.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key == "preset":
            out["preset"] = value.strip()
            continue
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        try:
            out[attr] = conv(value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value.strip()!r}") from exc
    return out


def load_config(path=None, overrides: dict | None = None) -> ScenarioConfig:
    """Build a config from an optional file, a preset and explicit overrides."""
    values = parse_config_text(Path(path).read_text()) if path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    preset = overrides.pop("preset", None) or values.pop("preset", None)
    values.pop("preset", None)
    base = get_preset(preset) if preset else ScenarioConfig()
    values.update(overrides)
    try:
        return base.replace(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_text(cfg: ScenarioConfig) -> str:
    inverse = {}
    for key, (attr, _) in _KEYS.items():
        inverse.setdefault(attr, key)
    lines = []
    for attr, value in cfg.as_dict().items():
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(value)
        lines.append(f"{inverse[attr]} = {value}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def _build_presets() -> dict[str, ScenarioConfig]:
    presets = {}
    for energies in ("OLB", "SAB"):
        for site in ("A1", "A6", "A8"):
            for temp in (77, 300):
                name = f"{energies.lower()}-{site.lower()}-{temp}k"
                presets[name] = ScenarioConfig(name=name, energies=energies,
                                               init=f"{site}:1", temperature=temp)
        base = presets[f"{energies.lower()}-a1-77k"]
        presets[f"{energies.lower()}-a1-77k-markov"] = base.replace(
            name=f"{energies.lower()}-a1-77k-markov", mode="markovian")
        presets[f"{energies.lower()}-a1-77k-x4"] = base.replace(
            name=f"{energies.lower()}-a1-77k-x4", bath_scale=4.0)
        presets[f"{energies.lower()}-a1-77k-unitary"] = base.replace(
            name=f"{energies.lower()}-a1-77k-unitary", mode="unitary")
        presets[f"{energies.lower()}-b8-77k"] = presets[f"{energies.lower()}-a8-77k"].replace(
            name=f"{energies.lower()}-b8-77k", init="B8:1")
        for site in ("1", "6", "8"):
            name = f"{energies.lower()}-abc{site}-77k"
            presets[name] = base.replace(name=name, init=f"A{site}:1,B{site}:1,C{site}:1")
        presets[f"{energies.lower()}-phase-a1b1-77k"] = base.replace(
            name=f"{energies.lower()}-phase-a1b1-77k", init="A1:1,B1:1")
    for row, site in enumerate(("a1", "a6", "a8"), 1):
        presets[f"fig3-row{row}"] = presets[f"olb-{site}-77k"].replace(name=f"fig3-row{row}")
        presets[f"fig4-row{row}"] = presets[f"sab-{site}-77k"].replace(name=f"fig4-row{row}")
    return presets


PRESETS = _build_presets()


def get_preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; see --list-presets") from None


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def _couplings(cfg: ScenarioConfig):
    if cfg.intra == "none":
        intra = model.IntraCouplingTable(np.zeros((N_BCHL, N_BCHL)))
    else:
        intra = model.load_intra_couplings(None if cfg.intra == "bundled" else cfg.intra)
    if cfg.inter == "none":
        inter = model.InterCouplingTable(np.zeros((N_BCHL, N_BCHL)))
    else:
        inter = model.load_inter_couplings(None if cfg.inter == "bundled" else cfg.inter)
    return intra, inter


def build_hamiltonian(cfg: ScenarioConfig) -> TrimerHamiltonian:
    intra, inter = _couplings(cfg)
    return model.build_trimer_hamiltonian(model.load_energy_set(cfg.energies), intra, inter)


def scenario_bath(cfg: ScenarioConfig) -> BathExpansion:
    """Fitted expansion at the config temperature."""
    return fit_bath(cfg.spectral_density(), cfg.temperature, cfg.terms, cfg.fit_tol)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trajectory: Trajectory
    hamiltonian: TrimerHamiltonian
    bath: BathExpansion | None = None
    rates: np.ndarray | None = None
    files: dict = field(default_factory=dict)


class ScenarioError(RuntimeError):
    """Propagation failure with scenario context."""


def simulate(cfg: ScenarioConfig) -> ScenarioResult:
    """Build the model for ``cfg`` and propagate it (no file output)."""
    H = build_hamiltonian(cfg)
    rho0 = model.init_state(cfg.state())
    watch = [(model.parse_site(a), model.parse_site(b)) for a, b in cfg.watch]
    kw = dict(save_every=cfg.save_every, watch=watch, positivity_abort=cfg.positivity_abort)
    bath, rates = None, None
    try:
        if cfg.mode == "unitary":
            traj = zofe_propagate(H, None, rho0, cfg.dt, cfg.t_max, **kw)
        else:
            bath = scenario_bath(cfg)
            if cfg.mode == "zofe":
                traj = zofe_propagate(H, bath, rho0, cfg.dt, cfg.t_max, **kw)
            else:
                rates = np.full(H.size, markovian_dephasing_rate(bath))
                traj = lindblad_propagate(H, rates, rho0, cfg.dt, cfg.t_max, **kw)
    except (PropagationError, FitError, QuadratureError) as exc:
        raise ScenarioError(f"scenario {cfg.name!r} ({cfg.mode}, {cfg.energies}, "
                            f"init {cfg.init}, T={cfg.temperature} K): {exc}") from exc
    return ScenarioResult(cfg, traj, H, bath, rates)


def run_scenario(cfg: ScenarioConfig, out_dir=None, plot: bool | None = None) -> ScenarioResult:
    """Simulate and, if an output directory is set, write CSV, metadata and plot."""
    result = simulate(cfg)
    out_dir = out_dir if out_dir is not None else cfg.out
    if out_dir is not None:
        from .output import write_outputs
        result.files = write_outputs(result, Path(out_dir),
                                     plot=cfg.plot if plot is None else plot)
    return result


def run_many(configs: Sequence[ScenarioConfig], workers: int = 1) -> list[ScenarioResult]:
    """Simulate several configs, in a process pool when ``workers > 1``."""
    if workers <= 1 or len(configs) <= 1:
        return [simulate(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(simulate, configs))


# --------------------------------------------------------------------------
# signal analysis
# --------------------------------------------------------------------------

@dataclass
class OscillationReport:
    series_id: str
    n_maxima: int
    peak_times: np.ndarray
    prominences: np.ndarray
    monotone: bool
    direction: str
    decay_amplitude: float
    decay_rate: float
    fit_residual: float

    @property
    def last_max_time(self) -> float:
        return float(self.peak_times[-1]) if self.n_maxima else float("nan")

    @property
    def max_prominence(self) -> float:
        return float(self.prominences.max()) if self.n_maxima else 0.0


def _fit_decay(t, y):
    """Least-squares fit of A exp(-k t) to (t, y); returns A, k, relative residual."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    t0 = t - t[0]
    positive = y > 0
    if positive.sum() >= 2:
        slope, icpt = np.polyfit(t0[positive], np.log(y[positive]), 1)
        guess = (math.exp(icpt), -slope)
    else:
        guess = (y[0] if y[0] else 1.0, 1.0)

    def model_fn(tt, a, k):
        return a * np.exp(-k * tt)

    try:
        (a, k), _ = optimize.curve_fit(model_fn, t0, y, p0=guess, maxfev=20000)
    except RuntimeError:
        a, k = guess
    norm = np.linalg.norm(y)
    resid = np.linalg.norm(model_fn(t0, a, k) - y) / norm if norm else 0.0
    # amplitude referenced to t = 0 of the original axis
    return float(a * math.exp(k * t[0])), float(k), float(resid)


def detect_oscillations(series, times, window: float | tuple = None,
                        transient: float = 0.0, prominence: float = PROMINENCE,
                        series_id: str = "") -> OscillationReport:
    """Count local maxima and test for monotone exponential-like decay.

    Maxima are strict local maxima with prominence above ``prominence`` that
    fall inside ``window`` (an end time, or a (start, end) pair) and after
    ``transient``.  The tail after ``transient`` (within the window) is
    checked for monotonicity and fitted with A exp(-k t).
    """
    y = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if y.shape != t.shape or y.ndim != 1:
        raise ValueError("series and times must be 1-D arrays of equal length")
    if window is None:
        start, end = t[0], t[-1]
    elif np.ndim(window) == 0:
        start, end = t[0], float(window)
    else:
        start, end = map(float, window)
    if end > t[-1] + 1e-12 or end <= start:
        raise ValueError(f"series (up to t={t[-1]:.6g}) is shorter than the window")
    start = max(start, transient)
    peaks, props = signal.find_peaks(y, prominence=prominence)
    keep = (t[peaks] >= start - 1e-12) & (t[peaks] <= end + 1e-12)
    # strict maxima only: find_peaks also reports flat-topped plateaus
    strict = [(y[i] > y[i - 1]) and (y[i] > y[i + 1]) for i in peaks]
    keep &= np.array(strict, dtype=bool) if len(peaks) else keep
    peak_times = t[peaks][keep]
    proms = props["prominences"][keep]

    tail = (t >= start - 1e-12) & (t <= end + 1e-12)
    dy = np.diff(y[tail])
    if np.all(dy <= 0):
        monotone, direction = True, "decreasing"
    elif np.all(dy >= 0):
        monotone, direction = True, "increasing"
    else:
        monotone, direction = False, "none"
    a, k, res = _fit_decay(t[tail], y[tail])
    return OscillationReport(series_id, int(keep.sum()), peak_times, proms, monotone,
                             direction, a, k, res)


def inter_monomer_leakage(traj: Trajectory, home: str | None = None) -> float:
    """Largest population found outside the initially excited monomer.

    ``home`` defaults to the monomer holding most population at t = 0.
    """
    pops = traj.populations
    blocks = pops.reshape(pops.shape[0], 3, N_BCHL).sum(axis=2)
    h = model.MONOMERS.index(home.upper()) if home else int(np.argmax(blocks[0]))
    return float(np.max(np.delete(blocks, h, axis=1).sum(axis=1)))


def phase_sweep(base: ScenarioConfig, phases: Iterable[float] | None = None,
                amplitude: int = -1, workers: int = 1):
    """Rerun ``base`` with the relative phase of one amplitude swept.

    ``phases`` in radians (default: 8 points on [0, 2 pi)).  Returns the
    maximum over time, sites and phase pairs of the population difference,
    together with the per-phase trajectories.
    """
    spec = base.state()
    if spec.nonzero_count() < 2:
        raise ConfigError("phase sweep needs an initial state with at least two amplitudes")
    phases = np.arange(8) * (2 * math.pi / 8) if phases is None else np.asarray(list(phases))
    k = amplitude % len(spec.amplitudes)
    configs = [base.replace(init=spec.with_phase(k, float(ph)).format(),
                            name=f"{base.name}-phase{i}") for i, ph in enumerate(phases)]
    results = run_many(configs, workers)
    stack = np.stack([r.trajectory.populations for r in results])
    deviation = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    return deviation, results


def compare_markovian(cfg: ScenarioConfig, site: str = "A3", t: float | None = None):
    """Ratio of the population on ``site`` at ``t`` (default t_max), ZOFE over Lindblad.

    The Lindblad rates come from the same fitted bath.  Returns
    ``(ratio, zofe_result, markovian_result)``.
    """
    if cfg.mode != "zofe":
        raise ConfigError("compare_markovian expects a config in zofe mode")
    t = cfg.t_max if t is None else t
    z = simulate(cfg)
    m = simulate(cfg.replace(mode="markovian", name=cfg.name + "-markov"))
    idx = model.parse_site(site)
    pz = z.trajectory.at(t)[idx]
    pm = m.trajectory.at(t)[idx]
    if pm < 1e-6:
        raise ZeroDivisionError(f"Markovian population on {site} is below 1e-6")
    return float(pz / pm), z, m
