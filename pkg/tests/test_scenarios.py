import math

import numpy as np
import pytest

from fmotrimer import scenarios
from fmotrimer.bath import BathExpansion
from fmotrimer.model import CM_TO_RAD_PS, StateSpec
from fmotrimer.scenarios import (PRESETS, ConfigError, ScenarioConfig, ScenarioError,
                                 compare_markovian, detect_oscillations, get_preset,
                                 inter_monomer_leakage, load_config, parse_config_text,
                                 phase_sweep, run_many, simulate)

FREE = dict(intra="none", inter="none")


def test_config_defaults_and_validation():
    cfg = ScenarioConfig()
    assert cfg.energies == "OLB" and cfg.dt == pytest.approx(0.0005)
    for bad in (dict(t_max=0), dict(temperature=-1), dict(bath_scale=0), dict(mode="hops"),
                dict(terms=0), dict(init="Z9:1"), dict(dt_fs=-1)):
        with pytest.raises(ConfigError):
            ScenarioConfig(**bad)


def test_config_text_parsing(tmp_path):
    text = """
    # comment line
    preset = sab-a8-77k
    temp = 300        # override
    tmax = 0.5
    bath-scale = 2
    watch = A1-A2, B3-B4
    plot = yes
    """
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert (cfg.energies, cfg.init, cfg.temperature, cfg.t_max) == ("SAB", "A8:1", 300.0, 0.5)
    assert cfg.bath_scale == 2.0 and cfg.plot is True
    assert cfg.watch == (("A1", "A2"), ("B3", "B4"))
    # command-line overrides beat the file
    assert load_config(path, {"temperature": 77.0, "mode": None}).temperature == 77.0


def test_config_round_trip(tmp_path):
    cfg = get_preset("olb-a1-77k-x4").replace(watch=("A1-A2",))
    path = tmp_path / "c.cfg"
    path.write_text(scenarios.config_to_text(cfg))
    assert load_config(path) == cfg
    assert load_config(path).digest() == cfg.digest()


@pytest.mark.parametrize("text", ["tmax 1", "colour = red", "temp = warm", "terms = 2.5"])
def test_config_text_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_preset("fig9-row1")


def test_preset_registry_coverage():
    for e in ("olb", "sab"):
        for s in ("a1", "a6", "a8"):
            for t in (77, 300):
                cfg = PRESETS[f"{e}-{s}-{t}k"]
                assert cfg.temperature == t and cfg.init == f"{s.upper()}:1"
        assert PRESETS[f"{e}-a1-77k-markov"].mode == "markovian"
        assert PRESETS[f"{e}-a1-77k-x4"].bath_scale == 4.0
        assert StateSpec.parse(PRESETS[f"{e}-phase-a1b1-77k"].init).nonzero_count() == 2
    assert PRESETS["fig3-row3"].init == "A8:1" and PRESETS["fig4-row1"].energies == "SAB"


def test_digest_ignores_output_options():
    cfg = get_preset("olb-a1-77k")
    assert cfg.digest() == cfg.replace(out="/tmp/x", plot=True, name="other").digest()
    assert cfg.digest() != cfg.replace(temperature=78).digest()


# ---------------------------------------------------------------- signal analysis

def test_oscillations_cos2_counts_full_periods():
    t = np.linspace(0, 1, 2001)
    w = 80.3 * CM_TO_RAD_PS
    period = math.pi / w
    rep = detect_oscillations(np.cos(w * t) ** 2, t, 1.0)
    assert rep.n_maxima == int(1.0 // period) == 4
    np.testing.assert_allclose(rep.peak_times, period * np.arange(1, 5), atol=1e-3)
    assert not rep.monotone


def test_oscillations_pure_exponential():
    t = np.linspace(0, 1, 1001)
    rep = detect_oscillations(0.8 * np.exp(-2.5 * t), t, 1.0, transient=0.1)
    assert rep.n_maxima == 0
    assert rep.monotone and rep.direction == "decreasing"
    assert rep.fit_residual < 1e-6
    assert rep.decay_rate == pytest.approx(2.5, rel=1e-6)
    assert rep.decay_amplitude == pytest.approx(0.8, rel=1e-6)


def test_oscillations_prominence_threshold():
    t = np.linspace(0, 1, 1001)
    small = 0.5 + 0.004 * np.sin(40 * t)
    assert detect_oscillations(small, t, 1.0).n_maxima == 0
    assert detect_oscillations(small, t, 1.0, prominence=0.001).n_maxima > 0


def test_oscillations_window_errors():
    t = np.linspace(0, 0.3, 301)
    with pytest.raises(ValueError):
        detect_oscillations(np.ones_like(t), t, 0.4)
    with pytest.raises(ValueError):
        detect_oscillations(np.ones(5), t, 0.2)


# ---------------------------------------------------------------- running

def test_unitary_zero_coupling_constant():
    cfg = ScenarioConfig(mode="unitary", init="A1:1,B3:1@45", t_max=0.05, **FREE)
    pops = simulate(cfg).trajectory.populations
    np.testing.assert_allclose(pops, np.tile(pops[0], (pops.shape[0], 1)), atol=1e-14)


def test_leakage_zero_without_inter_couplings():
    cfg = ScenarioConfig(mode="unitary", inter="none", t_max=0.2, save_every=10)
    assert inter_monomer_leakage(simulate(cfg).trajectory) == 0.0


def test_leakage_permutation_invariant():
    base = ScenarioConfig(mode="unitary", init="A1:1", t_max=0.1, save_every=10)
    ref = inter_monomer_leakage(simulate(base).trajectory)
    for init in ("B1:1", "C1:1"):
        assert inter_monomer_leakage(simulate(base.replace(init=init)).trajectory) == \
            pytest.approx(ref, abs=1e-12)
    assert ref > 0


def test_phase_sweep_requires_superposition():
    with pytest.raises(ConfigError):
        phase_sweep(ScenarioConfig(init="A1:1"))


def test_phase_sweep_zero_coupling_exact():
    cfg = ScenarioConfig(init="A1:1,B1:1", mode="unitary", t_max=0.05, **FREE)
    dev, results = phase_sweep(cfg, phases=np.linspace(0, 2 * np.pi, 5, endpoint=False))
    # only roundoff from |exp(i phi)| != 1 in floating point remains
    assert dev < 1e-15
    assert len(results) == 5


def test_compare_markovian_identity(monkeypatch):
    monkeypatch.setattr(scenarios, "scenario_bath", lambda cfg: BathExpansion.empty())
    cfg = ScenarioConfig(t_max=0.2, save_every=10)
    ratio, z, m = compare_markovian(cfg)
    assert ratio == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ConfigError):
        compare_markovian(cfg.replace(mode="unitary"))


def test_compare_markovian_guard(monkeypatch):
    monkeypatch.setattr(scenarios, "scenario_bath", lambda cfg: BathExpansion.empty())
    with pytest.raises(ZeroDivisionError):
        compare_markovian(ScenarioConfig(t_max=0.01, **FREE))


def test_numerical_failure_has_context():
    cfg = ScenarioConfig(dt_fs=40.0, t_max=1.0, mode="unitary", name="unstable")
    with pytest.raises(ScenarioError, match="unstable"):
        simulate(cfg)


def test_run_many_parallel_matches_serial():
    cfgs = [ScenarioConfig(mode="unitary", init=i, t_max=0.05, save_every=10)
            for i in ("A1:1", "A6:1")]
    serial = run_many(cfgs, workers=1)
    parallel = run_many(cfgs, workers=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.trajectory.populations, b.trajectory.populations)


def test_markovian_mode_uses_fitted_rate():
    res = simulate(ScenarioConfig(mode="markovian", t_max=0.05, save_every=10))
    assert res.rates.shape == (24,)
    assert np.all(res.rates == res.rates[0]) and res.rates[0] > 0
