"""Command-line front end: ``fmotrimer [--preset NAME] [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .bath import BathError
from .model import ParameterError
from .scenarios import (PRESETS, ConfigError, ScenarioError, detect_oscillations,
                        inter_monomer_leakage, load_config, run_scenario)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fmotrimer",
                                 description="Excitation transfer in the FMO trimer.")
    ap.add_argument("--config", help="key = value scenario file")
    ap.add_argument("--preset", help="named preset (see --list-presets)")
    ap.add_argument("--energies", help="olb, sab or a path to an 8-value table")
    ap.add_argument("--init", help="initial state, e.g. A1:0.707,B1:0.707@90")
    ap.add_argument("--temp", type=float, help="temperature in K")
    ap.add_argument("--tmax", type=float, help="final time in ps")
    ap.add_argument("--dt", type=float, help="time step in fs")
    ap.add_argument("--bath-scale", type=float, help="spectral density prefactor")
    ap.add_argument("--mode", choices=("zofe", "markovian", "unitary"))
    ap.add_argument("--terms", type=int, help="exponential terms in the bath fit")
    ap.add_argument("--out", help="output directory for CSV and metadata")
    ap.add_argument("--plot", action="store_true", default=None, help="also write an SVG plot")
    ap.add_argument("--name", help="output file stem")
    ap.add_argument("--list-presets", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _overrides(args) -> dict:
    energies = args.energies.upper() if args.energies and args.energies.lower() in ("olb", "sab") \
        else args.energies
    return {"preset": args.preset, "energies": energies, "init": args.init,
            "temperature": args.temp, "t_max": args.tmax, "dt_fs": args.dt,
            "bath_scale": args.bath_scale, "mode": args.mode, "terms": args.terms,
            "out": args.out, "plot": args.plot, "name": args.name}


def _summary(result) -> str:
    cfg, traj = result.config, result.trajectory
    m, b, _ = max(cfg.state().amplitudes, key=lambda e: abs(e[2]))
    site = f"{m}{b}"
    lines = [f"scenario {cfg.name}: {cfg.mode}, {cfg.energies}, init {cfg.init}, "
             f"T = {cfg.temperature:g} K, {traj.steps} steps"]
    if traj.n_sites == 24:
        window = min(0.4, traj.times[-1])
        rep = detect_oscillations(traj.population(site), traj.times, window)
        lines.append(f"  {site}: {rep.n_maxima} maxima within {window:g} ps")
        lines.append(f"  inter-monomer leakage: {inter_monomer_leakage(traj):.4f}")
    lines.append(f"  max trace error {np.max(traj.trace_error):.2e}, "
                 f"min eigenvalue {np.min(traj.min_eigenvalue):.2e}")
    for kind, path in result.files.items():
        lines.append(f"  {kind}: {path}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_presets:
        for name, cfg in PRESETS.items():
            print(f"{name:24s} {cfg.energies} {cfg.init:22s} {cfg.temperature:g} K  {cfg.mode}"
                  + (f"  x{cfg.bath_scale:g}" if cfg.bath_scale != 1 else ""))
        return EXIT_OK
    try:
        cfg = load_config(args.config, _overrides(args))
        result = run_scenario(cfg)
    except (ConfigError, ParameterError, BathError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(_summary(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
