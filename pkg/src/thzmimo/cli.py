"""Command-line entry point for the experiment sweeps."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .beamforming import write_gain_profile_csv
from .config import PROFILES, ConfigError, PulseShape
from .experiments import (KINDS, ExperimentSpec, load_config_text, parse_bits, parse_config, parse_snr_range,
                          run_experiment, write_results_csv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thzmimo", description="THz hybrid MIMO channel estimation and "
                                "beamforming sweeps; results are written as CSV.")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--experiment", choices=KINDS, help="experiment kind")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--snr", help="SNR grid in dB as 'min:step:max' or a comma list")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials")
    p.add_argument("--adc-bits", help="comma list of ADC resolutions, 'inf' for unquantized")
    p.add_argument("--psf", choices=("rrc", "rect"), help="pulse-shaping filter")
    p.add_argument("--out", help="result CSV path (default: stdout)")
    p.add_argument("--profile", choices=sorted(PROFILES), help="base system profile")
    p.add_argument("--gain-csv", help="also write the per-subcarrier gain profile (gain_profile only)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if args.config:
        _, spec = parse_config(args.config, args.profile)
    else:
        _, spec = load_config_text("", args.profile or "desk")
    cfg = spec.config
    changes: dict = {}
    if args.experiment:
        changes["kind"] = args.experiment
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.snr:
        changes["snr_grid"] = parse_snr_range(args.snr)
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.psf:
        cfg = cfg.replace(psf=PulseShape(kind=args.psf, roll_off=cfg.psf.roll_off,
                                         upsampling=cfg.psf.upsampling, span=cfg.psf.span))
    if args.adc_bits:
        bits = tuple(parse_bits(b) for b in args.adc_bits.split(",") if b.strip())
        kind = changes.get("kind", spec.kind)
        if kind == "adc_sweep":
            changes["adc_bits"] = bits
        elif len(bits) == 1:
            cfg = cfg.replace(adc_bits=bits[0])
        else:
            raise ConfigError("--adc-bits takes a single value unless --experiment adc_sweep")
    changes["config"] = cfg
    return spec.replace(**changes)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        table = run_experiment(spec)
        write_results_csv(table, args.out if args.out else sys.stdout)
        if args.gain_csv:
            if "gain_profile" not in table.extras:
                raise ConfigError("--gain-csv requires --experiment gain_profile")
            sines, profiles = table.extras["gain_profile"]
            write_gain_profile_csv(args.gain_csv, sines, profiles["ttd"])
    except (ConfigError, ValueError, OSError) as exc:
        print(f"thzmimo: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
