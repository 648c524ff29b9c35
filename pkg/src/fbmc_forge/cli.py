"""Command-line entry point: ``fbmc-forge <subcommand> [--config F] [--set K=V ...]``."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .pulse import design_pulse, pair_matrices, pr_residuals
from .sim import (ExperimentConfig, _fmt, resolve_threads, run_link, sweep, theory_report, validate,
                  write_csv, write_manifest)
from .transceiver import Algorithm, NumericalDegeneracyError, complexity

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3
SUBCOMMANDS = ("design-pulse", "check-pr", "predict", "run-link", "validate", "sweep", "complexity")

# keys accepted by the complexity subcommand in addition to the experiment keys
_EXTRA_KEYS = {"N_taps": int, "algorithm": str, "axis": str, "values": str, "trailing_N": int}


class ConfigError(ValueError):
    pass


def _field_types():
    return {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, value):
    types = _field_types()
    if key in _EXTRA_KEYS:
        return _EXTRA_KEYS[key](value)
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    default = ExperimentConfig.__dataclass_fields__[key].default
    if key == "snr_db_list":
        return tuple(float(v) for v in str(value).replace(";", ",").split(",") if v.strip())
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {value!r}") from e
    return str(value)


def load_settings(path=None, overrides=()):
    """Flat dict from an INI file (any section) plus KEY=VALUE overrides."""
    settings = {}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in cp.sections():
            for key, value in cp[section].items():
                settings[key] = _coerce(key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        settings[key.strip()] = _coerce(key.strip(), value.strip())
    return settings


def build_config(settings, seed=None, out=None):
    kw = {k: v for k, v in settings.items() if k in _field_types()}
    if seed is not None:
        kw["master_seed"] = int(seed)
    if out is not None:
        kw["output_dir"] = str(out)
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _parser():
    ap = argparse.ArgumentParser(prog="fbmc-forge", description=__doc__)
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE")
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    return ap


def _cmd_design_pulse(cfg, settings, out):
    p = design_pulse(cfg.pulse, cfg.M, cfg.kappa)
    Path(out, "pulse.csv").write_text("".join(f"{v:.17g}\n" for v in p.samples))
    print(f"pulse {cfg.pulse} M={cfg.M} kappa={p.kappa} length={p.samples.size}")


def _cmd_check_pr(cfg, settings, out):
    p = design_pulse(cfg.pulse, cfg.M, cfg.kappa)
    delta, rr, sr = pr_residuals(pair_matrices(p, p), cfg.symbol_power)
    floor = 10 * np.log10(cfg.symbol_power / (2 * delta)) if delta > 0 else 300.0
    write_csv(Path(out, "check_pr.csv"), ["delta", "r_residual", "s_residual", "sir_floor_db"],
              [[_fmt(delta), _fmt(rr), _fmt(sr), _fmt(floor)]])
    print(f"delta={delta:.6g} r_residual={rr:.6g} s_residual={sr:.6g} sir_floor_db={floor:.2f}")


def _cmd_predict(cfg, settings, out):
    rep = theory_report(cfg)
    sir = rep.sir_db
    rows = [[k, n, _fmt(rep.pe1[k, n]), _fmt(rep.pe2[k, n]), _fmt(rep.pe_total[k, n]), _fmt(sir[k, n])]
            for k in range(rep.pe1.shape[0]) for n in range(rep.pe1.shape[1])]
    write_csv(Path(out, "predict.csv"), ["k", "n", "pe1", "pe2", "pe_total", "sir_db"], rows)
    print("median theoretical SIR (dB) per stream:", np.round(np.median(sir, axis=0), 3).tolist())


def _cmd_validate(cfg, settings, out, threads):
    res = validate(cfg, threads, out)
    print("fraction within tolerance per stream:", np.round(res.within_tol, 4).tolist())
    print("median SIR theory/empirical (dB):", np.round(res.median_sir_theory, 3).tolist(),
          np.round(res.median_sir_empirical, 3).tolist())


def _cmd_run_link(cfg, settings, out, threads):
    _, rows = run_link(cfg, threads, out)
    print(f"wrote {len(rows)} rows to {Path(out, 'link.csv')}")


def _cmd_sweep(cfg, settings, out, threads):
    axis = settings.get("axis")
    values = settings.get("values")
    if axis is None or values is None:
        raise ConfigError("sweep needs --set axis=M|K|snr and --set values=v1,v2,...")
    vals = [float(v) if axis == "snr" else int(v) for v in str(values).split(",") if v.strip()]
    _, summary = sweep(cfg, axis, vals, threads, out)
    print(f"wrote {len(summary)} summary rows to {Path(out, 'sweep_summary.csv')}")


def _cmd_complexity(cfg, settings, out):
    rows = []
    for alg in Algorithm:
        if "algorithm" in settings and settings["algorithm"].upper() != alg.value:
            continue
        b = complexity(alg, cfg.M, cfg.K_T, cfg.K_R, cfg.N_T, cfg.N_R, cfg.N_S, cfg.effective_kappa,
                       settings.get("N_taps", 3), settings.get("trailing_N"))
        rows.append([alg.value, b.real_products, b.real_sums])
        print(f"{alg.value}: products={b.real_products} sums={b.real_sums}")
    write_csv(Path(out, "complexity.csv"), ["algorithm", "real_products", "real_sums"], rows)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        settings = load_settings(args.config, args.overrides)
        cfg = build_config(settings, args.seed, args.out)
        threads = resolve_threads(args.threads)
    except (ConfigError, ValueError) as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", cfg, args.subcommand, args.overrides, {"threads": threads})
    try:
        cmd = args.subcommand
        if cmd == "design-pulse":
            _cmd_design_pulse(cfg, settings, out)
        elif cmd == "check-pr":
            _cmd_check_pr(cfg, settings, out)
        elif cmd == "predict":
            _cmd_predict(cfg, settings, out)
        elif cmd == "validate":
            _cmd_validate(cfg, settings, out, threads)
        elif cmd == "run-link":
            _cmd_run_link(cfg, settings, out, threads)
        elif cmd == "sweep":
            _cmd_sweep(cfg, settings, out, threads)
        else:
            _cmd_complexity(cfg, settings, out)
    except NumericalDegeneracyError as e:
        print(f"error: degenerate: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
