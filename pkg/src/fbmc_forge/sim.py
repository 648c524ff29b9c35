"""Seeded Monte Carlo harness: link trials, theory-vs-simulation validation, sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (DistortionReport, greek_tables, mutual_information, output_noise,
                       pe_theoretical, sample_noise_variance, to_db)
from .channel import MimoChannelModel, NoiseSpec, add_awgn, flat_channel, generate_mimo_fir, custom_channel
from .fbmc import destagger_interior, interior_slice, qpsk_symbols
from .pulse import design_pulse, pulse_scalars
from .transceiver import complexity, design_plan, multi_stage_receive, multi_stage_transmit

VALIDATE_HEADER = ["k", "n", "pe1", "pe2", "pe_total", "empirical_mse", "sir_db", "sndr_db"]


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 64
    N: int = 100
    kappa: int = 3
    N_T: int = 2
    N_R: int = 2
    N_S: int = 2
    K_T: int = 1
    K_R: int = 1
    scheme: str = "SVD_INV"
    profile: str = "EVA"
    snr_db_list: tuple = ()
    trials: int = 1
    master_seed: int = 0
    constellation: str = "QPSK"
    output_dir: str = "results"
    pulse: str = "phydyas"
    symbol_power: float = 1.0
    grid_factor: int = 8
    realizations: int = 1
    channel_index: int = 0
    tolerance_db: float = 1.0
    channel_M: int = 0  # rate at which the profile is discretised; 0 means M

    def __post_init__(self):
        if self.M < 1 or self.M & (self.M - 1):
            raise ValueError("M must be a power of two")
        kappa = 1 if self.pulse == "pr_sine" else self.kappa
        if self.N <= 2 * kappa:
            raise ValueError("N must exceed 2*kappa so that interior symbols exist")
        if self.trials < 1 or self.realizations < 1:
            raise ValueError("trials and realizations must be >= 1")
        if min(self.K_T, self.K_R) < 1:
            raise ValueError("K_T and K_R must be >= 1")
        if self.N_S > min(self.N_T, self.N_R):
            raise ValueError("N_S must not exceed min(N_T, N_R)")
        if self.constellation.upper() != "QPSK":
            raise ValueError("only QPSK is supported")
        if self.channel_M < 0 or self.channel_M & (self.channel_M - 1):
            raise ValueError("channel_M must be 0 or a power of two")
        if self.pulse not in ("phydyas", "pr_sine"):
            raise ValueError(f"unknown pulse family {self.pulse!r}")
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))

    @property
    def effective_kappa(self):
        return 1 if self.pulse == "pr_sine" else self.kappa

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _rng(cfg: ExperimentConfig, *key):
    return np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=key))


def channel_seed(cfg: ExperimentConfig, realization: int = 0) -> int:
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(0, realization))
    return int(ss.generate_state(1, np.uint64)[0])


def make_channel(cfg: ExperimentConfig, realization: int | None = None) -> MimoChannelModel:
    r = cfg.channel_index if realization is None else realization
    seed = channel_seed(cfg, r)
    prof = cfg.profile.upper()
    if prof == "FLAT":
        return flat_channel(cfg.N_R, cfg.N_T, seed)
    if prof == "IDEAL":
        return custom_channel(np.eye(cfg.N_R, cfg.N_T))
    return generate_mimo_fir(prof, cfg.N_R, cfg.N_T, cfg.channel_M or cfg.M, seed)


@lru_cache(maxsize=8)
def _context(cfg: ExperimentConfig, realization: int, noise_ratio: float):
    pulse = design_pulse(cfg.pulse, cfg.M, cfg.kappa, max(6, cfg.K_T + cfg.K_R))
    ch = make_channel(cfg, realization)
    plan = design_plan(ch, cfg.M, cfg.scheme, cfg.K_T, cfg.K_R, cfg.N_S, noise_ratio, cfg.grid_factor)
    return pulse, ch, plan


@dataclass
class TrialResult:
    sq_err: np.ndarray  # (2M, N_S)
    count: int
    per_symbol: np.ndarray  # (n_interior,) mean squared error per symbol index
    wall_time: float = 0.0
    complexity: dict = field(default_factory=dict)


def run_trial(cfg: ExperimentConfig, trial: int, realization: int | None = None,
              snr_db: float | None = None) -> TrialResult:
    """One block of N multicarrier symbols per stream through the full chain."""
    t0 = time.perf_counter()
    realization = cfg.channel_index if realization is None else realization
    out_var = 0.0 if snr_db is None else cfg.symbol_power * 10 ** (-snr_db / 10)
    ratio = out_var / cfg.symbol_power if cfg.scheme == "LMMSE" else 0.0
    pulse, ch, plan = _context(cfg, realization, ratio)
    M, N = cfg.M, cfg.N
    S = qpsk_symbols(_rng(cfg, 1, realization, trial), (cfg.N_S, 2 * M, N), cfg.symbol_power)
    x = multi_stage_transmit(S, plan, pulse)
    y = ch.apply(x)
    if out_var > 0:
        spec = NoiseSpec(sample_noise_variance(out_var, pulse), int(_rng(cfg, 2, realization, trial).integers(2**63)))
        y = add_awgn(y, spec)
    grids = multi_stage_receive(y, plan, pulse, N)
    sl = interior_slice(N, pulse.kappa)
    err = np.stack([np.abs(destagger_interior(g) - S[n][:, sl]) ** 2 for n, g in enumerate(grids)])
    return TrialResult(sq_err=err.sum(axis=2).T, count=err.shape[2], per_symbol=err.mean(axis=(0, 1)),
                       wall_time=time.perf_counter() - t0)


def _trial_job(args):
    cfg, trial, realization, snr = args
    return run_trial(cfg, trial, realization, snr)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("FBMC_FORGE_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def run_trials(cfg: ExperimentConfig, realization: int | None = None, snr_db: float | None = None,
               threads: int | None = None) -> TrialResult:
    """All trials, reduced in trial order so the result does not depend on scheduling."""
    realization = cfg.channel_index if realization is None else realization
    jobs = [(cfg, t, realization, snr_db) for t in range(cfg.trials)]
    threads = resolve_threads(threads)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    sq = np.zeros_like(results[0].sq_err)
    per = np.zeros_like(results[0].per_symbol)
    for r in results:
        sq = sq + r.sq_err
        per = per + r.per_symbol
    return TrialResult(sq, sum(r.count for r in results), per / len(results),
                       sum(r.wall_time for r in results))


def theory_report(cfg: ExperimentConfig, realization: int | None = None) -> DistortionReport:
    realization = cfg.channel_index if realization is None else realization
    pulse, ch, plan = _context(cfg, realization, 0.0)
    scalars = _scalars(cfg.pulse, cfg.M, cfg.kappa, max(6, 2 * min(cfg.K_T, cfg.K_R)), cfg.symbol_power)
    return pe_theoretical(greek_tables(plan), scalars, cfg.K_T, cfg.K_R, cfg.M)


@lru_cache(maxsize=16)
def _scalars(family, M, kappa, order, power):
    p = design_pulse(family, M, kappa, order)
    return pulse_scalars(p, p, order, power)


@dataclass
class ValidationResult:
    report: DistortionReport
    within_tol: np.ndarray  # fraction of subcarriers per stream
    median_sir_theory: np.ndarray
    median_sir_empirical: np.ndarray
    trial: TrialResult


def validate(cfg: ExperimentConfig, threads: int | None = None, out_dir: str | os.PathLike | None = None) -> ValidationResult:
    """Noiseless trials against the asymptotic predictor."""
    theory = theory_report(cfg)
    tr = run_trials(cfg, threads=threads)
    emp = tr.sq_err / tr.count
    report = dataclasses.replace(theory, empirical_mse=emp)
    diff = np.abs(report.empirical_sir_db - report.sir_db)
    res = ValidationResult(report, (diff <= cfg.tolerance_db).mean(axis=0),
                           np.median(report.sir_db, axis=0), np.median(report.empirical_sir_db, axis=0), tr)
    if out_dir is not None:
        write_validation(res, cfg, out_dir)
    return res


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, header, rows):
    """Write via a single buffered call so no partial row ever reaches disk."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    Path(path).write_text(buf.getvalue())


def write_validation(res: ValidationResult, cfg: ExperimentConfig, out_dir, stem: str = "validate"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = res.report
    sir, sndr = rep.sir_db, rep.sndr_db
    rows = []
    for k in range(rep.pe1.shape[0]):
        for n in range(rep.pe1.shape[1]):
            rows.append([k, n, _fmt(rep.pe1[k, n]), _fmt(rep.pe2[k, n]), _fmt(rep.pe_total[k, n]),
                         _fmt(rep.empirical_mse[k, n]), _fmt(sir[k, n]), _fmt(sndr[k, n])])
    write_csv(out / f"{stem}.csv", VALIDATE_HEADER, rows)
    srows = [[n, _fmt(res.within_tol[n]), _fmt(res.median_sir_theory[n]), _fmt(res.median_sir_empirical[n])]
             for n in range(len(res.within_tol))]
    write_csv(out / f"{stem}_summary.csv",
              ["n", "frac_within_tol", "median_sir_theory_db", "median_sir_empirical_db"], srows)


def run_link(cfg: ExperimentConfig, threads: int | None = None, out_dir=None):
    """Noisy link over ``realizations`` channels and every SNR: theory and simulated MI."""
    rows = []
    snrs = cfg.snr_db_list or (float("inf"),)
    for r in range(cfg.realizations):
        theory = theory_report(cfg, r)
        _, _, plan = _context(cfg, r, 0.0)
        for snr in snrs:
            noisy = np.isfinite(snr)
            out_var = cfg.symbol_power * 10 ** (-snr / 10) if noisy else 0.0
            noise = output_noise(plan, out_var)
            mi_th = mutual_information(cfg.symbol_power, theory.pe_total + noise)
            tr = run_trials(cfg, r, snr if noisy else None, threads)
            mi_emp = mutual_information(cfg.symbol_power, tr.sq_err / tr.count)
            for n in range(cfg.N_S):
                rows.append([r, _fmt(snr), n, _fmt(mi_th[n]), _fmt(mi_emp[n]),
                             _fmt(mi_th[n] * 2 * cfg.M), _fmt(mi_emp[n] * 2 * cfg.M)])
    header = ["realization", "snr_db", "n", "mi_theory", "mi_empirical",
              "mi_theory_stream", "mi_empirical_stream"]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / "link.csv", header, rows)
    return header, rows


def sweep(cfg: ExperimentConfig, axis: str, values, threads: int | None = None, out_dir=None):
    """Repeat validation (axis M or K) or the noisy link (axis snr) over ``values``."""
    summary = []
    if axis not in ("M", "K", "snr"):
        raise ValueError("axis must be one of M, K, snr")
    for v in values:
        if axis == "snr":
            c = cfg.replace(snr_db_list=(float(v),))
            sub = None if out_dir is None else Path(out_dir) / f"snr_{v}"
            _, rows = run_link(c, threads, sub)
            for row in rows:
                summary.append([axis, v, row[2], "", "", "", row[3], row[4]])
            continue
        c = cfg.replace(M=int(v)) if axis == "M" else cfg.replace(K_T=int(v), K_R=int(v))
        sub = None if out_dir is None else Path(out_dir) / f"{axis}_{v}"
        res = validate(c, threads, sub)
        rep = res.report
        for n in range(c.N_S):
            summary.append([axis, v, n, _fmt(np.mean(rep.pe_total[:, n])), _fmt(np.mean(rep.empirical_mse[:, n])),
                            _fmt(res.within_tol[n]), "", ""])
    header = ["axis", "value", "n", "mean_pe_theory", "mean_mse_empirical", "frac_within_tol",
              "mi_theory", "mi_empirical"]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / "sweep_summary.csv", header, summary)
    return header, summary


def write_manifest(path, cfg: ExperimentConfig, command: str, overrides=(), extra=None):
    man = {
        "command": command,
        "library_version": __version__,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()},
        "overrides": list(overrides),
        "channel_seeds": [channel_seed(cfg, r) for r in range(max(cfg.realizations, cfg.channel_index + 1))],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        man.update(extra)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


def budgets(cfg: ExperimentConfig, n_taps: int = 3) -> dict:
    return {
        "tx": complexity("MULTISTAGE_TX", cfg.M, cfg.K_T, cfg.K_R, cfg.N_T, cfg.N_R, cfg.N_S, cfg.effective_kappa),
        "rx": complexity("MULTISTAGE_RX", cfg.M, cfg.K_T, cfg.K_R, cfg.N_T, cfg.N_R, cfg.N_S, cfg.effective_kappa),
        "multitap": complexity("MULTITAP_RX", cfg.M, 1, 1, cfg.N_T, cfg.N_R, cfg.N_S, cfg.effective_kappa, n_taps),
    }
