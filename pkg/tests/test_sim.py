import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmc_forge.pulse import design_phydyas, pair_matrices, pr_residuals
from fbmc_forge.sim import (VALIDATE_HEADER, ExperimentConfig, budgets, channel_seed, make_channel, run_link,
                            run_trial, run_trials, sweep, theory_report, validate, write_csv, write_manifest)


def _delta(M):
    p = design_phydyas(M, 3)
    return pr_residuals(pair_matrices(p, p))[0]


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(M=48), dict(N=6), dict(trials=0), dict(K_T=0), dict(N_S=3),
                                    dict(constellation="16QAM"), dict(pulse="iota"), dict(channel_M=3)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_pr_sine_allows_short_blocks(self):
        assert ExperimentConfig(pulse="pr_sine", N=4).effective_kappa == 1

    def test_snr_list_tuple(self):
        assert ExperimentConfig(snr_db_list=[10, 20]).snr_db_list == (10.0, 20.0)

    def test_channel_seeds_distinct(self):
        cfg = ExperimentConfig()
        assert len({channel_seed(cfg, r) for r in range(20)}) == 20
        assert channel_seed(cfg, 0) != channel_seed(cfg.replace(master_seed=1), 0)

    def test_fixed_channel_rate(self):
        a = make_channel(ExperimentConfig(M=64, channel_M=64))
        b = make_channel(ExperimentConfig(M=256, channel_M=64))
        assert np.array_equal(a.taps, b.taps)
        assert make_channel(ExperimentConfig(M=256)).n_taps > a.n_taps


class TestTrials:
    def test_deterministic(self):
        cfg = ExperimentConfig(M=16, N=20)
        a, b = run_trial(cfg, 3), run_trial(cfg, 3)
        assert np.array_equal(a.sq_err, b.sq_err) and np.array_equal(a.per_symbol, b.per_symbol)
        assert not np.array_equal(a.sq_err, run_trial(cfg, 4).sq_err)

    def test_counts(self):
        cfg = ExperimentConfig(M=16, N=20, trials=3)
        tr = run_trials(cfg)
        assert tr.count == 3 * (20 - 2 * 3 + 1)
        assert tr.sq_err.shape == (32, 2)

    def test_adding_trials_keeps_earlier(self):
        a = run_trial(ExperimentConfig(M=16, N=20, trials=2), 1)
        b = run_trial(ExperimentConfig(M=16, N=20, trials=9), 1)
        assert np.array_equal(a.sq_err, b.sq_err)

    def test_pool_matches_serial(self):
        cfg = ExperimentConfig(M=16, N=20, trials=4)
        a, b = run_trials(cfg, threads=1), run_trials(cfg, threads=2)
        assert np.array_equal(a.sq_err, b.sq_err) and np.array_equal(a.per_symbol, b.per_symbol)

    def test_env_threads(self, monkeypatch):
        from fbmc_forge.sim import resolve_threads
        monkeypatch.setenv("FBMC_FORGE_THREADS", "3")
        assert resolve_threads() == 3 and resolve_threads(1) == 1

    def test_pr_ideal(self):
        cfg = ExperimentConfig(M=16, N=10, pulse="pr_sine", profile="IDEAL", K_T=2, K_R=2)
        tr = run_trial(cfg, 0)
        assert (tr.sq_err / tr.count).max() < 1e-18

    def test_flat_floor(self):
        cfg = ExperimentConfig(M=16, N=200, profile="FLAT", trials=10)
        tr = run_trials(cfg)
        assert np.mean(tr.sq_err / tr.count) == pytest.approx(2 * _delta(16), rel=0.05)

    def test_stationary_over_symbols(self):
        cfg = ExperimentConfig(M=32, N=100, profile="EVA", trials=100)
        per = run_trials(cfg).per_symbol
        assert np.abs(per / per.mean() - 1).max() < 0.1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_more_stages_do_not_hurt(self, seed):
        base = ExperimentConfig(M=64, N=60, profile="EVA", trials=4, master_seed=seed)
        one = run_trials(base)
        two = run_trials(base.replace(K_T=2, K_R=2))
        assert np.mean(two.sq_err) <= np.mean(one.sq_err)

    def test_noise_adds_expected_power(self):
        cfg = ExperimentConfig(M=32, N=60, profile="FLAT", trials=4, pulse="pr_sine")
        clean = run_trials(cfg)
        noisy = run_trials(cfg, snr_db=20.0)
        _, _, plan = __import__("fbmc_forge.sim", fromlist=["_context"])._context(cfg, 0, 0.0)
        b2 = np.sum(np.abs(plan.B_derivs[0]) ** 2, axis=1)
        emp = noisy.sq_err / noisy.count - clean.sq_err / clean.count
        assert np.mean(emp) == pytest.approx(np.mean(0.01 * b2), rel=0.05)


class TestValidate:
    def test_flat(self):
        cfg = ExperimentConfig(M=16, N=200, profile="FLAT", trials=10)
        res = validate(cfg)
        d2 = 2 * _delta(16)
        assert np.allclose(res.report.pe_total, d2, rtol=1e-9)
        assert np.mean(res.report.empirical_mse) == pytest.approx(d2, rel=0.05)

    def test_writes_csv(self, tmp_path):
        cfg = ExperimentConfig(M=16, N=20)
        validate(cfg, out_dir=tmp_path)
        lines = (tmp_path / "validate.csv").read_text().splitlines()
        assert lines[0] == ",".join(VALIDATE_HEADER)
        assert len(lines) == 1 + 32 * 2
        assert (tmp_path / "validate_summary.csv").exists()

    def test_theory_report_meta(self):
        rep = theory_report(ExperimentConfig(M=16, N=20, K_T=2, K_R=1))
        assert rep.meta == {"K_T": 2, "K_R": 1, "M": 16}


class TestSweep:
    def test_singleton_equals_validate(self):
        cfg = ExperimentConfig(M=16, N=20, trials=2)
        _, rows = sweep(cfg, "M", [16])
        res = validate(cfg)
        assert float(rows[0][4]) == np.mean(res.report.empirical_mse[:, 0])

    def test_snr_mi_monotone(self):
        cfg = ExperimentConfig(M=16, N=20, trials=2)
        _, rows = sweep(cfg, "snr", [0, 10, 20, 30])
        for n in range(2):
            mi = [float(r[7]) for r in rows if r[2] == n]
            assert all(a < b for a, b in zip(mi, mi[1:]))

    def test_pr_mode_m_scaling(self):
        cfg = ExperimentConfig(M=64, N=60, pulse="pr_sine", trials=8, profile="EVA", channel_M=64)
        _, rows = sweep(cfg, "M", [64, 128, 256])
        mse = [np.mean([float(r[4]) for r in rows if r[1] == M]) for M in (64, 128, 256)]
        for a, b in zip(mse, mse[1:]):
            assert 3.0 <= a / b <= 5.3

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            sweep(ExperimentConfig(), "kappa", [3])


class TestOutput:
    def test_run_link(self, tmp_path):
        cfg = ExperimentConfig(M=16, N=20, snr_db_list=(10.0,), realizations=2)
        header, rows = run_link(cfg, out_dir=tmp_path)
        assert len(rows) == 4 and (tmp_path / "link.csv").exists()
        assert header[0] == "realization"

    def test_manifest(self, tmp_path):
        cfg = ExperimentConfig(M=16)
        man = write_manifest(tmp_path / "m.json", cfg, "validate", ["M=16"])
        assert man["overrides"] == ["M=16"] and man["config"]["M"] == 16
        assert man["channel_seeds"] == [channel_seed(cfg, 0)]

    def test_write_csv(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["x", "y"], [[1, 2.5]])
        assert (tmp_path / "a.csv").read_text() == "x,y\n1,2.5\n"

    def test_budgets(self):
        b = budgets(ExperimentConfig(M=512, K_T=2))
        assert b["tx"].real_products == 73728


@given(st.integers(0, 2**32 - 1))
def test_seed_determinism_property(seed):
    cfg = ExperimentConfig(M=8, N=10, master_seed=seed, profile="FLAT")
    assert np.array_equal(run_trial(cfg, 0).sq_err, run_trial(cfg, 0).sq_err)
