import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmc_forge.fbmc import (DemodGrid, analyze, channel_demod_closed_form, destagger, destagger_interior,
                             direct_chain_oracle, ideal_demod_closed_form, interior_slice,
                             modulator_constants, qpsk_symbols, signal_length, stagger, synthesize,
                             unstagger, SymbolGrid)
from fbmc_forge.pulse import design_phydyas, design_pr_sine, pair_matrices


def _qpsk(M, N, seed=0):
    return qpsk_symbols(np.random.default_rng(seed), (2 * M, N))


def _rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


class TestConstants:
    def test_unit_modulus_and_unitary(self):
        c = modulator_constants(16)
        assert np.allclose(np.abs(c.phi), 1) and np.allclose(np.abs(c.theta), 1)
        F = c.fourier_matrix()
        assert np.abs(F.conj().T @ F - np.eye(32)).max() < 1e-12

    def test_fast_transform_matches_matrix(self):
        c = modulator_constants(8)
        x = np.random.default_rng(1).standard_normal(16) + 0j
        assert np.allclose(c.F(x), c.fourier_matrix() @ x)
        assert np.allclose(c.FH(x), c.fourier_matrix().conj().T @ x)

    def test_phi_formula(self):
        c = modulator_constants(4)
        k = np.arange(8)
        assert np.allclose(c.phi, np.exp(-1j * np.pi * 5 * k / 8))


class TestStagger:
    def test_real_symbols_zero_odd_columns(self):
        S = np.ones((8, 3))
        assert not stagger(S)[:, 1::2].any()

    def test_roundtrip(self):
        S = _qpsk(4, 7)
        g = stagger(S)
        assert g.shape == (8, 14)
        assert np.array_equal(unstagger(g), S)

    def test_symbol_grid_parts(self):
        S = _qpsk(4, 5)[None]
        sg = SymbolGrid(S)
        assert sg.streams == 1
        assert np.array_equal(sg.b_part + 1j * sg.c_part, S)
        assert sg.staggered.shape == (1, 8, 10)

    def test_qpsk_power(self):
        S = qpsk_symbols(np.random.default_rng(3), (64, 2000), power=2.0)
        assert np.mean(np.abs(S) ** 2) == pytest.approx(2.0)
        S = qpsk_symbols(np.random.default_rng(3), (64, 2000))
        assert abs(np.mean(S)) < 0.01


class TestSynthesize:
    def test_zero(self):
        p = design_phydyas(8, 3)
        assert not synthesize(np.zeros((16, 6)), p).any()

    def test_length(self):
        p = design_phydyas(32, 3)
        x = synthesize(stagger(_qpsk(32, 4)), p)
        assert x.size == 416 == signal_length(32, 4, 3)

    @pytest.mark.parametrize("M", [16, 32])
    def test_matches_direct_oracle(self, M):
        p = design_phydyas(M, 3)
        g = stagger(_qpsk(M, 6, seed=M))
        assert _rel(synthesize(g, p), direct_chain_oracle(g, p)) < 1e-9

    def test_single_subcarrier_is_modulated_pulse(self):
        M, k = 8, 3
        p = design_phydyas(M, 3)
        g = np.zeros((2 * M, 2))
        g[k, 0] = 1.0
        x = direct_chain_oracle(g, p)
        c = modulator_constants(M)
        n = np.arange(p.samples.size)
        ref = np.conj(c.phi[k]) / np.sqrt(2 * M) * np.exp(2j * np.pi * k * n / (2 * M)) * p.samples
        assert np.allclose(x[:n.size], ref, atol=1e-14)
        assert np.allclose(synthesize(g, p), x, atol=1e-14)

    def test_direct_oracle_zero(self):
        assert not direct_chain_oracle(np.zeros((8, 4)), design_phydyas(4, 3)).any()

    def test_parseval(self):
        M = 64
        p = design_phydyas(M, 3)
        g = stagger(_qpsk(M, 200, seed=5))
        x = synthesize(g, p)
        expected = p.energy * np.sum(g**2) / (2 * M)
        assert np.sum(np.abs(x) ** 2) == pytest.approx(expected, rel=0.01)

    def test_raw_pulse_vector(self):
        p = design_phydyas(8, 3)
        g = stagger(_qpsk(8, 4))
        assert np.array_equal(synthesize(g, p.samples), synthesize(g, p))
        with pytest.raises(ValueError):
            synthesize(g, p.samples[:-1])


class TestAnalyze:
    def test_zero(self):
        p = design_phydyas(8, 3)
        z = analyze(np.zeros(signal_length(8, 5, 3)), p)
        assert z.z.shape == (16, 16) and not z.z.any()

    def test_bad_length(self):
        p = design_phydyas(8, 3)
        with pytest.raises(ValueError):
            analyze(np.zeros(100), p)
        with pytest.raises(ValueError):
            analyze(np.zeros(64), p.samples)

    def test_pr_roundtrip(self):
        M, N = 16, 12
        p = design_pr_sine(M)
        S = _qpsk(M, N)
        grid = analyze(synthesize(stagger(S), p), p)
        assert grid.n_symbols == N
        est = destagger_interior(grid)
        assert np.abs(est - S[:, interior_slice(N, 1)]).max() < 1e-10
        assert np.abs(destagger(grid, 1) - S[:, 0]).max() < 1e-10

    def test_longer_signal_with_n_symbols(self):
        M, N = 8, 6
        p = design_phydyas(M, 3)
        x = synthesize(stagger(_qpsk(M, N)), p)
        a = analyze(x, p).z
        # the last window reaches M samples past the nominal end; later samples are ignored
        b = analyze(np.concatenate([x, np.zeros(M), np.ones(7)]), p, n_symbols=N).z
        assert np.array_equal(a, b)
        c = analyze(np.concatenate([x, np.ones(M)]), p, n_symbols=N).z
        assert not np.array_equal(a[:, -1], c[:, -1])

    @pytest.mark.parametrize("M,pulse", [(32, "phydyas"), (16, "pr_sine"), (8, "phydyas4")])
    def test_matches_ideal_closed_form(self, M, pulse):
        p = {"phydyas": lambda: design_phydyas(M, 3), "pr_sine": lambda: design_pr_sine(M),
             "phydyas4": lambda: design_phydyas(M, 4)}[pulse]()
        S = _qpsk(M, 9, seed=2)
        z = analyze(synthesize(stagger(S), p), p).z
        zc = ideal_demod_closed_form(S, pair_matrices(p, p)).z
        assert np.abs(z - zc).max() < 1e-9

    def test_derivative_pair_closed_form(self):
        M = 16
        p = design_phydyas(M, 3)
        S = _qpsk(M, 8, seed=4)
        z = analyze(synthesize(stagger(S), p.derivative(1)), p.derivative(2), M=M).z
        zc = ideal_demod_closed_form(S, pair_matrices(p, p, 1, 2)).z
        assert np.abs(z - zc).max() < 1e-9 * np.abs(zc).max()

    def test_linearity(self):
        M, N = 16, 8
        p = design_phydyas(M, 3)
        S1, S2 = _qpsk(M, N, 1), _qpsk(M, N, 2)
        taps = np.array([1, 0.3 - 0.2j, 0.1j])
        chain = lambda S: analyze(np.convolve(synthesize(stagger(S), p), taps), p, n_symbols=N).z
        a, b = 0.7, -1.9
        assert np.abs(chain(a * S1 + b * S2) - (a * chain(S1) + b * chain(S2))).max() < 1e-10


class TestDemodGrid:
    def test_parts_roundtrip(self):
        z = np.arange(24.0).reshape(2, 12) + 0j
        g = DemodGrid(z, 2)
        assert g.z_odd.shape == (2, 6)
        assert np.array_equal(DemodGrid.from_parts(g.z_odd, g.z_even, 2).z, z)
        assert g.n_symbols == 4

    def test_destagger_bounds(self):
        g = DemodGrid(np.zeros((4, 2 * 10 + 6), complex), 3)
        destagger(g, 3)
        destagger(g, 7)
        with pytest.raises(IndexError):
            destagger(g, 2)
        with pytest.raises(IndexError):
            destagger(g, 8)

    def test_real_grid_real_output(self):
        g = DemodGrid(np.ones((4, 26)) + 0j, 3)
        assert not destagger(g, 4).imag.any()

    def test_interior_matches_single(self):
        rng = np.random.default_rng(0)
        g = DemodGrid(rng.standard_normal((4, 26)) + 1j * rng.standard_normal((4, 26)), 3)
        allv = destagger_interior(g)
        for i, ell in enumerate(range(3, 8)):
            assert np.array_equal(allv[:, i], destagger(g, ell))


class TestClosedForms:
    def test_zero_symbols(self):
        p = design_phydyas(8, 3)
        assert not ideal_demod_closed_form(np.zeros((16, 5)), pair_matrices(p, p)).z.any()

    def test_real_symbols_only_r_term(self):
        M = 8
        p = design_phydyas(M, 3)
        pm = pair_matrices(p, p)
        S = _qpsk(M, 6).real
        z = ideal_demod_closed_form(S, pm).z_odd
        c = modulator_constants(M)
        B = c.F(np.conj(c.phi)[:, None] * S, axis=0)
        from fbmc_forge.pulse import rowconv
        ref = 2 * c.phi[:, None] * c.FH(rowconv(B, pm.R)[:, :z.shape[1]], axis=0)
        assert np.abs(z - ref).max() < 1e-12

    def test_unit_tap_is_ideal(self):
        M = 8
        p = design_phydyas(M, 3)
        S = _qpsk(M, 6)
        a = channel_demod_closed_form(S, p, p, [1.0]).z
        b = ideal_demod_closed_form(S, pair_matrices(p, p)).z
        assert np.abs(a - b).max() < 1e-12

    def test_zero_tap(self):
        p = design_phydyas(8, 3)
        assert not channel_demod_closed_form(_qpsk(8, 5), p, p, [0.0]).z.any()

    def test_too_many_taps(self):
        p = design_phydyas(4, 3)
        with pytest.raises(ValueError):
            channel_demod_closed_form(_qpsk(4, 5), p, p, np.ones(25))

    @given(st.integers(1, 12), st.integers(0, 2**31 - 1))
    def test_fir_matches_time_domain(self, L, seed):
        M, N = 8, 7
        rng = np.random.default_rng(seed)
        p = design_phydyas(M, 3)
        taps = rng.standard_normal(L) + 1j * rng.standard_normal(L)
        S = qpsk_symbols(rng, (2 * M, N))
        z = analyze(np.convolve(synthesize(stagger(S), p), taps), p, n_symbols=N).z
        zc = channel_demod_closed_form(S, p, p, taps).z
        assert np.abs(z - zc).max() < 1e-9 * max(1, np.abs(z).max())

    @given(st.integers(0, 2**31 - 1))
    def test_fir_long_delay(self, seed):
        # taps spanning more than one symbol period
        M, N = 4, 6
        rng = np.random.default_rng(seed)
        p = design_phydyas(M, 3)
        taps = np.zeros(20, complex)
        taps[[0, 9, 19]] = rng.standard_normal(3)
        S = qpsk_symbols(rng, (2 * M, N))
        z = analyze(np.convolve(synthesize(stagger(S), p), taps), p, n_symbols=N).z
        assert np.abs(z - channel_demod_closed_form(S, p, p, taps).z).max() < 1e-9


@given(st.integers(1, 4), st.integers(3, 12), st.integers(0, 2**31 - 1))
def test_chain_vs_closed_form_property(logm, N, seed):
    M = 2**logm
    p = design_phydyas(M, 3)
    S = qpsk_symbols(np.random.default_rng(seed), (2 * M, N))
    z = analyze(synthesize(stagger(S), p), p).z
    assert z.shape == (2 * M, 2 * N + 6)
    assert np.abs(z - ideal_demod_closed_form(S, pair_matrices(p, p)).z).max() < 1e-9
