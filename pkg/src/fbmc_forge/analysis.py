"""Asymptotic distortion predictor, SIR/SNDR/MI metrics and the Taylor residual."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from math import comb, factorial

import numpy as np

from .fbmc import DemodGrid, analyze, ideal_demod_closed_form, synthesize, stagger
from .pulse import PulseScalars, pair_matrices
from .transceiver import TransceiverPlan, _h

SQRT2 = np.sqrt(2.0)
SIR_CAP_DB = 300.0


@dataclass(frozen=True, eq=False)
class GreekTables:
    """alpha[(m, l)], beta[(m, l)]: (2M, N_S, N_S) arrays indexed [k, n, n_S]."""

    alpha: dict
    beta: dict
    gamma: np.ndarray
    K_T: int
    K_R: int

    @property
    def K(self):
        return min(self.K_T, self.K_R)

    @property
    def xi(self) -> np.ndarray:
        """(2M, N_S, N_S, 2): [alpha^(K,K), beta^(K,K)]."""
        K = self.K
        return np.stack([self.alpha[(K, K)], self.beta[(K, K)]], axis=-1)


def _pref(m):
    return SQRT2 * (-1j) ** m / factorial(m)


def greek_tables(plan: TransceiverPlan, K_T: int | None = None, K_R: int | None = None) -> GreekTables:
    K_T = plan.K_T if K_T is None else K_T
    K_R = plan.K_R if K_R is None else K_R
    top = K_T + K_R
    if plan.max_order < top:
        raise ValueError(f"plan holds derivatives to order {plan.max_order}, need {top}")
    A, B = plan.A_derivs, plan.B_derivs
    BH_H, HA = plan.product_derivs["BH_H"], plan.product_derivs["HA"]
    alpha, beta = {}, {}
    for m in range(top + 1):
        for l in range(m + 1):
            w = _pref(m) * comb(m, l)
            alpha[(m, l)] = w * (BH_H[m - l] @ A[l])
            beta[(m, l)] = w * (_h(B[l]) @ HA[m - l])
    gamma = (SQRT2 * (-1j) ** (K_R + K_T) / (factorial(K_T) * factorial(K_R))
             * (_h(B[K_R]) @ plan.H_derivs[0] @ A[K_T]))
    return GreekTables(alpha, beta, gamma, K_T, K_R)


def psi_matrices(scalars: PulseScalars, K: int, K_T: int, K_R: int):
    """Psi_K^(+,-) and Psi_K^(-,+)."""
    out = []
    for table in (scalars.eta_pm, scalars.eta_mp):
        a = table[(K, 0, K, 0)] * (K_T == K)
        b = table[(K, 0, 0, K)] * (K_R == K_T)
        d = table[(0, K, 0, K)] * (K_R == K)
        out.append(np.array([[a, b], [b, d]]))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class DistortionReport:
    pe1: np.ndarray
    pe2: np.ndarray
    empirical_mse: np.ndarray | None = None
    symbol_power: float = 1.0
    noise_var: np.ndarray | None = None  # per (k, n) output noise power
    meta: dict = field(default_factory=dict)

    @property
    def pe_total(self):
        return self.pe1 + self.pe2

    @property
    def sir_db(self):
        return to_db(self.symbol_power, self.pe_total)

    @property
    def sndr_db(self):
        noise = 0.0 if self.noise_var is None else self.noise_var
        return to_db(self.symbol_power, self.pe_total + noise)

    @property
    def empirical_sir_db(self):
        if self.empirical_mse is None:
            return None
        return to_db(self.symbol_power, self.empirical_mse)

    @property
    def mutual_info_bits(self):
        """Per-stream mean over subcarriers of log2(1 + SNDR)."""
        noise = 0.0 if self.noise_var is None else self.noise_var
        return mutual_information(self.symbol_power, self.pe_total + noise)


def to_db(power, distortion):
    """10 log10(P/d), capped at +300 dB where d is zero or negative."""
    d = np.asarray(distortion, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10 * np.log10(power / d)
    return np.where((d <= 0) | ~np.isfinite(out), SIR_CAP_DB, np.minimum(out, SIR_CAP_DB))


def mutual_information(power, impairment) -> np.ndarray:
    """(1/2M) sum_k log2(1 + P/impairment) per stream; impairment is (2M, N_S)."""
    imp = np.asarray(impairment, float)
    with np.errstate(divide="ignore"):
        sndr = np.where(imp > 0, power / np.where(imp > 0, imp, 1.0), np.inf)
    bits = np.log2(1 + sndr)
    return bits.mean(axis=0)


def pe_theoretical(greeks: GreekTables, scalars: PulseScalars, K_T: int | None = None,
                   K_R: int | None = None, M: int | None = None) -> DistortionReport:
    """Leading-order distortion P_e(k, n) = P_e1 + P_e2 per subcarrier and stream."""
    K_T = greeks.K_T if K_T is None else K_T
    K_R = greeks.K_R if K_R is None else K_R
    M = scalars.m_half if M is None else M
    K = min(K_T, K_R)
    if 2 * K > scalars.max_order:
        raise ValueError(f"pulse scalars hold orders up to {scalars.max_order}, need {2 * K}")
    diag = lambda X: np.real(np.diagonal(X, axis1=1, axis2=2))  # (2M, N_S)
    twoM = 2.0 * M
    pe1 = np.full(diag(greeks.alpha[(0, 0)]).shape, 2 * scalars.delta)
    for m in range(K_R, 2 * K + 1):
        acc = sum(diag(greeks.beta[(m, l)]) for l in range(K_R, m + 1))
        pe1 = pe1 - 2 * SQRT2 / twoM**m * scalars.mu[(0, m)] * acc
    for m in range(K_T, 2 * K + 1):
        acc = sum(scalars.mu_tilde_of(l, m, K_T) * diag(greeks.alpha[(m, l)]) for l in range(K_T, m + 1))
        pe1 = pe1 - 2 * SQRT2 / twoM**m * acc
    if K_R == K_T:
        pe1 = pe1 + 2 * SQRT2 / twoM ** (2 * K) * diag(greeks.gamma) * scalars.mu[(K, K)]
    psi_pm, psi_mp = psi_matrices(scalars, K, K_T, K_R)
    xi = np.stack([greeks.alpha[(K, K)], greeks.beta[(K, K)]], axis=-1)  # (2M, n, nS, 2)
    re, im = xi.real, xi.imag
    q = (np.einsum("knsi,ij,knsj->kn", re, psi_pm, re)
         + np.einsum("knsi,ij,knsj->kn", im, psi_mp, im))
    pe2 = q / twoM ** (2 * K)
    if np.any(pe2 < -1e-15 * np.abs(pe2).max()):
        warnings.warn("negative P_e2 entries encountered", RuntimeWarning)
    return DistortionReport(pe1, pe2, symbol_power=scalars.symbol_power,
                            meta={"K_T": K_T, "K_R": K_R, "M": M})


def output_noise(plan: TransceiverPlan, noise_var: float, pulse=None) -> np.ndarray:
    """Per-(k, n) demodulator-output noise power sigma^2 ||B_{:,n}(w_k)||^2.

    ``noise_var`` is referred to the demodulator output; see ``sample_noise_variance``.
    """
    B = plan.B_derivs[0]
    return noise_var * np.sum(np.abs(B) ** 2, axis=1)


def sample_noise_variance(output_var: float, pulse) -> float:
    """Per-sample AWGN variance that yields ``output_var`` after analysis and destaggering."""
    return output_var * pulse.m_half / (2 * pulse.energy)


def sir_and_mi(report: DistortionReport, noise_var: float, plan: TransceiverPlan) -> DistortionReport:
    return replace(report, noise_var=output_noise(plan, noise_var))


def taylor_residual(taps, pulse, R: int, S: np.ndarray, M: int | None = None) -> float:
    """max |Z^F - sum_r (-j)^r/(r!(2M)^r) Lambda(F^(r)) Y_{p,q^(r)}| over the grid."""
    M = pulse.m_half if M is None else M
    if R > pulse.max_order:
        raise ValueError(f"order {R} exceeds the cached derivative range")
    taps = np.asarray(taps, complex)
    S = np.asarray(S)
    N = S.shape[1]
    x = synthesize(stagger(S), pulse)
    z = analyze(np.convolve(x, taps), pulse, n_symbols=N).z
    wk = 2 * np.pi * np.arange(2 * M) / (2 * M)
    lags = np.arange(taps.size)
    approx = np.zeros_like(z)
    for r in range(R + 1):
        Fr = np.exp(-1j * np.outer(wk, lags)) @ ((-1j * lags) ** r * taps)
        y = ideal_demod_closed_form(S, pair_matrices(pulse, pulse, 0, r)).z
        approx += (-1j) ** r / (factorial(r) * (2 * M) ** r) * Fr[:, None] * y
    return float(np.abs(z - approx).max())
