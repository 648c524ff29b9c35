"""Frequency-selective precoders/receivers and the parallel multi-stage chains."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import factorial, log2

import numpy as np

from .channel import MimoChannelModel, freq_response_deriv
from .fbmc import DemodGrid, analyze, stagger, synthesize


class NumericalDegeneracyError(RuntimeError):
    """Raised when a smooth branch of singular vectors cannot be followed."""


class Scheme(str, enum.Enum):
    SPATIAL_MUX = "SPATIAL_MUX"
    LMMSE = "LMMSE"
    SVD_INV = "SVD_INV"


def stage_coeff(ell: int, M: int) -> complex:
    """(-j)^ell / (ell! (2M)^ell)."""
    return (-1j) ** ell / (factorial(ell) * (2 * M) ** ell)


def _h(X):
    return np.conj(np.swapaxes(X, -1, -2))


# ------------------------------------------------------------------ designs

def design_lmmse_receiver(ch: MimoChannelModel, ratio: float, omega, A=None) -> np.ndarray:
    """B = G (G^H G + ratio I)^{-1} with G = H A (A = I when omitted)."""
    H = freq_response_deriv(ch, 0, omega)
    G = H if A is None else H @ A
    n = G.shape[-1]
    gram = _h(G) @ G + ratio * np.eye(n)
    if ratio == 0 and np.any(np.linalg.matrix_rank(gram) < n):
        raise np.linalg.LinAlgError("rank-deficient channel with zero regularisation")
    return G @ np.linalg.inv(gram)


def design_spatial_mux(ch: MimoChannelModel, ratio: float, omega, n_streams: int | None = None):
    """A = first N_S columns of I_{N_T}; B is the (regularised) inverse receiver."""
    n_streams = ch.n_t if n_streams is None else n_streams
    if n_streams > min(ch.n_t, ch.n_r):
        raise ValueError("N_S must not exceed min(N_T, N_R)")
    omega = np.asarray(omega, float)
    A = np.broadcast_to(np.eye(ch.n_t)[:, :n_streams], omega.shape + (ch.n_t, n_streams)).copy()
    return A, design_lmmse_receiver(ch, ratio, omega, A)


def design_svd_inversion(ch: MimoChannelModel, n_streams: int, omega_grid, smooth: bool = True):
    """A: dominant right singular vectors (descending); B = HA (A^H H^H H A)^{-1}."""
    if n_streams > min(ch.n_t, ch.n_r):
        raise ValueError("N_S must not exceed min(N_T, N_R)")
    H = freq_response_deriv(ch, 0, omega_grid)
    _, _, Vh = np.linalg.svd(H)
    A = _h(Vh)[..., :n_streams]
    if smooth:
        A = smooth_gauge(A).matrices
    HA = H @ A
    B = HA @ np.linalg.inv(_h(HA) @ HA)
    return A, B


@dataclass(frozen=True, eq=False)
class GaugeResult:
    matrices: np.ndarray
    closure_phase: np.ndarray
    max_step: float


def smooth_gauge(V: np.ndarray, min_overlap: float = 0.1) -> GaugeResult:
    """Phase-align each column with its neighbour along the (periodic) grid.

    ``V`` has shape (G, n, k).  The accumulated phase mismatch on closing the
    loop is spread linearly over the grid so the branch is periodic.
    """
    V = np.asarray(V, complex)
    G = V.shape[0]
    inner = np.sum(np.conj(V[:-1]) * V[1:], axis=1)  # (G-1, k)
    if np.any(np.abs(inner) < min_overlap):
        g = int(np.argwhere(np.abs(inner) < min_overlap)[0, 0])
        raise NumericalDegeneracyError(
            f"singular vectors decorrelate between grid points {g} and {g + 1}")
    cum = np.concatenate([np.zeros((1, V.shape[2])), np.cumsum(np.angle(inner), axis=0)])
    W = V * np.exp(-1j * cum)[:, None, :]
    closure = np.angle(np.sum(np.conj(W[-1]) * W[0], axis=0))
    W = W * np.exp(1j * np.outer(np.arange(G) / G, closure))[:, None, :]
    step = np.linalg.norm(np.diff(np.concatenate([W, W[:1]]), axis=0), axis=1).max()
    return GaugeResult(W, closure, float(step))


CHOP_TOL = 1e-13


def spectral_derivatives(fn_on_grid: np.ndarray, l_max: int, M: int | None = None, omega=None) -> np.ndarray:
    """Pseudo-spectral derivatives of a periodic function sampled on a uniform grid.

    ``fn_on_grid`` has the grid along axis 0 (omega_g = 2 pi g / G).  Returns
    shape (l_max + 1, n_eval, ...) evaluated at the 2M subcarriers (or ``omega``).
    """
    fn = np.asarray(fn_on_grid, complex)
    G = fn.shape[0]
    coef = np.fft.ifft(fn, axis=0)
    l = np.fft.fftfreq(G, 1.0 / G)
    # drop the roundoff tail: modes above the last one carrying content at
    # CHOP_TOL relative level would otherwise be amplified by |l|^r
    peak = np.abs(coef).reshape(G, -1).max(axis=1)
    live = np.abs(l)[peak > CHOP_TOL * max(peak.max(), np.finfo(float).tiny)]
    cutoff = live.max() if live.size else 0
    coef = np.where((np.abs(l) <= cutoff).reshape((-1,) + (1,) * (fn.ndim - 1)), coef, 0)
    if omega is None:
        if M is None:
            raise ValueError("give M or omega")
        omega = 2 * np.pi * np.arange(2 * M) / (2 * M)
        on_grid = G % (2 * M) == 0
    else:
        omega = np.asarray(omega, float)
        on_grid = False
    shape = (-1,) + (1,) * (fn.ndim - 1)
    out = []
    for r in range(l_max + 1):
        w = (-1j * l) ** r
        if r % 2 == 1 and G % 2 == 0:
            w[G // 2] = 0.0
        c = coef * w.reshape(shape)
        if on_grid:
            out.append(np.fft.fft(c, axis=0)[:: G // (2 * M)])
        else:
            E = np.exp(-1j * np.outer(omega, l))
            out.append(np.tensordot(E, c, axes=([1], [0])))
    return np.array(out)


# ------------------------------------------------------------------ plan

@dataclass(frozen=True, eq=False)
class TransceiverPlan:
    """Derivative matrices at the 2M subcarriers.

    ``A_derivs``: (orders, 2M, N_T, N_S); ``B_derivs``: (orders, 2M, N_R, N_S);
    ``H_derivs``: (orders, 2M, N_R, N_T) exact.  ``product_derivs`` holds
    "BH_H", "HA" and "BH_HA" to the same order.  Stage ``l`` of the
    transmitter uses ``A_derivs[l]`` for l < K_T (likewise for B).
    """

    K_T: int
    K_R: int
    A_derivs: np.ndarray
    B_derivs: np.ndarray
    H_derivs: np.ndarray
    scheme: Scheme
    product_derivs: dict = field(default_factory=dict)
    gauge_max_step: float = 0.0

    @property
    def M(self):
        return self.A_derivs.shape[1] // 2

    @property
    def max_order(self):
        return self.A_derivs.shape[0] - 1

    def identity_residual(self) -> float:
        A, B, H = self.A_derivs[0], self.B_derivs[0], self.H_derivs[0]
        eye = np.eye(A.shape[-1])
        return float(np.linalg.norm(_h(B) @ H @ A - eye, axis=(-2, -1)).max())


def design_plan(ch: MimoChannelModel, M: int, scheme="SVD_INV", K_T: int = 1, K_R: int = 1,
                n_streams: int | None = None, noise_ratio: float = 0.0, grid_factor: int = 8,
                max_order: int | None = None) -> TransceiverPlan:
    """Design A(w), B(w) on a fine grid of grid_factor*2M points and differentiate.

    Derivatives are kept up to ``max_order`` (default K_T + K_R), which is what
    the distortion predictor needs.
    """
    scheme = Scheme(scheme)
    n_streams = min(ch.n_t, ch.n_r) if n_streams is None else n_streams
    max_order = K_T + K_R if max_order is None else max_order
    G = grid_factor * 2 * M
    wg = 2 * np.pi * np.arange(G) / G
    H = freq_response_deriv(ch, 0, wg)
    step = 0.0
    if scheme is Scheme.SVD_INV:
        if n_streams > min(ch.n_t, ch.n_r):
            raise ValueError("N_S must not exceed min(N_T, N_R)")
        _, _, Vh = np.linalg.svd(H)
        gauge = smooth_gauge(_h(Vh)[..., :n_streams])
        A, step = gauge.matrices, gauge.max_step
        HA = H @ A
        B = HA @ np.linalg.inv(_h(HA) @ HA)
    else:
        ratio = 0.0 if scheme is Scheme.SPATIAL_MUX else noise_ratio
        if scheme is Scheme.SPATIAL_MUX and noise_ratio > 0:
            ratio = noise_ratio
        A, B = design_spatial_mux(ch, ratio, wg, n_streams)
    BH_H = _h(B) @ H
    HA = H @ A
    d = lambda X: spectral_derivatives(X, max_order, M)
    wk = 2 * np.pi * np.arange(2 * M) / (2 * M)
    Hd = np.array([freq_response_deriv(ch, r, wk) for r in range(max_order + 1)])
    products = {"BH_H": d(BH_H), "HA": d(HA), "BH_HA": d(BH_H @ A)}
    return TransceiverPlan(K_T, K_R, d(A), d(B), Hd, scheme, products, step)


def constant_plan(A, B, H, M: int, K_T: int = 1, K_R: int = 1, scheme="SVD_INV") -> TransceiverPlan:
    """Frequency-flat plan (all derivatives of order >= 1 are zero)."""
    A, B, H = (np.asarray(x, complex) for x in (A, B, H))
    order = K_T + K_R
    def lift(X):
        out = np.zeros((order + 1, 2 * M) + X.shape, complex)
        out[0] = X
        return out
    products = {"BH_H": lift(_h(B) @ H), "HA": lift(H @ A), "BH_HA": lift(_h(B) @ H @ A)}
    return TransceiverPlan(K_T, K_R, lift(A), lift(B), lift(H), Scheme(scheme), products)


# ------------------------------------------------------------------ chains

def multi_stage_transmit(symbols: np.ndarray, plan: TransceiverPlan, pulse) -> np.ndarray:
    """Per-antenna transmit signals (N_T, T) for symbols of shape (N_S, 2M, N)."""
    symbols = np.asarray(symbols)
    if plan.K_T - 1 > pulse.max_order or plan.K_T - 1 > plan.max_order:
        raise ValueError("plan needs more derivative orders than available")
    M = plan.M
    N_T = plan.A_derivs.shape[2]
    grids = np.stack([stagger(s) for s in symbols])  # (N_S, 2M, 2N)
    out = None
    for l1 in range(plan.K_T):
        h = pulse.derivative(l1)
        A = plan.A_derivs[l1]  # (2M, N_T, N_S)
        coeff = stage_coeff(l1, M)
        for nt in range(N_T):
            g = np.einsum("ks,skn->kn", A[:, nt, :], grids)
            x = coeff * synthesize(g, h)
            if out is None:
                out = np.zeros((N_T, x.size), complex)
            out[nt] += x
    return out


def multi_stage_receive(signals: np.ndarray, plan: TransceiverPlan, pulse, n_symbols: int) -> list:
    """Per-stream DemodGrid after the K_R-stage receiver."""
    signals = np.atleast_2d(signals)
    if plan.K_R - 1 > pulse.max_order or plan.K_R - 1 > plan.max_order:
        raise ValueError("plan needs more derivative orders than available")
    M = plan.M
    N_R, N_S = plan.B_derivs.shape[2:]
    Z = None
    for l2 in range(plan.K_R):
        h = pulse.derivative(l2)
        Bc = np.conj(plan.B_derivs[l2])  # (2M, N_R, N_S)
        coeff = stage_coeff(l2, M)
        for nr in range(N_R):
            z = analyze(signals[nr], h, n_symbols=n_symbols, M=M).z
            if Z is None:
                Z = np.zeros((N_S,) + z.shape, complex)
            Z += coeff * np.einsum("ks,kc->skc", Bc[:, nr, :], z)
    return [DemodGrid(Z[s], pulse.kappa) for s in range(N_S)]


# ------------------------------------------------------------------ complexity

class Algorithm(str, enum.Enum):
    MULTISTAGE_TX = "MULTISTAGE_TX"
    MULTISTAGE_RX = "MULTISTAGE_RX"
    MULTITAP_RX = "MULTITAP_RX"


@dataclass(frozen=True)
class ComplexityBudget:
    real_products: int
    real_sums: int
    algorithm: Algorithm


def complexity(algorithm, M: int, K_T: int = 1, K_R: int = 1, N_T: int = 1, N_R: int = 1,
               N_S: int = 1, kappa: int = 3, N_taps: int = 1, N: int | None = None) -> ComplexityBudget:
    """Real products and sums per multicarrier symbol.

    ``N`` is the multiplier of the last multi-tap sums term; it defaults to N_S.
    """
    algorithm = Algorithm(algorithm)
    for name, v in dict(M=M, K_T=K_T, K_R=K_R, N_T=N_T, N_R=N_R, N_S=N_S, kappa=kappa, N_taps=N_taps).items():
        if v < 1:
            raise ValueError(f"{name} must be positive")
    N = N_S if N is None else N
    lg = int(round(log2(M)))
    if 2**lg != M:
        raise ValueError("M must be a power of two")
    if algorithm is Algorithm.MULTISTAGE_TX:
        prod = 2 * M * K_T * (N_T * lg + (kappa + 2) * N_T + 2 * N_S * N_T)
        sums = 2 * M * K_T * (3 * N_T * lg + (2 * kappa + 1) * N_T + 2 * N_S * N_T)
    elif algorithm is Algorithm.MULTISTAGE_RX:
        prod = 2 * M * K_R * (N_R * lg + (kappa + 2) * N_R + 3 * N_R * N_S)
        sums = 2 * M * K_R * (3 * N_R * lg + (2 * kappa + 3) * N_R + (7 * N_R - 2) * N_S)
    else:
        prod = 2 * M * (N_R * lg + (kappa + 2) * N_R + 3 * N_S * N_R * (N_taps + 1))
        sums = 2 * M * (3 * N_R * lg + (2 * kappa + 3) * N_R + (7 * N_R - 2) * N_S
                        + ((7 * N_R - 5) * N_taps - 2) * N)
    return ComplexityBudget(int(prod), int(sums), algorithm)
