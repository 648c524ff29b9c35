"""FBMC/OQAM modulation chain.

Conventions
-----------
* Subcarrier ``k`` (0-based) sits at omega_k = 2 pi k / 2M.
* The unitary "forward" transform F has kernel exp(+j 2 pi i j / 2M) / sqrt(2M)
  (an inverse DFT), so F^H is the DFT.
* Real parts of symbol ``j`` leave at sample 2Mj, imaginary parts (times j)
  at 2Mj + M.  Each half-symbol column is pre-rotated by conj(phi),
  transformed with F, periodically extended over the pulse support and
  weighted by the pulse.
* The demodulator output column ``c`` (0-based) uses the 2M kappa received
  samples ending at M(c+1) - 1, weighted by the reversed receive pulse, folded
  modulo 2M relative to the window start, transformed by F^H and multiplied
  by 2 phi.  Even 0-based columns form ``z_even``, odd ones ``z_odd``.

With these choices the ideal-channel output equals the polyphase closed form
built from R(p, q) and S(p, q), and ``destagger`` recovers the symbols exactly
whenever the pair is perfect-reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pulse import PrototypePulse, rowconv


@dataclass(frozen=True, eq=False)
class ModulatorConstants:
    M: int
    phi: np.ndarray
    theta: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.arange(2 * self.M) / (2 * self.M)

    def F(self, x, axis=0):
        """Apply F (kernel e^{+j2pi ij/2M}/sqrt(2M)) along ``axis``."""
        return np.fft.ifft(x, axis=axis) * np.sqrt(2 * self.M)

    def FH(self, x, axis=0):
        return np.fft.fft(x, axis=axis) / np.sqrt(2 * self.M)

    def fourier_matrix(self) -> np.ndarray:
        i = np.arange(2 * self.M)
        return np.exp(2j * np.pi * np.outer(i, i) / (2 * self.M)) / np.sqrt(2 * self.M)


@lru_cache(maxsize=32)
def modulator_constants(M: int) -> ModulatorConstants:
    k = np.arange(2 * M)
    phi = np.exp(-1j * np.pi * (M + 1) * k / (2 * M))
    theta = np.exp(-1j * 2 * np.pi * k / (2 * M))
    phi.setflags(write=False)
    theta.setflags(write=False)
    return ModulatorConstants(M, phi, theta)


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """Complex symbols of one or more streams, shape (N_S, 2M, N)."""

    complex_symbols: np.ndarray

    @property
    def streams(self) -> int:
        return self.complex_symbols.shape[0]

    @property
    def b_part(self):
        return self.complex_symbols.real

    @property
    def c_part(self):
        return self.complex_symbols.imag

    @property
    def staggered(self):
        return np.stack([stagger(s) for s in self.complex_symbols])


def qpsk_symbols(rng: np.random.Generator, shape, power: float = 1.0) -> np.ndarray:
    a = np.sqrt(power / 2)
    bits = rng.integers(0, 2, size=(2,) + tuple(shape))
    return a * ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1))


def stagger(S: np.ndarray) -> np.ndarray:
    """Interleave Re/Im: column 2j carries Re s_j, column 2j+1 carries Im s_j."""
    S = np.asarray(S)
    out = np.empty((S.shape[0], 2 * S.shape[1]))
    out[:, 0::2] = S.real
    out[:, 1::2] = S.imag
    return out


def unstagger(grid: np.ndarray) -> np.ndarray:
    return grid[:, 0::2] + 1j * grid[:, 1::2]


def _half_phase(ncols):
    # real parts ride on phase 1, imaginary parts on phase j
    ph = np.ones(ncols, complex)
    ph[1::2] = 1j
    return ph


def _samples(pulse):
    return pulse.samples if isinstance(pulse, PrototypePulse) else np.asarray(pulse, float)


def _infer_kappa(h, M):
    if h.size % (2 * M):
        raise ValueError(f"pulse length {h.size} is not a multiple of 2M={2 * M}")
    return h.size // (2 * M)


def signal_length(M: int, N: int, kappa: int) -> int:
    return M * (2 * N - 1) + 2 * M * kappa


def synthesize(grid: np.ndarray, pulse, constants: ModulatorConstants | None = None) -> np.ndarray:
    """Synthesis filterbank for a staggered 2M x 2N grid (real, or complex after precoding).

    ``pulse`` is a PrototypePulse or a raw sample vector (e.g. a derivative pulse).
    """
    grid = np.asarray(grid)
    M = grid.shape[0] // 2
    c = constants or modulator_constants(M)
    h = _samples(pulse)
    kappa = _infer_kappa(h, M)
    n2 = grid.shape[1]
    d = grid * _half_phase(n2)[None, :] * np.conj(c.phi)[:, None]
    U = c.F(d, axis=0).T  # (2N, 2M) time-domain blocks
    hb = h.reshape(2 * kappa, M)
    out = np.zeros((n2 - 1 + 2 * kappa, M), complex)
    for b in range(2 * kappa):
        half = U[:, (b % 2) * M:(b % 2 + 1) * M]
        out[b:b + n2] += half * hb[b]
    return out.reshape(-1)


@dataclass(frozen=True, eq=False)
class DemodGrid:
    z: np.ndarray
    kappa: int

    @property
    def z_odd(self):
        return self.z[:, 1::2]

    @property
    def z_even(self):
        return self.z[:, 0::2]

    @property
    def n_symbols(self) -> int:
        return self.z.shape[1] // 2 - self.kappa

    @classmethod
    def from_parts(cls, z_odd, z_even, kappa):
        z = np.empty((z_odd.shape[0], 2 * z_odd.shape[1]), complex)
        z[:, 1::2] = z_odd
        z[:, 0::2] = z_even
        return cls(z, kappa)


def analyze(signal: np.ndarray, pulse, constants: ModulatorConstants | None = None,
            n_symbols: int | None = None, M: int | None = None) -> DemodGrid:
    """Analysis filterbank producing the 2M x (2N + 2 kappa) demodulated grid.

    Without ``n_symbols`` the signal length must be exactly M(2N-1) + 2M kappa.
    With it, longer inputs (e.g. carrying a channel tail) are accepted and the
    samples not reached by any window are ignored.
    """
    signal = np.asarray(signal)
    if constants is not None:
        M = constants.M
    elif isinstance(pulse, PrototypePulse):
        M = pulse.m_half
    if M is None:
        raise ValueError("M must be given when the pulse is a raw sample vector")
    c = constants or modulator_constants(M)
    h = _samples(pulse)
    kappa = _infer_kappa(h, M)
    if n_symbols is None:
        extra = signal.size - 2 * M * kappa + M
        if extra <= 0 or extra % (2 * M):
            raise ValueError(f"signal length {signal.size} is not M(2N-1)+2M*kappa for M={M}, kappa={kappa}")
        n_symbols = extra // (2 * M)
    N = n_symbols
    ncols = 2 * N + 2 * kappa
    # blocks of M samples; window for column c covers blocks c .. c+2kappa-1
    lead = (2 * kappa - 1) * M
    total = M * (ncols + 2 * kappa - 1)
    xp = np.zeros(total, complex)
    seg = signal[: total - lead]
    xp[lead:lead + seg.size] = seg
    xb = xp.reshape(-1, M)
    hb = h[::-1].reshape(2 * kappa, M)
    W = np.zeros((ncols, 2 * M), complex)
    for b in range(2 * kappa):
        W[:, (b % 2) * M:(b % 2 + 1) * M] += xb[b:b + ncols] * hb[b]
    z = 2 * c.phi[:, None] * c.FH(W.T, axis=0)
    return DemodGrid(z, kappa)


def destagger(grid: DemodGrid, ell: int) -> np.ndarray:
    """Symbol estimate for 1-based symbol index ``ell`` (kappa <= ell <= N - kappa)."""
    kappa, N = grid.kappa, grid.n_symbols
    if not (kappa <= ell <= N - kappa):
        raise IndexError(f"symbol index {ell} outside interior range {kappa}..{N - kappa}")
    return grid.z_odd[:, ell + kappa - 2].real + 1j * grid.z_even[:, ell + kappa - 1].imag


def destagger_interior(grid: DemodGrid) -> np.ndarray:
    """All interior estimates, columns ell = kappa..N-kappa (1-based)."""
    kappa, N = grid.kappa, grid.n_symbols
    ells = np.arange(kappa, N - kappa + 1)
    return grid.z_odd[:, ells + kappa - 2].real + 1j * grid.z_even[:, ells + kappa - 1].imag


def interior_slice(N: int, kappa: int) -> slice:
    """0-based symbol columns matching ``destagger_interior``."""
    return slice(kappa - 1, N - kappa)


# ---------------------------------------------------------------- closed forms

def _shift1(X):
    return np.hstack([np.zeros((X.shape[0], 1), X.dtype), X])


def _swap_input(V, M):
    """[[0, V_bottom], [V_top, 0]]: rows of V moved by M, top half delayed one column."""
    out = np.zeros((V.shape[0], V.shape[1] + 1), complex)
    out[:M, 1:] = V[M:]
    out[M:, :-1] = V[:M]
    return out


def _parity(first, second, Rk, Sk, M):
    """first (*) Rk + swap(second) (*) Sk, before the outer 2 phi F^H."""
    a = rowconv(first, Rk)
    b = rowconv(_swap_input(second, M), Sk)
    n = max(a.shape[1], b.shape[1])
    out = np.zeros((2 * M, n), complex)
    out[:, :a.shape[1]] += a
    out[:, :b.shape[1]] += b
    return out


def _fit(X, n):
    out = np.zeros((X.shape[0], n), complex)
    m = min(n, X.shape[1])
    out[:, :m] = X[:, :m]
    return out


def _closed_form_parts(b_in, jc_in, kernels, c, kappa, n_out):
    """Sum over (weight, R-like, S-like) kernels; returns (z_odd, z_even)."""
    M = c.M
    UB = c.F(np.conj(c.phi)[:, None] * b_in)
    UC = c.F(np.conj(c.phi)[:, None] * jc_in)
    odd = np.zeros((2 * M, n_out), complex)
    even = np.zeros((2 * M, n_out), complex)
    for w, Rk, Sk in kernels:
        odd += w[:, None] * c.FH(_fit(_parity(UB, UC, Rk, Sk, M), n_out))
        even += w[:, None] * c.FH(_fit(_parity(_shift1(UC), UB, Rk, Sk, M), n_out))
    ph = 2 * c.phi[:, None]
    return ph * odd, ph * even


def ideal_demod_closed_form(S: np.ndarray, pm, constants: ModulatorConstants | None = None) -> DemodGrid:
    """Polyphase closed form of the ideal-channel demodulator output.

    odd  = 2 phi F^H([F phi* B, 0, 0] (*) R + [[0, F2 phi* jC, 0], [F1 phi* jC, 0, 0]] (*) S)
    even = 2 phi F^H([0, F phi* jC, 0] (*) R + [[0, F2 phi* B, 0], [F1 phi* B, 0, 0]] (*) S)

    ``S`` holds complex symbols (2M x N); B and C may also be complex when the
    caller passes a precoded grid through ``b``/``c`` parts.
    """
    S = np.asarray(S)
    M = S.shape[0] // 2
    c = constants or modulator_constants(M)
    kappa = pm.P.shape[1]
    N = S.shape[1]
    ones = np.ones(2 * M)
    zo, ze = _closed_form_parts(S.real.astype(complex), 1j * S.imag, [(ones, pm.R, pm.S)], c, kappa, N + kappa)
    return DemodGrid.from_parts(zo, ze, kappa)


def shifted_rs_matrices(P: np.ndarray, Q: np.ndarray, lag: int):
    """Polyphase kernels for a receive pulse delayed by ``lag`` samples.

    G[r, c] = q[2Mc + 2M - 1 - r - lag] (zero outside the support);
    R_lag = P (*) G and S_lag = (J_2 kron I_M) P (*) G.  For lag = 0 these
    reduce to R(p, q) and S(p, q).
    """
    if lag < 0:
        raise ValueError("lag must be non-negative")
    twoM, kappa = Q.shape
    M = twoM // 2
    q = Q.T.reshape(-1)
    ncols = kappa + -(-lag // twoM) + 1
    cidx = np.arange(ncols)
    r = np.arange(twoM)
    idx = twoM * cidx[None, :] + twoM - 1 - r[:, None] - lag
    ok = (idx >= 0) & (idx < q.size)
    G = np.where(ok, q[np.clip(idx, 0, q.size - 1)], 0.0)
    return rowconv(P, G), rowconv(np.roll(P, -M, axis=0), G)


def channel_demod_closed_form(S: np.ndarray, p, q, taps, constants: ModulatorConstants | None = None) -> DemodGrid:
    """Closed form of the demodulator output after a scalar FIR channel.

    z = sum_l f[l] Theta^l (closed form with R_l, S_l from ``shifted_rs_matrices``),
    for both parities.  ``p``/``q`` are pulses or raw sample vectors.
    """
    S = np.asarray(S)
    M = S.shape[0] // 2
    c = constants or modulator_constants(M)
    hp, hq = _samples(p), _samples(q)
    kappa = _infer_kappa(hp, M)
    taps = np.atleast_1d(np.asarray(taps, complex))
    if taps.ndim != 1:
        raise ValueError("taps must be a 1-D sequence")
    if taps.size > 2 * M * kappa:
        raise ValueError(f"{taps.size} taps exceed the supported span 2M*kappa={2 * M * kappa}")
    P = hp.reshape(kappa, 2 * M).T
    Q = hq.reshape(kappa, 2 * M).T
    kernels = []
    for lag, f in enumerate(taps):
        if f == 0:
            continue
        Rl, Sl = shifted_rs_matrices(P, Q, lag)
        kernels.append((f * c.theta**lag, Rl, Sl))
    N = S.shape[1]
    if not kernels:
        z = np.zeros((2 * M, 2 * N + 2 * kappa), complex)
        return DemodGrid(z, kappa)
    zo, ze = _closed_form_parts(S.real.astype(complex), 1j * S.imag, kernels, c, kappa, N + kappa)
    return DemodGrid.from_parts(zo, ze, kappa)


def direct_chain_oracle(grid: np.ndarray, pulse, constants: ModulatorConstants | None = None) -> np.ndarray:
    """Per-subcarrier reference modulator: explicit carriers and full convolutions."""
    grid = np.asarray(grid)
    M = grid.shape[0] // 2
    c = constants or modulator_constants(M)
    h = _samples(pulse)
    n2 = grid.shape[1]
    length = M * (n2 - 1) + h.size
    t = np.arange(length)
    out = np.zeros(length, complex)
    ph = _half_phase(n2)
    for k in range(2 * M):
        impulses = np.zeros(M * (n2 - 1) + 1, complex)
        # burst n starts at nM with carrier exp(j w_k (t - nM))
        impulses[::M] = grid[k] * ph * np.exp(-1j * np.pi * k * np.arange(n2))
        shaped = np.convolve(impulses, h)
        out += np.conj(c.phi[k]) / np.sqrt(2 * M) * np.exp(2j * np.pi * k * t / (2 * M)) * shaped
    return out
