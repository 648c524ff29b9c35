"""Seeded FIR MIMO channels from tapped-delay-line profiles, plus AWGN."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

SUBCARRIER_SPACING_HZ = 15e3
PROFILES = ("EVA", "ETU", "EPA")


def sample_rate(M: int) -> float:
    return 2 * M * SUBCARRIER_SPACING_HZ


def load_profile(name: str) -> np.ndarray:
    """(delay_ns, power_dB) rows of a named profile."""
    if name.upper() not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files("fbmc_forge.data").joinpath(f"{name.lower()}.txt").read_text()
    return np.loadtxt(text.splitlines(), delimiter=",", comments="#", ndmin=2)


def discrete_pdp(name: str, M: int) -> np.ndarray:
    """Per-sample tap variances: delays rounded to the nearest sample,
    colliding powers summed, total normalised to one."""
    rows = load_profile(name)
    lags = np.rint(rows[:, 0] * 1e-9 * sample_rate(M)).astype(int)
    pdp = np.zeros(lags.max() + 1)
    np.add.at(pdp, lags, 10 ** (rows[:, 1] / 10))
    return pdp / pdp.sum()


@dataclass(frozen=True, eq=False)
class MimoChannelModel:
    """FIR taps of shape (L, N_R, N_T)."""

    taps: np.ndarray
    profile_name: str = "CUSTOM"
    sample_rate: float = float("nan")
    seed: int | None = None

    def __post_init__(self):
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (L, N_R, N_T)")
        self.taps.setflags(write=False)

    @property
    def n_taps(self):
        return self.taps.shape[0]

    @property
    def n_r(self):
        return self.taps.shape[1]

    @property
    def n_t(self):
        return self.taps.shape[2]

    def freq_response(self, omega):
        return freq_response_deriv(self, 0, omega)

    def apply(self, signals: np.ndarray) -> np.ndarray:
        """Convolve per-antenna signals (N_T, T) -> (N_R, T + L - 1)."""
        signals = np.atleast_2d(signals)
        T = signals.shape[1]
        out = np.zeros((self.n_r, T + self.n_taps - 1), complex)
        for r in range(self.n_r):
            for t in range(self.n_t):
                h = self.taps[:, r, t]
                if np.any(h):
                    out[r] += np.convolve(signals[t], h)
        return out


def custom_channel(taps) -> MimoChannelModel:
    taps = np.asarray(taps, complex)
    if taps.ndim == 1:
        taps = taps[:, None, None]
    elif taps.ndim == 2:
        taps = taps[None]
    return MimoChannelModel(taps.copy(), "CUSTOM")


def generate_mimo_fir(profile: str, N_R: int, N_T: int, M: int, seed: int) -> MimoChannelModel:
    """Independent complex Gaussian taps per antenna pair, variances from the profile."""
    pdp = discrete_pdp(profile, M)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((2, pdp.size, N_R, N_T))
    taps = (g[0] + 1j * g[1]) * np.sqrt(pdp / 2)[:, None, None]
    return MimoChannelModel(taps, profile.upper(), sample_rate(M), seed)


def flat_channel(N_R: int, N_T: int, seed: int) -> MimoChannelModel:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((2, 1, N_R, N_T))
    return MimoChannelModel((g[0] + 1j * g[1]) / np.sqrt(2), "CUSTOM", float("nan"), seed)


def freq_response_deriv(ch: MimoChannelModel, r: int, omega) -> np.ndarray:
    """H^(r)(omega) = sum_l (-j l)^r h_l e^{-j omega l}; shape (..., N_R, N_T)."""
    if r < 0:
        raise ValueError("derivative order must be non-negative")
    omega = np.asarray(omega, float)
    lags = np.arange(ch.n_taps)
    w = (-1j * lags) ** r * np.exp(-1j * np.multiply.outer(omega, lags))
    return np.tensordot(w, ch.taps, axes=([-1], [0]))


@dataclass(frozen=True)
class NoiseSpec:
    variance: float
    seed: int

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be non-negative")


def add_awgn(signals: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    signals = np.asarray(signals, complex)
    if spec.variance == 0:
        return signals.copy()
    rng = np.random.default_rng(spec.seed)
    g = rng.standard_normal((2,) + signals.shape)
    return signals + np.sqrt(spec.variance / 2) * (g[0] + 1j * g[1])
