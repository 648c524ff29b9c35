"""Prototype pulses, analytic derivative pulses and pulse-pair scalars.

All times are normalised to the multicarrier symbol period (T_s = 1), so a
pulse of overlap ``kappa`` is supported on ``[-kappa/2, kappa/2]`` and sampled
at ``2M`` points per symbol.  Derivative pulses carry the ``T_s**r`` scaling,
which makes them independent of the symbol period.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

DEFAULT_MAX_ORDER = 6

# Frequency-sampling coefficients P_1..P_{kappa-1} (P_0 = 1).
_PHYDYAS = {
    3: (0.911438, np.sqrt(1.0 - 0.911438**2)),
    4: (0.971960, np.sqrt(0.5), np.sqrt(1.0 - 0.971960**2)),
}


class DerivativeOrderError(ValueError):
    pass


def _is_pow2(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def sample_times(M: int, kappa: int) -> np.ndarray:
    """t_n = (n - (2M kappa + 1)/2) / (2M), n = 1..2M kappa."""
    n = np.arange(1, 2 * M * kappa + 1)
    return (n - (2 * M * kappa + 1) / 2) / (2 * M)


@dataclass(frozen=True, eq=False)
class PrototypePulse:
    """Sampled prototype pulse with its cached derivative pulses.

    ``derivatives`` has shape ``(max_order + 1, 2*M*kappa)``; row ``r`` holds
    p^(r)[n].  ``family`` records the design ("phydyas" or "pr_sine").
    """

    samples: np.ndarray
    kappa: int
    m_half: int
    analog_coeffs: np.ndarray
    derivatives: np.ndarray
    family: str = "phydyas"

    def __post_init__(self):
        L = 2 * self.m_half * self.kappa
        if self.samples.shape != (L,) or self.derivatives.shape[1] != L:
            raise ValueError("pulse length must equal 2*M*kappa")
        for a in (self.samples, self.derivatives, self.analog_coeffs):
            a.setflags(write=False)

    @property
    def max_order(self) -> int:
        return self.derivatives.shape[0] - 1

    @property
    def energy(self) -> float:
        return float(self.samples @ self.samples)

    def derivative(self, r: int) -> np.ndarray:
        return derivative_pulse(self, r)

    @cached_property
    def polyphase(self) -> np.ndarray:
        return polyphase_matrix(self.samples, self.m_half, self.kappa)


def _finish(M, kappa, coeffs, derivs, family):
    # unit energy convention: sum p^2 = M (unit symbol gain through the chain)
    scale = np.sqrt(M / np.sum(derivs[0] ** 2))
    derivs = derivs * scale
    return PrototypePulse(samples=derivs[0].copy(), kappa=kappa, m_half=M,
                          analog_coeffs=np.asarray(coeffs, float),
                          derivatives=derivs, family=family)


def design_phydyas(M: int, kappa: int = 3, max_order: int = DEFAULT_MAX_ORDER) -> PrototypePulse:
    """Frequency-sampling (PHYDYAS) pulse centred on t = 0.

    p(t) = P_0 + 2 sum_j P_j cos(2 pi j t / kappa), so the pulse peaks at the
    centre and vanishes at t = +-kappa/2.  Derivatives are exact term by term.
    """
    if kappa not in _PHYDYAS:
        raise ValueError(f"kappa must be 3 or 4, got {kappa}")
    if not _is_pow2(M):
        raise ValueError(f"M must be a power of two, got {M}")
    coeffs = np.concatenate([[1.0], _PHYDYAS[kappa]])
    t = sample_times(M, kappa)
    derivs = np.zeros((max_order + 1, t.size))
    derivs[0] += coeffs[0]
    for j in range(1, kappa):
        w = 2 * np.pi * j / kappa
        for r in range(max_order + 1):
            derivs[r] += 2 * coeffs[j] * w**r * np.cos(w * t + r * np.pi / 2)
    derivs /= derivs[0].max()
    return _finish(M, kappa, coeffs, derivs, "phydyas")


# S'(x) proportional to sin^6(pi x): S(x) = x + sum_m c_m sin(2 pi m x)/(2 pi m)
_SMOOTHSTEP = np.array([-1.5, 0.6, -0.1])


def _smoothstep_derivs(x, order):
    """S^(r)(x) for r = 0..order."""
    out = np.zeros((order + 1, x.size))
    out[0] = x
    if order >= 1:
        out[1] = 1.0
    for i, c in enumerate(_SMOOTHSTEP, start=1):
        w = 2 * np.pi * i
        for r in range(order + 1):
            out[r] += c / w * w**r * np.sin(w * x + r * np.pi / 2)
    return out


def design_pr_sine(M: int, max_order: int = DEFAULT_MAX_ORDER) -> PrototypePulse:
    """Smooth perfect-reconstruction pulse with kappa = 1.

    For t <= 0, p(t) = sin(pi/2 * S(2t + 1)) with S a smoothstep obeying
    S(x) + S(1 - x) = 1, which makes p(t)^2 + p(-1/2 - t)^2 = 1 at every
    sample pair, i.e. the polyphase power-complementarity that gives exact
    reconstruction.  S is flat to sixth order at 0 and 1, so the pulse and its
    first six derivatives vanish at the edges and the even extension is smooth.
    """
    if not _is_pow2(M):
        raise ValueError(f"M must be a power of two, got {M}")
    t = sample_times(M, 1)
    ta = -np.abs(t)
    x = 2 * ta + 1
    sd = _smoothstep_derivs(x, max_order)
    # derivatives of g(t) = pi/2 S(2t+1)
    g = np.array([np.pi / 2 * 2**r * sd[r] for r in range(max_order + 1)])
    # d^r e^{jg} = e^{jg} b_r, b_{r+1} = sum_i C(r,i) j g^(i+1) b_{r-i}
    b = [np.ones_like(t, dtype=complex)]
    for r in range(max_order):
        b.append(sum(comb(r, i) * 1j * g[i + 1] * b[r - i] for i in range(r + 1)))
    e = np.exp(1j * g[0])
    derivs = np.array([np.imag(e * b[r]) for r in range(max_order + 1)])
    # even extension: p^(r)(t) = (-1)^r p^(r)(-t)
    sign = np.where(t > 0, -1.0, 1.0)
    derivs *= sign[None, :] ** np.arange(max_order + 1)[:, None]
    return _finish(M, 1, np.array([]), derivs, "pr_sine")


def design_pulse(family: str, M: int, kappa: int = 3, max_order: int = DEFAULT_MAX_ORDER) -> PrototypePulse:
    if family == "phydyas":
        return design_phydyas(M, kappa, max_order)
    if family == "pr_sine":
        return design_pr_sine(M, max_order)
    raise ValueError(f"unknown pulse family {family!r}")


def derivative_pulse(pulse: PrototypePulse, r: int) -> np.ndarray:
    if r < 0 or r > pulse.max_order:
        raise DerivativeOrderError(
            f"derivative order {r} outside cached range 0..{pulse.max_order}")
    return pulse.derivatives[r]


def polyphase_matrix(samples, M: int, kappa: int) -> np.ndarray:
    """P[k, c] = samples[k + 2M c]."""
    samples = np.asarray(samples)
    if samples.shape != (2 * M * kappa,):
        raise ValueError(f"expected {2 * M * kappa} samples, got {samples.shape}")
    return samples.reshape(kappa, 2 * M).T.copy()


def rowconv(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise full linear convolution of two matrices with equal row count."""
    if A.shape[0] != B.shape[0]:
        raise ValueError("row count mismatch")
    n, na = A.shape
    nb = B.shape[1]
    out = np.zeros((n, na + nb - 1), dtype=np.result_type(A, B))
    for c in range(nb):
        out[:, c:c + na] += A * B[:, c:c + 1]
    return out


@dataclass(frozen=True, eq=False)
class PulseMatrices:
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray

    @property
    def M(self) -> int:
        return self.P.shape[0] // 2


def rs_matrices(P: np.ndarray, Q: np.ndarray) -> PulseMatrices:
    """R = P (*) J Q and S = (J_2 kron I_M) P (*) J Q (row-wise convolutions)."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[0] % 2:
        raise ValueError(f"P and Q must both be 2M x kappa, got {P.shape}, {Q.shape}")
    M = P.shape[0] // 2
    JQ = Q[::-1]
    R = rowconv(P, JQ)
    S = rowconv(np.roll(P, -M, axis=0), JQ)
    return PulseMatrices(P, Q, R, S)


def pair_matrices(p, q, m: int = 0, n: int = 0) -> PulseMatrices:
    """PulseMatrices for the derivative pair (p^(m), q^(n))."""
    M, kappa = p.m_half, p.kappa
    return rs_matrices(polyphase_matrix(derivative_pulse(p, m), M, kappa),
                       polyphase_matrix(derivative_pulse(q, n), M, kappa))


def _u_apply(X: np.ndarray, sign: int) -> np.ndarray:
    """(I_2 kron (I_M + sign J_M)) X."""
    M = X.shape[0] // 2
    top, bot = X[:M], X[M:]
    return np.vstack([top + sign * top[::-1], bot + sign * bot[::-1]])


def central_identity(M: int, kappa: int) -> np.ndarray:
    I = np.zeros((2 * M, 2 * kappa - 1))
    I[:, kappa - 1] = 1.0
    return I


def _trace_form(R1, R2, S1, S2, s_r, s_s, power):
    # tr[R1 R2^T U] = sum(R1 * (U R2)) since U is symmetric
    M = R1.shape[0] // 2
    return power / (2 * M) * (np.sum(R1 * _u_apply(R2, s_r)) + np.sum(S1 * _u_apply(S2, s_s)))


def pr_residuals(pm: PulseMatrices, power: float = 1.0):
    """(delta, ||U+ R - I||_F, ||U- S||_F)."""
    M = pm.M
    kappa = pm.P.shape[1]
    I = central_identity(M, kappa)
    r_res = np.linalg.norm(_u_apply(pm.R, +1) - I)
    s_res = np.linalg.norm(_u_apply(pm.S, -1))
    Rc = pm.R - 0.5 * I
    delta = _trace_form(Rc, Rc, pm.S, pm.S, +1, -1, power)
    return float(delta), float(r_res), float(s_res)


def eta(pm1: PulseMatrices, pm2: PulseMatrices, sign_order: str = "+-", power: float = 1.0) -> float:
    """(P_s/2M) tr[R1 R2^T U^{s1} + S1 S2^T U^{s2}] with (s1, s2) = sign_order."""
    if sign_order not in ("+-", "-+"):
        raise ValueError("sign_order must be '+-' or '-+'")
    if pm1.R.shape != pm2.R.shape:
        raise ValueError("pulse matrix shapes differ")
    s_r, s_s = (1, -1) if sign_order == "+-" else (-1, 1)
    return float(_trace_form(pm1.R, pm2.R, pm1.S, pm2.S, s_r, s_s, power))


def mu(pm_base: PulseMatrices, pm_deriv: PulseMatrices, power: float = 1.0) -> float:
    M = pm_base.M
    kappa = pm_base.P.shape[1]
    Rc = pm_base.R - 0.5 * central_identity(M, kappa)
    return float(_trace_form(Rc, pm_deriv.R, pm_base.S, pm_deriv.S, +1, -1, power))


def mu_tilde_from(mu_table, ell: int, m: int, K: int) -> float:
    """sum_{j=K}^{ell} (-1)^{j+K} C(ell,j) C(j-1,K-1) mu_(j, m-j)."""
    if not (1 <= K <= ell <= m):
        raise ValueError(f"need 1 <= K <= ell <= m, got K={K}, ell={ell}, m={m}")
    return float(sum((-1) ** (j + K) * comb(ell, j) * comb(j - 1, K - 1) * mu_table[(j, m - j)]
                     for j in range(K, ell + 1)))


def mu_and_mu_tilde(p: PrototypePulse, q: PrototypePulse, ell: int, m: int, K: int,
                    power: float = 1.0):
    """(mu_(ell, m-ell), mu_tilde^(K)_(ell, m)) for the pair (p, q)."""
    if not (1 <= K <= ell <= m):
        raise ValueError(f"need 1 <= K <= ell <= m, got K={K}, ell={ell}, m={m}")
    base = pair_matrices(p, q)
    table = {(j, m - j): mu(base, pair_matrices(p, q, j, m - j), power) for j in range(K, ell + 1)}
    return table[(ell, m - ell)], mu_tilde_from(table, ell, m, K)


@dataclass(frozen=True)
class PulseScalars:
    """Pulse-pair quantities entering the distortion formula.

    ``mu[(m, n)]`` for m + n <= max_order, ``eta_pm``/``eta_mp`` keyed by
    ``(m, n, m2, n2)`` for the pairs needed by the leading-order term.
    """

    delta: float
    mu: dict
    eta_pm: dict
    eta_mp: dict
    symbol_power: float
    max_order: int
    m_half: int
    mu_tilde: dict = field(default_factory=dict)

    def mu_tilde_of(self, ell, m, K):
        key = (ell, m, K)
        if key not in self.mu_tilde:
            return mu_tilde_from(self.mu, ell, m, K)
        return self.mu_tilde[key]


def pulse_scalars(p: PrototypePulse, q: PrototypePulse | None = None, max_order: int | None = None,
                  power: float = 1.0) -> PulseScalars:
    q = p if q is None else q
    if max_order is None:
        max_order = min(p.max_order, q.max_order)
    base = pair_matrices(p, q)
    delta = pr_residuals(base, power)[0]
    pms = {(m, n): pair_matrices(p, q, m, n)
           for m in range(max_order + 1) for n in range(max_order + 1 - m)}
    mus = {key: mu(base, pm, power) for key, pm in pms.items()}
    eta_pm, eta_mp = {}, {}
    for K in range(0, max_order // 2 + 1):
        pairs = [(K, 0), (0, K)]
        for a in pairs:
            for b in pairs:
                key = a + b
                eta_pm[key] = eta(pms[a], pms[b], "+-", power)
                eta_mp[key] = eta(pms[a], pms[b], "-+", power)
    tilde = {}
    for K in range(1, max_order + 1):
        for m in range(K, max_order + 1):
            for ell in range(K, m + 1):
                tilde[(ell, m, K)] = mu_tilde_from(mus, ell, m, K)
    return PulseScalars(delta=delta, mu=mus, eta_pm=eta_pm, eta_mp=eta_mp, symbol_power=power,
                        max_order=max_order, m_half=p.m_half, mu_tilde=tilde)
