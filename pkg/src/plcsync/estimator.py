"""Five-step joint estimation of the sampling phase and clock offsets.

1. ancillary phases from mirror-pair products ``R[q,k] R[q,N-k]``;
2. sequential unwrapping across blocks;
3. ordinary least squares on the line ``Theta_q = 2 pi xi + D_q eta``;
4. removal of the analytic self-noise bias;
5. re-estimation (weighted or ordinary).

Blind SNR estimation on the null subcarriers turns this into the practical
scheme, and a lattice search over the log-likelihood serves as an oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import BlockGrid, IndexSets, SystemConfig, block_phase_slope, build_index_sets, theta_line

WEIGHT_CAP = 1e15
SNR_FLOOR = 1e-6
SNR_CEIL = 1e9


class Scheme(enum.Enum):
    NDA = "NDA"
    DA = "DA"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        return cls(text.strip().upper())


class Variant(enum.Enum):
    OLS = "OLS"
    WLS_BE = "WLS_BE"
    OLS_BE = "OLS_BE"
    PS = "PS"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        return cls(text.strip().upper().replace("-", "_"))


class DegenerateFrameError(ValueError):
    """The phase accumulator of some block vanished (for example an all-zero frame)."""


@dataclass(frozen=True)
class AncillaryPhases:
    raw: np.ndarray
    unwrapped: np.ndarray
    scheme: Scheme


@dataclass(frozen=True)
class SnrEstimate:
    sigma_w2_hat: float
    sigma_x2h2_hat: float
    snr_hat: float


@dataclass(frozen=True)
class TimingEstimate:
    """Estimated offsets with the intermediate quantities that produced them."""

    xi_hat: float
    eta_hat: float
    variant: Variant
    snr: Optional[float] = None
    bias: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.xi_hat) and np.isfinite(self.eta_hat)):
            raise ValueError("timing estimate is not finite")


def _data(grid: BlockGrid | np.ndarray) -> np.ndarray:
    return grid.data if isinstance(grid, BlockGrid) else np.asarray(grid)


# Step 1 -----------------------------------------------------------------

def lambda1(grid: BlockGrid | np.ndarray, q, k) -> np.ndarray:
    """Mirror-pair product ``R[q,k] R[q,N-k]`` (vectorizes over ``q`` and ``k``)."""
    r = _data(grid)
    n = r.shape[1]
    k = np.asarray(k)
    return r[q, k] * r[q, (n - k) % n]


def lambda1_matrix(grid: BlockGrid | np.ndarray, ks: np.ndarray) -> np.ndarray:
    """``Q x len(ks)`` array of mirror-pair products."""
    r = _data(grid)
    n = r.shape[1]
    ks = np.asarray(ks)
    return r[:, ks] * r[:, (n - ks) % n]


def lambda2(snr) -> np.ndarray:
    """Data-aided weight ``1 / (2 + 1/snr)`` for per-subcarrier SNR ``snr``."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0):
        raise ValueError("snr must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = snr / (2.0 * snr + 1.0)
    out = np.where(np.isinf(snr), 0.5, out)
    return float(out) if out.ndim == 0 else out


def _wrapped_angle(z: np.ndarray) -> np.ndarray:
    a = np.angle(z)
    return np.where(a == -np.pi, np.pi, a)


def _accumulate(grid, sets: IndexSets, scheme: Scheme, weights) -> np.ndarray:
    lam = lambda1_matrix(grid, sets.i2_plus)
    if scheme is Scheme.DA:
        if weights is None:
            raise ValueError("DA scheme requires weights")
        lam = lam * np.broadcast_to(np.asarray(weights, dtype=float), lam.shape)
    return lam.sum(axis=1)


def ancillary_phase(grid: BlockGrid | np.ndarray, q: int, sets: IndexSets, scheme: Scheme = Scheme.NDA,
                    weights: Optional[np.ndarray] = None) -> float:
    """Wrapped phase in ``(-pi, pi]`` of block ``q``.

    ``weights`` holds the data-aided weights on the positive-half data
    subcarriers, either for block ``q`` or for every block.
    """
    r = _data(grid)
    w = None
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        w = w[q] if w.ndim == 2 else w
    acc = _accumulate(r[q:q + 1], sets, scheme, w)[0]
    if acc == 0:
        raise DegenerateFrameError(f"zero accumulator in block {q}")
    return float(_wrapped_angle(acc))


def ancillary_phases(grid: BlockGrid | np.ndarray, sets: IndexSets, scheme: Scheme = Scheme.NDA,
                     weights: Optional[np.ndarray] = None, phi: float = 1.0) -> AncillaryPhases:
    """Wrapped and unwrapped ancillary phases of every block."""
    acc = _accumulate(grid, sets, scheme, weights)
    if np.any(acc == 0):
        raise DegenerateFrameError("zero accumulator in at least one block")
    raw = _wrapped_angle(acc)
    return AncillaryPhases(raw, unwrap(raw, phi), scheme)


def estimate_lambda2(grid: BlockGrid | np.ndarray, symbols: np.ndarray, ctf_estimate: np.ndarray,
                     sigma_w2_hat: float, sets: IndexSets) -> np.ndarray:
    """Data-aided weights ``[2 + sigma_w2 / (|X|^2 |H|^2)]^-1`` on the positive-half data set.

    ``symbols`` and ``ctf_estimate`` are ``Q x N`` arrays (or ``Q x N_u/2``
    arrays already restricted to the positive-half data set). Subcarriers
    with ``|X H| = 0`` get weight 0.
    """
    x = np.asarray(symbols)
    h = np.asarray(ctf_estimate)
    k = sets.i2_plus
    if x.shape[-1] == sets.n_fft:
        x = x[..., k]
    if h.shape[-1] == sets.n_fft:
        h = h[..., k]
    p = np.abs(x) ** 2 * np.abs(h) ** 2
    out = np.zeros(np.broadcast(p, np.zeros(1)).shape)
    nz = p > 0
    if sigma_w2_hat <= 0:
        out[nz] = 0.5
    else:
        out[nz] = 1.0 / (2.0 + sigma_w2_hat / p[nz])
    return out


# Step 2 -----------------------------------------------------------------

def unwrap(raw: np.ndarray, phi: float = 1.0) -> np.ndarray:
    """Sequential unwrapping with tolerance ``phi*pi``.

    Whenever two consecutive wrapped phases differ by at least ``phi*pi``,
    ``2*pi`` with the sign opposing the jump is added to every later entry.
    """
    if not 0 <= phi <= 2:
        raise ValueError("phi must lie in [0, 2]")
    raw = np.asarray(raw, dtype=float)
    out = raw.copy()
    offset = 0.0
    for q in range(1, raw.size):
        d = raw[q] - raw[q - 1]
        if abs(d) >= phi * np.pi:
            offset -= 2 * np.pi * np.sign(d)
        out[q] = raw[q] + offset
    return out


# Step 3 -----------------------------------------------------------------

def build_E(cfg: SystemConfig) -> np.ndarray:
    """Observation matrix with rows ``[2 pi, D_q]``."""
    if cfg.n_blocks < 2:
        raise ValueError("joint estimation needs at least two blocks")
    return np.column_stack([np.full(cfg.n_blocks, 2 * np.pi), block_phase_slope(cfg)])


def solve_lsq(E: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted least squares via column scaling and a QR factorization."""
    E = np.asarray(E, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is not None:
        s = np.sqrt(np.asarray(weights, dtype=float))
        E = E * s[:, None]
        y = y * s
    scale = np.linalg.norm(E, axis=0)
    if np.any(scale == 0):
        raise np.linalg.LinAlgError("observation matrix is rank deficient")
    Qm, Rm = np.linalg.qr(E / scale)
    if np.min(np.abs(np.diag(Rm))) < 1e-12 * np.max(np.abs(np.diag(Rm))):
        raise np.linalg.LinAlgError("observation matrix is rank deficient")
    return np.linalg.solve(Rm, Qm.T @ y) / scale


def ols(unwrapped: np.ndarray, E: np.ndarray) -> TimingEstimate:
    xi, eta = solve_lsq(E, unwrapped)
    return TimingEstimate(float(xi), float(eta), Variant.OLS, phases=np.asarray(unwrapped))


# Step 4 -----------------------------------------------------------------

def _thetas(theta_hat, cfg: SystemConfig) -> np.ndarray:
    xi, eta = theta_hat
    return np.asarray(theta_line(np.arange(cfg.n_blocks), xi, eta, cfg))


def bias_vector(theta_hat, snr: float, cfg: SystemConfig) -> np.ndarray:
    """Self-noise mean ``-sin(Theta_q) / (cos(Theta_q) + snr)`` per block."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    th = _thetas(theta_hat, cfg)
    return -np.sin(th) / (np.cos(th) + snr)


def cov_matrix(theta_hat, snr: float, cfg: SystemConfig) -> np.ndarray:
    """Diagonal self-noise covariance ``(1 - cos Theta_q) / (Xi N snr)``."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    th = _thetas(theta_hat, cfg)
    return np.diag((1 - np.cos(th)) / (cfg.xi_ratio * cfg.n_fft * snr))


def _wls_weights(cov: np.ndarray) -> np.ndarray:
    d = np.diag(cov)
    w = np.full(d.shape, WEIGHT_CAP)
    ok = d >= 1.0 / WEIGHT_CAP
    w[ok] = 1.0 / d[ok]
    return w


# Step 5 -----------------------------------------------------------------

def wls_be(unwrapped: np.ndarray, E: np.ndarray, theta_init, snr: float, cfg: SystemConfig) -> TimingEstimate:
    """Weighted re-estimation after subtracting the bias evaluated at ``theta_init``."""
    mu = bias_vector(theta_init, snr, cfg)
    w = _wls_weights(cov_matrix(theta_init, snr, cfg))
    xi, eta = solve_lsq(E, np.asarray(unwrapped) - mu, w)
    return TimingEstimate(float(xi), float(eta), Variant.WLS_BE, snr=snr, bias=mu,
                          phases=np.asarray(unwrapped))


def ols_be(unwrapped: np.ndarray, E: np.ndarray, theta_init, snr: float, cfg: SystemConfig,
           variant: Variant = Variant.OLS_BE) -> TimingEstimate:
    """Ordinary re-estimation after subtracting the bias evaluated at ``theta_init``."""
    mu = bias_vector(theta_init, snr, cfg)
    xi, eta = solve_lsq(E, np.asarray(unwrapped) - mu)
    return TimingEstimate(float(xi), float(eta), variant, snr=snr, bias=mu,
                          phases=np.asarray(unwrapped))


# Blind SNR and practical scheme ------------------------------------------

def estimate_snr(grid: BlockGrid | np.ndarray, sets: IndexSets, cfg: SystemConfig) -> SnrEstimate:
    """Moment estimates of noise power, signal power and SNR.

    The noise power comes from the mirror-pair products on the null
    subcarriers, whose mean equals the noise variance. The returned SNR
    includes the data-fraction factor ``nu`` and is clamped to
    ``[1e-6, 1e9]``.
    """
    if cfg.n_null == 0:
        raise ValueError("noise power cannot be estimated without null subcarriers")
    r = _data(grid)
    nq = r.shape[0]
    s_w = 2.0 * float(np.sum(lambda1_matrix(r, sets.i1_plus).real)) / (nq * cfg.n_null)
    s_x = 2.0 * float(np.sum(np.abs(r[:, sets.i2_plus]) ** 2)) / (nq * cfg.n_used)
    if s_w <= 0:
        snr = SNR_CEIL if s_x > 0 else SNR_FLOOR
    else:
        snr = float(np.clip(cfg.nu * (s_x / s_w - 1.0), SNR_FLOOR, SNR_CEIL))
    return SnrEstimate(max(s_w, 0.0), s_x - max(s_w, 0.0), snr)


def practical_scheme(grid: BlockGrid | np.ndarray, cfg: SystemConfig, scheme: Scheme = Scheme.NDA,
                     symbols: Optional[np.ndarray] = None, ctf: Optional[np.ndarray] = None,
                     phi: float = 1.0, sets: Optional[IndexSets] = None) -> TimingEstimate:
    """Blind pipeline: SNR estimate, phases, unwrap, OLS, bias erasure, OLS.

    The DA scheme needs ``symbols`` (known or decided) and a channel
    estimate ``ctf``; its weights use the estimated noise power.
    """
    sets = sets or build_index_sets(cfg)
    est = estimate_snr(grid, sets, cfg)
    weights = None
    if scheme is Scheme.DA:
        if symbols is None or ctf is None:
            raise ValueError("DA practical scheme needs symbols and a channel estimate")
        weights = estimate_lambda2(grid, symbols, ctf, est.sigma_w2_hat, sets)
    ph = ancillary_phases(grid, sets, scheme, weights, phi)
    E = build_E(cfg)
    init = ols(ph.unwrapped, E)
    # the bias formula takes the per-subcarrier SNR
    snr_sc = est.snr_hat / cfg.nu
    out = ols_be(ph.unwrapped, E, (init.xi_hat, init.eta_hat), snr_sc, cfg, variant=Variant.PS)
    out.extras.update(snr_estimate=est, raw=ph.raw, ols=init)
    return out


def estimate_offsets(grid: BlockGrid | np.ndarray, cfg: SystemConfig, variant: Variant,
                     scheme: Scheme = Scheme.NDA, snr: Optional[float] = None,
                     weights: Optional[np.ndarray] = None, phi: float = 1.0,
                     sets: Optional[IndexSets] = None) -> TimingEstimate:
    """Run one genie-aided variant (OLS, WLS_BE or OLS_BE).

    ``snr`` is the per-subcarrier SNR used by the bias-erasure variants.
    """
    if variant is Variant.PS:
        raise ValueError("use practical_scheme for the PS variant")
    sets = sets or build_index_sets(cfg)
    ph = ancillary_phases(grid, sets, scheme, weights, phi)
    E = build_E(cfg)
    init = ols(ph.unwrapped, E)
    if variant is Variant.OLS:
        return init
    if snr is None:
        raise ValueError("bias erasure needs an SNR")
    solver = wls_be if variant is Variant.WLS_BE else ols_be
    return solver(ph.unwrapped, E, (init.xi_hat, init.eta_hat), snr, cfg)


# Likelihood oracle --------------------------------------------------------

def llf_bruteforce(grid: BlockGrid | np.ndarray, xi_values: np.ndarray, eta_values: np.ndarray,
                   cfg: SystemConfig, gamma: float = 0.0, sigma_s2: Optional[float] = None,
                   sigma_w2: Optional[float] = None, sets: Optional[IndexSets] = None):
    """Evaluate the log-likelihood over a ``(xi, eta)`` lattice.

    With ``gamma=0`` the surface is ``sum_q Re{A_q exp(-j Theta_q)}`` where
    ``A_q`` sums the mirror-pair products of block ``q``. Otherwise the
    complete pairwise Gaussian log-density with correlation ``gamma`` is
    used, which needs the signal power ``sigma_s2`` and noise power
    ``sigma_w2``.

    Returns
    -------
    best : tuple of float
        Lattice point ``(xi, eta)`` maximizing the surface.
    surface : ndarray
        Array of shape ``(len(xi_values), len(eta_values))``.
    """
    xi_values = np.asarray(xi_values, dtype=float).ravel()
    eta_values = np.asarray(eta_values, dtype=float).ravel()
    if xi_values.size == 0 or eta_values.size == 0:
        raise ValueError("empty lattice")
    r = _data(grid)
    nq = r.shape[0]
    sets = sets or build_index_sets(cfg)
    acc = lambda1_matrix(r, sets.i2_plus).sum(axis=1)
    d = block_phase_slope(cfg)[:nq]
    th = 2 * np.pi * xi_values[:, None, None] + eta_values[None, :, None] * d[None, None, :]
    corr = np.real(acc[None, None, :] * np.exp(-1j * th))
    if gamma == 0:
        surf = corr.sum(axis=2)
    else:
        if sigma_s2 is None or sigma_w2 is None:
            raise ValueError("the complete log-density needs sigma_s2 and sigma_w2")
        k = sets.i2_plus
        pw = np.sum(np.abs(r[:, k]) ** 2 + np.abs(r[:, sets.n_fft - k]) ** 2, axis=1)
        det = 2 * sigma_s2 * sigma_w2 * (1 - gamma * np.cos(th)) + sigma_w2 ** 2 * (1 - gamma ** 2)
        det = np.maximum(det, np.finfo(float).tiny)
        quad = (-(sigma_s2 + sigma_w2) * pw[None, None, :] + 2 * sigma_s2 * corr) / det
        surf = np.sum(quad - k.size * np.log(np.pi ** 2 * det), axis=2)
    i, j = np.unravel_index(np.argmax(surf), surf.shape)
    return (float(xi_values[i]), float(eta_values[j])), surf


def llf_value(grid: BlockGrid | np.ndarray, xi: float, eta: float, cfg: SystemConfig,
              sets: Optional[IndexSets] = None) -> float:
    """The ``gamma=0`` surface evaluated at a single point."""
    _, s = llf_bruteforce(grid, [xi], [eta], cfg, sets=sets)
    return float(s[0, 0])
