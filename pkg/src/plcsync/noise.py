"""Noise generators for power-line channels and Gaussianity diagnostics.

Generators return time-domain sequences. The real generators share the
property that their DFT is Hermitian, which the estimator relies on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import SystemConfig, build_index_sets
from .ofdm import demodulate

# mains period of a 60 Hz grid, the default for cyclo-stationary noise
MAINS_PERIOD = 1.0 / 60.0


class NoiseKind(enum.Enum):
    AWGN = "awgn"
    CLASS_A = "class_a"
    NAKAGAMI = "nakagami"
    CYCLO = "cyclo"
    COLORED = "colored"

    @classmethod
    def parse(cls, text: str) -> "NoiseKind":
        t = text.strip().lower().replace("-", "_")
        aliases = {"classa": "class_a", "cyclostationary": "cyclo", "coloured": "colored"}
        t = aliases.get(t, t)
        for k in cls:
            if t in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown noise model {text!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """One noise model with its shape parameters and reference power.

    ``power`` is the Gaussian variance for AWGN, cyclo-stationary and
    colored noise, the background variance for Class-A, and the second
    moment for Nakagami-m. Cyclo-stationary noise defaults to a 60 Hz mains
    period. A cyclo-stationary ``n0`` of ``None`` draws the
    start sample uniformly over one mains period for every sequence.
    """

    kind: NoiseKind = NoiseKind.AWGN
    power: float = 1.0
    A: Optional[float] = None
    T: Optional[float] = None
    m: Optional[float] = None
    beta: Optional[float] = None
    t_ac: Optional[float] = None
    n0: Optional[int] = 0

    def __post_init__(self) -> None:
        if not self.power >= 0:
            raise ValueError("noise power must be nonnegative")
        k = self.kind
        if k is NoiseKind.CLASS_A:
            if self.A is None or self.T is None or not (self.A > 0 and self.T > 0):
                raise ValueError("Class-A noise needs A > 0 and T > 0")
        elif k is NoiseKind.NAKAGAMI:
            if self.m is None or self.m < 0.5:
                raise ValueError("Nakagami noise needs m >= 0.5")
        elif k is NoiseKind.CYCLO:
            if self.t_ac is None:
                object.__setattr__(self, "t_ac", MAINS_PERIOD)
            if not self.t_ac > 0:
                raise ValueError("cyclo-stationary noise needs t_ac > 0")
        elif k is NoiseKind.COLORED:
            if self.beta is None or not (0 < self.beta < 2):
                raise ValueError("colored noise needs beta in (0, 2)")

    def with_power(self, power: float) -> "NoiseSpec":
        return replace(self, power=float(power))

    @property
    def total_power(self) -> float:
        """Expected per-sample power of the generated real sequence."""
        if self.kind is NoiseKind.CLASS_A:
            return self.power * (1 + self.T) / self.T
        return self.power

    def label(self) -> str:
        parts = {
            NoiseKind.CLASS_A: f"A={self.A};T={self.T}",
            NoiseKind.NAKAGAMI: f"m={self.m}",
            NoiseKind.CYCLO: f"t_ac={self.t_ac};n0={'random' if self.n0 is None else self.n0}",
            NoiseKind.COLORED: f"beta={self.beta}",
        }
        return parts.get(self.kind, "")


@dataclass(frozen=True)
class GaussianityReport:
    kurtosis: float
    skewness: float
    p_value: float
    n_samples: int


def gen_awgn(rng: np.random.Generator, n: int, sigma_w2: float) -> np.ndarray:
    """White Gaussian noise with variance ``sigma_w2``."""
    return rng.standard_normal(n) * math.sqrt(sigma_w2)


def class_a_weights(A: float, tol: float = 1e-12) -> np.ndarray:
    """Poisson mixture weights ``exp(-A) A^p / p!`` up to the first ``P`` with tail below ``tol``."""
    from scipy.stats import poisson

    p_max = int(poisson.isf(tol, A)) + 1
    while poisson.sf(p_max, A) >= tol:
        p_max += 1
    return poisson.pmf(np.arange(p_max + 1), A)


def class_a_pdf(w: np.ndarray, A: float, T: float, sigma_g2: float, tol: float = 1e-12) -> np.ndarray:
    """Density of real Class-A noise, truncated mixture."""
    alpha = class_a_weights(A, tol)
    p = np.arange(alpha.size)
    var = sigma_g2 * (p / A + T) / T
    w = np.asarray(w, dtype=float)[..., None]
    return np.sum(alpha * np.exp(-w ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var), axis=-1)


def gen_class_a(rng: np.random.Generator, n: int, A: float, T: float, sigma_g2: float,
                iq: bool = False) -> np.ndarray:
    """Middleton Class-A noise.

    Each sample draws an impulse count ``p ~ Poisson(A)`` and is Gaussian
    with variance ``sigma_g2 (p/A + T) / T``. The mean power is
    ``sigma_g2 (1 + T) / T``.

    With ``iq=True`` a complex sequence with independent Class-A in-phase
    and quadrature parts is returned (each with the above power).
    """
    if not (A > 0 and T > 0 and sigma_g2 >= 0):
        raise ValueError("Class-A noise needs A > 0, T > 0 and sigma_g2 >= 0")

    def draw() -> np.ndarray:
        z = rng.standard_normal(n)
        p = rng.poisson(A, n)
        return z * np.sqrt(sigma_g2 * (p / A + T) / T)

    if iq:
        return draw() + 1j * draw()
    return draw()


def gen_nakagami(rng: np.random.Generator, n: int, m: float, omega: float) -> np.ndarray:
    """Complex noise with Nakagami-m envelope and uniform phase, ``E|w|^2 = omega``."""
    if m < 0.5:
        raise ValueError("Nakagami fading figure must satisfy m >= 0.5")
    if not omega >= 0:
        raise ValueError("omega must be nonnegative")
    u = np.sqrt(rng.gamma(m, omega / m, n))
    zeta = rng.uniform(-np.pi, np.pi, n)
    return u * np.exp(1j * zeta)


def nakagami_real(rng: np.random.Generator, n: int, m: float, omega: float) -> np.ndarray:
    """Real sequence ``sqrt(2) Re{w}`` of power ``omega`` built from :func:`gen_nakagami`."""
    return np.sqrt(2.0) * gen_nakagami(rng, n, m, omega).real


def gen_cyclostationary(rng: np.random.Generator, n: int, sigma_w2: float, t_ac: float,
                        t_sam: float, n0: Optional[int] = 0, block_len: int = 512) -> np.ndarray:
    """Gaussian noise with variance ``A_b^2 sin^2(2 pi t / t_ac)``.

    ``A_b`` is chosen per block of ``block_len`` samples so that each block
    has average variance ``sigma_w2``. Sample ``i`` is taken at time
    ``(n0 + i) t_sam``; ``n0=None`` draws it uniformly over one period.
    """
    if not t_ac > 0:
        raise ValueError("t_ac must be positive")
    z = rng.standard_normal(n)
    if n0 is None:
        n0 = int(rng.integers(0, max(1, int(round(t_ac / t_sam)))))
    t = (n0 + np.arange(n)) * t_sam
    env = np.sin(2 * np.pi * t / t_ac) ** 2
    var = np.zeros(n)
    for start in range(0, n, block_len):
        seg = env[start:start + block_len]
        total = seg.sum()
        if total > 0:
            var[start:start + block_len] = seg * (seg.size * sigma_w2 / total)
    return z * np.sqrt(var)


def colored_filter(n: int, beta: float) -> np.ndarray:
    """Amplitude response ``|f|^(-beta/2)`` on the full DFT grid, unit mean power gain."""
    f = np.abs(np.fft.fftfreq(n))
    f[0] = f[1] if n > 1 else 1.0
    h = f ** (-beta / 2)
    return h / np.sqrt(np.mean(h ** 2))


def gen_colored(rng: np.random.Generator, n: int, beta: float, sigma_w2: float) -> np.ndarray:
    """Gaussian ``1/f^beta`` noise obtained by spectral shaping of white noise.

    The DC bin takes the gain of the lowest nonzero frequency and the filter
    is normalized so the expected power stays ``sigma_w2``.
    """
    if not 0 <= beta < 2:
        raise ValueError("beta must lie in [0, 2)")
    z = rng.standard_normal(n)
    shaped = np.fft.ifft(np.fft.fft(z) * colored_filter(n, beta)).real
    return shaped * math.sqrt(sigma_w2)


def generate(spec: NoiseSpec, rng: np.random.Generator, n: int, cfg: SystemConfig) -> np.ndarray:
    """Real time-domain noise of length ``n`` for any :class:`NoiseSpec`."""
    k = spec.kind
    if k is NoiseKind.AWGN:
        return gen_awgn(rng, n, spec.power)
    if k is NoiseKind.CLASS_A:
        return gen_class_a(rng, n, spec.A, spec.T, spec.power)
    if k is NoiseKind.NAKAGAMI:
        return nakagami_real(rng, n, spec.m, spec.power)
    if k is NoiseKind.CYCLO:
        return gen_cyclostationary(rng, n, spec.power, spec.t_ac, cfg.t_sam, spec.n0, cfg.n_fft)
    return gen_colored(rng, n, spec.beta, spec.power)


def to_frequency(samples: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Demodulate a noise sequence of ``Q*N_s`` samples into a ``Q x N`` grid."""
    return demodulate(np.asarray(samples), cfg).data


# D'Agostino omnibus test -------------------------------------------------

def _skew_z(b1: np.ndarray, n: int) -> np.ndarray:
    y = b1 * np.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1 + np.sqrt(2 * (beta2 - 1))
    delta = 1 / np.sqrt(0.5 * np.log(w2))
    alpha = np.sqrt(2.0 / (w2 - 1))
    return delta * np.arcsinh(y / alpha)


def _kurt_z(b2: np.ndarray, n: int) -> np.ndarray:
    mean = 3.0 * (n - 1) / (n + 1)
    var = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    x = (b2 - mean) / np.sqrt(var)
    sqrt_beta1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9)) * np.sqrt(
        6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3)))
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + np.sqrt(1 + 4.0 / sqrt_beta1 ** 2))
    term1 = 1 - 2 / (9.0 * a)
    denom = 1 + x * np.sqrt(2 / (a - 4.0))
    term2 = np.sign(denom) * np.cbrt((1 - 2.0 / a) / np.abs(denom))
    return (term1 - term2) / np.sqrt(2 / (9.0 * a))


def moments(x: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Biased sample skewness and (non-excess) kurtosis along ``axis``."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean(axis=axis, keepdims=True)
    m2 = np.mean(d ** 2, axis=axis)
    m3 = np.mean(d ** 3, axis=axis)
    m4 = np.mean(d ** 4, axis=axis)
    return m3 / m2 ** 1.5, m4 / m2 ** 2


def dagostino_k2(x: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """D'Agostino-Pearson K^2 statistic and its chi-square(2) p-value along ``axis``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    if n < 20:
        raise ValueError("the omnibus test needs at least 20 samples")
    b1, b2 = moments(x, axis)
    k2 = _skew_z(b1, n) ** 2 + _kurt_z(b2, n) ** 2
    return k2, np.exp(-k2 / 2)


def gaussianity_report(samples: np.ndarray, min_samples: int = 100) -> GaussianityReport:
    """Skewness, kurtosis and omnibus p-value of the in-phase part of ``samples``.

    ``samples`` is a ``frames x values`` array (for instance the data
    subcarriers of each noise frame). Statistics are computed across the
    values of each frame and then averaged over frames. A 1-D input is
    treated as a single frame.
    """
    x = np.atleast_2d(np.asarray(samples))
    x = x.real if np.iscomplexobj(x) else x.astype(float)
    if x.shape[1] < min_samples:
        raise ValueError(f"need at least {min_samples} samples per frame, got {x.shape[1]}")
    skew, kurt = moments(x, axis=1)
    _, p = dagostino_k2(x, axis=1)
    return GaussianityReport(float(np.mean(kurt)), float(np.mean(skew)), float(np.mean(p)), int(x.size))


def frequency_frames(spec: NoiseSpec, rng: np.random.Generator, n_frames: int,
                     cfg: SystemConfig, iq: bool = True) -> np.ndarray:
    """Usable-subcarrier noise values of ``n_frames`` independent OFDM blocks.

    Each frame is one block of N samples transformed with the orthonormal
    DFT; the positive-half data subcarriers are returned. With ``iq=True``
    the in-phase and quadrature time components are drawn independently, as
    for passband-derived baseband noise; Nakagami noise is always complex.
    """
    n = cfg.n_fft
    total = n_frames * n
    if spec.kind is NoiseKind.NAKAGAMI:
        w = gen_nakagami(rng, total, spec.m, spec.power)
    elif iq and spec.kind is NoiseKind.CLASS_A:
        w = gen_class_a(rng, total, spec.A, spec.T, spec.power, iq=True)
    elif iq:
        w = generate(spec, rng, total, cfg) + 1j * generate(spec, rng, total, cfg)
    else:
        w = generate(spec, rng, total, cfg)
    freq = np.fft.fft(w.reshape(n_frames, n), axis=1, norm="ortho")
    return freq[:, build_index_sets(cfg).i2_plus]
