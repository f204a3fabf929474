"""Real-tap multipath channels and the two sampling-offset models.

``apply_phase_model`` rotates each subcarrier by the first-order phase of
the sampling offsets and injects no inter-carrier interference.
``apply_resample_model`` evaluates the continuous transmit waveform at the
offset receiver instants, so ICI appears naturally after demodulation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import BlockGrid, Domain, SystemConfig, TimingParams
from .ofdm import TimeSignal


class ChannelMode(enum.Enum):
    PHASE_MODEL = "phase"
    RESAMPLE = "resample"

    @classmethod
    def parse(cls, text: str) -> "ChannelMode":
        t = text.strip().lower()
        for m in cls:
            if t in (m.value, m.name.lower()):
                return m
        raise ValueError(f"unknown channel mode {text!r}")


@dataclass(frozen=True)
class ChannelProfile:
    """Channel generator settings.

    Parameters
    ----------
    kind : {"flat", "multipath"}
    rate : float
        Poisson rate of the extra path count (multipath only).
    decay : float
        Power ratio between consecutive taps (multipath only).
    sigma_h2 : float
        Expected total channel power.
    """

    kind: str = "flat"
    rate: float = 5.0
    decay: float = 0.5
    sigma_h2: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in ("flat", "multipath"):
            raise ValueError(f"unknown channel profile {self.kind!r}")
        if self.kind == "multipath" and not self.rate > 0:
            raise ValueError("multipath rate must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if not self.sigma_h2 > 0:
            raise ValueError("sigma_h2 must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    """Real tap gains per block with integer sample delays.

    ``gains`` has shape ``(Q, L)``; ``delays`` has shape ``(L,)``.
    """

    gains: np.ndarray
    delays: np.ndarray
    n_fft: int

    def __post_init__(self) -> None:
        g = np.atleast_2d(np.asarray(self.gains, dtype=float)).copy()
        d = np.asarray(self.delays, dtype=np.int64).ravel().copy()
        if g.shape[1] != d.size:
            raise ValueError("gains and delays disagree on the number of taps")
        if d.size and d.min() < 0:
            raise ValueError("delays must be nonnegative")
        g.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "delays", d)

    @property
    def n_taps(self) -> int:
        return self.delays.size

    @property
    def taps(self) -> list[list[tuple[float, int]]]:
        """Per-block list of ``(gain, delay)`` pairs."""
        return [list(zip(map(float, row), map(int, self.delays))) for row in self.gains]

    @property
    def ctf(self) -> np.ndarray:
        """Transfer function ``H[q, k] = sum_l h_l(q) exp(-j 2 pi k d_l / N)``."""
        k = np.arange(self.n_fft)
        steer = np.exp(-2j * np.pi * np.outer(self.delays, k) / self.n_fft)
        return self.gains @ steer

    @property
    def power(self) -> float:
        """Realized total power ``sum_l h_l^2`` averaged over blocks."""
        return float(np.mean(np.sum(self.gains ** 2, axis=1)))

    @classmethod
    def flat(cls, gain: float, cfg: SystemConfig) -> "ChannelRealization":
        return cls(np.full((cfg.n_blocks, 1), float(gain)), np.array([0]), cfg.n_fft)


def generate_channel(rng: np.random.Generator, cfg: SystemConfig,
                     profile: ChannelProfile = ChannelProfile()) -> ChannelRealization:
    """Draw one channel, held constant over the frame.

    Flat: one real Gaussian tap of variance ``sigma_h2``. Multipath:
    ``L = 1 + Poisson(rate)`` taps (at most ``N_g/2``) on consecutive
    sample delays with powers proportional to ``decay**l`` and summing
    to ``sigma_h2`` in expectation.
    """
    if profile.kind == "flat":
        gains = np.array([rng.standard_normal() * np.sqrt(profile.sigma_h2)])
    else:
        l_max = max(1, cfg.n_cp // 2)
        n_taps = min(1 + int(rng.poisson(profile.rate)), l_max)
        pdp = profile.decay ** np.arange(n_taps)
        pdp *= profile.sigma_h2 / pdp.sum()
        gains = rng.standard_normal(n_taps) * np.sqrt(pdp)
    return ChannelRealization(np.tile(gains, (cfg.n_blocks, 1)), np.arange(gains.size), cfg.n_fft)


def subcarrier_phase(cfg: SystemConfig, xi: float, eta: float, exact: bool = False) -> np.ndarray:
    """Per-subcarrier rotation ``Theta[q, k]`` caused by the sampling offsets.

    The default is the first-order form
    ``2 pi xi k/N + pi eta k + 2 pi (q N_s + N_g) eta k / N``. With
    ``exact=True`` the full expression
    ``[pi (N-1) eta k + 2 pi (1+eta) xi k + 2 pi (q N_s + N_g) eta k] / N``
    is returned instead.
    """
    n = cfg.n_fft
    k = np.arange(n, dtype=float)[None, :]
    q = np.arange(cfg.n_blocks, dtype=float)[:, None]
    shift = (q * cfg.n_sym + cfg.n_cp) * eta
    if exact:
        return (np.pi * (n - 1) * eta * k + 2 * np.pi * (1 + eta) * xi * k + 2 * np.pi * shift * k) / n
    return 2 * np.pi * xi * k / n + np.pi * eta * k + 2 * np.pi * shift * k / n


def attenuation(eta: float, k: np.ndarray, n_fft: int) -> np.ndarray:
    """Amplitude loss ``sin(pi eta k) / (N sin(pi eta k / N))``, equal to 1 at ``eta*k = 0``."""
    x = np.pi * eta * np.asarray(k, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sin(x[nz]) / (n_fft * np.sin(x[nz] / n_fft))
    return out


def rotate_grid(tx: np.ndarray, ctf: np.ndarray, xi: float, eta: float, cfg: SystemConfig,
                include_attenuation: bool = False) -> np.ndarray:
    """Array form of :func:`apply_phase_model` without the range check on ``xi``."""
    out = np.asarray(tx) * ctf * np.exp(1j * subcarrier_phase(cfg, xi, eta))
    if include_attenuation:
        out = out * attenuation(eta, np.arange(cfg.n_fft), cfg.n_fft)
    return out


def apply_phase_model(grid_tx: BlockGrid, chan: ChannelRealization, params: TimingParams,
                      cfg: SystemConfig, include_attenuation: bool = False) -> BlockGrid:
    """Noise-free received subcarriers ``X * H * exp(j Theta)`` (optionally times the attenuation)."""
    if grid_tx.domain is not Domain.FREQUENCY:
        raise ValueError("expected a frequency-domain grid")
    data = rotate_grid(grid_tx.data, chan.ctf, params.xi, params.eta, cfg, include_attenuation)
    return BlockGrid(data, Domain.FREQUENCY)


def apply_resample_model(grid_tx: BlockGrid, chan: ChannelRealization, params: TimingParams,
                         cfg: SystemConfig) -> TimeSignal:
    """Sample the channel output at the offset receiver clock.

    Receiver sample ``m`` is taken at ``t/T = (m + int_offset + xi)(1 + eta)``.
    Each block's waveform ``N^-1/2 sum_k X[q,k] exp(j 2 pi k (t/T - q N_s - N_g)/N)``
    lives on ``[q N_s, (q+1) N_s)`` and is evaluated by direct summation.
    The result has ``Q*N_s`` samples and is demodulated with ``window_start=0``.

    Raises
    ------
    ValueError
        If ``int_offset`` is outside ``[-(L-1), 0]``.
    """
    if grid_tx.domain is not Domain.FREQUENCY:
        raise ValueError("expected a frequency-domain grid")
    n_taps = chan.n_taps
    if not (-(n_taps - 1) <= params.int_offset <= 0):
        raise ValueError(f"int_offset {params.int_offset} outside [-{n_taps - 1}, 0]")
    n, ns, nq = cfg.n_fft, cfg.n_sym, cfg.n_blocks
    x = grid_tx.data
    active = np.flatnonzero(np.any(x != 0, axis=0))
    m = np.arange(nq * ns, dtype=float)
    t_rx = (m + params.int_offset + params.xi) * (1.0 + params.eta)
    out = np.zeros(nq * ns, dtype=complex)
    scale = 1.0 / np.sqrt(n)
    for l_idx, delay in enumerate(chan.delays):
        t = t_rx - delay
        blk = np.floor(t / ns).astype(np.int64)
        for q in range(nq):
            sel = np.flatnonzero(blk == q)
            if sel.size == 0:
                continue
            tau = t[sel] - q * ns - cfg.n_cp
            basis = np.exp(2j * np.pi * np.outer(tau, active) / n)
            out[sel] += chan.gains[q, l_idx] * scale * (basis @ x[q, active])
    return TimeSignal(out, 1.0 / (cfg.t_sam * (1.0 + params.eta)))
