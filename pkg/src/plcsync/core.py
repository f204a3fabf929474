"""Shared configuration, subcarrier index-set algebra and grid containers.

Every other module consumes the types defined here. All containers are
frozen dataclasses so they can be shared freely between worker processes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ArrayLike = Union[float, int, np.ndarray]


class Domain(enum.Enum):
    """Tag telling whether a :class:`BlockGrid` holds subcarriers or samples."""

    FREQUENCY = "frequency"
    TIME = "time"


@dataclass(frozen=True)
class Modulation:
    """Constellation family and order.

    Parameters
    ----------
    family : {"psk", "qam"}
        Constellation family.
    order : int
        Alphabet size M, a power of two. QAM additionally needs an even
        exponent (square constellation).
    """

    family: str = "psk"
    order: int = 16

    def __post_init__(self) -> None:
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in ("psk", "qam"):
            raise ValueError(f"unknown modulation family {self.family!r}")
        m = self.order
        if not isinstance(m, (int, np.integer)) or m < 2 or (m & (m - 1)) != 0:
            raise ValueError(f"modulation order must be a power of two >= 2, got {m!r}")
        if fam == "qam" and int(math.log2(m)) % 2 != 0:
            raise ValueError(f"QAM order must be a square power of two, got {m}")

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    @classmethod
    def parse(cls, text: str) -> "Modulation":
        """Parse strings such as ``"psk16"``, ``"16-psk"`` or ``"QAM64"``."""
        t = text.strip().lower().replace("-", "").replace("_", "")
        for fam in ("psk", "qam"):
            if fam in t:
                digits = t.replace(fam, "")
                if not digits.isdigit():
                    break
                return cls(fam, int(digits))
        raise ValueError(f"cannot parse modulation {text!r}")

    def __str__(self) -> str:
        return f"{self.family}{self.order}"


@dataclass(frozen=True)
class SystemConfig:
    """Static OFDM system parameters.

    Parameters
    ----------
    n_fft : int
        Number of subcarriers N (power of two).
    n_cp : int
        Cyclic-prefix length N_g in samples.
    n_blocks : int
        Blocks per frame Q.
    n_null : int
        Total number of null (guard) subcarriers N_n, even.
    t_sam : float
        Transmitter sampling interval in seconds.
    modulation : Modulation
        Data constellation.
    sigma_x2 : float
        Average symbol power.
    """

    n_fft: int = 512
    n_cp: int = 64
    n_blocks: int = 10
    n_null: int = 64
    t_sam: float = 1e-8
    modulation: Modulation = field(default_factory=Modulation)
    sigma_x2: float = 1.0

    def __post_init__(self) -> None:
        n = self.n_fft
        if not isinstance(n, (int, np.integer)) or n < 4 or (n & (n - 1)) != 0:
            raise ValueError(f"n_fft must be a power of two >= 4, got {n!r}")
        if self.n_cp < 0:
            raise ValueError("n_cp must be nonnegative")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be positive")
        if self.n_null < 0 or self.n_null % 2 != 0:
            raise ValueError("n_null must be a nonnegative even integer")
        if self.n_null >= n - 2:
            raise ValueError("n_null must be smaller than n_fft - 2")
        if not self.t_sam > 0:
            raise ValueError("t_sam must be positive")
        if not self.sigma_x2 > 0:
            raise ValueError("sigma_x2 must be positive")

    @property
    def n_sym(self) -> int:
        """Samples per block including the prefix, N_s."""
        return self.n_fft + self.n_cp

    @property
    def n_used(self) -> int:
        """Number of data subcarriers N_u."""
        return self.n_fft - self.n_null - 2

    @property
    def g(self) -> float:
        return self.n_cp / self.n_fft

    @property
    def nu(self) -> float:
        """Fraction of subcarriers carrying data."""
        return self.n_used / self.n_fft

    @property
    def xi_ratio(self) -> float:
        """Usable mirror-pair ratio N_u / (2N)."""
        return self.n_used / (2 * self.n_fft)


@dataclass(frozen=True)
class IndexSets:
    """Partition of subcarrier indices into DC/Nyquist, null and data sets."""

    i0: np.ndarray
    i1_plus: np.ndarray
    i1_minus: np.ndarray
    i2_plus: np.ndarray
    i2_minus: np.ndarray
    n_fft: int

    def __post_init__(self) -> None:
        for name in ("i0", "i1_plus", "i1_minus", "i2_plus", "i2_minus"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def data(self) -> np.ndarray:
        """All data subcarriers (both halves), sorted."""
        return np.sort(np.concatenate([self.i2_plus, self.i2_minus]))

    @property
    def null(self) -> np.ndarray:
        return np.sort(np.concatenate([self.i1_plus, self.i1_minus]))


def build_index_sets(cfg: SystemConfig) -> IndexSets:
    """Split ``{0, ..., N-1}`` into the DC/Nyquist, null and data sets.

    Data subcarriers occupy ``1 .. (N-N_n)/2 - 1`` and their mirrors; the
    ``N_n/2`` nulls on each side sit next to the Nyquist bin.
    """
    n, nn = cfg.n_fft, cfg.n_null
    if n % 2 or nn % 2 or cfg.n_used <= 0 or cfg.n_used % 2:
        raise ValueError("configuration violates index-set parity constraints")
    edge = (n - nn) // 2
    i2p = np.arange(1, edge)
    i1p = np.arange(edge, n // 2)
    return IndexSets(
        i0=np.array([0, n // 2]),
        i1_plus=i1p,
        i1_minus=n - i1p,
        i2_plus=i2p,
        i2_minus=n - i2p,
        n_fft=n,
    )


@dataclass(frozen=True)
class TimingParams:
    """Sampling offsets of one frame.

    Parameters
    ----------
    xi : float
        Fractional sampling phase offset in samples, within [-0.5, 0.5].
    eta : float
        Relative sampling clock offset.
    int_offset : int
        Integer part of the timing offset (a left shift, so <= 0).
    """

    xi: float = 0.1
    eta: float = 1e-5
    int_offset: int = 0

    def __post_init__(self) -> None:
        if not (-0.5 <= self.xi <= 0.5):
            raise ValueError(f"xi must lie in [-0.5, 0.5], got {self.xi}")
        if not math.isfinite(self.eta):
            raise ValueError("eta must be finite")
        if int(self.int_offset) != self.int_offset or self.int_offset > 0:
            raise ValueError("int_offset must be a nonpositive integer")


@dataclass(frozen=True)
class BlockGrid:
    """Q x N complex array tagged with its domain."""

    data: np.ndarray
    domain: Domain = Domain.FREQUENCY

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 2:
            raise ValueError("BlockGrid data must be two-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_blocks(self) -> int:
        return self.data.shape[0]

    @property
    def n_fft(self) -> int:
        return self.data.shape[1]

    def mirrored(self) -> np.ndarray:
        """Column k of the result is column N-k of the grid (column 0 stays)."""
        return self.data[:, (-np.arange(self.n_fft)) % self.n_fft]

    def hsp_error(self) -> float:
        """Largest deviation from Hermitian symmetry relative to the grid RMS."""
        rms = np.sqrt(np.mean(np.abs(self.data) ** 2))
        if rms == 0:
            return 0.0
        dev = np.abs(self.data - np.conj(self.mirrored()))
        return float(dev.max() / rms)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hsp_error() <= tol


def block_phase_slope(cfg: SystemConfig) -> np.ndarray:
    """Return ``D_q = pi*N + 2*pi*N_g + 2*pi*q*N_s`` for every block."""
    q = np.arange(cfg.n_blocks)
    return np.pi * cfg.n_fft + 2 * np.pi * cfg.n_cp + 2 * np.pi * q * cfg.n_sym


def theta_of(q: ArrayLike, params: TimingParams, cfg: SystemConfig) -> ArrayLike:
    """Ancillary phase of block ``q``: ``2*pi*xi + eta*(pi*N + 2*pi*N_g + 2*pi*q*N_s)``.

    Only the fractional offset enters. ``q`` may be an array.
    """
    return theta_line(q, params.xi, params.eta, cfg)


def theta_line(q: ArrayLike, xi: float, eta: float, cfg: SystemConfig) -> ArrayLike:
    """Same as :func:`theta_of` for raw floats (no range check on ``xi``).

    The value is built as ``base + q*step`` with ``step = 2*pi*N_s*eta`` so
    that successive blocks differ by the same floating-point increment.
    """
    base = 2 * np.pi * xi + eta * (np.pi * cfg.n_fft + 2 * np.pi * cfg.n_cp)
    step = 2 * np.pi * cfg.n_sym * eta
    q = np.asarray(q, dtype=float)
    out = base + q * step
    return float(out) if out.ndim == 0 else out
