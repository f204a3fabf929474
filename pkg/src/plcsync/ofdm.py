"""Baseband OFDM with Hermitian symmetry, cyclic prefix and Gray mapping.

Both transforms use the orthonormal DFT scaling, so ``demodulate`` undoes
``modulate`` exactly and a real white time sequence of variance s2 maps to
subcarriers of variance s2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import BlockGrid, Domain, IndexSets, Modulation, SystemConfig, build_index_sets


@dataclass(frozen=True)
class ConstellationPoint:
    value: complex
    symbol_index: int


@dataclass(frozen=True)
class TimeSignal:
    """Complex sample sequence with its sampling rate in samples per second."""

    samples: np.ndarray
    rate: float

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.complex128, copy=True).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    def __add__(self, other: np.ndarray) -> "TimeSignal":
        return TimeSignal(self.samples + np.asarray(other), self.rate)


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


@lru_cache(maxsize=None)
def _alphabet(family: str, order: int) -> np.ndarray:
    idx = np.arange(order)
    if family == "psk":
        # Gray code g sits at angular position g; QPSK is offset to the diagonals.
        offset = np.pi / 4 if order == 4 else 0.0
        pos = np.empty(order, dtype=int)
        pos[_gray(idx)] = idx
        pts = np.exp(1j * (2 * np.pi * pos / order + offset))
    else:
        side = int(round(np.sqrt(order)))
        half_bits = int(np.log2(side))
        levels = 2 * np.arange(side) - (side - 1)
        pam = np.empty(side)
        pam[_gray(np.arange(side))] = levels
        i_part = pam[idx >> half_bits]
        q_part = pam[idx & (side - 1)]
        pts = (i_part + 1j * q_part).astype(complex)
        pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return pts


def constellation(modulation: Modulation) -> np.ndarray:
    """All M constellation values ordered by symbol index."""
    return _alphabet(modulation.family, modulation.order)


def constellation_points(modulation: Modulation) -> list[ConstellationPoint]:
    return [ConstellationPoint(complex(v), i) for i, v in enumerate(constellation(modulation))]


def map_symbols(indices: np.ndarray, modulation: Modulation) -> np.ndarray:
    """Map integer symbol indices to Gray-coded unit-power constellation values.

    Raises
    ------
    ValueError
        If an index falls outside ``[0, M)``.
    """
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= modulation.order):
        raise ValueError("symbol index outside [0, M)")
    return constellation(modulation)[idx.astype(np.int64)]


def random_symbols(rng: np.random.Generator, cfg: SystemConfig) -> np.ndarray:
    """Draw a ``Q x N_u/2`` array of equiprobable data symbols."""
    idx = rng.integers(0, cfg.modulation.order, size=(cfg.n_blocks, cfg.n_used // 2))
    return map_symbols(idx, cfg.modulation)


def assemble_block(data_symbols: np.ndarray, sets: IndexSets) -> np.ndarray:
    """Place one block of data on the positive-half data set and mirror it."""
    sym = np.asarray(data_symbols, dtype=complex)
    if sym.ndim != 1 or sym.size != sets.i2_plus.size:
        raise ValueError(f"expected {sets.i2_plus.size} data symbols, got shape {sym.shape}")
    row = np.zeros(sets.n_fft, dtype=complex)
    row[sets.i2_plus] = sym
    row[sets.i2_minus] = np.conj(sym)
    return row


def assemble_grid(symbols: np.ndarray, sets: IndexSets) -> BlockGrid:
    """Stack ``Q`` blocks of data symbols into a Hermitian frequency grid."""
    sym = np.atleast_2d(np.asarray(symbols, dtype=complex))
    if sym.shape[1] != sets.i2_plus.size:
        raise ValueError(f"expected {sets.i2_plus.size} data symbols per block")
    data = np.zeros((sym.shape[0], sets.n_fft), dtype=complex)
    data[:, sets.i2_plus] = sym
    data[:, sets.i2_minus] = np.conj(sym)
    return BlockGrid(data, Domain.FREQUENCY)


def random_grid(rng: np.random.Generator, cfg: SystemConfig) -> BlockGrid:
    return assemble_grid(random_symbols(rng, cfg), build_index_sets(cfg))


def modulate(grid: BlockGrid, cfg: SystemConfig) -> TimeSignal:
    """Inverse DFT (scaled 1/sqrt(N)) of each block, prefixed by its last N_g samples."""
    if grid.domain is not Domain.FREQUENCY:
        raise ValueError("modulate expects a frequency-domain grid")
    if grid.n_fft != cfg.n_fft:
        raise ValueError("grid width does not match n_fft")
    body = np.fft.ifft(grid.data, axis=1, norm="ortho")
    if cfg.n_cp:
        body = np.concatenate([body[:, -cfg.n_cp:], body], axis=1)
    return TimeSignal(body.ravel(), 1.0 / cfg.t_sam)


def demodulate(signal: TimeSignal | np.ndarray, cfg: SystemConfig, window_start: int = 0) -> BlockGrid:
    """Drop the prefix and take the orthonormal DFT of each block.

    Block ``q`` uses the N samples starting at
    ``window_start + q*N_s + N_g``.
    """
    x = signal.samples if isinstance(signal, TimeSignal) else np.asarray(signal, dtype=complex).ravel()
    start = int(window_start)
    if start < 0 or x.size < start + cfg.n_blocks * cfg.n_sym:
        raise ValueError("demodulation window exceeds the signal")
    frame = x[start:start + cfg.n_blocks * cfg.n_sym].reshape(cfg.n_blocks, cfg.n_sym)
    return BlockGrid(np.fft.fft(frame[:, cfg.n_cp:], axis=1, norm="ortho"), Domain.FREQUENCY)
