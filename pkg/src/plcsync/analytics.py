"""Closed-form performance predictions, block-count selection and the unwrapping region.

Variances and biases are those of the OLS estimate before bias erasure on
a flat channel with correct unwrapping. ``snr`` in this module is the value
substituted for SNR in the formulas, i.e. the per-subcarrier ratio
``sigma_x2 sigma_h2 / sigma_w2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import SystemConfig, TimingParams, block_phase_slope, theta_line


@dataclass(frozen=True)
class PerfPrediction:
    var_xi: float
    var_eta: float
    bias_xi: float
    bias_eta: float

    @property
    def mse_xi(self) -> float:
        return self.var_xi + self.bias_xi ** 2

    @property
    def mse_eta(self) -> float:
        return self.var_eta + self.bias_eta ** 2


def _thetas(cfg: SystemConfig, xi: float, eta: float) -> np.ndarray:
    return np.asarray(theta_line(np.arange(cfg.n_blocks), xi, eta, cfg))


def first_terms(cfg: SystemConfig, snr: float) -> tuple[float, float]:
    """Leading (phase-independent) terms of the two variances."""
    N, Q, g, Xi = cfg.n_fft, cfg.n_blocks, cfg.g, cfg.xi_ratio
    if Q < 2:
        raise ValueError("predictions need at least two blocks")
    num = 2 * g ** 2 * (2 * Q + 1) * (Q + 1) + 2 * g * (Q + 1) * (4 * Q - 1) + (2 * Q + 1) * (2 * Q - 1)
    v_xi = num / (4 * np.pi ** 2 * N * (1 + g) ** 2 * Q * (Q ** 2 - 1) * Xi * snr)
    v_eta = 3 / (np.pi ** 2 * N ** 3 * (1 + g) ** 2 * Q * (Q ** 2 - 1) * Xi * snr)
    return float(v_xi), float(v_eta)


def predict_offsets(cfg: SystemConfig, xi: float, eta: float, snr: float) -> PerfPrediction:
    """Closed-form variance and bias for raw ``(xi, eta)`` values."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    N, Q, g, Xi = cfg.n_fft, cfg.n_blocks, cfg.g, cfg.xi_ratio
    q = np.arange(Q, dtype=float)
    th = _thetas(cfg, xi, eta)
    c, s = np.cos(th), np.sin(th)
    v1_xi, v1_eta = first_terms(cfg, snr)

    w_xi = ((Q - 1) * (1 + 4 * g + 4 * Q * (1 + g)) - 6 * q * (g + Q * (1 + g))) ** 2
    v_xi = v1_xi - np.sum(c * w_xi) / (
        4 * np.pi ** 2 * (1 + g) ** 2 * N * Q ** 2 * (Q + 1) ** 2 * (Q - 1) ** 2 * Xi * snr)
    v_eta = v1_eta - np.sum(9 * c * (2 * q - Q + 1) ** 2) / (
        np.pi ** 2 * (1 + g) ** 2 * N ** 3 * Q ** 2 * (Q + 1) ** 2 * (Q - 1) ** 2 * Xi * snr)

    ratio = s / (c + snr)
    b_xi = -np.sum(ratio * ((Q - 1) * (3 + 6 * g + 2 * (1 + g) * (2 * Q - 1))
                            - 6 * q * (1 + 2 * g + (1 + g) * (Q - 1)))) / (2 * np.pi * (1 + g) * Q * (Q + 1) * (Q - 1))
    b_eta = np.sum(ratio * (3 * (Q - 1) - 6 * q)) / (np.pi * (1 + g) * N * Q * (Q + 1) * (Q - 1))
    # at Theta = 0 the two terms cancel; rounding must not leave a negative variance
    return PerfPrediction(max(float(v_xi), 0.0), max(float(v_eta), 0.0), float(b_xi), float(b_eta))


def predict(cfg: SystemConfig, params: TimingParams, snr: float) -> PerfPrediction:
    """Closed-form variance and bias of the OLS estimate at ``params``."""
    return predict_offsets(cfg, params.xi, params.eta, snr)


def predict_linear(cfg: SystemConfig, xi: float, eta: float, snr: float) -> PerfPrediction:
    """Same quantities obtained by propagating the per-block phase moments through
    the least-squares projection ``(E^T E)^-1 E^T`` numerically."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    th = _thetas(cfg, xi, eta)
    E = np.column_stack([np.full(cfg.n_blocks, 2 * np.pi), block_phase_slope(cfg)])
    P = np.linalg.pinv(E)
    mu = -np.sin(th) / (np.cos(th) + snr)
    var = (1 - np.cos(th)) / (cfg.xi_ratio * cfg.n_fft * snr)
    cov = (P * var) @ P.T
    b = P @ mu
    return PerfPrediction(float(cov[0, 0]), float(cov[1, 1]), float(b[0]), float(b[1]))


def choose_q(cfg: SystemConfig, mse_xi_target: float, mse_eta_target: float, snr: float,
             omega_gap: float = 0.0) -> int:
    """Smallest block count meeting both MSE targets, at least 2."""
    if not (mse_xi_target > 0 and mse_eta_target > 0):
        raise ValueError("MSE targets must be positive")
    eff = snr + omega_gap
    if not eff > 0:
        raise ValueError("snr + omega_gap must be positive")
    N, g, Xi = cfg.n_fft, cfg.g, cfg.xi_ratio
    q_xi = 2.0 / N / (mse_xi_target * np.pi ** 2 * Xi * eff)
    q_eta = 6 ** (1 / 3) / N * (mse_eta_target * np.pi ** 2 * (1 + g) ** 2 * Xi * eff) ** (-1 / 3)
    return max(2, int(math.ceil(max(q_xi, q_eta) - 1e-12)))


# Unwrapping region ---------------------------------------------------------

@dataclass(frozen=True)
class Feasibility:
    inside: bool
    c1: bool
    c2: bool
    vertices: np.ndarray

    def __bool__(self) -> bool:
        return self.inside


def hexagon_vertices(cfg: SystemConfig) -> np.ndarray:
    """Corners ``A1..A6`` of the region in ``(xi, eta)``, in that order."""
    ns, ng = cfg.n_sym, cfg.n_cp
    v = np.array([
        [-0.5, 1.0 / ns],
        [-ng / (2.0 * ns), 1.0 / ns],
        [0.5, 0.0],
        [0.5, -1.0 / ns],
        [ng / (2.0 * ns), -1.0 / ns],
        [-0.5, 0.0],
    ])
    v.setflags(write=False)
    return v


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def feasibility_offsets(xi: float, eta: float, cfg: SystemConfig, tol: float = 0.0) -> Feasibility:
    """Conditions for noiseless unwrapping at raw ``(xi, eta)``.

    C1: ``|2 pi xi + pi N eta + 2 pi N_g eta| <= pi``;
    C2: ``|2 pi N_s eta| <= 2 pi``. The fractional offset must also lie in
    ``[-0.5, 0.5]``.
    """
    c1_val = xi + eta * (cfg.n_fft + 2 * cfg.n_cp) / 2.0
    c1 = abs(c1_val) <= 0.5 + tol
    c2 = abs(cfg.n_sym * eta) <= 1.0 + tol
    dom = abs(xi) <= 0.5 + tol
    return Feasibility(bool(c1 and c2 and dom), bool(c1), bool(c2), hexagon_vertices(cfg))


def feasibility(params: TimingParams, cfg: SystemConfig) -> Feasibility:
    return feasibility_offsets(params.xi, params.eta, cfg)


def recovery_map(cfg: SystemConfig, xi_values: np.ndarray, eta_values: np.ndarray,
                 phi: float = 1.0, rng: Optional[np.random.Generator] = None,
                 xi_tol: float = 1e-7, eta_tol: float = 1e-10) -> np.ndarray:
    """Boolean map of lattice points where the noiseless pipeline recovers the offsets.

    For each ``(xi, eta)`` a random frame is rotated with a unit flat channel,
    then NDA phases are unwrapped and fitted by OLS.
    """
    from .channel import rotate_grid
    from .core import build_index_sets
    from .estimator import Scheme, ancillary_phases, build_E, ols
    from .ofdm import random_grid

    rng = rng or np.random.default_rng(0)
    sets = build_index_sets(cfg)
    tx = random_grid(rng, cfg).data
    E = build_E(cfg)
    out = np.zeros((len(xi_values), len(eta_values)), dtype=bool)
    for i, xi in enumerate(xi_values):
        for j, eta in enumerate(eta_values):
            r = rotate_grid(tx, 1.0, xi, eta, cfg)
            est = ols(ancillary_phases(r, sets, Scheme.NDA, phi=phi).unwrapped, E)
            out[i, j] = abs(est.xi_hat - xi) < xi_tol and abs(est.eta_hat - eta) < eta_tol
    return out
