"""Theorem-prescribed hyperparameters, admissibility ranges and complexity ratios."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import density_phi, density_psi

__all__ = [
    "TheoryInputs",
    "SignParams",
    "DecayParams",
    "signsgd_params",
    "lion_params",
    "muon_params",
    "muonlight_params",
    "lion_beta1_range",
    "muonlight_beta1_range",
    "lambda_max",
    "predicted_rate_exponent",
    "complexity_ratios",
    "COMPLEXITY_TABLE",
]


@dataclass(frozen=True)
class TheoryInputs:
    """Problem constants.

    Vector methods read l0_norm = ||l0||_1, l1_norm = ||l1||_inf,
    sigma0_norm = ||sigma0||_1, sigma1_norm = ||sigma1||_inf; matrix methods
    read the nuclear / operator analogues.
    """

    delta_f: float
    l0_norm: float
    l1_norm: float
    sigma0_norm: float
    sigma1_norm: float
    p: float
    T: int

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.p > 2:
            raise ValueError("p must lie in (1, 2]")
        for name in ("delta_f", "l0_norm", "l1_norm", "sigma0_norm", "sigma1_norm"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and nonnegative")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")


@dataclass(frozen=True)
class SignParams:
    B: int
    beta: float
    eta: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecayParams:
    B: int
    beta2: float
    eta: float
    beta1_range: tuple[float, float]
    lambda_max: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta1_range"] = list(self.beta1_range)
        return d


def _batch(c: float, s1: float, p: float) -> int:
    raw = math.ceil((c * s1) ** (p / (p - 1)))
    return max(1, raw)


def _momentum(inp: TheoryInputs, B: int) -> float:
    p = inp.p
    if inp.sigma0_norm == 0:
        return 0.0
    ratio = inp.delta_f * inp.l0_norm / (inp.sigma0_norm ** 2 * inp.T)
    beta = 1.0 - B ** ((2 * p - 2) / (3 * p - 2)) * ratio ** (p / (3 * p - 2))
    return max(0.0, beta)


def _step(inp: TheoryInputs, one_minus_beta: float, c_sqrt: float, c_lin: float) -> float:
    if inp.l0_norm == 0:
        first = math.inf
    else:
        first = math.sqrt(c_sqrt * inp.delta_f * one_minus_beta / (inp.l0_norm * inp.T))
    second = math.inf if inp.l1_norm == 0 else c_lin * one_minus_beta / inp.l1_norm
    eta = min(first, second)
    if not math.isfinite(eta):
        raise ValueError("step size is unbounded: l0_norm and l1_norm are both zero")
    return eta


def lambda_max(eta: float, T: int) -> float:
    """Largest weight decay keeping iterates bounded over T steps."""
    return -math.expm1(-math.log(2.0) / T) / eta


def lion_beta1_range(beta2: float, p: float) -> tuple[float, float]:
    return (1.0 - (1.0 - beta2) ** ((p - 1) / p), 1.0)


def muonlight_beta1_range(beta2: float) -> tuple[float, float]:
    return (max(0.0, beta2 - 0.15), min(1.0, beta2 + 0.15))


def signsgd_params(inp: TheoryInputs) -> SignParams:
    B = _batch(32 * math.sqrt(2), inp.sigma1_norm, inp.p)
    beta = _momentum(inp, B)
    eta = _step(inp, 1 - beta, 2.0 / 9.0, 1.0 / 32.0)
    return SignParams(B, beta, eta)


def lion_params(inp: TheoryInputs) -> DecayParams:
    B = _batch(72 * math.sqrt(2), inp.sigma1_norm, inp.p)
    beta2 = _momentum(inp, B)
    eta = _step(inp, 1 - beta2, 8.0 / 33.0, 1.0 / 120.0)
    return DecayParams(B, beta2, eta, lion_beta1_range(beta2, inp.p), lambda_max(eta, inp.T))


def muon_params(inp: TheoryInputs) -> SignParams:
    B = _batch(32 * math.sqrt(2), inp.sigma1_norm, inp.p)
    beta = _momentum(inp, B)
    eta = _step(inp, 1 - beta, 2.0 / 5.0, 1.0 / 16.0)
    return SignParams(B, beta, eta)


def muonlight_params(inp: TheoryInputs) -> DecayParams:
    B = _batch(2979.0, inp.sigma1_norm, inp.p)
    beta2 = _momentum(inp, B)
    eta = _step(inp, 1 - beta2, 4.0 / 15.0, 3.0 / 625.0)
    return DecayParams(B, beta2, eta, muonlight_beta1_range(beta2), lambda_max(eta, inp.T))


def predicted_rate_exponent(p: float) -> float:
    if not (1 < p <= 2):
        raise ValueError("p must lie in (1, 2]")
    return (p - 1) / (3 * p - 2)


def complexity_ratios(l0, sigma0, grad_trajectory, p: float) -> tuple[float, float, float]:
    """Sign-vs-normalized complexity ratios (R, R1, R2).

    Vectors use phi densities, matrices psi densities.  The trajectory
    density is the minimum density over all recorded gradients.
    """
    if not (1 < p <= 2):
        raise ValueError("p must lie in (1, 2]")
    traj = [np.asarray(g, dtype=np.float64) for g in grad_trajectory]
    if not traj:
        raise ValueError("empty gradient trajectory")
    l0 = np.asarray(l0, dtype=np.float64)
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    dens = density_psi if l0.ndim == 2 else density_phi
    d_traj = min(dens(g, 2) for g in traj)
    r1 = dens(l0, math.inf) / d_traj ** 2
    r2 = dens(sigma0, 2) ** 2 / d_traj ** 2
    return r1 * r2 ** (p / (2 * (p - 1))), r1, r2


# Iteration complexities to reach an eps-stationary point, quoted for context
# in reports: (setting, algorithm, criterion, complexity, improvement).
COMPLEXITY_TABLE = (
    ("vector", "NSGD", "E||grad||_2 <= eps",
     "O(Δ ||l0||_inf ||σ0||_2^{p/(p-1)} / eps^{(3p-2)/(p-1)})", "= lower bound"),
    ("vector", "SignSGD & Lion", "E||grad||_1 <= eps",
     "O(Δ ||l0||_1 ||σ0||_1^{p/(p-1)} / eps^{(3p-2)/(p-1)})", "up to d"),
    ("matrix", "MNSGD", "E||grad||_F <= eps",
     "O(Δ ||L0||_op ||V0||_F^{p/(p-1)} / eps^{(3p-2)/(p-1)})", "= lower bound"),
    ("matrix", "Muon & Muonlight", "E||grad||_* <= eps",
     "O(Δ ||L0||_* ||V0||_*^{p/(p-1)} / eps^{(3p-2)/(p-1)})", "up to min{m,n}"),
)
