"""Heavy-tailed noise generation, mini-batch gradient oracles, tail-index estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "as_generator",
    "NoiseSpec",
    "MatrixNoiseMode",
    "FAMILIES",
    "sample_alpha_stable",
    "stable_abs_moment",
    "family_abs_moment",
    "sample_unit",
    "noisy_gradient_batch",
    "noisy_gradient_batch_matrix",
    "matrix_noise_kappa",
    "estimate_tail_index",
]

FAMILIES = ("gaussian", "alpha_stable", "pareto_symmetric", "student_t")

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Counter-based (Philox) stream keyed by (seed, stream_id).

    Distinct stream ids give statistically independent streams, so sweep
    cells can be keyed by their coordinates without coordination.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _U64 and 0 <= self.stream_id <= _U64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        key = self.seed | (self.stream_id << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        # mix the index into the stream id; seed stays fixed
        sid = (self.stream_id * 0x9E3779B97F4A7C15 + index + 1) & _U64
        return RngStream(self.seed, sid)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)) and not isinstance(rng, bool):
        return RngStream(int(rng)).generator()
    raise TypeError("rng must be a seed, RngStream or numpy Generator")


# --- stable laws -----------------------------------------------------------

def sample_alpha_stable(alpha: float, scale: float, n, rng) -> np.ndarray:
    """Symmetric alpha-stable draws (Chambers-Mallows-Stuck).

    Characteristic function exp(-|scale*t|^alpha); alpha=2 is N(0, 2 scale^2).
    """
    if not (0 < alpha <= 2):
        raise ValueError("alpha must lie in (0, 2]")
    if not scale > 0:
        raise ValueError("scale must be positive")
    g = as_generator(rng)
    V = g.uniform(-math.pi / 2, math.pi / 2, size=n)
    W = g.standard_exponential(size=n)
    if alpha == 1.0:
        X = np.tan(V)
    else:
        X = (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
             * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))
    return scale * X


def stable_abs_moment(alpha: float, p: float) -> float:
    """E|X|^p for the unit symmetric alpha-stable law, 0 < p < alpha (or p=alpha=2)."""
    if not (0 < alpha <= 2):
        raise ValueError("alpha must lie in (0, 2]")
    if alpha == 2.0:
        # X ~ N(0, 2): E|X|^p = 2^p Gamma((1+p)/2) / sqrt(pi)
        if p <= -1:
            raise ValueError("moment order must exceed -1")
        return 2.0 ** p * math.gamma((1 + p) / 2) / math.sqrt(math.pi)
    if not (0 < p < alpha):
        raise ValueError("need 0 < p < alpha for a finite moment")
    return (2.0 ** p * math.gamma((1 + p) / 2) * math.gamma(1 - p / alpha)
            / (math.sqrt(math.pi) * math.gamma(1 - p / 2)))


# --- unit families -----------------------------------------------------------

def family_abs_moment(family: str, param: float | None, p: float) -> float:
    """E|Z|^p of the raw (un-normalized) draw of a family."""
    if family == "gaussian":
        return 2.0 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
    if family == "alpha_stable":
        return stable_abs_moment(param, p)
    if family == "student_t":
        nu = param
        if not p < nu:
            raise ValueError("student_t needs nu > p")
        return (nu ** (p / 2) * math.gamma((p + 1) / 2) * math.gamma((nu - p) / 2)
                / (math.sqrt(math.pi) * math.gamma(nu / 2)))
    if family == "pareto_symmetric":
        # |Z| is Lomax(alpha): E|Z|^p = Gamma(p+1) Gamma(alpha-p) / Gamma(alpha)
        a = param
        if not p < a:
            raise ValueError("pareto_symmetric needs alpha > p")
        return math.gamma(p + 1) * math.gamma(a - p) / math.gamma(a)
    raise ValueError(f"unknown noise family {family!r}")


def _raw_draws(family: str, param: float | None, size, g: np.random.Generator) -> np.ndarray:
    if family == "gaussian":
        return g.standard_normal(size)
    if family == "alpha_stable":
        return sample_alpha_stable(param, 1.0, size, g)
    if family == "student_t":
        return g.standard_t(param, size)
    if family == "pareto_symmetric":
        # sign * (Pareto(alpha, x_min=1) - 1): symmetric, mean zero
        mag = g.pareto(param, size)  # numpy's pareto is already Lomax
        sgn = np.where(g.random(size) < 0.5, -1.0, 1.0)
        return sgn * mag
    raise ValueError(f"unknown noise family {family!r}")


def _check_family(family: str, param: float | None, p: float) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown noise family {family!r}")
    if family == "gaussian":
        return
    if param is None:
        raise ValueError(f"family {family} needs a parameter")
    if family == "alpha_stable" and not (p < param <= 2):
        raise ValueError("alpha_stable needs p < alpha <= 2")
    if family in ("student_t", "pareto_symmetric") and not param > p:
        raise ValueError(f"{family} needs a parameter above p")


def sample_unit(family: str, param: float | None, p: float, size, rng, target: float = 0.5) -> np.ndarray:
    """Symmetric draws rescaled so that E|xi|^p = target exactly."""
    _check_family(family, param, p)
    g = as_generator(rng)
    c = (target / family_abs_moment(family, param, p)) ** (1.0 / p)
    return c * _raw_draws(family, param, size, g)


# --- noise specs -------------------------------------------------------------

@dataclass(frozen=True)
class MatrixNoiseMode:
    v0_scale: float
    v1_op: float

    def __post_init__(self):
        if self.v0_scale < 0 or self.v1_op < 0:
            raise ValueError("matrix noise scales must be nonnegative")


@dataclass(frozen=True)
class NoiseSpec:
    p: float
    family: str = "gaussian"
    family_param: float | None = None
    sigma0: np.ndarray | float = 0.0
    sigma1: np.ndarray | float = 0.0
    matrix_mode: MatrixNoiseMode | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (1 < self.p <= 2):
            raise ValueError("p must lie in (1, 2]")
        _check_family(self.family, self.family_param, self.p)
        s0 = np.asarray(self.sigma0, dtype=np.float64)
        s1 = np.asarray(self.sigma1, dtype=np.float64)
        if np.any(s0 < 0) or np.any(s1 < 0):
            raise ValueError("sigma0 and sigma1 must be nonnegative")
        object.__setattr__(self, "sigma0", s0)
        object.__setattr__(self, "sigma1", s1)

    def to_dict(self) -> dict:
        d = {
            "p": self.p,
            "family": self.family,
            "family_param": self.family_param,
            "sigma0": self.sigma0.tolist(),
            "sigma1": self.sigma1.tolist(),
        }
        if self.matrix_mode is not None:
            d["matrix_mode"] = {"v0_scale": self.matrix_mode.v0_scale,
                                "v1_op": self.matrix_mode.v1_op}
        return d


def noisy_gradient_batch(grad, spec: NoiseSpec, B: int, rng) -> np.ndarray:
    """B stochastic gradients g = grad + (sigma0 + sigma1 |grad|) * xi, shape (B, d).

    E|xi|^p = 1/2, so E|n_i|^p <= sigma0_i^p + sigma1_i^p |grad_i|^p.
    """
    if B < 1:
        raise ValueError("batch size must be >= 1")
    grad = np.asarray(grad, dtype=np.float64)
    scale = spec.sigma0 + spec.sigma1 * np.abs(grad)
    scale = np.broadcast_to(scale, grad.shape)
    if not np.any(scale):
        return np.broadcast_to(grad, (B,) + grad.shape).copy()
    xi = sample_unit(spec.family, spec.family_param, spec.p, (B,) + grad.shape, rng)
    return grad + scale * xi


def matrix_noise_kappa(p: float, m: int, n: int) -> float:
    """Normalizer for matrix noise.

    With E|xi|^p = 1/2 per entry, E||Xi||_F^p <= m n / 2 for p <= 2 (Jensen
    on the mean of squares followed by the power-mean inequality), and
    kappa^p = 2^{p-1} m^{p/2} (m n / 2) gives
    ||V0||_*^{p/2} E||N||^p_{|V0|^-1} <= ||V0||_*^p + v1^p ||grad||_*^p
    for |V0| = v0 I_m.
    """
    return (2.0 ** (p - 1) * m ** (p / 2) * (m * n / 2.0)) ** (1.0 / p)


def noisy_gradient_batch_matrix(grad, spec: NoiseSpec, B: int, rng) -> np.ndarray:
    """B stochastic matrix gradients, shape (B, m, n).

    N = (v0 m + v1 ||grad||_*) Xi / kappa with i.i.d. unit entries; the
    implied noise proxy is |V0| = v0 I_m, so ||V0||_* = v0 m.
    """
    if spec.matrix_mode is None:
        raise ValueError("noise spec has no matrix_mode")
    if B < 1:
        raise ValueError("batch size must be >= 1")
    G = np.asarray(grad, dtype=np.float64)
    m, n = G.shape
    mm = spec.matrix_mode
    gnuc = float(np.sum(np.linalg.svd(G, compute_uv=False))) if mm.v1_op else 0.0
    amp = (mm.v0_scale * m + mm.v1_op * gnuc) / matrix_noise_kappa(spec.p, m, n)
    if amp == 0.0:
        return np.broadcast_to(G, (B, m, n)).copy()
    xi = sample_unit(spec.family, spec.family_param, spec.p, (B, m, n), rng)
    return G + amp * xi


# --- tail index --------------------------------------------------------------

def _default_blocks(n: int) -> int:
    # divisor of n closest to sqrt(n)
    r = math.isqrt(n)
    for k in range(0, r + 1):
        for cand in (r - k, r + k + 1):
            if cand >= 2 and n % cand == 0 and n // cand >= 2:
                return cand
    raise ValueError("sample length has no usable block split")


def estimate_tail_index(samples, block_count: int | None = None) -> float:
    """Block-sum log-moment estimate of the stability index.

    1/alpha = (mean log|block sums| - mean log|X_i|) / log K, K = block size.
    The result is clamped to (0, 2].
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if not np.any(x):
        raise ValueError("degenerate sample: all zero")
    k1 = _default_blocks(n) if block_count is None else int(block_count)
    if k1 < 1 or n % k1:
        raise ValueError("sample length must be divisible by block_count")
    K = n // k1
    if K < 2:
        raise ValueError("block size must be at least 2")
    nz = x[x != 0]
    sums = x.reshape(k1, K).sum(axis=1)
    sums = sums[sums != 0]
    if sums.size == 0:
        raise ValueError("degenerate sample: all block sums vanish")
    inv = (np.mean(np.log(np.abs(sums))) - np.mean(np.log(np.abs(nz)))) / math.log(K)
    if inv <= 0.5:
        return 2.0
    return float(min(2.0, 1.0 / inv))
