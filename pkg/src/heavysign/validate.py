"""Fit the affine noise-moment model E|n|^p ~ intercept + slope * |grad|^p to sampled gradients."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import psd_sqrt
from .noise import (NoiseSpec, RngStream, as_generator, estimate_tail_index,
                    family_abs_moment, matrix_noise_kappa, sample_unit)

__all__ = [
    "NoiseFitReport",
    "fit_line",
    "validate_vector_noise",
    "validate_matrix_noise",
    "frobenius_moment",
    "matrix_generator_line",
]

SPREAD_MIN = 10.0


@dataclass
class NoiseFitReport:
    p_hat: float
    intercept: float
    slope: float
    r_squared: float
    n_points: int
    violation_fraction: float
    intercept_clamped: bool = False
    slope_clamped: bool = False
    slope_se: float = 0.0
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)

    @property
    def sigma0_hat(self) -> float:
        return self.intercept ** (1.0 / self.p_hat)

    @property
    def sigma1_hat(self) -> float:
        return self.slope ** (1.0 / self.p_hat)

    def to_dict(self, with_points: bool = False) -> dict:
        d = asdict(self)
        if not with_points:
            d.pop("x")
            d.pop("y")
        d["sigma0_hat"] = self.sigma0_hat
        d["sigma1_hat"] = self.sigma1_hat
        return d


def fit_line(x, y, fit_slope: bool = True):
    """OLS fit y = a + b x.  Returns (a, b, r2, se_b, residuals) unclamped.

    With fit_slope False the model is y = a, so residuals expose any
    dependence on x the constant model misses.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("need at least two points")
    if not fit_slope:
        a = float(np.mean(y))
        res = y - a
        return a, 0.0, 0.0, 0.0, res
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all equal")
    b = float(np.sum((x - xm) * (y - ym)) / sxx)
    a = float(ym - b * xm)
    res = y - a - b * x
    sst = float(np.sum((y - ym) ** 2))
    sse = float(np.sum(res ** 2))
    r2 = 1.0 if sst == 0.0 else min(1.0, max(0.0, 1.0 - sse / sst))
    se_b = math.sqrt(sse / (n - 2) / sxx) if n > 2 else 0.0
    return a, b, r2, se_b, res


def _report(x, y, p, tol_rel: float, fit_slope: bool = True) -> NoiseFitReport:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.any(y):
        return NoiseFitReport(p, 0.0, 0.0, 1.0, x.size, 0.0, x=x.tolist(), y=y.tolist())
    a, b, r2, se_b, _ = fit_line(x, y, fit_slope)
    ia, ib = a < 0, b < 0
    a, b = max(a, 0.0), max(b, 0.0)
    line = a + b * x
    viol = float(np.mean(y > line * (1 + tol_rel) + 1e-12 * max(1.0, float(np.max(y)))))
    return NoiseFitReport(p, a, b, r2, x.size, viol, ia, ib, se_b, x.tolist(), y.tolist())


def _check_spread(x: np.ndarray) -> None:
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= 0 or (lo > 0 and hi / lo < SPREAD_MIN):
        raise ValueError(f"gradient magnitudes span less than a factor of {SPREAD_MIN:g}")


def validate_vector_noise(grad_fn, sampler, trajectory, p: float | None = None,
                          draws_per_point: int = 10_000, coord: int = 0, rng=0,
                          tol_rel: float = 0.1, fit_slope: bool = True) -> NoiseFitReport:
    """Per-coordinate fit of E|g_i - grad_i|^p against |grad_i|^p.

    grad_fn(x) is the exact gradient and sampler(x, n, rng) returns n
    stochastic gradients, shape (n, d).  Each trajectory point is frozen
    and sampled draws_per_point times.  With p None, p is estimated from
    the pooled noise samples.
    """
    g = as_generator(rng)
    pts = [np.asarray(x, dtype=np.float64) for x in trajectory]
    if len(pts) < 2:
        raise ValueError("need at least two trajectory points")
    noise, gx = [], []
    for x in pts:
        grad = np.asarray(grad_fn(x))
        gx.append(abs(float(grad[coord])))
        noise.append(np.asarray(sampler(x, draws_per_point, g))[:, coord] - grad[coord])
    noise = np.array(noise)
    if p is None:
        pooled = noise.ravel()
        usable = pooled.size - pooled.size % 1000
        p = estimate_tail_index(pooled[:usable])
    x = np.asarray(gx) ** p
    _check_spread(x)
    y = np.mean(np.abs(noise) ** p, axis=1)
    return _report(x, y, p, tol_rel, fit_slope)


def validate_matrix_noise(grad_fn, sampler, trajectory, p: float,
                          draws_per_point: int = 10_000, rng=0,
                          tol_rel: float = 0.1) -> NoiseFitReport:
    """Fit ||V0||_*^{p/2} E||N||^p_{|V0|^-1} against ||grad||_*^p.

    |V0| is proxied by the square root of the empirical noise second moment
    (1/K) sum N N^T at the minimum-gradient point, ridged by 1e-8 tr / m.
    """
    g = as_generator(rng)
    pts = [np.asarray(X, dtype=np.float64) for X in trajectory]
    if len(pts) < 2:
        raise ValueError("need at least two trajectory points")
    grads = [np.asarray(grad_fn(X)) for X in pts]
    gnuc = np.array([np.sum(np.linalg.svd(G, compute_uv=False)) for G in grads])
    noise = [np.asarray(sampler(X, draws_per_point, g)) - G for X, G in zip(pts, grads)]
    x = gnuc ** p
    _check_spread(x)
    if not any(np.any(N) for N in noise):
        return NoiseFitReport(p, 0.0, 0.0, 1.0, len(pts), 0.0, x=x.tolist(),
                              y=[0.0] * len(pts))
    N0 = noise[int(np.argmin(gnuc))]
    m = N0.shape[1]
    S = np.einsum("kij,klj->il", N0, N0) / N0.shape[0]
    ridge = 1e-8 * np.trace(S) / m
    V0 = psd_sqrt(S + ridge * np.eye(m))
    w, Q = np.linalg.eigh(V0)
    if w[0] <= 0:
        raise ValueError("noise proxy is singular")
    inv = (Q / w) @ Q.T
    nuc_v0 = float(np.sum(w))
    y = []
    for N in noise:
        q = np.einsum("kij,il,klj->k", N, inv, N)
        y.append(nuc_v0 ** (p / 2) * float(np.mean(np.clip(q, 0, None) ** (p / 2))))
    return _report(x, np.array(y), p, tol_rel)


def frobenius_moment(family: str, param, p: float, m: int, n: int,
                     draws: int = 200_000, seed: int = 0) -> float:
    """E||Xi||_F^p for an m x n matrix of unit entries (E|xi|^p = 1/2).

    Exact for the gaussian family through chi moments, fixed-seed Monte
    Carlo otherwise.
    """
    k = m * n
    if family == "gaussian":
        c2 = (0.5 / family_abs_moment("gaussian", None, p)) ** (2.0 / p)
        logm = math.lgamma((k + p) / 2) - math.lgamma(k / 2)
        return (2.0 * c2) ** (p / 2) * math.exp(logm)
    g = RngStream(seed, 0xF0B).generator()
    acc = 0.0
    left = draws
    while left > 0:
        b = min(left, 20_000)
        Xi = sample_unit(family, param, p, (b, k), g)
        acc += float(np.sum(np.sum(Xi * Xi, axis=1) ** (p / 2)))
        left -= b
    return acc / draws


def matrix_generator_line(spec: NoiseSpec, m: int, n: int, grad_nuclear) -> tuple[float, float]:
    """Best affine line (intercept, slope) through the generator's exact moment curve.

    For the noise proxy v0 I the fitted quantity is
    y = m^{p/2} amp^p E||Xi||_F^p with amp = (v0 m + v1 ||grad||_*) / kappa,
    which is affine in x = ||grad||_*^p only when v0 or v1 vanishes.  The
    returned line is the OLS fit of that curve at the given gradient norms,
    i.e. the target a perfect estimator would recover.
    """
    if spec.matrix_mode is None:
        raise ValueError("noise spec has no matrix_mode")
    p = spec.p
    mm = spec.matrix_mode
    K = frobenius_moment(spec.family, spec.family_param, p, m, n)
    gn = np.asarray(grad_nuclear, dtype=np.float64)
    amp = (mm.v0_scale * m + mm.v1_op * gn) / matrix_noise_kappa(p, m, n)
    y = m ** (p / 2) * amp ** p * K
    x = gn ** p
    a, b, _, _, _ = fit_line(x, y)
    return a, b
