"""Executable checks of martingale concentration inequalities and supporting lemmas.

Exhaustive checks enumerate every Rademacher sign pattern and compare exact
expectations.  Monte Carlo checks flag a violation only when the mean gap
exceeds three standard errors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import psd_sqrt
from .noise import RngStream, as_generator, sample_alpha_stable

__all__ = [
    "AdaGradRun",
    "AdaGradComparatorState",
    "regret_sides",
    "regret_stress_test",
    "adversarial_regret_batch",
    "adagrad_comparator_run",
    "adagrad_comparator_batch",
    "recompute_w",
    "ShampooAccumulator",
    "ConcentrationResult",
    "verify_l1_concentration",
    "verify_nuclear_concentration",
    "verify_von_bahr_esseen",
    "exact_l1_concentration",
    "exact_nuclear_concentration",
    "exact_von_bahr_esseen",
    "rademacher_patterns",
    "make_sampler",
    "LemmaCheck",
    "deterministic_lemma_suite",
    "ENUMERATION_CAP",
]

SQRT2 = math.sqrt(2.0)
ENUMERATION_CAP = 16


# --- diagonal AdaGrad comparator ---------------------------------------------

@dataclass
class AdaGradRun:
    w: np.ndarray          # (T, d); row t-1 is w_t, fixed before v_t is seen
    accumulated_squares: np.ndarray
    regret_lhs: float
    regret_rhs: float

    @property
    def holds(self) -> bool:
        return self.regret_lhs <= self.regret_rhs


class AdaGradComparatorState:
    """Projected diagonal AdaGrad on [-1, 1]^d, advanced one vector at a time.

    shape may carry leading batch axes; the last axis is the coordinate axis.
    """

    def __init__(self, shape):
        self.w = np.zeros(shape)
        self.accumulated_squares = np.zeros(shape)

    def update(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.w.shape:
            raise ValueError(f"dimension mismatch: {v.shape} vs {self.w.shape}")
        S = self.accumulated_squares + v * v
        # v != 0 implies S > 0, so only all-zero history needs guarding
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(S > 0.0, v * np.sqrt(2.0 / S), 0.0)
        self.accumulated_squares = S
        self.w = np.clip(self.w - step, -1.0, 1.0)
        return self.w


def regret_sides(V, W) -> tuple[np.ndarray, np.ndarray]:
    """(sum_t <v_t, w_t>, sum_i 2 sqrt(2 sum_t v_ti^2) - ||sum_t v_t||_1)."""
    V = np.asarray(V, dtype=np.float64)
    lhs = np.sum(V * W, axis=(-2, -1))
    rhs = (np.sum(2.0 * np.sqrt(2.0 * np.sum(V * V, axis=-2)), axis=-1)
           - np.sum(np.abs(np.sum(V, axis=-2)), axis=-1))
    return lhs, rhs


def adagrad_comparator_batch(V) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the comparator over a stack of sequences V of shape (..., T, d).

    w_1 = 0 and w_{t+1} = clip(w_t - sqrt(2 / sum_{s<=t} v_s^2) * v_t, -1, 1).
    A coordinate's first nonzero v_t has step sqrt(2) sign(v_t), so w
    jumps straight to -sign(v_t).  Returns (W, lhs, rhs) where row t-1 of W is w_t.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim < 2:
        raise ValueError("V must have shape (..., T, d)")
    T = V.shape[-2]
    if T == 0:
        raise ValueError("empty sequence")
    W = np.empty_like(V)
    st = AdaGradComparatorState(V.shape[:-2] + V.shape[-1:])
    for t in range(T):
        W[..., t, :] = st.w
        st.update(V[..., t, :])
    lhs, rhs = regret_sides(V, W)
    return W, lhs, rhs


def adagrad_comparator_run(v_seq) -> AdaGradRun:
    V = np.asarray(v_seq, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError("v_seq must be a (T, d) array of consistent dimension")
    W, lhs, rhs = adagrad_comparator_batch(V)
    S = np.sum(V * V, axis=0)
    return AdaGradRun(W, S, float(lhs), float(rhs))


def recompute_w(v_prefix, d: int) -> np.ndarray:
    """w_t from v_1..v_{t-1} alone (predictability check)."""
    P = np.asarray(v_prefix, dtype=np.float64).reshape(-1, d)
    nxt = np.zeros((1, d))
    W, _, _ = adagrad_comparator_batch(np.vstack([P, nxt]))
    return W[-1]


class ShampooAccumulator:
    """One-sided Shampoo preconditioner Lambda_t = (Lambda_{t-1}^2 + G_t G_t^T)^{1/2}."""

    def __init__(self, m: int):
        self.m = m
        self.Lam = np.zeros((m, m))

    def update(self, G) -> np.ndarray:
        G = np.asarray(G, dtype=np.float64)
        if G.shape[0] != self.m:
            raise ValueError("row dimension mismatch")
        self.Lam = psd_sqrt(self.Lam @ self.Lam + G @ G.T)
        return self.Lam

    @property
    def trace(self) -> float:
        return float(np.trace(self.Lam))


def regret_stress_test(trials: int, rng) -> list[dict]:
    """Check the regret bound on gaussian, alpha-stable and adversarial sequences.

    Sequence lengths T <= 256 and dimensions d <= 16 are drawn at random per
    chunk.  The inequality is deterministic, so any lhs > rhs is a failure.
    """
    g = as_generator(rng)
    out = []
    kinds = ("gaussian", "alpha_stable", "adversarial")
    for kind in kinds:
        n = trials // len(kinds) + (1 if kind == "gaussian" and trials % len(kinds) else 0)
        worst, failed, done = -np.inf, 0, 0
        while done < n:
            b = min(500, n - done)
            d = int(g.integers(1, 17))
            T = int(g.integers(1, 257))
            if kind == "gaussian":
                V = g.standard_normal((b, T, d)) * np.exp(g.uniform(-3, 3, (b, 1, 1)))
                _, lhs, rhs = adagrad_comparator_batch(V)
            elif kind == "alpha_stable":
                V = make_sampler("alpha_stable", 1.5)(g, (b, T, d))
                _, lhs, rhs = adagrad_comparator_batch(V)
            else:
                lhs, rhs = adversarial_regret_batch(g, b, T, d)
            worst = max(worst, float(np.max(lhs - rhs)))
            failed += int(np.count_nonzero(lhs > rhs))
            done += b
        out.append({"kind": kind, "sequences": n, "violations": failed,
                    "max_lhs_minus_rhs": worst, "passed": failed == 0})
    return out


def adversarial_regret_batch(g, b: int, T: int, d: int):
    """Sequences chosen online against the comparator: v_t mostly aligned with w_t."""
    mags = np.abs(g.standard_normal((b, T, d))) + 1e-3
    flips = g.random((b, T, d)) < 0.1
    V = np.empty((b, T, d))
    W = np.empty((b, T, d))
    st = AdaGradComparatorState((b, d))
    for t in range(T):
        w = st.w
        W[:, t] = w
        s = np.where(w == 0, np.where(g.random((b, d)) < 0.5, -1.0, 1.0), np.sign(w))
        V[:, t] = np.where(flips[:, t], -s, s) * mags[:, t]
        st.update(V[:, t])
    return regret_sides(V, W)



# --- results -----------------------------------------------------------------

@dataclass
class ConcentrationResult:
    lemma: str
    lhs_mean: float
    rhs_mean: float
    margin: float
    se: float
    violated: bool
    exact: bool
    trials: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _mc_result(lemma, lhs, rhs, params) -> ConcentrationResult:
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = lhs.size
    diff = lhs - rhs
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    lm, rm = float(np.mean(lhs)), float(np.mean(rhs))
    return ConcentrationResult(lemma, lm, rm, rm - lm, se,
                               bool(lm - 3.0 * se > rm), False, n, params)


def _exact_result(lemma, lhs, rhs, params) -> ConcentrationResult:
    lm, rm = float(np.mean(lhs)), float(np.mean(rhs))
    return ConcentrationResult(lemma, lm, rm, rm - lm, 0.0, bool(lm > rm), True,
                               int(np.size(lhs)), params)


# --- samplers ----------------------------------------------------------------

def make_sampler(kind: str, alpha: float | None = None):
    """i.i.d. symmetric entries: rademacher, gaussian or alpha_stable(alpha)."""
    if kind == "rademacher":
        return lambda g, size: np.where(g.random(size) < 0.5, -1.0, 1.0)
    if kind == "gaussian":
        return lambda g, size: g.standard_normal(size)
    if kind == "alpha_stable":
        if alpha is None:
            raise ValueError("alpha_stable sampler needs alpha")
        return lambda g, size: sample_alpha_stable(alpha, 1.0, size, g)
    raise ValueError(f"unknown sampler {kind!r}")


def rademacher_patterns(n: int) -> np.ndarray:
    """All 2^n sign vectors, shape (2^n, n)."""
    if n > ENUMERATION_CAP:
        raise ValueError(f"enumeration capped at {ENUMERATION_CAP} binary outcomes")
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def _lp_rows(a: np.ndarray, p: float, axis: int) -> np.ndarray:
    return np.sum(np.abs(a) ** p, axis=axis) ** (1.0 / p)


# --- l1 (coordinate-wise) concentration --------------------------------------

def _l1_sides(G: np.ndarray, p: float):
    lhs = np.sum(np.abs(G.sum(axis=-2)), axis=-1)
    rhs = 2.0 * SQRT2 * np.sum(_lp_rows(G, p, axis=-2), axis=-1)
    return lhs, rhs


def verify_l1_concentration(sampler, T: int, d: int, trials: int, rng, p: float = 2.0,
                            chunk: int = 2048) -> ConcentrationResult:
    """E||sum_t g_t||_1 <= 2 sqrt(2) sum_i E||g_{1:T,i}||_p, by Monte Carlo."""
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    g = as_generator(rng)
    lhs, rhs = [], []
    left = trials
    while left > 0:
        k = min(chunk, left)
        a, b = _l1_sides(sampler(g, (k, T, d)), p)
        lhs.append(a)
        rhs.append(b)
        left -= k
    return _mc_result("l1", np.concatenate(lhs), np.concatenate(rhs),
                      {"T": T, "d": d, "p": p})


def exact_l1_concentration(T: int, d: int, p: float = 2.0, scales=None) -> ConcentrationResult:
    """Exact expectations for g_ti = c_ti * eps_ti over all sign patterns."""
    P = rademacher_patterns(T * d).reshape(-1, T, d)
    if scales is not None:
        P = P * np.asarray(scales, dtype=np.float64).reshape(T, d)
    lhs, rhs = _l1_sides(P, p)
    return _exact_result("l1", lhs, rhs, {"T": T, "d": d, "p": p})


# --- nuclear-norm concentration ----------------------------------------------

def _nuclear_sides(G: np.ndarray):
    lhs = np.sum(np.linalg.svd(G.sum(axis=-3), compute_uv=False), axis=-1)
    S = np.einsum("...tij,...tkj->...ik", G, G)
    ev = np.clip(np.linalg.eigvalsh(S), 0.0, None)
    rhs = 2.0 * SQRT2 * np.sum(np.sqrt(ev), axis=-1)
    return lhs, rhs


def verify_nuclear_concentration(sampler, T: int, m: int, n: int, trials: int, rng,
                                 chunk: int = 1024) -> ConcentrationResult:
    """E||sum_t G_t||_* <= 2 sqrt(2) E||(sum_t G_t G_t^T)^{1/2}||_*, by Monte Carlo."""
    g = as_generator(rng)
    lhs, rhs = [], []
    left = trials
    while left > 0:
        k = min(chunk, left)
        a, b = _nuclear_sides(sampler(g, (k, T, m, n)))
        lhs.append(a)
        rhs.append(b)
        left -= k
    return _mc_result("nuclear", np.concatenate(lhs), np.concatenate(rhs),
                      {"T": T, "m": m, "n": n})


def exact_nuclear_concentration(T: int, m: int, n: int) -> ConcentrationResult:
    P = rademacher_patterns(T * m * n).reshape(-1, T, m, n)
    lhs, rhs = _nuclear_sides(P)
    return _exact_result("nuclear", lhs, rhs, {"T": T, "m": m, "n": n})


# --- von Bahr-Esseen ---------------------------------------------------------

def _vbe_sides(G: np.ndarray, p: float):
    lhs = np.sqrt(np.sum(G.sum(axis=-2) ** 2, axis=-1)) ** p
    rhs = 2.0 * np.sum(np.sqrt(np.sum(G * G, axis=-1)) ** p, axis=-1)
    return lhs, rhs


def verify_von_bahr_esseen(sampler, T: int, p: float, trials: int, rng, d: int = 1,
                           chunk: int = 4096) -> ConcentrationResult:
    """E||sum_t g_t||_2^p <= 2 sum_t E||g_t||_2^p, by Monte Carlo."""
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    g = as_generator(rng)
    lhs, rhs = [], []
    left = trials
    while left > 0:
        k = min(chunk, left)
        a, b = _vbe_sides(sampler(g, (k, T, d)), p)
        lhs.append(a)
        rhs.append(b)
        left -= k
    return _mc_result("vbe", np.concatenate(lhs), np.concatenate(rhs),
                      {"T": T, "d": d, "p": p})


def exact_von_bahr_esseen(T: int, p: float, d: int = 1) -> ConcentrationResult:
    P = rademacher_patterns(T * d).reshape(-1, T, d)
    lhs, rhs = _vbe_sides(P, p)
    return _exact_result("vbe", lhs, rhs, {"T": T, "d": d, "p": p})


# --- deterministic lemmas ----------------------------------------------------

@dataclass
class LemmaCheck:
    name: str
    checks: int = 0
    violations: int = 0
    worst_gap: float = -math.inf   # max of (lhs - rhs) / scale over all checks
    witness: dict | None = None

    def record(self, gap: np.ndarray, tol: float, payload) -> None:
        gap = np.asarray(gap, dtype=np.float64).ravel()
        self.checks += gap.size
        if gap.size == 0:
            return
        k = int(np.argmax(gap))
        self.worst_gap = max(self.worst_gap, float(gap[k]))
        bad = gap > tol
        nbad = int(np.count_nonzero(bad))
        if nbad and self.witness is None:
            j = int(np.flatnonzero(bad)[0])
            self.witness = {key: np.asarray(v)[j].tolist() for key, v in payload.items()}
        self.violations += nbad

    def to_dict(self) -> dict:
        return asdict(self)


def _rel_gap(lhs, rhs):
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    return (lhs - rhs) / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))


def _batched_msign(X: np.ndarray) -> np.ndarray:
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = (s > 1e-12 * s[..., :1]).astype(np.float64)
    return np.einsum("...ik,...k,...kj->...ij", U, keep, Vt)


def _nuc(X: np.ndarray) -> np.ndarray:
    return np.sum(np.linalg.svd(X, compute_uv=False), axis=-1)


def _op(X: np.ndarray) -> np.ndarray:
    return np.linalg.svd(X, compute_uv=False)[..., 0]


def _random_pd(g, n: int, m: int, psd: bool = False) -> np.ndarray:
    A = g.standard_normal((n, m, m))
    L = A @ np.swapaxes(A, -1, -2)
    if psd:
        # drop a direction on a third of the samples to exercise the boundary
        v = g.standard_normal((n, m, 1))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        Pr = np.eye(m) - v @ np.swapaxes(v, -1, -2)
        mask = (np.arange(n) % 3 == 0)[:, None, None]
        L = np.where(mask, Pr @ L @ Pr, L)
    else:
        L = L + 1e-3 * np.eye(m)
    return 0.5 * (L + np.swapaxes(L, -1, -2))


def _low_rank_mix(g, X: np.ndarray) -> np.ndarray:
    # make every fourth sample rank one so degenerate spectra are covered
    n = X.shape[0]
    u = g.standard_normal((n, X.shape[1], 1))
    v = g.standard_normal((n, 1, X.shape[2]))
    return np.where((np.arange(n) % 4 == 0)[:, None, None], u @ v, X)


def deterministic_lemma_suite(n_random: int = 10_000, rng=0, tol: float = 1e-10) -> list[LemmaCheck]:
    """Check each deterministic inequality on random and exhaustive inputs.

    Gaps are measured relative to max(1, |lhs|, |rhs|); anything above tol
    counts as a violation and the first offending input is kept as witness.
    """
    g = as_generator(RngStream(rng) if isinstance(rng, int) else rng)
    n = n_random
    out = []

    # <x, sign x - sign y> <= 2 ||x - y||_1
    c = LemmaCheck("sign_difference")
    d = 6
    x = g.standard_normal((n, d)) * np.exp(g.uniform(-3, 3, (n, 1)))
    y = x + g.standard_normal((n, d)) * np.exp(g.uniform(-6, 1, (n, 1)))
    zmask = g.random((n, d)) < 0.15
    x = np.where(zmask, 0.0, x)
    y = np.where(g.random((n, d)) < 0.15, 0.0, y)
    lhs = np.sum(x * (np.sign(x) - np.sign(y)), axis=1)
    rhs = 2 * np.sum(np.abs(x - y), axis=1)
    c.record(_rel_gap(lhs, rhs), tol, {"x": x, "y": y})
    grid = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=2)))
    X, Y = np.repeat(grid, len(grid), axis=0), np.tile(grid, (len(grid), 1))
    lhs = np.sum(X * (np.sign(X) - np.sign(Y)), axis=1)
    rhs = 2 * np.sum(np.abs(X - Y), axis=1)
    c.record(_rel_gap(lhs, rhs), tol, {"x": X, "y": Y})
    out.append(c)

    # <X, msign X - msign Y> <= 2 ||X - Y||_*
    c = LemmaCheck("polar_difference")
    X = _low_rank_mix(g, g.standard_normal((n, 3, 5)))
    Y = X + g.standard_normal((n, 3, 5)) * np.exp(g.uniform(-5, 1, (n, 1, 1)))
    lhs = np.sum(X * (_batched_msign(X) - _batched_msign(Y)), axis=(1, 2))
    rhs = 2 * _nuc(X - Y)
    c.record(_rel_gap(lhs, rhs), tol, {"X": X, "Y": Y})
    out.append(c)

    # (x + y)^{1/p} <= x^{1/p} + y^{1/p}, x, y >= 0, p >= 1
    c = LemmaCheck("minkowski")
    xs = np.abs(g.standard_normal(n)) * np.exp(g.uniform(-5, 5, n))
    ys = np.abs(g.standard_normal(n)) * np.exp(g.uniform(-5, 5, n))
    ps = 1.0 + g.exponential(1.0, n)
    c.record(_rel_gap((xs + ys) ** (1 / ps), xs ** (1 / ps) + ys ** (1 / ps)), tol,
             {"x": xs, "y": ys, "p": ps})
    ex = np.array(list(itertools.product((0.0, 1.0, 2.0), (0.0, 1.0, 2.0), (1.0, 2.0, 3.0))))
    c.record(_rel_gap((ex[:, 0] + ex[:, 1]) ** (1 / ex[:, 2]),
                      ex[:, 0] ** (1 / ex[:, 2]) + ex[:, 1] ** (1 / ex[:, 2])), tol,
             {"x": ex[:, 0], "y": ex[:, 1], "p": ex[:, 2]})
    out.append(c)

    # E[(sum_i X_i^p)^{1/p}] <= (sum_i E X_i^p)^{1/p} on random finite probability spaces
    c = LemmaCheck("lp_mean")
    K, k = 5, 4
    w = g.dirichlet(np.ones(K), n)
    vals = np.abs(g.standard_normal((n, K, k))) * np.exp(g.uniform(-2, 2, (n, 1, 1)))
    vals = np.where(g.random((n, K, k)) < 0.2, 0.0, vals)
    ps = g.uniform(1.0, 2.0, n)[:, None, None]
    lhs = np.sum(w * np.sum(vals ** ps, axis=2) ** (1 / ps[:, :, 0]), axis=1)
    rhs = np.sum(np.sum(w[:, :, None] * vals ** ps, axis=1), axis=1) ** (1 / ps[:, 0, 0])
    c.record(_rel_gap(lhs, rhs), tol, {"w": w, "vals": vals, "p": ps[:, 0, 0]})
    out.append(c)

    # ||X||_* <= sqrt(||L||_* tr(X^T L^{-1} X)), L positive definite
    c = LemmaCheck("matrix_cauchy_schwarz")
    m, k = 4, 3
    X = _low_rank_mix(g, g.standard_normal((n, m, k)))
    L = _random_pd(g, n, m)
    q = np.sum(X * np.linalg.solve(L, X), axis=(1, 2))
    rhs = np.sqrt(np.trace(L, axis1=1, axis2=2) * q)
    c.record(_rel_gap(_nuc(X), rhs), tol, {"X": X, "L": L})
    out.append(c)

    # msign: <X, msign X> = ||X||_*, scale invariance, ||msign X||_L^2 <= tr L
    c = LemmaCheck("msign_properties")
    X = _low_rank_mix(g, g.standard_normal((n, 4, 6)))
    O = _batched_msign(X)
    ip = np.sum(X * O, axis=(1, 2))
    nuc = _nuc(X)
    c.record(np.abs(ip - nuc) / np.maximum(1.0, nuc), 1e-8, {"X": X})
    for a in (0.01, 1.0, 1000.0):
        dev = np.max(np.abs(_batched_msign(a * X) - O), axis=(1, 2))
        c.record(dev, 1e-8, {"X": X})
    L = _random_pd(g, n, 4, psd=True)
    lhs = np.sum(O * (L @ O), axis=(1, 2))
    c.record(_rel_gap(lhs, np.trace(L, axis1=1, axis2=2)), tol, {"X": X, "L": L})
    out.append(c)

    # tr|X| = ||X||_*, tr L = ||L||_* (PSD), ||XY||_* <= min(op*nuc, nuc*op)
    c = LemmaCheck("trace_properties")
    X = _low_rank_mix(g, g.standard_normal((n, 4, 5)))
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    absX = np.einsum("...ik,...k,...jk->...ij", U, s, U)
    tr = np.trace(absX, axis1=1, axis2=2)
    nuc = np.sum(s, axis=1)
    c.record(np.abs(tr - nuc) / np.maximum(1.0, nuc), 1e-8, {"X": X})
    L = _random_pd(g, n, 4, psd=True)
    trL = np.trace(L, axis1=1, axis2=2)
    c.record(np.abs(trL - _nuc(L)) / np.maximum(1.0, trL), 1e-8, {"L": L})
    Y = _low_rank_mix(g, g.standard_normal((n, 5, 3)))
    lhs = _nuc(X @ Y)
    rhs = np.minimum(_op(X) * _nuc(Y), _nuc(X) * _op(Y))
    c.record(_rel_gap(lhs, rhs), tol, {"X": X, "Y": Y})
    out.append(c)
    return out
