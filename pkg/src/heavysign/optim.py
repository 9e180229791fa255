"""SignSGD, Lion, NSGD, Muon, Muonlight and MNSGD as pure step functions, plus a runner."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import _l2, msign, newton_schulz
from .noise import NoiseSpec, as_generator, noisy_gradient_batch, noisy_gradient_batch_matrix

__all__ = [
    "HyperParams",
    "VectorOptState",
    "MatrixOptState",
    "RunRecord",
    "signsgd_step",
    "lion_step",
    "nsgd_step",
    "muon_step",
    "muonlight_step",
    "mnsgd_step",
    "init_state",
    "run",
    "OPTIMIZERS",
    "VECTOR_OPTIMIZERS",
    "MATRIX_OPTIMIZERS",
    "NATIVE_NORM",
    "CSV_COLUMNS",
]

VECTOR_OPTIMIZERS = ("signsgd", "lion", "nsgd")
MATRIX_OPTIMIZERS = ("muon", "muonlight", "mnsgd")
OPTIMIZERS = VECTOR_OPTIMIZERS + MATRIX_OPTIMIZERS

# norm each optimizer's guarantee is stated in
NATIVE_NORM = {
    "signsgd": "l1", "lion": "l1", "nsgd": "l2",
    "muon": "nuclear", "muonlight": "nuclear", "mnsgd": "frobenius",
}
# norm in which the per-step displacement is measured
STEP_NORM = {
    "signsgd": "linf", "lion": "linf", "nsgd": "l2",
    "muon": "operator", "muonlight": "operator", "mnsgd": "frobenius",
}

CSV_COLUMNS = ("t", "loss", "grad_l1", "grad_l2", "grad_nuclear", "grad_fro",
               "eps_norm", "step_norm")


@dataclass(frozen=True)
class HyperParams:
    eta: float
    beta: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    lam: float = 0.0
    batch: int = 1
    msign_mode: str = "exact_svd"
    ns_steps: int = 5

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")
        for name in ("beta", "beta1", "beta2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.msign_mode not in ("exact_svd", "newton_schulz"):
            raise ValueError("msign_mode must be exact_svd or newton_schulz")
        if self.ns_steps < 0:
            raise ValueError("ns_steps must be nonnegative")

    def to_dict(self) -> dict:
        return {"eta": self.eta, "beta": self.beta, "beta1": self.beta1,
                "beta2": self.beta2, "lam": self.lam, "batch": self.batch,
                "msign_mode": self.msign_mode, "ns_steps": self.ns_steps}


@dataclass(frozen=True)
class VectorOptState:
    """x is the current iterate x_t; m is None until the first step (m_0 := g_1)."""

    x: np.ndarray
    m: Optional[np.ndarray] = None
    t: int = 1
    skipped: bool = False


@dataclass(frozen=True)
class MatrixOptState:
    """B holds the momentum buffer (B_0 := 0 for Muon variants, M for MNSGD)."""

    X: np.ndarray
    B: Optional[np.ndarray] = None
    t: int = 1
    skipped: bool = False


def _check_vec(state: VectorOptState, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.x.shape:
        raise ValueError(f"gradient shape {g.shape} does not match iterate {state.x.shape}")
    return g


def _check_mat(state: MatrixOptState, G: np.ndarray) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    if G.shape != state.X.shape:
        raise ValueError(f"gradient shape {G.shape} does not match iterate {state.X.shape}")
    return G


def _ema(prev, g, beta):
    if prev is None:
        prev = g
    return beta * prev + (1.0 - beta) * g


def signsgd_step(state: VectorOptState, g, hp: HyperParams) -> VectorOptState:
    g = _check_vec(state, g)
    m = _ema(state.m, g, hp.beta)
    x = state.x - hp.eta * np.sign(m)
    return VectorOptState(x=x, m=m, t=state.t + 1)


def lion_step(state: VectorOptState, g, hp: HyperParams) -> VectorOptState:
    g = _check_vec(state, g)
    prev = g if state.m is None else state.m
    v = hp.beta1 * prev + (1.0 - hp.beta1) * g
    m = hp.beta2 * prev + (1.0 - hp.beta2) * g
    x = state.x - hp.eta * np.sign(v) - hp.eta * hp.lam * state.x
    return VectorOptState(x=x, m=m, t=state.t + 1)


def nsgd_step(state: VectorOptState, g, hp: HyperParams) -> VectorOptState:
    g = _check_vec(state, g)
    m = _ema(state.m, g, hp.beta)
    nrm = _l2(m)
    if nrm == 0.0:
        return VectorOptState(x=state.x.copy(), m=m, t=state.t + 1, skipped=True)
    x = state.x - hp.eta * (m / nrm)
    return VectorOptState(x=x, m=m, t=state.t + 1)


def _direction(B: np.ndarray, hp: HyperParams) -> np.ndarray:
    if hp.msign_mode == "exact_svd":
        return msign(B)
    if not np.any(B):
        return np.zeros_like(B)
    return newton_schulz(B, hp.ns_steps)


def muon_step(state: MatrixOptState, G, hp: HyperParams) -> MatrixOptState:
    G = _check_mat(state, G)
    prev = np.zeros_like(G) if state.B is None else state.B
    B = hp.beta * prev + G
    X = state.X - hp.eta * _direction(B, hp)
    return MatrixOptState(X=X, B=B, t=state.t + 1)


def muonlight_step(state: MatrixOptState, G, hp: HyperParams) -> MatrixOptState:
    G = _check_mat(state, G)
    prev = np.zeros_like(G) if state.B is None else state.B
    B = hp.beta2 * prev + G
    Bt = hp.beta1 * B + G
    X = state.X - hp.eta * _direction(Bt, hp) - hp.eta * hp.lam * state.X
    return MatrixOptState(X=X, B=B, t=state.t + 1)


def mnsgd_step(state: MatrixOptState, G, hp: HyperParams) -> MatrixOptState:
    G = _check_mat(state, G)
    M = _ema(state.B, G, hp.beta)
    nrm = _l2(M)
    if nrm == 0.0:
        return MatrixOptState(X=state.X.copy(), B=M, t=state.t + 1, skipped=True)
    X = state.X - hp.eta * (M / nrm)
    return MatrixOptState(X=X, B=M, t=state.t + 1)


STEPS = {
    "signsgd": signsgd_step, "lion": lion_step, "nsgd": nsgd_step,
    "muon": muon_step, "muonlight": muonlight_step, "mnsgd": mnsgd_step,
}


def init_state(optimizer_id: str, x1):
    a = np.array(x1, dtype=np.float64)
    if optimizer_id in VECTOR_OPTIMIZERS:
        if a.ndim != 1:
            raise ValueError(f"{optimizer_id} needs a vector iterate")
        return VectorOptState(x=a)
    if optimizer_id in MATRIX_OPTIMIZERS:
        if a.ndim != 2:
            raise ValueError(f"{optimizer_id} needs a matrix iterate")
        return MatrixOptState(X=a)
    raise ValueError(f"unknown optimizer {optimizer_id!r}")


def _momentum_estimate(optimizer_id: str, state, hp: HyperParams) -> np.ndarray:
    # the m_t / M_t the analysis compares against grad f(x_t)
    if optimizer_id in VECTOR_OPTIMIZERS:
        return state.m
    if optimizer_id == "muon":
        return (1.0 - hp.beta) * state.B
    if optimizer_id == "muonlight":
        return (1.0 - hp.beta2) * state.B
    return state.B


def _norm_fast(a: np.ndarray, which: str, sv: Optional[np.ndarray] = None) -> float:
    if which == "l1":
        return float(np.sum(np.abs(a)))
    if which in ("l2", "frobenius"):
        return _l2(a)
    if which == "linf":
        return float(np.max(np.abs(a)))
    if a.ndim == 1:
        return _l2(a)  # a vector seen as a d x 1 matrix
    if sv is None:
        sv = np.linalg.svd(a, compute_uv=False)
    if which == "nuclear":
        return float(np.sum(sv))
    if which == "operator":
        return float(sv[0])
    raise ValueError(which)


@dataclass
class RunRecord:
    """Per-step statistics of one run.

    Arrays are indexed by t = 1..T (entry t-1).  grad_l2 is the Euclidean
    norm of the flattened gradient, so it equals grad_fro for matrices and
    grad_nuclear/grad_fro equal grad_l2 for vectors.
    """

    optimizer: str
    T: int
    native_norm: str
    columns: dict = field(default_factory=dict)
    iterate_norm: Optional[np.ndarray] = None
    grads: Optional[np.ndarray] = None
    x_final: Optional[np.ndarray] = None
    aborted_at: Optional[int] = None
    skipped_steps: int = 0

    @property
    def native(self) -> np.ndarray:
        key = {"l1": "grad_l1", "l2": "grad_l2", "nuclear": "grad_nuclear",
               "frobenius": "grad_fro"}[self.native_norm]
        return self.columns[key]

    def summary(self) -> dict:
        v = self.native
        if v.size == 0:
            return {"defined": False, "avg": None, "last": None, "min": None,
                    "steps": 0, "aborted_at": self.aborted_at}
        return {"defined": True, "avg": float(np.mean(v)), "last": float(v[-1]),
                "min": float(np.min(v)), "steps": int(v.size),
                "aborted_at": self.aborted_at}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        n = self.columns["t"].size if "t" in self.columns else 0
        for i in range(n):
            row = [str(int(self.columns["t"][i]))]
            row += [repr(float(self.columns[c][i])) for c in CSV_COLUMNS[1:]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def run(optimizer_id: str, problem, spec: Optional[NoiseSpec], hp: HyperParams, T: int, rng,
        x1=None, record_diagnostics: bool = True, record_grads: bool = False) -> RunRecord:
    """Run T steps of an optimizer on a problem, drawing a fresh mini-batch per step.

    Noise comes from the problem's own sampler when it has one, otherwise
    from the noise spec.  A non-finite iterate stops the run and sets
    aborted_at to the offending step index.
    """
    if optimizer_id not in STEPS:
        raise ValueError(f"unknown optimizer {optimizer_id!r}")
    if T < 0:
        raise ValueError("T must be nonnegative")
    matrix = optimizer_id in MATRIX_OPTIMIZERS
    if matrix != bool(problem.is_matrix):
        raise ValueError(f"{optimizer_id} does not match problem shape")
    if x1 is None:
        x1 = np.zeros(problem.shape)
    state = init_state(optimizer_id, x1)
    start = state.X if matrix else state.x
    if start.shape != tuple(problem.shape):
        raise ValueError(f"x1 shape {start.shape} does not match problem {tuple(problem.shape)}")
    step = STEPS[optimizer_id]
    native = NATIVE_NORM[optimizer_id]
    step_norm = STEP_NORM[optimizer_id]
    g = as_generator(rng)
    sampler = problem.sampler
    if sampler is None and spec is None:
        raise ValueError("problem has no sampler and no noise spec was given")
    draw = noisy_gradient_batch_matrix if matrix else noisy_gradient_batch

    names = CSV_COLUMNS if record_diagnostics else ("t", {"l1": "grad_l1", "l2": "grad_l2",
                                                          "nuclear": "grad_nuclear",
                                                          "frobenius": "grad_fro"}[native])
    cols = {c: np.full(T, np.nan) for c in names}
    xnorm = np.full(T, np.nan) if record_diagnostics else None
    grads = np.empty((T,) + tuple(problem.shape)) if record_grads else None
    aborted = None
    skipped = 0
    done = 0
    for i in range(T):
        x = state.X if matrix else state.x
        grad = problem.eval_grad(x)
        if sampler is not None:
            batch = sampler(x, hp.batch, g)
        else:
            batch = draw(grad, spec, hp.batch, g)
        gbar = batch.mean(axis=0) if hp.batch > 1 else batch[0]
        new = step(state, gbar, hp)
        cols["t"][i] = i + 1
        if record_grads:
            grads[i] = grad
        if record_diagnostics:
            sv = np.linalg.svd(grad, compute_uv=False) if matrix else None
            cols["loss"][i] = problem.eval_f(x)
            cols["grad_l1"][i] = _norm_fast(grad, "l1")
            cols["grad_l2"][i] = _l2(grad)
            cols["grad_nuclear"][i] = _norm_fast(grad, "nuclear", sv)
            cols["grad_fro"][i] = cols["grad_l2"][i]
            mom = _momentum_estimate(optimizer_id, new, hp)
            cols["eps_norm"][i] = _norm_fast(mom - grad, native)
            xn = new.X if matrix else new.x
            cols["step_norm"][i] = _norm_fast(xn - x, step_norm)
            xnorm[i] = _norm_fast(x, "operator" if matrix else "linf")
        else:
            key = names[1]
            cols[key][i] = _norm_fast(grad, native)
        skipped += int(new.skipped)
        state = new
        done = i + 1
        xn = state.X if matrix else state.x
        if not np.all(np.isfinite(xn)):
            aborted = i + 1
            break
    if aborted is not None:
        cols = {k: v[:done] for k, v in cols.items()}
        if xnorm is not None:
            xnorm = xnorm[:done]
        if grads is not None:
            grads = grads[:done]
    rec = RunRecord(optimizer=optimizer_id, T=T, native_norm=native, columns=cols,
                    iterate_norm=xnorm, grads=grads,
                    x_final=(state.X if matrix else state.x).copy(),
                    aborted_at=aborted, skipped_steps=skipped)
    return rec
