"""One-layer attention readouts of the query slot and their MSE gradients.

All forwards read out only the corrupted-query column: the query enters
through the logits ``X^T W_KQ q`` and its own value is masked out, so the
output is a combination of context tokens only.

Functions accept either a single :class:`Prompt` (returning ``(n,)``) or a
:class:`PromptBatch` (returning ``(N, n)``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .baselines import ordered_mean
from .errors import InvalidArgument, Unsupported
from .numerics import softmax_rows
from .tasks import Prompt, PromptBatch


class AttentionKind(str, enum.Enum):
    LINEAR = "linear"
    SOFTMAX = "softmax"
    GAUSSIAN = "gaussian"


@dataclass
class AttentionWeights:
    kind: AttentionKind
    W_KQ: np.ndarray
    W_PV: np.ndarray
    W_K: np.ndarray | None = None
    W_Q: np.ndarray | None = None

    def __post_init__(self):
        self.kind = AttentionKind(self.kind)
        self.W_KQ = np.asarray(self.W_KQ, dtype=np.float64)
        self.W_PV = np.asarray(self.W_PV, dtype=np.float64)
        mats = [self.W_KQ, self.W_PV]
        if self.kind is AttentionKind.GAUSSIAN:
            if self.W_K is None or self.W_Q is None:
                raise InvalidArgument("Gaussian-kernel attention needs W_K and W_Q")
            self.W_K = np.asarray(self.W_K, dtype=np.float64)
            self.W_Q = np.asarray(self.W_Q, dtype=np.float64)
            mats += [self.W_K, self.W_Q]
        n = self.W_PV.shape[0]
        for m in mats:
            if m.shape != (n, n):
                raise InvalidArgument("attention weights must be square and share n")
            if not np.all(np.isfinite(m)):
                raise InvalidArgument("attention weights must be finite")

    @property
    def n(self) -> int:
        return self.W_PV.shape[0]

    @classmethod
    def scaled_identity(cls, kind, n: int, alpha: float, beta: float) -> "AttentionWeights":
        return cls(kind, beta * np.eye(n), alpha * np.eye(n))

    def negated(self) -> "AttentionWeights":
        return AttentionWeights(self.kind, -self.W_KQ, -self.W_PV, self.W_K, self.W_Q)

    def copy(self) -> "AttentionWeights":
        return AttentionWeights(
            self.kind, self.W_KQ.copy(), self.W_PV.copy(),
            None if self.W_K is None else self.W_K.copy(),
            None if self.W_Q is None else self.W_Q.copy(),
        )


@dataclass(frozen=True)
class ScaledIdentitySummary:
    alpha: float
    beta: float
    offdiag_rms: float

    @property
    def product(self) -> float:
        return self.alpha * self.beta


def summarize(w: AttentionWeights) -> ScaledIdentitySummary:
    n = w.n
    off = ~np.eye(n, dtype=bool)
    offdiag = np.concatenate([w.W_PV[off], w.W_KQ[off]])
    rms = float(np.sqrt(np.mean(offdiag**2))) if offdiag.size else 0.0
    return ScaledIdentitySummary(
        float(np.mean(np.diag(w.W_PV))), float(np.mean(np.diag(w.W_KQ))), rms
    )


def _as_batch(p) -> tuple[PromptBatch, bool]:
    if isinstance(p, Prompt):
        return PromptBatch.from_prompts([p]), True
    if isinstance(p, PromptBatch):
        return p, False
    return PromptBatch.from_prompts(p), False


def _check(w: AttentionWeights, batch: PromptBatch, kind: AttentionKind | None) -> None:
    if kind is not None and w.kind is not kind:
        raise InvalidArgument(f"expected {kind.value} weights, got {w.kind.value}")
    if batch.n != w.n:
        raise InvalidArgument(f"weights are {w.n}x{w.n} but prompts have n={batch.n}")


def _linear(w, X, Q):
    # (1/L) W_PV X X^T W_KQ q
    k = Q @ w.W_KQ.T
    c = np.einsum("bil,bi->bl", X, k)
    return np.einsum("bil,bl->bi", X, c) @ w.W_PV.T / X.shape[2]


def _softmax_probs(w, X, Q):
    k = Q @ w.W_KQ.T
    return softmax_rows(np.einsum("bil,bi->bl", X, k))


def _gaussian_probs(w, X, Q):
    kx = np.einsum("ij,bjl->bil", w.W_K, X)
    qx = Q @ w.W_Q.T
    logits = -0.5 * ((kx - qx[:, :, None]) ** 2).sum(axis=1)
    return softmax_rows(logits)


def _finish(out, single):
    return out[0] if single else out


def forward_linear(w: AttentionWeights, p):
    batch, single = _as_batch(p)
    _check(w, batch, AttentionKind.LINEAR)
    return _finish(_linear(w, batch.contexts, batch.queries), single)


def forward_softmax(w: AttentionWeights, p):
    batch, single = _as_batch(p)
    _check(w, batch, AttentionKind.SOFTMAX)
    g = _softmax_probs(w, batch.contexts, batch.queries)
    out = np.einsum("bil,bl->bi", batch.contexts, g) @ w.W_PV.T
    return _finish(out, single)


def forward_gaussian(w: AttentionWeights, p):
    batch, single = _as_batch(p)
    _check(w, batch, AttentionKind.GAUSSIAN)
    g = _gaussian_probs(w, batch.contexts, batch.queries)
    out = np.einsum("bil,bl->bi", batch.contexts, g) @ w.W_PV.T
    return _finish(out, single)


def forward(w: AttentionWeights, p):
    if w.kind is AttentionKind.LINEAR:
        return forward_linear(w, p)
    if w.kind is AttentionKind.SOFTMAX:
        return forward_softmax(w, p)
    return forward_gaussian(w, p)


def second_moments(contexts: np.ndarray) -> np.ndarray:
    """Per-prompt ``X X^T / L``; lets linear attention skip the context axis."""
    return np.einsum("bil,bjl->bij", contexts, contexts) / contexts.shape[2]


def grad_linear_moments(w: AttentionWeights, S: np.ndarray, Q: np.ndarray, Y: np.ndarray):
    """Linear-attention loss and gradients from precomputed second moments."""
    u = np.einsum("bij,bj->bi", S, Q @ w.W_KQ.T)
    resid = u @ w.W_PV.T - Y
    B = Q.shape[0]
    loss = float((resid**2).sum() / B)
    r = 2.0 * resid / B
    g_pv = r.T @ u
    a = r @ w.W_PV
    g_kq = np.einsum("bij,bj->bi", S, a).T @ Q
    return g_kq, g_pv, loss


def grad_softmax_batch(w: AttentionWeights, X: np.ndarray, Q: np.ndarray, Y: np.ndarray):
    g = _softmax_probs(w, X, Q)
    v = np.einsum("bil,bl->bi", X, g)
    resid = v @ w.W_PV.T - Y
    B = Q.shape[0]
    loss = float((resid**2).sum() / B)
    r = 2.0 * resid / B
    g_pv = r.T @ v
    h = np.einsum("bil,bi->bl", X, r @ w.W_PV)
    # softmax Jacobian diag(g) - g g^T applied to h
    dz = g * (h - (g * h).sum(axis=1, keepdims=True))
    g_kq = np.einsum("bil,bl->bi", X, dz).T @ Q
    return g_kq, g_pv, loss


def grad_mse(w: AttentionWeights, batch):
    """Mean-over-batch squared error and its exact gradients.

    Returns ``(grad_W_KQ, grad_W_PV, loss)``.
    """
    batch, _ = _as_batch(batch)
    if len(batch) == 0:
        raise InvalidArgument("empty batch")
    _check(w, batch, None)
    if w.kind is AttentionKind.LINEAR:
        return grad_linear_moments(w, second_moments(batch.contexts), batch.queries, batch.targets)
    if w.kind is AttentionKind.SOFTMAX:
        return grad_softmax_batch(w, batch.contexts, batch.queries, batch.targets)
    raise Unsupported("Gaussian-kernel attention is evaluation-only")


def softmax_small_beta(w: AttentionWeights, p, eps: float):
    """Two leading terms of the softmax readout with weights ``(W_PV/eps, eps W_KQ)``."""
    if eps <= 0:
        raise InvalidArgument("eps must be > 0")
    batch, single = _as_batch(p)
    _check(w, batch, AttentionKind.SOFTMAX)
    X, Q = batch.contexts, batch.queries
    xbar = X.mean(axis=2)
    centered = X - xbar[:, :, None]
    c = np.einsum("bil,bi->bl", centered, Q @ w.W_KQ.T)
    lin = np.einsum("bil,bl->bi", X, c) / X.shape[2]
    out = (xbar / eps + lin) @ w.W_PV.T
    return _finish(out, single)


def mse(w: AttentionWeights, prompts) -> float:
    batch, _ = _as_batch(prompts)
    if len(batch) == 0:
        raise InvalidArgument("empty prompt set")
    pred = forward(w, batch)
    return ordered_mean(((pred - batch.targets) ** 2).sum(axis=1))
