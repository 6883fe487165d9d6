"""Initialization, Adam and the epoch/minibatch training loop.

The batch loss is the *mean* squared error over the minibatch rather than a
sum over the dataset; the learning rate absorbs the constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttentionKind,
    AttentionWeights,
    ScaledIdentitySummary,
    forward,
    grad_linear_moments,
    grad_softmax_batch,
    second_moments,
    summarize,
)
from .baselines import applicable_kinds, ordered_mean, predict_baseline, squared_errors
from .errors import InvalidArgument, NonFiniteGradient, TrainingDiverged, Unsupported
from .numerics import RngStream, as_generator
from .tasks import PromptBatch, TaskSpec, TransformSpec, apply_transform, sample_dataset

log = logging.getLogger(__name__)

# sub-stream ids under RngStream(seed)
STREAM_TRAIN, STREAM_TEST, STREAM_SHUFFLE, STREAM_INIT = 1, 2, 3, 4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 80
    learning_rate: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_prompts: int = 1000
    record_every: int = 10
    n_prompts: int = 800
    context_len: int = 500

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")
        if not (0 < self.batch_size <= self.n_prompts):
            raise InvalidArgument("need 0 < batch_size <= n_prompts")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning_rate must be > 0")
        for b in (self.adam_beta1, self.adam_beta2):
            if not (0 < b < 1):
                raise InvalidArgument("Adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise InvalidArgument("adam_eps must be > 0")
        if self.eval_prompts < 1 or self.record_every < 1 or self.context_len < 1:
            raise InvalidArgument("eval_prompts, record_every and context_len must be >= 1")


@dataclass
class TrainResult:
    loss_curve: list[tuple[int, float, float]]
    final_weights: AttentionWeights
    summary: ScaledIdentitySummary
    baseline_mse: dict[str, float] = field(default_factory=dict)
    initial_weights: AttentionWeights | None = None

    @property
    def final_test_mse(self) -> float:
        return self.loss_curve[-1][2]

    @property
    def final_train_mse(self) -> float:
        return self.loss_curve[-1][1]


def init_weights(n: int, kind, rng) -> AttentionWeights:
    """Entries i.i.d. uniform on [-1/sqrt(n), 1/sqrt(n)]."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    kind = AttentionKind(kind)
    gen = as_generator(rng)
    b = 1.0 / np.sqrt(n)
    W_KQ = gen.uniform(-b, b, (n, n))
    W_PV = gen.uniform(-b, b, (n, n))
    if kind is AttentionKind.GAUSSIAN:
        return AttentionWeights(kind, W_KQ, W_PV, gen.uniform(-b, b, (n, n)), gen.uniform(-b, b, (n, n)))
    return AttentionWeights(kind, W_KQ, W_PV)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig, epoch: int = 0):
    """One bias-corrected Adam update. Returns ``(new_params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidArgument("params, grads and optimizer state must align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(epoch)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise InvalidArgument("gradient shape does not match parameter")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        out.append(p - cfg.learning_rate * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + cfg.adam_eps))
    return out, state


def evaluate(w: AttentionWeights, prompts) -> float:
    prompts = PromptBatch.from_prompts(prompts)
    if len(prompts) == 0:
        raise InvalidArgument("empty prompt set")
    return ordered_mean(squared_errors(forward(w, prompts), prompts.targets))


class _Objective:
    """Minibatch gradient oracle with per-kind precomputation."""

    def __init__(self, kind: AttentionKind, data: PromptBatch):
        self.kind = kind
        self.data = data
        if kind is AttentionKind.LINEAR:
            self.S = second_moments(data.contexts)
        elif kind is not AttentionKind.SOFTMAX:
            raise Unsupported("only linear and softmax attention can be trained")

    def grad(self, w: AttentionWeights, idx=None):
        d = self.data
        if idx is None:
            idx = slice(None)
        if self.kind is AttentionKind.LINEAR:
            return grad_linear_moments(w, self.S[idx], d.queries[idx], d.targets[idx])
        return grad_softmax_batch(w, d.contexts[idx], d.queries[idx], d.targets[idx])

    def loss(self, w: AttentionWeights) -> float:
        if self.kind is AttentionKind.LINEAR:
            u = np.einsum("bij,bj->bi", self.S, self.data.queries @ w.W_KQ.T)
            pred = u @ w.W_PV.T
        else:
            pred = forward(w, self.data)
        return ordered_mean(squared_errors(pred, self.data.targets))


def make_datasets(spec: TaskSpec, cfg: TrainConfig, L: int | None = None):
    """Training and held-out prompt sets on their dedicated sub-streams."""
    root = RngStream(cfg.seed)
    L = cfg.context_len if L is None else L
    train = sample_dataset(spec, cfg.n_prompts, L, root.child(STREAM_TRAIN))
    test = sample_dataset(spec, cfg.eval_prompts, L, root.child(STREAM_TEST))
    return train, test


def train(spec: TaskSpec, kind, cfg: TrainConfig, transform: TransformSpec | None = None,
          datasets: tuple[PromptBatch, PromptBatch] | None = None) -> TrainResult:
    """Train one attention layer on ``cfg.n_prompts`` prompts from ``spec``.

    With ``transform`` set, contexts and queries are mapped through ``A`` while
    the targets stay in the original coordinates.
    """
    kind = AttentionKind(kind)
    root = RngStream(cfg.seed)
    train_set, test_set = datasets if datasets is not None else make_datasets(spec, cfg)

    baseline_mse = {
        k.value: ordered_mean(squared_errors(predict_baseline(k, test_set), test_set.targets))
        for k in applicable_kinds(spec.case)
    }
    if transform is not None:
        train_set = apply_transform(train_set, transform)
        test_set = apply_transform(test_set, transform)

    w = init_weights(spec.n, kind, root.child(STREAM_INIT))
    init = w.copy()
    objective = _Objective(kind, train_set)
    test_objective = _Objective(kind, test_set)
    shuffle = root.child(STREAM_SHUFFLE).generator()
    state = AdamState.zeros_like([w.W_KQ, w.W_PV])

    initial_train = objective.loss(w)
    curve = [(0, initial_train, test_objective.loss(w))]
    blown = 0
    N = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            g_kq, g_pv, _ = objective.grad(w, idx)
            (W_KQ, W_PV), state = adam_step([w.W_KQ, w.W_PV], [g_kq, g_pv], state, cfg, epoch)
            w.W_KQ, w.W_PV = W_KQ, W_PV
        if epoch % cfg.record_every == 0 or epoch == cfg.epochs:
            tr = objective.loss(w)
            curve.append((epoch, tr, test_objective.loss(w)))
            if not np.isfinite(tr):
                raise NonFiniteGradient(epoch, "non-finite training loss")
            blown = blown + 1 if tr > 10.0 * initial_train else 0
            if blown >= 20:
                raise TrainingDiverged(epoch, initial_train, [c[1] for c in curve])
            log.debug("epoch %d train %.5f test %.5f", epoch, tr, curve[-1][2])

    return TrainResult(curve, w, summarize(w), baseline_mse, init)
