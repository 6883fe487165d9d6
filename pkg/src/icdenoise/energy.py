"""Context-conditioned associative-memory energies and their descent dynamics.

Two energies over a state ``s`` with the context tokens as memories:

* ``LOG_SUM_EXP``: ``|s|^2/(2 alpha) - (1/beta) log sum_t exp(beta X_t.s)``.
  One descent step of size ``alpha`` from the query is softmax attention
  with ``W_PV = alpha I`` and ``W_KQ = beta I``.
* ``NAIVE_SPHERICAL``: ``|s|^2/(2 gamma) - s^T (X X^T) s / (2L)``, with
  ``gamma`` stored in the ``alpha`` slot. One step of size ``gamma`` is
  linear attention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .attention import AttentionKind, AttentionWeights, forward_linear, forward_softmax
from .errors import InvalidArgument
from .numerics import log_sum_exp, softmax_stable
from .tasks import Prompt


class EnergyKind(str, enum.Enum):
    LOG_SUM_EXP = "lse"
    NAIVE_SPHERICAL = "naive_spherical"


@dataclass
class EnergyModel:
    context: np.ndarray  # (n, L)
    alpha: float
    beta: float = 1.0
    kind: EnergyKind = EnergyKind.LOG_SUM_EXP

    def __post_init__(self):
        self.kind = EnergyKind(self.kind)
        self.context = np.asarray(self.context, dtype=np.float64)
        if self.context.ndim != 2 or self.context.shape[1] < 1:
            raise InvalidArgument("context must be (n, L) with L >= 1")
        if self.alpha == 0:
            raise InvalidArgument("alpha must be nonzero")
        if self.kind is EnergyKind.LOG_SUM_EXP and self.beta <= 0:
            raise InvalidArgument("beta must be > 0 for the log-sum-exp energy")

    @property
    def n(self) -> int:
        return self.context.shape[0]

    @property
    def L(self) -> int:
        return self.context.shape[1]


@dataclass
class DescentTrajectory:
    states: list[np.ndarray]
    energies: list[float]
    step_size: float

    def __len__(self) -> int:
        return len(self.states)

    def as_array(self) -> np.ndarray:
        return np.stack(self.states)


def _state(m: EnergyModel, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (m.n,):
        raise InvalidArgument(f"state must have shape ({m.n},), got {s.shape}")
    return s


def energy(m: EnergyModel, s) -> float:
    s = _state(m, s)
    X = m.context
    if m.kind is EnergyKind.LOG_SUM_EXP:
        return float(s @ s / (2 * m.alpha) - log_sum_exp(m.beta * (X.T @ s)) / m.beta)
    proj = X.T @ s
    return float(s @ s / (2 * m.alpha) - proj @ proj / (2 * m.L))


def energy_grad(m: EnergyModel, s) -> np.ndarray:
    s = _state(m, s)
    X = m.context
    if m.kind is EnergyKind.LOG_SUM_EXP:
        return s / m.alpha - X @ softmax_stable(m.beta * (X.T @ s))
    return s / m.alpha - X @ (X.T @ s) / m.L


def descend(m: EnergyModel, s0, gamma: float, steps: int) -> DescentTrajectory:
    """Plain gradient descent ``s <- s - gamma * grad E(s)``, every state kept."""
    if steps < 0:
        raise InvalidArgument("steps must be >= 0")
    s = _state(m, s0).copy()
    states = [s]
    energies = [energy(m, s)]
    for _ in range(steps):
        s = s - gamma * energy_grad(m, s)
        states.append(s)
        energies.append(energy(m, s))
    return DescentTrajectory(states, energies, float(gamma))


def attention_step(m: EnergyModel, query) -> np.ndarray:
    """The attention readout that one step of size ``alpha`` should reproduce."""
    p = Prompt(m.context, np.asarray(query, float), np.zeros(m.n))
    if m.kind is EnergyKind.LOG_SUM_EXP:
        w = AttentionWeights.scaled_identity(AttentionKind.SOFTMAX, m.n, m.alpha, m.beta)
        return forward_softmax(w, p)
    # gamma-scaled linear attention: W_PV W_KQ = gamma I
    w = AttentionWeights.scaled_identity(AttentionKind.LINEAR, m.n, m.alpha, 1.0)
    return forward_linear(w, p)


def jacobian_symmetry_residual(w: AttentionWeights, context, s) -> float:
    """Relative antisymmetric part of the softmax-readout Jacobian at ``s``."""
    if w.kind is not AttentionKind.SOFTMAX:
        raise InvalidArgument("Jacobian symmetry is defined for softmax attention")
    X = np.asarray(context, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != w.n or s.shape != (w.n,):
        raise InvalidArgument("context/state dimensions do not match the weights")
    g = softmax_stable(X.T @ w.W_KQ @ s)
    Y = X @ (np.diag(g) - np.outer(g, g)) @ X.T
    J = w.W_PV @ Y @ w.W_KQ
    return float(np.linalg.norm(J - J.T) / max(1.0, np.linalg.norm(J)))
