"""Optimal attention weights when every prompt is warped by a fixed matrix A."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionKind, AttentionWeights, forward
from .baselines import ordered_mean, squared_errors
from .errors import InvalidArgument
from .tasks import Case, TaskSpec, TransformSpec, apply_transform
from .training import TrainConfig, TrainResult, make_datasets, train


@dataclass
class TransformedOptimum:
    W_PV_star: np.ndarray
    W_KQ_star: np.ndarray
    alpha: float
    beta: float

    def weights(self, kind=AttentionKind.LINEAR) -> AttentionWeights:
        return AttentionWeights(kind, self.W_KQ_star, self.W_PV_star)


def optimal_transformed_weights(t: TransformSpec, sigma0_sq: float, sigmaZ_sq: float,
                                alpha: float = 1.0) -> TransformedOptimum:
    if alpha == 0:
        raise InvalidArgument("alpha must be nonzero")
    if t.condition > 1e12:
        raise InvalidArgument("A is singular or badly conditioned")
    beta = 1.0 / (alpha * (sigma0_sq + sigmaZ_sq))
    AAt_inv = t.A_inv.T @ t.A_inv
    return TransformedOptimum(alpha * t.A_inv, beta * AAt_inv, float(alpha), float(beta))


def transformed_coords_estimate(context_Y, query_Y, t: TransformSpec,
                                sigma0_sq: float, sigmaZ_sq: float) -> np.ndarray:
    """Denoise in the warped coordinates, returning an estimate of ``A x``."""
    Y = np.asarray(context_Y, dtype=np.float64)
    q = np.asarray(query_Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != t.n or q.shape != (t.n,):
        raise InvalidArgument("context/query dimensions do not match A")
    overlaps = (t.A_inv @ Y).T @ (t.A_inv @ q)
    return Y @ overlaps / ((sigma0_sq + sigmaZ_sq) * Y.shape[1])


def _ls_scale(W: np.ndarray, ref: np.ndarray) -> float:
    return float(np.sum(W * ref) / np.sum(ref * ref))


def structure_recovery(w: AttentionWeights, t: TransformSpec) -> dict[str, float]:
    """Fitted scales and the shape error of trained weights against the A-structure."""
    AAt = t.A @ t.A.T
    a_hat = _ls_scale(w.W_PV, t.A_inv)
    b_hat = _ls_scale(w.W_KQ, np.linalg.inv(AAt))
    eye = np.eye(t.n)
    return {
        "alpha_hat": a_hat,
        "beta_hat": b_hat,
        "pv_shape_error": float(np.linalg.norm(w.W_PV @ t.A / a_hat - eye)),
        "kq_shape_error": float(np.linalg.norm(w.W_KQ @ AAt / b_hat - eye)),
    }


@dataclass
class TransformRunResult:
    train: TrainResult
    recovery: dict[str, float]
    plugin_mse: float
    bayes_mse: float
    transform: TransformSpec


def run_transform_training(spec: TaskSpec, t: TransformSpec, kind, cfg: TrainConfig) -> TransformRunResult:
    if spec.case is not Case.LINEAR_SUBSPACE:
        raise InvalidArgument("the transform experiment is defined for the linear case")
    if t.n != spec.n:
        raise InvalidArgument("transform size does not match n")
    datasets = make_datasets(spec, cfg)
    result = train(spec, kind, cfg, transform=t, datasets=datasets)
    test_t = apply_transform(datasets[1], t)
    opt = optimal_transformed_weights(t, spec.sigma0_sq, spec.sigmaZ_sq)
    plugin = ordered_mean(squared_errors(forward(opt.weights(), test_t), test_t.targets))
    return TransformRunResult(
        result, structure_recovery(result.final_weights, t), plugin,
        result.baseline_mse["bayes_linear"], t,
    )
