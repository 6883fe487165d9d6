"""Closed-form posterior-mean denoisers and simple reference estimators."""

from __future__ import annotations

import enum
import logging
import math

import numpy as np

from .errors import InvalidArgument
from .numerics import bessel_ratio, logsumexp_rows, softmax_rows
from .tasks import Case, PromptBatch, TaskInstance, TaskSpec

log = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    ZERO = "zero"
    PROJECTION = "projection"
    BAYES_LINEAR = "bayes_linear"
    BAYES_SPHERE = "bayes_sphere"
    BAYES_MIXTURE_GENERAL = "bayes_mixture"
    BAYES_MIXTURE_ZEROVAR = "bayes_mixture_zerovar"
    EMPIRICAL_PROJECTOR = "empirical_projector"


APPLICABLE = {
    BaselineKind.ZERO: set(Case),
    BaselineKind.PROJECTION: {Case.LINEAR_SUBSPACE, Case.SPHERE},
    BaselineKind.BAYES_LINEAR: {Case.LINEAR_SUBSPACE},
    BaselineKind.BAYES_SPHERE: {Case.SPHERE},
    BaselineKind.BAYES_MIXTURE_GENERAL: {Case.GAUSSIAN_MIXTURE},
    BaselineKind.BAYES_MIXTURE_ZEROVAR: {Case.GAUSSIAN_MIXTURE},
    BaselineKind.EMPIRICAL_PROJECTOR: {Case.LINEAR_SUBSPACE},
}

BAYES_KIND = {
    Case.LINEAR_SUBSPACE: BaselineKind.BAYES_LINEAR,
    Case.SPHERE: BaselineKind.BAYES_SPHERE,
    Case.GAUSSIAN_MIXTURE: BaselineKind.BAYES_MIXTURE_GENERAL,
}


def applicable_kinds(case: Case) -> list[BaselineKind]:
    return [k for k in BaselineKind if Case(case) in APPLICABLE[k]]


def _require(task: TaskInstance, case: Case, name: str) -> None:
    if task.spec.case is not case:
        raise InvalidArgument(f"{name} needs a {case.value} task, got {task.spec.case.value}")


def bayes_linear(task: TaskInstance, query) -> np.ndarray:
    _require(task, Case.LINEAR_SUBSPACE, "bayes_linear")
    s = task.spec
    B = task.basis
    return s.sigma0_sq / (s.sigma0_sq + s.sigmaZ_sq) * (B @ (B.T @ np.asarray(query, float)))


def bayes_linear_mse(spec: TaskSpec) -> float:
    if Case(spec.case) is not Case.LINEAR_SUBSPACE:
        raise InvalidArgument("bayes_linear_mse is only defined for the linear case")
    return spec.d * spec.sigma0_sq * spec.sigmaZ_sq / (spec.sigma0_sq + spec.sigmaZ_sq)


def linear_mse(d: int, sigma0_sq: float, sigmaZ_sq: float) -> float:
    """Closed-form linear-case Bayes risk ``d s0 sZ / (s0 + sZ)`` from raw parameters."""
    return d * sigma0_sq * sigmaZ_sq / (sigma0_sq + sigmaZ_sq)


def _sphere_shrink(d: int, R: float, sigmaZ_sq: float, norm_par: float) -> float:
    if norm_par == 0.0:
        log.debug("bayes_sphere: query has no component in V; returning 0")
        return 0.0
    return bessel_ratio((d - 1) / 2.0, R * norm_par / sigmaZ_sq) * R / norm_par


def bayes_sphere(task: TaskInstance, query) -> np.ndarray:
    _require(task, Case.SPHERE, "bayes_sphere")
    s = task.spec
    x_par = task.basis @ (task.basis.T @ np.asarray(query, float))
    return _sphere_shrink(s.d, s.R, s.sigmaZ_sq, float(np.linalg.norm(x_par))) * x_par


def _center_average(centers: np.ndarray, weights: np.ndarray, query: np.ndarray, temp: float):
    logits = np.log(weights) + centers.T @ query / temp
    return centers @ softmax_rows(logits)


def bayes_mixture(task: TaskInstance, query) -> np.ndarray:
    """Posterior mean for equal variances and equal center norms."""
    _require(task, Case.GAUSSIAN_MIXTURE, "bayes_mixture")
    s = task.spec
    q = np.asarray(query, float)
    tot = s.sigma0_sq + s.sigmaZ_sq
    avg = _center_average(task.centers, s.mixture_weights, q, tot)
    return (s.sigma0_sq * q + s.sigmaZ_sq * avg) / tot


def bayes_mixture_general(centers, weights, sigma_a_sq, sigmaZ_sq: float, query) -> np.ndarray:
    """Posterior mean for an isotropic mixture with per-component variances.

    Component responsibilities use the marginal N(mu_a, (sigma_a^2 + sigmaZ^2) I)
    likelihood of the query.
    """
    centers = np.asarray(centers, float)
    n, K = centers.shape
    w = np.asarray(weights, float)
    sa = np.broadcast_to(np.asarray(sigma_a_sq, float), (K,))
    q = np.asarray(query, float)
    tot = sa + sigmaZ_sq
    sq = ((q[:, None] - centers) ** 2).sum(axis=0)
    logits = np.log(w) - 0.5 * n * np.log(tot) - sq / (2 * tot)
    resp = softmax_rows(logits)
    means = (sa * q[:, None] + sigmaZ_sq * centers) / tot
    return means @ resp


def bayes_mixture_zerovar(task: TaskInstance, query) -> np.ndarray:
    _require(task, Case.GAUSSIAN_MIXTURE, "bayes_mixture_zerovar")
    s = task.spec
    return _center_average(task.centers, s.mixture_weights, np.asarray(query, float), s.sigmaZ_sq)


def empirical_projector(context, sigma0_sq: float) -> np.ndarray:
    if sigma0_sq <= 0:
        raise InvalidArgument("sigma0_sq must be > 0")
    X = np.asarray(context, float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise InvalidArgument("context must be (n, L) with L >= 1")
    return X @ X.T / (sigma0_sq * X.shape[1])


# batched prediction -----------------------------------------------------


def _tasks_for(prompts: PromptBatch, task: TaskInstance | None) -> list[TaskInstance]:
    if task is not None:
        return [task] * len(prompts)
    tasks = prompts.tasks
    if len(tasks) != len(prompts) or any(t is None for t in tasks):
        raise InvalidArgument("prompts carry no task instances; pass task explicitly")
    return tasks


def predict_baseline(kind: BaselineKind, prompts, task: TaskInstance | None = None) -> np.ndarray:
    """Predictions ``(N, n)`` of baseline ``kind`` on every prompt."""
    kind = BaselineKind(kind)
    prompts = PromptBatch.from_prompts(prompts)
    tasks = _tasks_for(prompts, task)
    case = tasks[0].spec.case
    if case not in APPLICABLE[kind] or any(t.spec.case is not case for t in tasks):
        raise InvalidArgument(f"baseline {kind.value} does not apply to {case.value} tasks")
    spec = tasks[0].spec
    Q = prompts.queries

    if kind is BaselineKind.ZERO:
        return np.zeros_like(Q)
    if kind in (BaselineKind.PROJECTION, BaselineKind.BAYES_LINEAR, BaselineKind.BAYES_SPHERE):
        B = np.stack([t.basis for t in tasks])
        par = np.einsum("bik,bk->bi", B, np.einsum("bik,bi->bk", B, Q))
        if kind is BaselineKind.PROJECTION:
            return par
        if kind is BaselineKind.BAYES_LINEAR:
            return spec.sigma0_sq / (spec.sigma0_sq + spec.sigmaZ_sq) * par
        norms = np.linalg.norm(par, axis=1)
        scale = np.array([_sphere_shrink(spec.d, spec.R, spec.sigmaZ_sq, float(r)) for r in norms])
        return scale[:, None] * par
    if kind is BaselineKind.EMPIRICAL_PROJECTOR:
        X = prompts.contexts
        proj_q = np.einsum("bil,bl->bi", X, np.einsum("bil,bi->bl", X, Q)) / prompts.L
        return proj_q / (spec.sigma0_sq + spec.sigmaZ_sq)

    M = np.stack([t.centers for t in tasks])  # (N, n, K)
    logw = np.log(spec.mixture_weights)
    dots = np.einsum("bik,bi->bk", M, Q)
    if kind is BaselineKind.BAYES_MIXTURE_ZEROVAR:
        g = softmax_rows(logw + dots / spec.sigmaZ_sq)
        return np.einsum("bik,bk->bi", M, g)
    tot = spec.sigma0_sq + spec.sigmaZ_sq
    g = softmax_rows(logw + dots / tot)
    return (spec.sigma0_sq * Q + spec.sigmaZ_sq * np.einsum("bik,bk->bi", M, g)) / tot


def squared_errors(pred: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return ((pred - targets) ** 2).sum(axis=1)


def ordered_mean(values) -> float:
    """Order-independent, exactly rounded mean."""
    values = np.asarray(values, float).ravel()
    if values.size == 0:
        raise InvalidArgument("mean of an empty sequence")
    return math.fsum(values.tolist()) / values.size


def evaluate_baseline(kind: BaselineKind, prompts, task: TaskInstance | None = None) -> float:
    prompts = PromptBatch.from_prompts(prompts)
    pred = predict_baseline(kind, prompts, task)
    return ordered_mean(squared_errors(pred, prompts.targets))


def mean_and_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, float).ravel()
    m = ordered_mean(values)
    if values.size < 2:
        return m, float("nan")
    return m, float(np.std(values, ddof=1) / np.sqrt(values.size))
