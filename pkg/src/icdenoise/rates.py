"""Monte-Carlo checks of the finite-context concentration bounds.

All quantities live in coordinates of the token subspace V (orthonormal basis
columns of the task), where the max-norm bounds are stated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .numerics import RngStream
from .tasks import Case, TaskSpec, sample_prompt, sample_task, sample_tokens


def denominator_bound(R: float, x_norm: float, sigmaZ_sq: float, L: int, delta: float) -> float:
    return math.sinh(R * x_norm / sigmaZ_sq) * math.sqrt(2.0 / L * math.log(2.0 / delta))


def numerator_bound(R: float, x_norm: float, sigmaZ_sq: float, L: int, delta: float, dim: int) -> float:
    return R * math.exp(R * x_norm / sigmaZ_sq) * math.sqrt(2.0 / L * math.log(2.0 * dim / delta))


def projector_shape(d: int, L: int, delta: float) -> float:
    r = (d + math.log(2.0 / delta)) / L
    return max(math.sqrt(r), r)


def kernel_averages(coords: np.ndarray, x: np.ndarray, sigmaZ_sq: float) -> tuple[float, np.ndarray]:
    """Empirical ``mean_t e^{<X_t,x>/s}`` and ``mean_t X_t e^{<X_t,x>/s}``."""
    w = np.exp(coords.T @ x / sigmaZ_sq)
    return float(w.mean()), coords @ w / coords.shape[1]


@dataclass
class KernelTrial:
    den_dev: float
    den_bound: float
    num_dev: float
    num_bound: float


def kernel_trial(coords, ref_coords, x, R: float, sigmaZ_sq: float, delta: float) -> KernelTrial:
    L = coords.shape[1]
    den, num = kernel_averages(coords, x, sigmaZ_sq)
    den_ref, num_ref = kernel_averages(ref_coords, x, sigmaZ_sq)
    xn = float(np.linalg.norm(x))
    return KernelTrial(
        abs(den - den_ref),
        denominator_bound(R, xn, sigmaZ_sq, L, delta),
        float(np.max(np.abs(num - num_ref))),
        numerator_bound(R, xn, sigmaZ_sq, L, delta, coords.shape[0]),
    )


def simulate_kernel_bounds(spec: TaskSpec, L: int, trials: int, delta: float, rng: RngStream,
                           reference_factor: int = 100) -> list[KernelTrial]:
    """One fresh sphere task, query and context per trial.

    The expectations are replaced by averages over ``reference_factor * L``
    extra tokens from the same task.
    """
    if spec.case is not Case.SPHERE:
        raise InvalidArgument("kernel bounds are checked on sphere tasks")
    out = []
    for i in range(trials):
        gen = rng.child(i).generator()
        task = sample_task(spec, gen)
        p = sample_prompt(task, L, gen)
        ref = sample_tokens(task, reference_factor * L, gen)
        B = task.basis
        out.append(kernel_trial(B.T @ p.context, B.T @ ref, B.T @ p.query, spec.R, spec.sigmaZ_sq, delta))
    return out


def simulate_projector(spec: TaskSpec, L: int, trials: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Max-norm error of the empirical projector applied to in-subspace queries.

    Returns ``(deviations, query_norms)``.
    """
    lin = TaskSpec(Case.LINEAR_SUBSPACE, spec.n, spec.d, sigma0_sq=spec.sigma0_sq, sigmaZ_sq=spec.sigmaZ_sq)
    devs = np.empty(trials)
    norms = np.empty(trials)
    for i in range(trials):
        gen = rng.child(i).generator()
        task = sample_task(lin, gen)
        p = sample_prompt(task, L, gen)
        B = task.basis
        G = B.T @ p.context
        x = B.T @ p.query
        pi_hat = G @ G.T / (lin.sigma0_sq * L)
        devs[i] = np.max(np.abs(pi_hat @ x - x))
        norms[i] = np.linalg.norm(x)
    return devs, norms
