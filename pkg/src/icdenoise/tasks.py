"""Task ensembles, prompt sampling and global prompt transforms.

Three ensembles are supported:

* ``LINEAR_SUBSPACE``: isotropic Gaussian (variance ``sigma0_sq``) restricted
  to a Haar-random ``d``-dimensional subspace.
* ``SPHERE``: uniform on a radius-``R`` ``d``-sphere living in a Haar-random
  ``(d+1)``-dimensional subspace.
* ``GAUSSIAN_MIXTURE``: ``K`` isotropic components with centers uniform on
  the radius-``R`` sphere of the ambient space.

Every prompt gets its own task instance and its own random sub-stream, so
``sample_dataset`` output depends only on ``(seed, index)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgument
from .numerics import RngStream, as_generator, random_orthonormal_basis


class Case(str, enum.Enum):
    LINEAR_SUBSPACE = "linear"
    SPHERE = "sphere"
    GAUSSIAN_MIXTURE = "mixture"


@dataclass(frozen=True)
class TaskSpec:
    case: Case
    n: int = 16
    d: int = 8
    K: int = 8
    R: float = 1.0
    sigma0_sq: float = 2.0
    sigmaZ_sq: float = 1.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "case", Case(self.case))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidArgument("n must be >= 1")
        if self.sigmaZ_sq <= 0:
            raise InvalidArgument("sigmaZ_sq must be > 0")
        if self.case is Case.LINEAR_SUBSPACE:
            if not (1 <= self.d <= self.n):
                raise InvalidArgument(f"linear case needs 1 <= d <= n, got d={self.d}, n={self.n}")
            if self.sigma0_sq <= 0:
                raise InvalidArgument("sigma0_sq must be > 0")
        elif self.case is Case.SPHERE:
            if not (1 <= self.d + 1 <= self.n) or self.d < 0:
                raise InvalidArgument(f"sphere case needs d+1 <= n, got d={self.d}, n={self.n}")
            if self.R <= 0:
                raise InvalidArgument("R must be > 0")
        else:
            if self.K < 1:
                raise InvalidArgument("K must be >= 1")
            if self.R <= 0:
                raise InvalidArgument("R must be > 0")
            if self.sigma0_sq <= 0:
                raise InvalidArgument("sigma0_sq must be > 0")
            if self.weights is not None:
                w = np.asarray(self.weights)
                if w.shape != (self.K,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                    raise InvalidArgument("weights must be a probability vector of length K")

    @property
    def mixture_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.K, 1.0 / self.K)
        return np.asarray(self.weights, dtype=np.float64)

    def with_(self, **changes) -> "TaskSpec":
        return replace(self, **changes)


@dataclass
class TaskInstance:
    """One realized token distribution.

    ``basis`` holds orthonormal columns (``d`` of them for the linear case,
    ``d+1`` for the sphere case); ``centers`` holds the mixture means as
    columns.
    """

    spec: TaskSpec
    basis: np.ndarray | None = None
    centers: np.ndarray | None = None

    @property
    def projector(self) -> np.ndarray:
        if self.basis is None:
            raise InvalidArgument("task has no subspace basis")
        return self.basis @ self.basis.T


@dataclass
class Prompt:
    context: np.ndarray  # (n, L)
    query: np.ndarray  # (n,)
    target: np.ndarray  # (n,)
    task: TaskInstance | None = field(default=None, repr=False, compare=False)

    @property
    def L(self) -> int:
        return self.context.shape[1]

    @property
    def n(self) -> int:
        return self.context.shape[0]


@dataclass
class PromptBatch(Sequence):
    """Stacked prompts: contexts ``(N, n, L)``, queries/targets ``(N, n)``."""

    contexts: np.ndarray
    queries: np.ndarray
    targets: np.ndarray
    tasks: list[TaskInstance | None] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PromptBatch(
                self.contexts[i], self.queries[i], self.targets[i], list(self._task_list()[i])
            )
        if isinstance(i, (list, np.ndarray)):
            idx = np.asarray(i)
            tasks = self._task_list()
            return PromptBatch(
                self.contexts[idx], self.queries[idx], self.targets[idx], [tasks[j] for j in idx]
            )
        return Prompt(self.contexts[i], self.queries[i], self.targets[i], self._task_list()[i])

    def _task_list(self) -> list:
        if len(self.tasks) == len(self):
            return self.tasks
        return [None] * len(self)

    @property
    def n(self) -> int:
        return self.contexts.shape[1]

    @property
    def L(self) -> int:
        return self.contexts.shape[2]

    @classmethod
    def from_prompts(cls, prompts: Sequence[Prompt]) -> "PromptBatch":
        if isinstance(prompts, PromptBatch):
            return prompts
        if isinstance(prompts, Prompt):
            prompts = [prompts]
        if len(prompts) == 0:
            raise InvalidArgument("empty prompt list")
        return cls(
            np.stack([p.context for p in prompts]),
            np.stack([p.query for p in prompts]),
            np.stack([p.target for p in prompts]),
            [p.task for p in prompts],
        )


def sample_task(spec: TaskSpec, rng) -> TaskInstance:
    spec.validate()
    gen = as_generator(rng)
    if spec.case is Case.LINEAR_SUBSPACE:
        return TaskInstance(spec, basis=random_orthonormal_basis(spec.n, spec.d, gen))
    if spec.case is Case.SPHERE:
        return TaskInstance(spec, basis=random_orthonormal_basis(spec.n, spec.d + 1, gen))
    g = gen.standard_normal((spec.n, spec.K))
    centers = spec.R * g / np.linalg.norm(g, axis=0, keepdims=True)
    return TaskInstance(spec, centers=centers)


def sample_tokens(task: TaskInstance, count: int, rng) -> np.ndarray:
    """Draw ``count`` i.i.d. pure tokens as columns of an ``(n, count)`` array."""
    spec = task.spec
    gen = as_generator(rng)
    if spec.case is Case.LINEAR_SUBSPACE:
        # basis @ N(0, s0^2 I_d) has the same law as P @ N(0, s0^2 I_n)
        g = gen.standard_normal((spec.d, count))
        return np.sqrt(spec.sigma0_sq) * (task.basis @ g)
    if spec.case is Case.SPHERE:
        g = gen.standard_normal((spec.d + 1, count))
        g /= np.linalg.norm(g, axis=0, keepdims=True)
        return spec.R * (task.basis @ g)
    comp = gen.choice(spec.K, size=count, p=spec.mixture_weights)
    noise = gen.standard_normal((spec.n, count))
    return task.centers[:, comp] + np.sqrt(spec.sigma0_sq) * noise


def sample_prompt(task: TaskInstance, L: int, rng) -> Prompt:
    if L < 1:
        raise InvalidArgument("context length L must be >= 1")
    gen = as_generator(rng)
    tokens = sample_tokens(task, L + 1, gen)
    target = tokens[:, L].copy()
    noise = np.sqrt(task.spec.sigmaZ_sq) * gen.standard_normal(task.spec.n)
    return Prompt(np.ascontiguousarray(tokens[:, :L]), target + noise, target, task)


def _sample_range(spec: TaskSpec, start: int, stop: int, L: int, rng: RngStream) -> PromptBatch:
    contexts = np.empty((stop - start, spec.n, L))
    queries = np.empty((stop - start, spec.n))
    targets = np.empty((stop - start, spec.n))
    tasks = []
    for j, i in enumerate(range(start, stop)):
        gen = rng.child(i).generator()
        task = sample_task(spec, gen)
        p = sample_prompt(task, L, gen)
        contexts[j], queries[j], targets[j] = p.context, p.query, p.target
        tasks.append(task)
    return PromptBatch(contexts, queries, targets, tasks)


def sample_dataset(spec: TaskSpec, N: int, L: int, rng: RngStream) -> PromptBatch:
    """``N`` prompts, prompt ``i`` drawn from its own task on stream ``rng.child(i)``."""
    if N < 1:
        raise InvalidArgument("dataset size N must be >= 1")
    if L < 1:
        raise InvalidArgument("context length L must be >= 1")
    return _sample_range(spec, 0, N, L, rng)


def iter_dataset(spec: TaskSpec, N: int, L: int, rng: RngStream, chunk: int = 500) -> Iterator[PromptBatch]:
    """Chunked ``sample_dataset``; concatenated chunks equal the full dataset."""
    if N < 1:
        raise InvalidArgument("dataset size N must be >= 1")
    for start in range(0, N, chunk):
        yield _sample_range(spec, start, min(N, start + chunk), L, rng)


@dataclass
class TransformSpec:
    A: np.ndarray
    A_inv: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.A_inv = np.asarray(self.A_inv, dtype=np.float64)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.A_inv.shape != (n, n):
            raise InvalidArgument("transform matrices must be square and equal-sized")
        if np.max(np.abs(self.A @ self.A_inv - np.eye(n))) >= 1e-8:
            raise InvalidArgument("A_inv is not the inverse of A")

    @classmethod
    def from_matrix(cls, A) -> "TransformSpec":
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidArgument("A must be square")
        if np.linalg.cond(A) > 1e12:
            raise InvalidArgument("A is singular or badly conditioned")
        return cls(A, np.linalg.inv(A))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.A))


def random_transform(n: int, rng, max_condition: float = 3.0, scale: float = 0.5,
                     max_tries: int = 1000) -> TransformSpec:
    """``A = I + scale * G / sqrt(n)``, redrawn until cond(A) <= max_condition."""
    gen = as_generator(rng)
    for _ in range(max_tries):
        A = np.eye(n) + scale * gen.standard_normal((n, n)) / np.sqrt(n)
        if np.linalg.cond(A) <= max_condition:
            return TransformSpec.from_matrix(A)
    raise InvalidArgument(f"no transform with condition <= {max_condition} in {max_tries} draws")


def apply_transform(p, t: TransformSpec, transform_target: bool = False):
    """Map context and query through ``A``; the target only if asked to."""
    if p.n != t.n:
        raise InvalidArgument(f"transform is {t.n}x{t.n} but prompt has n={p.n}")
    if isinstance(p, PromptBatch):
        contexts = np.einsum("ij,bjl->bil", t.A, p.contexts)
        queries = p.queries @ t.A.T
        targets = p.targets @ t.A.T if transform_target else p.targets.copy()
        return PromptBatch(contexts, queries, targets, list(p.tasks))
    target = t.A @ p.target if transform_target else p.target.copy()
    return Prompt(t.A @ p.context, t.A @ p.query, target, p.task)
