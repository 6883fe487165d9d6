"""Seeded random streams, Haar samplers and stable special functions.

Matrices are plain ``float64`` numpy arrays in numpy's default row-major
layout. Tokens are stored as columns, so a context is an ``(n, L)`` array.

Gaussian variates come from numpy's ``Generator.standard_normal`` (ziggurat
over PCG64). Cross-implementation agreement is therefore statistical, not
bit-level.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

log = logging.getLogger(__name__)

BESSEL_TOL = 1e-14
BESSEL_MAX_ITER = 500
# above this argument (and nu^2) the continued fraction converges slowly
ASYMPTOTIC_Z = 100.0


@dataclass(frozen=True)
class RngStream:
    """Splittable seed handle.

    ``(seed, stream_id)`` fully determines the sample sequence; children are
    derived by appending to ``stream_id`` so that sub-streams for, say,
    prompt ``j`` of dataset ``i`` never depend on execution order.
    """

    seed: int
    stream_id: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _check_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgument("expected a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("vector has non-finite entries")
    return v


def softmax_stable(v) -> np.ndarray:
    v = _check_vector(v)
    e = np.exp(v - v.max())
    return e / e.sum()


def log_sum_exp(v) -> float:
    v = _check_vector(v)
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis of a batch of logits (no validation)."""
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def bessel_ratio(nu: float, z: float) -> float:
    """Return I_{nu+1}(z) / I_nu(z) without forming either Bessel function.

    Evaluates the continued fraction
    ``r = 1 / (2(nu+1)/z + 1 / (2(nu+2)/z + ...))`` with the modified Lentz
    algorithm.
    """
    nu = float(nu)
    z = float(z)
    if not math.isfinite(z) or not math.isfinite(nu):
        raise InvalidArgument("bessel_ratio needs finite arguments")
    if z < 0:
        raise InvalidArgument(f"bessel_ratio needs z >= 0, got {z}")
    if nu < -0.5:
        raise InvalidArgument(f"bessel_ratio needs nu >= -1/2, got {nu}")
    if z == 0.0:
        return 0.0
    if z >= max(ASYMPTOTIC_Z, nu * nu):
        return _bessel_ratio_asymptotic(nu, z)

    tiny = 1e-300
    f = tiny
    c = f
    d = 0.0
    for k in range(1, BESSEL_MAX_ITER + 1):
        b = 2.0 * (nu + k) / z
        d = b + d
        if d == 0.0:
            d = tiny
        c = b + 1.0 / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < BESSEL_TOL:
            return f
    log.warning("bessel_ratio(%g, %g) hit the iteration cap", nu, z)
    return f


def _scaled_i_asymptotic(nu: float, z: float) -> float:
    """``sqrt(2 pi z) e^{-z} I_nu(z)`` from the large-argument series."""
    mu = 4.0 * nu * nu
    term, total = 1.0, 1.0
    for k in range(1, 60):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        if abs(nxt) >= abs(term):  # series starts to diverge
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def _bessel_ratio_asymptotic(nu: float, z: float) -> float:
    return _scaled_i_asymptotic(nu + 1, z) / _scaled_i_asymptotic(nu, z)


def random_orthonormal_basis(n: int, k: int, rng) -> np.ndarray:
    """Haar-distributed ``(n, k)`` matrix with orthonormal columns.

    QR of a standard Gaussian matrix, with columns flipped so that diag(R) > 0;
    without that sign fix the distribution is not Haar.
    """
    if not (1 <= k <= n):
        raise InvalidArgument(f"need 1 <= k <= n, got n={n}, k={k}")
    g = as_generator(rng).standard_normal((n, k))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def random_orthogonal(n: int, rng) -> np.ndarray:
    return random_orthonormal_basis(n, n, rng)
