"""Central finite differences shared by the unit and acceptance tests."""

import numpy as np

from icdenoise.attention import AttentionKind, AttentionWeights, grad_mse
from icdenoise.energy import EnergyKind, EnergyModel, energy, energy_grad
from icdenoise.numerics import RngStream
from icdenoise.tasks import Case, TaskSpec, sample_dataset

H = 1e-5


def central_diff(f, x: np.ndarray, h: float = H) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max-abs discrepancy relative to the largest gradient entry."""
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def attention_grad_error(kind, seed: int, n=5, L=15, N=4) -> float:
    gen = np.random.default_rng(seed)
    case = list(Case)[seed % 3]
    spec = TaskSpec(case, n=n, d=2, K=3, sigma0_sq=1.0, sigmaZ_sq=0.5)
    batch = sample_dataset(spec, N, L, RngStream(seed, (7,)))
    w = AttentionWeights(kind, gen.normal(size=(n, n)) * 0.5, gen.normal(size=(n, n)) * 0.5)
    g_kq, g_pv, _ = grad_mse(w, batch)
    loss = lambda: grad_mse(w, batch)[2]
    return max(rel_err(g_kq, central_diff(loss, w.W_KQ)), rel_err(g_pv, central_diff(loss, w.W_PV)))


def energy_grad_error(kind, seed: int, n=5, L=15) -> float:
    gen = np.random.default_rng(seed)
    m = EnergyModel(gen.normal(size=(n, L)), float(gen.uniform(0.5, 2)), float(gen.uniform(0.5, 3)), kind)
    s = gen.normal(size=n)
    fd = central_diff(lambda: energy(m, s), s)
    return rel_err(energy_grad(m, s), fd)


ATTENTION_KINDS = (AttentionKind.LINEAR, AttentionKind.SOFTMAX)
ENERGY_KINDS = tuple(EnergyKind)
