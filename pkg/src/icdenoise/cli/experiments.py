"""Experiment runners: one function per subcommand, each writing CSV tables.

Every runner is a pure function of its resolved config; rows are emitted in
a fixed sorted order so that replays give byte-identical CSV files.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from ..attention import AttentionKind, AttentionWeights, forward
from ..baselines import (
    BAYES_KIND,
    applicable_kinds,
    linear_mse,
    mean_and_stderr,
    predict_baseline,
    squared_errors,
)
from ..energy import EnergyModel, attention_step, descend
from ..errors import InvalidArgument
from ..numerics import RngStream
from ..rates import projector_shape, simulate_kernel_bounds, simulate_projector
from ..tasks import Case, TaskSpec, iter_dataset, random_transform, sample_dataset
from ..training import train
from ..transform import optimal_transformed_weights, run_transform_training
from .artifacts import ArtifactWriter, RunArtifacts
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# sub-stream ids for evaluation sets, disjoint from the training ids
STREAM_EVAL, STREAM_LANDSCAPE, STREAM_TRANSFORM, STREAM_RATES, STREAM_ENERGY = 10, 20, 30, 40, 50
CHUNK = 250


def ideal_weights(spec: TaskSpec, kind) -> AttentionWeights:
    kind = AttentionKind(kind)
    if kind is AttentionKind.LINEAR and spec.case is Case.LINEAR_SUBSPACE:
        return AttentionWeights.scaled_identity(kind, spec.n, 1.0, 1.0 / (spec.sigma0_sq + spec.sigmaZ_sq))
    if kind is AttentionKind.SOFTMAX and spec.case is not Case.LINEAR_SUBSPACE:
        return AttentionWeights.scaled_identity(kind, spec.n, 1.0, 1.0 / spec.sigmaZ_sq)
    raise InvalidArgument(f"no analytic weights for {kind.value} attention on {spec.case.value} tasks")


def paired_errors(w: AttentionWeights, spec: TaskSpec, N: int, L: int, rng: RngStream):
    """Per-prompt squared errors of ``w`` and of the Bayes predictor on the same prompts."""
    model, bayes = [], []
    for batch in iter_dataset(spec, N, L, rng, CHUNK):
        model.append(squared_errors(forward(w, batch), batch.targets))
        bayes.append(squared_errors(predict_baseline(BAYES_KIND[spec.case], batch), batch.targets))
    return np.concatenate(model), np.concatenate(bayes)


def _weight_rows(seed: int, w: AttentionWeights) -> list[dict]:
    rows = []
    for name, M in (("W_KQ", w.W_KQ), ("W_PV", w.W_PV)):
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                rows.append({"seed": seed, "matrix": name, "row": i, "col": j, "value": M[i, j]})
    return rows


def _curve_rows(seed: int, result) -> list[dict]:
    return [{"seed": seed, "epoch": e, "train_mse": tr, "test_mse": te} for e, tr, te in result.loss_curve]


def run_train(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    wr = ArtifactWriter(cfg, out_dir)
    curves, weights, summary = [], [], []
    baseline_acc: dict[str, list[float]] = {}
    for seed in sorted(cfg.seeds):
        res = train(spec, cfg.train.kind, cfg.train.to_config(seed))
        curves += _curve_rows(seed, res)
        weights += _weight_rows(seed, res.final_weights)
        s = res.summary
        summary.append({
            "seed": seed, "alpha": s.alpha, "beta": s.beta, "product": s.product,
            "offdiag_rms": s.offdiag_rms, "final_train_mse": res.final_train_mse,
            "final_test_mse": res.final_test_mse,
        })
        for k, v in res.baseline_mse.items():
            baseline_acc.setdefault(k, []).append(v)
    wr.table("loss_curve", ["seed", "epoch", "train_mse", "test_mse"], curves)
    wr.table("weights_final", ["seed", "matrix", "row", "col", "value"], weights)
    wr.table("baselines", ["kind", "mse"],
             [{"kind": k, "mse": math.fsum(v) / len(v)} for k, v in sorted(baseline_acc.items())])
    wr.table("summary", ["seed", "alpha", "beta", "product", "offdiag_rms", "final_train_mse",
                         "final_test_mse"], summary)
    return wr.finish()


def run_context_sweep(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    wr = ArtifactWriter(cfg, out_dir)
    rows = []
    mode = "ideal" if cfg.ideal else "trained"
    for seed in sorted(cfg.seeds):
        root = RngStream(seed)
        for L in sorted(cfg.sweep.L_values):
            if cfg.ideal:
                w = ideal_weights(spec, cfg.train.kind)
            else:
                w = train(spec, cfg.train.kind, cfg.train.to_config(seed, context_len=L)).final_weights
            m, b = paired_errors(w, spec, cfg.sweep.eval_prompts, L, root.child(STREAM_EVAL, L))
            mse, _ = mean_and_stderr(m)
            bayes, _ = mean_and_stderr(b)
            _, se = mean_and_stderr(m - b)
            rows.append({"seed": seed, "L": L, "mode": mode, "mse": mse, "bayes_mse": bayes,
                         "excess": mse - bayes, "excess_stderr": se})
    wr.table("context_sweep", ["seed", "L", "mode", "mse", "bayes_mse", "excess", "excess_stderr"], rows)
    return wr.finish()


def run_dim_shift(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    wr = ArtifactWriter(cfg, out_dir)
    rows = []
    for seed in sorted(cfg.seeds):
        root = RngStream(seed)
        if cfg.ideal:
            w = ideal_weights(spec, cfg.train.kind)
        else:
            w = train(spec, cfg.train.kind, cfg.train.to_config(seed)).final_weights
        for d in sorted(cfg.sweep.d_values):
            shifted = spec.with_(d=d)
            for L in sorted(cfg.sweep.L_values):
                m, b = paired_errors(w, shifted, cfg.sweep.eval_prompts, L, root.child(STREAM_EVAL, d, L))
                rows.append({
                    "seed": seed, "d_train": spec.d, "d_infer": d, "L": L,
                    "mse": mean_and_stderr(m)[0], "bayes_mse": mean_and_stderr(b)[0],
                    "bayes_mse_exact": linear_mse(d, spec.sigma0_sq, spec.sigmaZ_sq),
                })
    wr.table("dim_shift", ["seed", "d_train", "d_infer", "L", "mse", "bayes_mse", "bayes_mse_exact"], rows)
    return wr.finish()


def landscape_errors(kind, batch, alphas, betas) -> np.ndarray:
    """Per-prompt squared errors ``(len(alphas), len(betas), N)`` for ``W_PV = a I, W_KQ = b I``.

    The readout is linear in ``alpha``, so each ``beta`` needs one pass over the
    context and every ``alpha`` follows in closed form.
    """
    kind = AttentionKind(kind)
    X, Q, Y = batch.contexts, batch.queries, batch.targets
    alphas = np.asarray(alphas, float)
    out = np.empty((alphas.size, len(betas), len(batch)))
    overlaps = np.einsum("bil,bi->bl", X, Q)
    yy = (Y**2).sum(axis=1)
    for j, beta in enumerate(betas):
        if kind is AttentionKind.LINEAR:
            v = beta * np.einsum("bil,bl->bi", X, overlaps) / X.shape[2]
        else:
            z = beta * overlaps
            g = np.exp(z - z.max(axis=1, keepdims=True))
            g /= g.sum(axis=1, keepdims=True)
            v = np.einsum("bil,bl->bi", X, g)
        vv = (v**2).sum(axis=1)
        vy = (v * Y).sum(axis=1)
        out[:, j, :] = alphas[:, None] ** 2 * vv - 2 * alphas[:, None] * vy + yy
    return out


def run_landscape(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    kind = cfg.train.kind
    wr = ArtifactWriter(cfg, out_dir)
    alphas = sorted(cfg.sweep.alpha_grid)
    betas = sorted(cfg.sweep.beta_grid)
    if kind is AttentionKind.LINEAR:
        a0, b0 = 1.0, 1.0 / (spec.sigma0_sq + spec.sigmaZ_sq)
    else:
        a0, b0 = 1.0, 1.0 / spec.sigmaZ_sq
    grid, rows, points = [], [], []
    for seed in sorted(cfg.seeds):
        batch = sample_dataset(spec, cfg.sweep.eval_prompts, cfg.train.context_len,
                               RngStream(seed).child(STREAM_LANDSCAPE))
        errs = landscape_errors(kind, batch, alphas, betas)
        mse = errs.mean(axis=2)
        for i, a in enumerate(alphas):
            for j, b in enumerate(betas):
                rows.append({"seed": seed, "alpha": a, "beta": b, "mse": mse[i, j]})
        special = landscape_errors(kind, batch, [a0, -a0], [b0, -b0])
        ref = special[0, 0]
        mirrored = special[1, 1]
        i, j = np.unravel_index(np.argmin(mse), mse.shape)
        argmin = errs[i, j]
        for label, a, b, e in (("analytic", a0, b0, ref), ("mirrored", -a0, -b0, mirrored),
                               ("grid_argmin", alphas[i], betas[j], argmin)):
            m, _ = mean_and_stderr(e)
            _, se = mean_and_stderr(e - ref)
            points.append({"seed": seed, "point": label, "alpha": a, "beta": b, "mse": m,
                           "diff_vs_analytic": m - mean_and_stderr(ref)[0], "stderr_diff": se})
    wr.table("landscape", ["seed", "alpha", "beta", "mse"], rows)
    wr.table("points", ["seed", "point", "alpha", "beta", "mse", "diff_vs_analytic", "stderr_diff"], points)
    return wr.finish()


def run_transform(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    wr = ArtifactWriter(cfg, out_dir)
    mats, curves, weights, rec = [], [], [], []
    for seed in sorted(cfg.seeds):
        t = random_transform(spec.n, RngStream(seed).child(STREAM_TRANSFORM), cfg.sweep.max_condition)
        for i in range(spec.n):
            for j in range(spec.n):
                mats.append({"seed": seed, "row": i, "col": j, "value": t.A[i, j]})
        tcfg = cfg.train.to_config(seed, epochs=0) if cfg.ideal else cfg.train.to_config(seed)
        res = run_transform_training(spec, t, cfg.train.kind, tcfg)
        curves += _curve_rows(seed, res.train)
        weights += _weight_rows(seed, res.train.final_weights)
        opt = optimal_transformed_weights(t, spec.sigma0_sq, spec.sigmaZ_sq)
        weights += [dict(r, matrix=r["matrix"] + "_star") for r in _weight_rows(seed, opt.weights())]
        rec.append({
            "seed": seed, "kind": cfg.train.kind.value, "condition": t.condition,
            "final_test_mse": res.train.final_test_mse, "plugin_mse": res.plugin_mse,
            "bayes_mse": res.bayes_mse, "bayes_mse_exact": linear_mse(spec.d, spec.sigma0_sq, spec.sigmaZ_sq),
            **res.recovery,
        })
    wr.table("transform_A", ["seed", "row", "col", "value"], mats)
    wr.table("loss_curve", ["seed", "epoch", "train_mse", "test_mse"], curves)
    wr.table("weights_final", ["seed", "matrix", "row", "col", "value"], weights)
    wr.table("recovery", ["seed", "kind", "condition", "final_test_mse", "plugin_mse", "bayes_mse",
                          "bayes_mse_exact", "alpha_hat", "beta_hat", "pv_shape_error", "kq_shape_error"], rec)
    return wr.finish()


def run_rates(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    sw = cfg.sweep
    wr = ArtifactWriter(cfg, out_dir)
    rows = []
    for seed in sorted(cfg.seeds):
        root = RngStream(seed).child(STREAM_RATES)
        for L in sorted(sw.L_values):
            trials = simulate_kernel_bounds(spec, L, sw.trials, sw.delta, root.child(1, L), sw.reference_factor)
            for name in ("denominator", "numerator"):
                dev = np.array([getattr(t, name[:3] + "_dev") for t in trials])
                bound = np.array([getattr(t, name[:3] + "_bound") for t in trials])
                rows.append({"seed": seed, "L": L, "delta": sw.delta, "quantity": name,
                             "bound": float(np.median(bound)), "violation_rate": float(np.mean(dev >= bound)),
                             "median_deviation": float(np.median(dev))})
            devs, norms = simulate_projector(spec, L, sw.trials, root.child(2, L))
            shape = norms * projector_shape(spec.d, L, sw.delta)
            rows.append({"seed": seed, "L": L, "delta": sw.delta, "quantity": "projector",
                         "bound": float(np.median(shape)), "violation_rate": float(np.mean(devs >= shape)),
                         "median_deviation": float(np.median(devs))})
    wr.table("rates", ["seed", "L", "delta", "quantity", "bound", "violation_rate", "median_deviation"], rows)
    return wr.finish()


def run_energy_demo(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    sw = cfg.sweep
    alpha = sw.alpha
    beta = sw.beta if sw.beta is not None else 1.0 / spec.sigmaZ_sq
    gamma = sw.gamma if sw.gamma is not None else alpha
    wr = ArtifactWriter(cfg, out_dir)
    traj_rows, agg_rows, cmp_rows = [], [], []
    for seed in sorted(cfg.seeds):
        batch = sample_dataset(spec, sw.eval_prompts, cfg.train.context_len, RngStream(seed).child(STREAM_ENERGY))
        sq = np.empty((len(batch), sw.steps + 1))
        step1_gap = 0.0
        monotone = True
        for k in range(len(batch)):
            p = batch[k]
            m = EnergyModel(p.context, alpha, beta)
            tr = descend(m, p.query, gamma, sw.steps)
            states = tr.as_array()
            dt = np.linalg.norm(states - p.target, axis=1)
            dq = np.linalg.norm(states - p.query, axis=1)
            sq[k] = dt**2
            monotone &= bool(np.all(np.diff(tr.energies) <= 1e-10))
            if gamma == alpha:
                step1_gap = max(step1_gap, float(np.max(np.abs(states[1] - attention_step(m, p.query)))))
            for t in range(sw.steps + 1):
                traj_rows.append({"seed": seed, "prompt": k, "step": t, "energy": tr.energies[t],
                                  "dist_to_target": dt[t], "dist_to_query": dq[t]})
        for t in range(sw.steps + 1):
            mean, se = mean_and_stderr(sq[:, t])
            agg_rows.append({"seed": seed, "step": t, "mean_sq_dist_to_target": mean, "stderr": se})
        diff_mean, diff_se = mean_and_stderr(sq[:, sw.steps] - sq[:, 1])
        cmp_rows.append({
            "seed": seed, "k": sw.steps, "mean_sq_dist_step1": mean_and_stderr(sq[:, 1])[0],
            "mean_sq_dist_stepk": mean_and_stderr(sq[:, sw.steps])[0], "diff": diff_mean,
            "stderr_diff": diff_se, "margin_se": diff_mean / diff_se if diff_se > 0 else float("inf"),
            "step1_vs_attention_max_abs": step1_gap if gamma == alpha else float("nan"),
            "energies_monotone": monotone,
        })
    wr.table("trajectories", ["seed", "prompt", "step", "energy", "dist_to_target", "dist_to_query"], traj_rows)
    wr.table("aggregate", ["seed", "step", "mean_sq_dist_to_target", "stderr"], agg_rows)
    wr.table("comparison", ["seed", "k", "mean_sq_dist_step1", "mean_sq_dist_stepk", "diff", "stderr_diff",
                            "margin_se", "step1_vs_attention_max_abs", "energies_monotone"], cmp_rows)
    return wr.finish()


def run_baseline_eval(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    spec = cfg.spec
    wr = ArtifactWriter(cfg, out_dir)
    kinds = applicable_kinds(spec.case)
    rows = []
    for seed in sorted(cfg.seeds):
        errs: dict = {k: [] for k in kinds}
        for batch in iter_dataset(spec, cfg.sweep.eval_prompts, cfg.train.context_len,
                                  RngStream(seed).child(STREAM_EVAL), CHUNK):
            for k in kinds:
                errs[k].append(squared_errors(predict_baseline(k, batch), batch.targets))
        for k in kinds:
            mse, se = mean_and_stderr(np.concatenate(errs[k]))
            rows.append({"seed": seed, "kind": k.value, "mse": mse, "stderr": se})
    wr.table("baselines", ["seed", "kind", "mse", "stderr"], rows)
    return wr.finish()


RUNNERS = {
    "train": run_train,
    "context-sweep": run_context_sweep,
    "dim-shift": run_dim_shift,
    "landscape": run_landscape,
    "transform": run_transform,
    "rates": run_rates,
    "energy-demo": run_energy_demo,
    "baseline-eval": run_baseline_eval,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunArtifacts:
    out = out_dir or cfg.out
    if out is None:
        raise InvalidArgument("no output directory given")
    return RUNNERS[cfg.experiment](cfg, out)
