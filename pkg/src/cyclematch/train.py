"""Training loop: per-step graph sampling, manual backprop, Adam, held-out
evaluation, and the ablation harness for the geometric-loss and group-norm
switches.

One fresh graph per optimization step, drawn from the (seed, train-stream)
sequence by global step index so a checkpointed run resumes bit-identically.
Held-out instances come from the disjoint held-out stream and are fixed for
the whole run, which keeps learning curves comparable across steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import NonFiniteLoss, SpecError
from .geometry import build_prior
from .graph import augmented_operator
from .losses import cycle_loss, geometric_loss
from .metrics import compare_scores, embedding_similarity, similarity_stats
from .nn import (DEFAULT_DECAY, DEFAULT_GROUPS, DEFAULT_HIDDEN, DEFAULT_LR0,
                 AdamState, GcnModel, adam_step, init_adam, init_model,
                 model_backward, model_forward, parameters)
from .synthgen import (STREAM_HELDOUT, STREAM_SOLVER, STREAM_TRAIN,
                       SynthGraphSpec, _make_scene, derive_seed, gen_graph,
                       make_rng)

TRAIN_HEADER = "step,loss,cycle,geom,lr"
EVAL_HEADER = "step,l1,l2,same_mean,same_std,diff_mean,diff_std"
ABLATE_HEADER = "config,seeds,mean_l1,std_l1"


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; two runs with equal configs produce
    bit-identical logs."""

    steps: int
    graph: SynthGraphSpec
    use_scene: bool = False
    universe_dim: int | None = None
    lr0: float = DEFAULT_LR0
    decay: float = DEFAULT_DECAY
    lambda_geom: float = 1.0
    use_geometric: bool = False
    use_groupnorm: bool = True
    eval_every: int = 100
    seed: int = 0
    hidden_dim: int = DEFAULT_HIDDEN
    groups: int = DEFAULT_GROUPS
    heldout: int = 5

    def __post_init__(self):
        if self.steps < 1:
            raise SpecError("steps must be >= 1")
        if self.eval_every < 1:
            raise SpecError("eval_every must be >= 1")
        if self.heldout < 1:
            raise SpecError("heldout must be >= 1")
        if self.universe_dim is None:
            object.__setattr__(self, "universe_dim", self.graph.points)
        elif self.universe_dim != self.graph.points:
            # The embedding width is tied to the true universe size.
            raise SpecError("universe_dim must equal graph.points")
        if self.seed < 0:
            raise SpecError("seed must be nonnegative")

    @property
    def input_dim(self) -> int:
        # Scene nodes carry (x, y) observations after the descriptors.
        return self.graph.descriptor_dim + (2 if self.use_scene else 0)


@dataclass(frozen=True)
class TrainResult:
    model: GcnModel
    adam: AdamState
    steps: tuple
    evals: tuple


def _instance(cfg: TrainConfig, seed: int):
    """(graph, gt, scene_or_None) for one draw of the config's generator."""
    g = cfg.graph
    if cfg.use_scene:
        graph, scene = _make_scene(
            g.views, g.points, seed,
            descriptor_dim=g.descriptor_dim,
            descriptor_noise_sigma=g.descriptor_noise_sigma,
            edge_noise_sigma=g.edge_noise_sigma,
            outlier_rate=g.outlier_rate)
        return graph, scene.gt, scene
    graph, gt = gen_graph(replace(g, seed=seed))
    return graph, gt, None


def _evaluate(model: GcnModel, cfg: TrainConfig, step: int) -> dict:
    """Mean held-out error report and similarity stats at a given step."""
    l1s, l2s, stats = [], [], []
    for k in range(cfg.heldout):
        graph, gt, _ = _instance(cfg, derive_seed(cfg.seed, STREAM_HELDOUT, k))
        E = model_forward(model, augmented_operator(graph), graph.features)
        rep = compare_scores(embedding_similarity(E), gt)
        l1s.append(rep.l1)
        l2s.append(rep.l2)
        stats.append(similarity_stats(E, gt))
    return {
        "step": step,
        "l1": float(np.mean(l1s)),
        "l2": float(np.mean(l2s)),
        "same_mean": float(np.mean([s.same_mean for s in stats])),
        "same_std": float(np.mean([s.same_std for s in stats])),
        "diff_mean": float(np.mean([s.diff_mean for s in stats])),
        "diff_std": float(np.mean([s.diff_std for s in stats])),
    }


def train(cfg: TrainConfig, model: GcnModel | None = None,
          adam: AdamState | None = None, start_step: int = 0) -> TrainResult:
    """Run (or resume) a training loop.

    Passing a model/adam pair restored from a checkpoint together with the
    step count it was saved at continues the original run: instance seeds
    are keyed by global step index, so the remaining log rows match the
    uninterrupted run bit for bit.
    """
    if not 0 <= start_step < cfg.steps:
        raise SpecError("start_step must lie in [0, steps)")
    if model is None:
        if start_step != 0:
            raise SpecError("resuming needs the checkpointed model")
        model = init_model(cfg.input_dim, cfg.universe_dim,
                           hidden_dim=cfg.hidden_dim, groups=cfg.groups,
                           seed=cfg.seed, use_gn=cfg.use_groupnorm)
    if adam is None:
        adam = init_adam(parameters(model), lr0=cfg.lr0, decay=cfg.decay)

    step_rows, eval_rows = [], []
    for s in range(start_step, cfg.steps):
        graph, gt, scene = _instance(cfg, derive_seed(cfg.seed, STREAM_TRAIN, s))
        Lt = augmented_operator(graph)
        E, cache = model_forward(model, Lt, graph.features, want_cache=True)
        loss, grad = cycle_loss(graph.adjacency, E)
        cycle_val, geom_val = loss, 0.0
        if cfg.use_geometric and scene is not None and cfg.lambda_geom > 0.0:
            prior = build_prior(scene, graph)
            geom_val, g_grad = geometric_loss(prior, E)
            loss = loss + cfg.lambda_geom * geom_val
            grad = grad + cfg.lambda_geom * g_grad
        if not math.isfinite(loss):
            raise NonFiniteLoss(s + 1, loss)
        lr_used = adam.lr
        grads = model_backward(model, cache, grad)
        adam_step(adam, parameters(model), grads)
        step_rows.append({"step": s + 1, "loss": float(loss),
                          "cycle": float(cycle_val), "geom": float(geom_val),
                          "lr": float(lr_used)})
        if (s + 1) % cfg.eval_every == 0 or s + 1 == cfg.steps:
            eval_rows.append(_evaluate(model, cfg, s + 1))
    return TrainResult(model=model, adam=adam,
                       steps=tuple(step_rows), evals=tuple(eval_rows))


def _csv_line(row: dict, cols) -> str:
    parts = []
    for c in cols:
        val = row[c]
        if isinstance(val, str):
            parts.append(val)
        elif isinstance(val, (int, np.integer)):
            parts.append("%d" % val)
        else:
            parts.append("%.17g" % val)
    return ",".join(parts)


def write_train_csv(path: str, result: TrainResult) -> None:
    cols = TRAIN_HEADER.split(",")
    lines = [TRAIN_HEADER] + [_csv_line(r, cols) for r in result.steps]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_eval_csv(path: str, result: TrainResult) -> None:
    cols = EVAL_HEADER.split(",")
    lines = [EVAL_HEADER] + [_csv_line(r, cols) for r in result.evals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _ablate_label(cfg: TrainConfig, field_name: str | None) -> str:
    if field_name is None:
        return "base"
    return "%s=%s" % (field_name, getattr(cfg, field_name))


def ablate(configs: list, seeds: int = 3) -> list:
    """Run each config over several seeds; one summary row per config.

    Configs must differ in exactly one field so that the comparison
    isolates a single switch. Rows report mean and population std of the
    final held-out l1 across seeds.
    """
    if not configs:
        raise SpecError("need at least one config")
    if seeds < 3:
        raise SpecError("ablation needs >= 3 seeds")
    differing = None
    if len(configs) > 1:
        diff_fields = [f.name for f in fields(TrainConfig)
                       if len({getattr(c, f.name) for c in configs}) > 1]
        if len(diff_fields) != 1:
            raise SpecError("configs must differ in exactly one field, "
                            "got %r" % (diff_fields,))
        differing = diff_fields[0]
    rows = []
    for cfg in configs:
        finals = []
        for s in range(seeds):
            result = train(replace(cfg, seed=cfg.seed + s))
            finals.append(result.evals[-1]["l1"])
        rows.append({"config": _ablate_label(cfg, differing),
                     "seeds": seeds,
                     "mean_l1": float(np.mean(finals)),
                     "std_l1": float(np.std(finals))})
    return rows


def write_ablate_csv(path: str, rows: list) -> None:
    cols = ABLATE_HEADER.split(",")
    lines = [ABLATE_HEADER] + [_csv_line(r, cols) for r in rows]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def gradcheck(seed: int = 7, directions: int = 20, h: float = 1e-6) -> dict:
    """Directional-derivative check of the composite loss through the model.

    On a small 3-view scene, compares the analytic directional derivative
    of cycle + geometric loss against central finite differences along
    random unit directions in parameter space, with group norm on and off.
    Returns per-setting and overall max relative error.
    """
    graph, scene = _make_scene(3, 6, seed)
    prior = build_prior(scene, graph)
    Lt = augmented_operator(graph)
    A = graph.adjacency
    rng = make_rng(seed, STREAM_SOLVER)
    report = {}
    for use_gn in (True, False):
        model = init_model(graph.features.shape[1], 6, seed=seed,
                           use_gn=use_gn)
        params = parameters(model)
        base = [p.copy() for p in params]

        def composite():
            E, cache = model_forward(model, Lt, graph.features,
                                     want_cache=True)
            loss, grad = cycle_loss(A, E)
            gl, gg = geometric_loss(prior, E)
            return loss + gl, grad + gg, cache

        loss0, dE, cache = composite()
        grads = model_backward(model, cache, dE)
        worst = 0.0
        for _ in range(directions):
            u = [rng.standard_normal(p.shape) for p in params]
            norm = np.sqrt(sum(float((x * x).sum()) for x in u))
            u = [x / norm for x in u]
            analytic = sum(float((g * x).sum()) for g, x in zip(grads, u))
            for p, b, x in zip(params, base, u):
                p[...] = b + h * x
            lp, _, _ = composite()
            for p, b, x in zip(params, base, u):
                p[...] = b - h * x
            lm, _, _ = composite()
            for p, b in zip(params, base):
                p[...] = b
            fd = (lp - lm) / (2.0 * h)
            rel = abs(analytic - fd) / max(abs(fd), abs(analytic), 1e-12)
            worst = max(worst, rel)
        report["gn_on" if use_gn else "gn_off"] = worst
    report["max_rel_err"] = max(report["gn_on"], report["gn_off"])
    return report
