"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every subcommand
accepts --config pointing at a flat ``key = value`` file; command-line
flags override file values. The CYCLEMATCH_SEED environment variable
supplies the default seed when --seed is absent.

File outputs are reproducible bit for bit for a fixed seed, so the
runtime_s column of emitted CSVs is nan unless --time is passed; wall
clock readings are inherently unrepeatable and would break that.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import baselines, report
from .errors import CycleMatchError, UnknownKey
from .graph import augmented_operator, load_graph, save_adjacency, save_graph
from .metrics import (METRICS_HEADER, compare_scores, embedding_similarity,
                      format_metrics_row, metrics_row, score_stats,
                      similarity_stats, sweep_iterations, time_method,
                      write_metrics_csv)
from .nn import load_model, model_forward, save_model
from .synthgen import (SynthGraphSpec, gen_graph, gen_scene,
                       load_ground_truth, save_ground_truth, save_scene)
from .train import (TrainConfig, ablate, gradcheck, train, write_ablate_csv,
                    write_eval_csv, write_train_csv)

SUBCOMMANDS = ("gen-graph", "gen-scene", "train", "infer", "baseline",
               "eval", "sweep", "ablate", "gradcheck")

USAGE = ("usage: cyclematch <subcommand> [options]\n"
         "subcommands: " + " ".join(SUBCOMMANDS) + "\n"
         "common options: --seed N --config FILE; see README for the "
         "per-subcommand option list\n")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exceptions instead of
    exiting, so dispatch controls the exit code."""

    def error(self, message):
        raise _UsageError(message)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % text)


def _int_list(text: str) -> tuple:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _str_list(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def load_config(path: str, schema: dict) -> dict:
    """Parse a flat ``key = value`` config file against a converter table.

    Lines may carry ``#`` comments. Unknown keys raise UnknownKey and
    unconvertible values raise TypeError, both naming the offending line.
    """
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TypeError("%s: line %d: expected 'key = value'"
                                % (path, lineno))
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in schema:
                raise UnknownKey("%s: line %d: unknown key %r"
                                 % (path, lineno, key))
            try:
                values[key] = schema[key](val)
            except ValueError:
                raise TypeError("%s: line %d: bad value %r for key %r"
                                % (path, lineno, val, key))
    return values


# Per-subcommand option tables: key -> (converter, default). The converter
# also types config-file values, so flag and file agree on parsing.

_GEN_KEYS = {
    "views": (int, 3),
    "points": (int, 10),
    "descriptor_dim": (int, 16),
    "noise": (float, 0.25),
    "edge_noise": (float, 0.0),
    "outliers": (float, 0.0),
}

_TRAIN_KEYS = dict(_GEN_KEYS, **{
    "steps": (int, 1000),
    "lr0": (float, 1e-4),
    "decay": (float, 0.9999),
    "lambda_geom": (float, 1.0),
    "scene": (_bool, False),
    "geometric": (_bool, False),
    "groupnorm": (_bool, True),
    "eval_every": (int, 100),
    "hidden": (int, 64),
    "groups": (int, 4),
    "heldout": (int, 5),
})


def _add_option(sp: argparse.ArgumentParser, key: str, conv) -> None:
    flag = "--" + key.replace("_", "-")
    if conv is _bool:
        sp.add_argument(flag, dest=key, action="store_const", const=True,
                        default=None)
        sp.add_argument("--no-" + key.replace("_", "-"), dest=key,
                        action="store_const", const=False, default=None)
    else:
        sp.add_argument(flag, dest=key, type=conv, default=None)


def _add_common(sp: argparse.ArgumentParser, keys: dict) -> None:
    for key, (conv, _default) in keys.items():
        _add_option(sp, key, conv)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--config", default=None)


def _merge(ns: argparse.Namespace, keys: dict) -> dict:
    """Resolve each option: explicit flag, then config file, then default."""
    schema = {k: conv for k, (conv, _d) in keys.items()}
    schema["seed"] = int
    cfg = load_config(ns.config, schema) if ns.config else {}
    out = {}
    for key, (_conv, default) in keys.items():
        val = getattr(ns, key)
        if val is None:
            val = cfg.get(key, default)
        out[key] = val
    seed = ns.seed
    if seed is None:
        seed = cfg.get("seed")
    if seed is None:
        seed = int(os.environ.get("CYCLEMATCH_SEED", "0"))
    out["seed"] = seed
    return out


def _graph_spec(opts: dict) -> SynthGraphSpec:
    return SynthGraphSpec(views=opts["views"], points=opts["points"],
                          descriptor_dim=opts["descriptor_dim"],
                          descriptor_noise_sigma=opts["noise"],
                          edge_noise_sigma=opts["edge_noise"],
                          outlier_rate=opts["outliers"],
                          seed=opts["seed"])


def _sibling(path: str, ext: str) -> str:
    return os.path.splitext(path)[0] + ext


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_gen_graph(ns) -> int:
    opts = _merge(ns, _GEN_KEYS)
    graph, gt = gen_graph(_graph_spec(opts))
    save_graph(graph, ns.out)
    save_ground_truth(gt, _sibling(ns.out, ".gtrf"))
    print("wrote %s and %s (n=%d, v=%d)"
          % (ns.out, _sibling(ns.out, ".gtrf"), graph.n, graph.v))
    return 0


def cmd_gen_scene(ns) -> int:
    opts = _merge(ns, _GEN_KEYS)
    graph, scene = gen_scene(opts["views"], opts["points"], opts["seed"],
                             descriptor_dim=opts["descriptor_dim"],
                             descriptor_noise_sigma=opts["noise"],
                             edge_noise_sigma=opts["edge_noise"],
                             outlier_rate=opts["outliers"])
    save_scene(scene, ns.out)
    save_graph(graph, _sibling(ns.out, ".cgrf"))
    save_ground_truth(scene.gt, _sibling(ns.out, ".gtrf"))
    print("wrote %s plus .cgrf/.gtrf siblings (n=%d, v=%d)"
          % (ns.out, graph.n, graph.v))
    return 0


def cmd_train(ns) -> int:
    opts = _merge(ns, _TRAIN_KEYS)
    cfg = TrainConfig(steps=opts["steps"],
                      graph=_graph_spec(opts),
                      use_scene=opts["scene"],
                      lr0=opts["lr0"], decay=opts["decay"],
                      lambda_geom=opts["lambda_geom"],
                      use_geometric=opts["geometric"],
                      use_groupnorm=opts["groupnorm"],
                      eval_every=opts["eval_every"],
                      seed=opts["seed"],
                      hidden_dim=opts["hidden"], groups=opts["groups"],
                      heldout=opts["heldout"])
    model = adam = None
    if ns.init:
        model, adam = load_model(ns.init)
    result = train(cfg, model=model, adam=adam, start_step=ns.start_step)
    out = _outdir(ns.out)
    save_model(result.model, os.path.join(out, "model.gcnm"), result.adam)
    write_train_csv(os.path.join(out, "train_log.csv"), result)
    write_eval_csv(os.path.join(out, "eval_log.csv"), result)
    report.training_figure(result, os.path.join(out, "training.png"))
    last = result.evals[-1]
    print("final step %d: held-out l1 %.6g, same %.4f, diff %.4f"
          % (last["step"], last["l1"], last["same_mean"], last["diff_mean"]))
    print("wrote model.gcnm, train_log.csv, eval_log.csv, training.png in %s"
          % out)
    return 0


def cmd_infer(ns) -> int:
    graph = load_graph(ns.graph)
    model, _adam = load_model(ns.model)
    E = model_forward(model, augmented_operator(graph), graph.features)
    out = _outdir(ns.out)
    emb_path = os.path.join(out, "embedding.txt")
    with open(emb_path, "w") as fh:
        for row in E:
            fh.write(" ".join("%.17g" % x for x in row) + "\n")
    scores_path = os.path.join(out, "scores.cgrf")
    save_adjacency(embedding_similarity(E), graph.view_of, graph.v,
                   scores_path)
    print("wrote %s and %s (n=%d, d=%d)"
          % (emb_path, scores_path, E.shape[0], E.shape[1]))
    return 0


def _baseline_run(method: str, graph, d: int, iters: int, mu: float,
                  step, seed: int):
    A = graph.adjacency
    if method == "spectral":
        return baselines.spectral(A, d)
    if method == "matchals":
        return baselines.matchals(A, d, iters, mu=mu)
    return baselines.pgdds(A, d, graph.view_of, iters, step=step)


def cmd_baseline(ns) -> int:
    graph = load_graph(ns.graph)
    gt = load_ground_truth(ns.gt) if ns.gt else None
    if gt is None and ns.dim is None:
        raise _UsageError("baseline needs --gt or --dim to fix the "
                          "universe dimension")
    d = gt.universe_dim if gt is not None else ns.dim
    seed = ns.seed if ns.seed is not None else int(
        os.environ.get("CYCLEMATCH_SEED", "0"))
    sm = _baseline_run(ns.method, graph, d, ns.iters, ns.mu, ns.step, seed)
    out = _outdir(ns.out)
    scores_path = os.path.join(out, "%s_scores.cgrf" % ns.method)
    save_adjacency(sm.S, graph.view_of, graph.v, scores_path)
    l1 = l2 = None
    stats = None
    if gt is not None:
        rep = compare_scores(sm, gt)
        l1, l2 = rep.l1, rep.l2
        stats = score_stats(sm.S, gt)
    row = metrics_row(ns.method, l1, l2, sm.wall_time if ns.time else None,
                      views=graph.v, points=d, iters=sm.iterations,
                      seed=seed, stats=stats)
    write_metrics_csv(os.path.join(out, "metrics.csv"), [row])
    print(METRICS_HEADER)
    print(format_metrics_row(row))
    return 0


def cmd_eval(ns) -> int:
    graph = load_graph(ns.graph)
    gt = load_ground_truth(ns.gt)
    if ns.embedding == "identity":
        method = "identity"
        E = graph.features
    else:
        method = "gcn"
        model, _adam = load_model(ns.embedding)
        E = model_forward(model, augmented_operator(graph), graph.features)
    elapsed = None
    if ns.time:
        elapsed = time_method(lambda: embedding_similarity(E))
    rep = compare_scores(embedding_similarity(E), gt, elapsed or 0.0)
    stats = similarity_stats(E, gt)
    row = metrics_row(method, rep.l1, rep.l2, elapsed,
                      views=graph.v, points=gt.universe_dim, stats=stats)
    print(METRICS_HEADER)
    print(format_metrics_row(row))
    return 0


def cmd_sweep(ns) -> int:
    opts = _merge(ns, _GEN_KEYS)
    rows = []
    for inst in range(ns.instances):
        spec = replace(_graph_spec(opts), seed=opts["seed"] + inst)
        graph, gt = gen_graph(spec)
        meta = {"views": spec.views, "points": spec.points,
                "noise": spec.descriptor_noise_sigma,
                "outliers": spec.outlier_rate, "seed": spec.seed}
        for method in ns.methods:
            rows.extend(sweep_iterations(method, graph.adjacency,
                                         gt.universe_dim, ns.iters, gt,
                                         view_of=graph.view_of, meta=meta))
    if not ns.time:
        rows = [dict(r, runtime_s=None) for r in rows]
    out = _outdir(ns.out)
    write_metrics_csv(os.path.join(out, "sweep.csv"), rows)
    report.sweep_figure(rows, os.path.join(out, "sweep.png"))
    print("wrote sweep.csv and sweep.png in %s (%d rows)" % (out, len(rows)))
    return 0


def cmd_ablate(ns) -> int:
    opts = _merge(ns, _TRAIN_KEYS)
    scene = opts["scene"] or ns.flag == "geometric"
    base = dict(steps=opts["steps"], graph=_graph_spec(opts),
                use_scene=scene, lr0=opts["lr0"], decay=opts["decay"],
                lambda_geom=opts["lambda_geom"],
                eval_every=opts["steps"], seed=opts["seed"],
                hidden_dim=opts["hidden"], groups=opts["groups"],
                heldout=opts["heldout"])
    if ns.flag == "geometric":
        configs = [TrainConfig(use_geometric=True,
                               use_groupnorm=opts["groupnorm"], **base),
                   TrainConfig(use_geometric=False,
                               use_groupnorm=opts["groupnorm"], **base)]
    else:
        configs = [TrainConfig(use_groupnorm=True,
                               use_geometric=opts["geometric"], **base),
                   TrainConfig(use_groupnorm=False,
                               use_geometric=opts["geometric"], **base)]
    rows = ablate(configs, seeds=ns.seeds)
    out = _outdir(ns.out)
    write_ablate_csv(os.path.join(out, "ablate.csv"), rows)
    report.ablation_figure(rows, os.path.join(out, "ablate.png"))
    for r in rows:
        print("%s: final held-out l1 %.6g +- %.6g over %d seeds"
              % (r["config"], r["mean_l1"], r["std_l1"], r["seeds"]))
    print("wrote ablate.csv and ablate.png in %s" % out)
    return 0


def cmd_gradcheck(ns) -> int:
    seed = ns.seed if ns.seed is not None else int(
        os.environ.get("CYCLEMATCH_SEED", "0"))
    rep = gradcheck(seed=seed, directions=ns.directions)
    print("gradcheck seed=%d directions=%d" % (seed, ns.directions))
    print("  group norm on:  max rel err %.3e" % rep["gn_on"])
    print("  group norm off: max rel err %.3e" % rep["gn_off"])
    print("  overall:        max rel err %.3e" % rep["max_rel_err"])
    if rep["max_rel_err"] > 1e-4:
        raise CycleMatchError("gradient check failed: %.3e > 1e-4"
                              % rep["max_rel_err"])
    print("OK")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cyclematch", add_help=True)
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("gen-graph", help="generate a synthetic graph")
    _add_common(sp, _GEN_KEYS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_graph)

    sp = sub.add_parser("gen-scene", help="generate a calibrated scene")
    _add_common(sp, _GEN_KEYS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_scene)

    sp = sub.add_parser("train", help="train the network")
    _add_common(sp, _TRAIN_KEYS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--init", default=None,
                    help="checkpoint to resume from")
    sp.add_argument("--start-step", type=int, default=0)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("infer", help="embed a graph with a trained model")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("baseline", help="run a baseline solver")
    sp.add_argument("--method", required=True,
                    choices=("spectral", "matchals", "pgdds"))
    sp.add_argument("--graph", required=True)
    sp.add_argument("--gt", default=None)
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--iters", type=int, default=50)
    sp.add_argument("--mu", type=float, default=baselines.MATCHALS_MU)
    sp.add_argument("--step", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--time", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_baseline)

    sp = sub.add_parser("eval", help="evaluate an embedding against truth")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--embedding", required=True,
                    help="'identity' or a .gcnm checkpoint path")
    sp.add_argument("--time", action="store_true")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("sweep", help="iteration sweep for solvers")
    _add_common(sp, _GEN_KEYS)
    sp.add_argument("--methods", type=_str_list,
                    default=("matchals", "pgdds"))
    sp.add_argument("--iters", type=_int_list, default=(5, 15, 25, 50))
    sp.add_argument("--instances", type=int, default=1)
    sp.add_argument("--time", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("ablate", help="one-switch ablation study")
    _add_common(sp, _TRAIN_KEYS)
    sp.add_argument("--flag", required=True,
                    choices=("geometric", "groupnorm"))
    sp.add_argument("--seeds", type=int, default=3)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--directions", type=int, default=20)
    sp.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(args)
        if getattr(ns, "command", None) is None:
            sys.stderr.write(USAGE)
            return 1
        for m in ns.methods if hasattr(ns, "methods") else ():
            if m not in ("matchals", "pgdds"):
                raise _UsageError("unknown sweep method %r" % m)
        return ns.fn(ns)
    except _UsageError as exc:
        sys.stderr.write(USAGE)
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except CycleMatchError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2
    except (OSError, ValueError, TypeError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
