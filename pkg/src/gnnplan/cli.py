"""Command line: generate, train, eval, plan, verify, bench.

Every command reads a JSON config (``--config``), lets ``--seed``,
``--jobs`` and ``--out`` override it, writes the resolved config next to its
outputs as ``config.<command>.json`` and stamps each artifact with the
config hash and seed in ``manifest.<command>.json``. Nothing written by generate/train/eval/plan depends on
wall-clock time unless ``record_wall_time`` is set.
"""
import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import cspace_graph as cg
from . import env2d, models, sbp, search, verify
from .errors import ConfigError, DatasetError, DomainError, GenerationError, TrainingError
from .rng import stream

log = logging.getLogger("gnnplan")

FORMAT_VERSION = 1
TASKS = ("critical2d", "pendulum", "arm6")
MODELS = ("gnn", "gat", "gnn_cvae", "uniform", "baseline")
LOSS_HEADER = ("epoch", "train_loss", "val_loss")
METRICS_HEADER = ("model", "condition", "aggregate", "count", "mse", "accuracy")
SUMMARY_HEADER = ("sampler", "runs", "success_rate", "median_nodes", "median_collision_checks", "median_cost")


@dataclass
class ExperimentConfig:
    task: str = "critical2d"
    model: str = "gnn"
    seed: int = 0
    jobs: int = 1
    # critical2d data
    n_problems: int = 600
    n_vertices: int = 2000
    mean_degree: float = 10.0
    shift_kind: str = "random_walk"
    n_walls: list = field(default_factory=lambda: [1])
    corridor_width: float = 0.05
    wall_thickness: float = 0.12
    max_labels: int = 1
    n_blobs: int = 3
    blob_radius: float = 0.08
    # model and training
    epochs: int = 25
    lr: float = 3e-3
    lr_final: float = None
    batch_size: int = 4
    widths: list = field(default_factory=lambda: [32, 32])
    order: int = 3
    head_width: int = 32
    input_gain: list = None
    latent_dim: int = 3
    latent_samples: int = 1
    # planners
    max_iters: int = 5000
    init_seeds: int = 10
    explore: float = 0.2
    horizon: int = 64
    sigma_scale: float = 1.0
    n_eval_problems: int = 10
    eval_seeds: int = 5
    scene_seed: int = 0
    train_scenes: int = 2
    n_discs: int = 4
    record_wall_time: bool = False
    # paths (relative paths resolve against --out)
    dataset: str = "dataset.jsonl"
    graph: str = "graph.json"
    checkpoint: str = "checkpoint.json"
    resume: str = None

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        task = doc.get("task", cls.task)
        base = dict(TASK_DEFAULTS.get(task, {}))
        base.update(doc)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.n_problems < 1:
            raise ConfigError("n_problems must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("need epochs >= 0, batch_size >= 1, lr > 0")
        if self.lr_final is not None and not 0 < self.lr_final <= self.lr:
            raise ConfigError("lr_final must lie in (0, lr]")
        if self.shift_kind not in cg.EDGE_SHIFT_KINDS:
            raise ConfigError(f"shift_kind must be one of {cg.EDGE_SHIFT_KINDS}")
        if not 0.0 <= self.explore <= 1.0:
            raise ConfigError("explore must lie in [0, 1]")
        if self.n_eval_problems < 1 or self.eval_seeds < 1:
            raise ConfigError("need n_eval_problems >= 1 and eval_seeds >= 1")
        if self.task == "critical2d" and self.model in ("uniform",):
            raise ConfigError("the uniform sampler only applies to planning tasks")
        if self.task != "critical2d" and self.model in ("gat", "baseline"):
            raise ConfigError(f"model {self.model!r} is not a planning sampler")

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        # jobs only changes scheduling, never results
        doc = {k: v for k, v in self.to_dict().items() if k != "jobs"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


TASK_DEFAULTS = {
    "critical2d": {"input_gain": [1.0, 1.0, 1.0, 1.0, 6.0]},
    "pendulum": {"n_problems": 60, "epochs": 20, "batch_size": 16, "max_iters": 5000, "explore": 0.5,
                 "sigma_scale": 2.5},
    "arm6": {"n_problems": 120, "epochs": 20, "batch_size": 16, "max_iters": 2000, "n_eval_problems": 12,
             "eval_seeds": 10},
}


# ---------------------------------------------------------------------------
# output helpers


class Run:
    """Output directory plus the manifest that records every artifact."""

    def __init__(self, cfg, out, command):
        self.cfg = cfg
        self.out = out
        self.command = command
        os.makedirs(out, exist_ok=True)
        self.artifacts = {}

    def path(self, name):
        return name if os.path.isabs(name) else os.path.join(self.out, name)

    def write(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)
        self.artifacts[os.path.basename(name)] = hashlib.sha256(text.encode()).hexdigest()

    def write_json(self, name, doc):
        self.write(name, json.dumps(doc, sort_keys=True, indent=1) + "\n")

    def finish(self, **info):
        self.write_json(f"config.{self.command}.json", self.cfg.to_dict())
        manifest_name = f"manifest.{self.command}.json"
        doc = {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        doc.update(info)
        self.write_json(manifest_name, doc)
        return doc


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    return f"{v:.10g}" if np.isfinite(v) else "nan"


def _read_text(path, what):
    if not os.path.exists(path):
        raise DatasetError(f"{what} not found: {path}")
    with open(path) as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# shared builders


def build_graph(cfg):
    pts = cg.halton_points(cfg.n_vertices, 2)
    r = cg.radius_for_degree(pts, cfg.mean_degree)
    return cg.build_r_disc_graph(pts, r, shift_kind=cfg.shift_kind)


def build_model(cfg, in_features, out_dim):
    common = dict(widths=tuple(cfg.widths), order=cfg.order, head_width=cfg.head_width)
    gain = cfg.input_gain if cfg.task == "critical2d" else None
    if cfg.model == "gnn_cvae":
        return models.GnnCvae(in_features, out_dim, seed=cfg.seed, latent_dim=cfg.latent_dim, input_gain=gain,
                              **common)
    if cfg.model in ("gnn", "gat"):
        return models.GraphRegressor(in_features, out_dim, seed=cfg.seed, kind=cfg.model, input_gain=gain,
                                     **common)
    raise ConfigError(f"model {cfg.model!r} has nothing to train")


def critical_examples(graph, records, split=None, corrupt=None):
    """One example per problem holding all of its labels. ``corrupt`` is
    ``(seed, n_blobs, r_max)``; blobs avoid the start, goal and labels."""
    out = []
    for pid, rs in search.group_by_problem(records).items():
        if split is not None and rs[0].split != split:
            continue
        problem = rs[0].problem()
        labels = np.array([r.label for r in rs], dtype=np.float64)
        if corrupt is not None:
            seed, n_blobs, r_max = corrupt
            keep = np.vstack([problem.x_init, problem.x_goal, labels])
            world = env2d.corrupt_with_blobs(problem.world, int(stream(seed, "eval-blobs", pid).integers(2**63)),
                                             n_blobs, r_max, keep_free=keep)
            problem = env2d.PlanningProblem(world, problem.x_init, problem.x_goal)
        out.append(models.Example(graph.shift, cg.make_features(graph, problem), labels, pid))
    return out


def planner_examples(task, records, split):
    return [sbp.record_example(task, r) for r in records if r.split == split]


def arm_scenes(cfg):
    """Training scenes followed by the held-out evaluation scene."""
    return [sbp.generate_arm_scene(int(stream(cfg.scene_seed, "arm-scenes", i).integers(2**62)), cfg.n_discs)
            for i in range(cfg.train_scenes + 1)]


def eval_problems(cfg):
    first = cfg.n_problems
    ids = range(first, first + cfg.n_eval_problems)
    if cfg.task == "pendulum":
        return [sbp.sample_pendulum_problem(cfg.seed, i) for i in ids]
    scene = arm_scenes(cfg)[-1]
    return [sbp.sample_arm_problem(scene, cfg.seed, i) for i in ids]


def planner_fn(cfg):
    if cfg.task == "pendulum":
        return sbp.rrt_plan
    return sbp.birrt_plan


def _load_checkpoint(cfg, run):
    text = _read_text(run.path(cfg.checkpoint), "checkpoint")
    model, doc = models.load_model(text)
    return model, doc


def _sampler(cfg, run):
    if cfg.model == "uniform":
        return sbp.UniformSampler()
    model, doc = _load_checkpoint(cfg, run)
    sigma = doc.get("sampler_sigma")
    if sigma is not None:
        sigma = cfg.sigma_scale * np.asarray(sigma)
    return sbp.LearnedSampler(model, sigma, explore=cfg.explore, horizon=cfg.horizon)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg, out):
    run = Run(cfg, out, "generate")
    if cfg.task == "critical2d":
        graph = build_graph(cfg)
        records = search.build_dataset(cfg.n_problems, cfg.seed, graph, tuple(cfg.n_walls), cfg.corridor_width,
                                       cfg.max_labels, cfg.jobs, cfg.wall_thickness)
        run.write(cfg.graph, graph.to_json() + "\n")
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
        problems = search.group_by_problem(records)
        split_problems = {s: sum(1 for rs in problems.values() if rs[0].split == s) for s in ("train", "val", "test")}
    else:
        scene = arm_scenes(cfg)[:-1] if cfg.task == "arm6" else None
        if scene is not None:
            run.write_json("scenes.json", [s.to_dict() for s in arm_scenes(cfg)])
        records = sbp.collect_offline_dataset(cfg.n_problems, cfg.seed, cfg.task, scene, cfg.max_iters,
                                              cfg.init_seeds, cfg.jobs)
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
        pids = {}
        for r in records:
            pids.setdefault(r.problem_id, r.split)
        split_problems = {s: sum(1 for v in pids.values() if v == s) for s in ("train", "val", "test")}
        problems = pids
    run.write(cfg.dataset, "".join(line + "\n" for line in lines))
    split_samples = {s: sum(1 for r in records if r.split == s) for s in ("train", "val", "test")}
    return run.finish(
        task=cfg.task,
        attempted=cfg.n_problems,
        problems=len(problems),
        samples=len(records),
        split_problems=split_problems,
        split_samples=split_samples,
    )


def _load_records(cfg, run):
    path = run.path(cfg.dataset)
    _read_text(path, "dataset")
    if cfg.task == "critical2d":
        return search.read_records(path)
    return sbp.read_records(path)


def _train_val(cfg, run, records):
    if cfg.task == "critical2d":
        graph = cg.CSpaceGraph.from_json(_read_text(run.path(cfg.graph), "graph"))
        return critical_examples(graph, records, "train"), critical_examples(graph, records, "val")
    return planner_examples(cfg.task, records, "train"), planner_examples(cfg.task, records, "val")


def cmd_train(cfg, out):
    run = Run(cfg, out, "train")
    records = _load_records(cfg, run)
    train, val = _train_val(cfg, run, records)
    if not train:
        raise DatasetError("training split is empty")
    if cfg.resume:
        trainer = models.Trainer.from_checkpoint(_read_text(run.path(cfg.resume), "resume checkpoint"))
        trainer.lr, trainer.lr_final, trainer.anneal_epochs = cfg.lr, cfg.lr_final, cfg.epochs
    else:
        model = build_model(cfg, train[0].x.shape[1], train[0].labels.shape[1])
        trainer = models.Trainer(model, cfg.seed, lr=cfg.lr, batch_size=cfg.batch_size,
                                 latent_samples=cfg.latent_samples, lr_final=cfg.lr_final, anneal_epochs=cfg.epochs)
    t0 = time.perf_counter()
    while trainer.state.epoch < cfg.epochs:
        tl, vl = trainer.run_epoch(train, val)
        log.info("epoch %d train %.6f val %.6f", trainer.state.epoch - 1, tl, vl)
    seconds = time.perf_counter() - t0
    extra = {}
    if cfg.task != "critical2d" and not isinstance(trainer.model, models.GnnCvae):
        extra["sampler_sigma"] = sbp.residual_scale(trainer.model, val or train).tolist()
    text = trainer.checkpoint()
    if extra:
        doc = json.loads(text)
        doc.update(extra)
        text = json.dumps(doc, sort_keys=True)
    run.write(cfg.checkpoint, text + "\n")
    rows = [(e, _fmt(tl), _fmt(vl)) for e, tl, vl in trainer.state.history]
    run.write("loss.csv", csv_text(LOSS_HEADER, rows))
    info = {"epochs": trainer.state.epoch, "train_examples": len(train), "val_examples": len(val)}
    if cfg.record_wall_time:
        info["train_seconds"] = seconds
    return run.finish(**info)


def _accuracy_rows(name, model, examples, condition):
    per_problem = []
    sq, count = 0.0, 0
    for ex in examples:
        y_hat = np.atleast_2d(model.predict(ex.shift, ex.x))
        err = ((y_hat - ex.labels) ** 2).sum(axis=1)
        sq += float(err.sum())
        count += err.shape[0]
        per_problem.append(float(err.mean()))
    sample_mse = sq / max(count, 1)
    problem_mse = float(np.mean(per_problem)) if per_problem else float("nan")
    return [
        (name, condition, "sample", count, _fmt(sample_mse), _fmt(max(0.0, 1.0 - sample_mse))),
        (name, condition, "problem", len(per_problem), _fmt(problem_mse), _fmt(max(0.0, 1.0 - problem_mse))),
    ]


def cmd_eval(cfg, out):
    run = Run(cfg, out, "eval")
    if cfg.task == "critical2d":
        records = _load_records(cfg, run)
        graph = cg.CSpaceGraph.from_json(_read_text(run.path(cfg.graph), "graph"))
        train = critical_examples(graph, records, "train")
        clean = critical_examples(graph, records, "test")
        if not clean:
            raise DatasetError("test split is empty")
        corrupted = critical_examples(graph, records, "test", (cfg.seed, cfg.n_blobs, cfg.blob_radius))
        baseline = models.ConstantBaseline.fit(train)
        rows = []
        evaluated = [("baseline", baseline)]
        if cfg.model != "baseline":
            model, _ = _load_checkpoint(cfg, run)
            evaluated.append((model.kind, model))
        for name, m in evaluated:
            rows += _accuracy_rows(name, m, clean, "clean")
            rows += _accuracy_rows(name, m, corrupted, "corrupted")
        run.write("metrics.csv", csv_text(METRICS_HEADER, rows))
        return run.finish(test_problems=len(clean))
    problems = eval_problems(cfg)
    samplers = [sbp.UniformSampler()]
    if cfg.model != "uniform":
        samplers.append(_sampler(cfg, run))
    return _plan_and_write(cfg, run, problems, samplers, summary=True)


def _plan_and_write(cfg, run, problems, samplers, summary):
    seeds = [int(stream(cfg.seed, "eval-seeds", i).integers(2**31)) for i in range(cfg.eval_seeds)]
    traces = sbp.benchmark(problems, samplers, seeds, planner_fn(cfg), cfg.max_iters, cfg.jobs)
    wall = cfg.record_wall_time
    run.write("runs.csv", sbp.runs_csv(traces, with_time=wall))
    run.write("traces.jsonl", "".join(json.dumps(t.to_dict(with_time=wall), sort_keys=True) + "\n" for t in traces))
    info = {"runs": len(traces), "problems": [p.problem_id for p in problems], "seeds": seeds}
    if summary:
        stats = sbp.summarize(traces)
        rows = [(name, s["runs"], _fmt(s["success_rate"]), _fmt(s["median_nodes"]),
                 _fmt(s["median_collision_checks"]), _fmt(s["median_cost"])) for name, s in stats.items()]
        run.write("summary.csv", csv_text(SUMMARY_HEADER, rows))
        info["summary"] = stats
    return run.finish(**info)


def cmd_plan(cfg, out):
    if cfg.task == "critical2d":
        raise ConfigError("plan runs the pendulum or arm planners")
    run = Run(cfg, out, "plan")
    return _plan_and_write(cfg, run, eval_problems(cfg), [_sampler(cfg, run)], summary=False)


def cmd_verify(cfg, out):
    run = Run(cfg, out, "verify")
    report = verify.run_all(cfg.seed)
    run.write_json("report.json", report)
    run.finish(passed=report["passed"])
    return report


def cmd_bench(cfg, out):
    from . import bench

    run = Run(cfg, out, "bench")
    rows = bench.run_kernel_bench(cfg.seed)
    run.write("bench.csv", csv_text(bench.BENCH_HEADER, rows))
    return run.finish()


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "plan": cmd_plan,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def load_config(path=None, seed=None, jobs=None):
    doc = {}
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    if seed is not None:
        doc["seed"] = seed
    if jobs is not None:
        doc["jobs"] = jobs
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parser():
    p = argparse.ArgumentParser(prog="gnnplan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        s.add_argument("--jobs", type=int, help="parallel worker processes")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.jobs)
        result = COMMANDS[args.command](cfg, args.out)
    except (ConfigError, DatasetError, DomainError, GenerationError, TrainingError, ValueError) as exc:
        print(f"gnnplan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.command == "verify" and not result["passed"]:
        for suite in result["suites"]:
            for f in suite["failures"]:
                print(f"{suite['name']}: {json.dumps(f, sort_keys=True)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
