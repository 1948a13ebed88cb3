"""End-to-end acceptance checks. Each test records one PASS/FAIL line that
the terminal summary prints under "acceptance criteria"."""
import csv
import json
import time

import numpy as np

from gnnplan import cli, models, verify
from gnnplan import cspace_graph as cg
from gnnplan.diffkernel import gaussian_kl
from gnnplan.rng import stream


def line(report, n, ok, detail):
    report(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def run_cli(tmp, cmd, cfg, out="run"):
    path = tmp / f"{cmd}-{cfg.get('model', 'x')}.json"
    path.write_text(json.dumps(cfg))
    code = cli.main([cmd, "--config", str(path), "--out", str(tmp / out)])
    assert code == 0, f"{cmd} exited with {code}"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_1_equivariance(acceptance_report):
    t0 = time.perf_counter()
    res = verify.equivariance_suite(seed=0, trials=200, max_nodes=50)
    secs = time.perf_counter() - t0
    m = res.metrics
    ok = (res.passed and m["max_layer_deviation"] <= 1e-10 and m["max_model_deviation"] <= 1e-8 and secs < 30)
    line(acceptance_report, 1, ok, f"layers {m['max_layer_deviation']:.2e} <= 1e-10, "
         f"models {m['max_model_deviation']:.2e} <= 1e-8, {m['trials']} trials in {secs:.1f}s (< 30s)")
    assert ok


def test_2_gradients(acceptance_report):
    t0 = time.perf_counter()
    res = verify.gradient_suite(seed=0, tolerance=1e-4, fragments=50)
    secs = time.perf_counter() - t0
    worst = max(res.metrics["max_rel_error"].values())
    ok = res.passed and res.metrics["fragments"] >= 50 and worst <= 1e-4 and secs < 120
    line(acceptance_report, 2, ok, f"{res.metrics['fragments']} fragments, worst relative error {worst:.2e} "
         f"<= 1e-4 in {secs:.1f}s (< 120s)")
    assert ok


def test_3_search_oracles(acceptance_report):
    t0 = time.perf_counter()
    res = verify.oracle_suite(seed=0, trials=500)
    secs = time.perf_counter() - t0
    ok = res.passed and res.metrics["graphs"] == 500 and secs < 60
    line(acceptance_report, 3, ok, f"{res.metrics['graphs']} graphs, {len(res.failures)} mismatches "
         f"in {secs:.1f}s (< 60s)")
    assert ok


def test_4_kl_closed_form_matches_monte_carlo(acceptance_report):
    rng = stream(0, "acceptance-kl")
    worst = 0.0
    for i in range(20):
        n = int(rng.integers(10, 40))
        g = verify._random_graph(rng, n)
        cvae = models.GnnCvae(3, 2, seed=i, widths=(8, 8), head_width=8, latent_dim=3)
        mu, logvar = cvae.encode(g.shift, rng.standard_normal((n, 3)), rng.standard_normal(2))
        kl = gaussian_kl(mu, logvar)[0]
        # antithetic pairs cancel the noise term linear in eps; still 1e5 draws
        eps = rng.standard_normal((50_000, mu.shape[0]))
        z = mu + np.exp(0.5 * logvar) * np.vstack([eps, -eps])
        log_q = -0.5 * (((z - mu) ** 2) / np.exp(logvar) + logvar).sum(axis=1)
        log_p = -0.5 * (z**2).sum(axis=1)
        worst = max(worst, abs(float(np.mean(log_q - log_p)) - kl) / kl)
    ok = worst <= 0.02
    line(acceptance_report, 4, ok, f"worst relative gap {worst:.4f} <= 0.02 over 20 encoder outputs")
    assert ok


def test_5_halton_dispersion(acceptance_report):
    halton = cg.dispersion(cg.halton_points(2000, 2), probes=400)
    uniform = [cg.dispersion(stream(0, "acceptance-uniform", i).random((2000, 2)), probes=400) for i in range(20)]
    ok = halton < np.mean(uniform)
    line(acceptance_report, 5, ok, f"Halton {halton:.4f} < uniform mean {np.mean(uniform):.4f}")
    assert ok


def _accuracy(rows, model, condition):
    r = next(r for r in rows if r["model"] == model and r["condition"] == condition and r["aggregate"] == "sample")
    return float(r["accuracy"])


def test_6_critical_sample_learning(tmp_path, acceptance_report):
    base = {"task": "critical2d"}
    run_cli(tmp_path, "generate", base)
    t0 = time.perf_counter()
    run_cli(tmp_path, "train", dict(base, model="gnn"))
    run_cli(tmp_path, "eval", dict(base, model="gnn"))
    gnn_rows = read_csv(tmp_path / "run" / "metrics.csv")
    cvae = dict(base, model="gnn_cvae", checkpoint="cvae.json")
    run_cli(tmp_path, "train", cvae)
    run_cli(tmp_path, "eval", cvae)
    cvae_rows = read_csv(tmp_path / "run" / "metrics.csv")
    secs = time.perf_counter() - t0
    b_clean = _accuracy(gnn_rows, "baseline", "clean")
    b_cor = _accuracy(cvae_rows, "baseline", "corrupted")
    g_clean = _accuracy(gnn_rows, "gnn", "clean")
    c_cor = _accuracy(cvae_rows, "gnn_cvae", "corrupted")
    ok = g_clean >= b_clean + 0.05 and c_cor >= b_cor + 0.05 and secs <= 900
    line(acceptance_report, 6, ok, f"GNN clean {g_clean:.4f} vs baseline {b_clean:.4f} (+{g_clean - b_clean:.4f}); "
         f"GNN-CVAE corrupted {c_cor:.4f} vs baseline {b_cor:.4f} (+{c_cor - b_cor:.4f}); need +0.05 each; "
         f"train+eval {secs:.0f}s (<= 900s)")
    assert ok


def _summary(tmp):
    return {r["sampler"]: r for r in read_csv(tmp / "run" / "summary.csv")}


def test_7_pendulum_sampler(tmp_path, acceptance_report):
    cfg = {"task": "pendulum", "model": "gnn"}
    for cmd in ("generate", "train", "eval"):
        run_cli(tmp_path, cmd, cfg)
    s = _summary(tmp_path)
    u, g = s["uniform"], s["gnn"]
    pairs = int(g["runs"])
    nodes_ok = float(g["median_nodes"]) <= float(u["median_nodes"])
    succ_gap = abs(float(g["success_rate"]) - float(u["success_rate"]))
    cost_gap = abs(float(g["median_cost"]) - float(u["median_cost"])) / float(u["median_cost"])
    ok = pairs >= 50 and nodes_ok and succ_gap <= 0.05 and cost_gap <= 0.2
    line(acceptance_report, 7, ok, f"{pairs} pairs; median nodes GNN {float(g['median_nodes']):.1f} vs uniform "
         f"{float(u['median_nodes']):.1f}; success gap {100 * succ_gap:.1f} pp (<= 5); cost gap "
         f"{100 * cost_gap:.1f}% (<= 20%)")
    assert ok


def test_8_arm_sampler(tmp_path, acceptance_report):
    cfg = {"task": "arm6", "model": "gnn"}
    for cmd in ("generate", "train", "eval"):
        run_cli(tmp_path, cmd, cfg)
    s = _summary(tmp_path)
    u, g = s["uniform"], s["gnn"]
    pairs = int(g["runs"])
    ok = pairs >= 30 and float(g["median_collision_checks"]) <= float(u["median_collision_checks"])
    line(acceptance_report, 8, ok, f"{pairs} pairs on the held-out scene; median collision checks GNN "
         f"{float(g['median_collision_checks']):.1f} vs uniform {float(u['median_collision_checks']):.1f}")
    assert ok


def test_9_energy_conservation(acceptance_report):
    res = verify.energy_suite(duration=10.0)
    drift = res.metrics["max_relative_drift"]
    ok = res.passed and drift <= 1e-6
    line(acceptance_report, 9, ok, f"max relative drift over 10 s {drift:.2e} <= 1e-6")
    assert ok


SMALL = {
    "critical2d": {"task": "critical2d", "model": "gnn", "n_problems": 40, "n_vertices": 400, "epochs": 2,
                   "widths": [8], "head_width": 8},
    "pendulum": {"task": "pendulum", "model": "gnn", "n_problems": 4, "epochs": 2, "widths": [8],
                 "head_width": 8, "n_eval_problems": 2, "eval_seeds": 2},
    "arm6": {"task": "arm6", "model": "gnn", "n_problems": 4, "epochs": 2, "widths": [8], "head_width": 8,
             "max_iters": 800, "n_eval_problems": 2, "eval_seeds": 2},
}
ARTIFACTS = {
    "critical2d": ["graph.json", "dataset.jsonl", "checkpoint.json", "loss.csv", "metrics.csv"],
    "pendulum": ["dataset.jsonl", "checkpoint.json", "loss.csv", "runs.csv", "traces.jsonl", "summary.csv"],
    "arm6": ["scenes.json", "dataset.jsonl", "checkpoint.json", "loss.csv", "runs.csv", "traces.jsonl",
             "summary.csv"],
}


def test_10_reruns_are_byte_identical(tmp_path, acceptance_report):
    differing = []
    for task, cfg in SMALL.items():
        (tmp_path / task).mkdir()
        digests = []
        for out in ("a", "b"):
            for cmd in ("generate", "train", "eval"):
                run_cli(tmp_path / task, cmd, cfg, out=out)
            digests.append({n: (tmp_path / task / out / n).read_bytes() for n in ARTIFACTS[task]})
        differing += [f"{task}/{n}" for n in ARTIFACTS[task] if digests[0][n] != digests[1][n]]
    ok = not differing
    n_files = sum(len(v) for v in ARTIFACTS.values())
    line(acceptance_report, 10, ok, f"{n_files - len(differing)}/{n_files} artifacts identical on rerun"
         + (f"; differing: {', '.join(differing)}" if differing else ""))
    assert ok
