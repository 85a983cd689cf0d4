"""Acceptance suite: one test per release criterion, at stated tolerances.

Each criterion prints a single [PASS]/[FAIL] line (run with -s or check the
captured output). The end-to-end criterion drives the real CLI on the golden
synthetic recipe: 4 classes, 16 dims, 200 samples per class, separation 8,
trace lr 0.01 so the epoch-10 reference snapshot is mid-training (the
protocol extracts metrics from an early model, not a converged one).
"""

import csv
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from coresel import (
    LabelVector,
    SubmodularObjective,
    brute_force_optimum,
    budget_from_fraction,
    deepfool_iterative,
    deepfool_margin_linear,
    el2n_score,
    entropy_score,
    evaluate,
    forgetting_count,
    generate_synthetic,
    grand_score,
    greedy_maximize,
    k_center_greedy,
    least_confidence,
    load_artifact,
    margin_score,
    method_names,
    omp_solve,
    pairwise_distance,
    run_method,
    similarity_from_features,
    train,
    SyntheticSpec,
    TrainConfig,
)
from coresel.cli import main
from coresel.trainer import analytic_gradients

from helpers import make_trace, random_softmax, random_trace
from test_trainer import finite_difference_gradients

GOLDEN_TRACE_FLAGS = [
    "trace", "--synthetic", "c4-n200-d16-sep8", "--epochs", "20",
    "--ref-epoch", "10", "--seed", "1", "--val-fraction", "0.2", "--lr", "0.01",
]


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def timed(budget_s):
    """Context manager asserting the criterion's runtime budget."""
    class _Timer:
        def __enter__(self):
            self.start = time.perf_counter()
            return self

        def __exit__(self, *exc):
            self.seconds = time.perf_counter() - self.start
            assert self.seconds < budget_s, f"took {self.seconds:.1f}s, budget {budget_s}s"
            return False

    return _Timer()


@pytest.fixture(scope="module")
def golden(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden") / "artifact"
    rc = main(GOLDEN_TRACE_FLAGS + ["-o", str(out)])
    assert rc == 0
    return out


def test_c01_score_formula_suite():
    with timed(1.0) as t:
        def one(fn, softmax, labels=(0,)):
            return fn(make_trace(np.asarray(softmax, dtype=np.float32),
                                 list(labels))).scores[0]

        # analytic extremes, attained exactly
        assert one(least_confidence, [[1.0, 0.0, 0.0]]) == 0.0
        assert one(entropy_score, [[1.0, 0.0, 0.0]]) == 0.0
        assert one(margin_score, [[1.0, 0.0, 0.0]]) == 0.0
        assert one(least_confidence, [[0.25] * 4]) == pytest.approx(0.75, abs=1e-7)
        assert one(entropy_score, [[0.25] * 4]) == pytest.approx(np.log(4), abs=1e-6)
        assert one(margin_score, [[0.5, 0.5, 0.0]]) == pytest.approx(1.0, abs=1e-7)
        # hand-computed row (0.5, 0.3, 0.2)
        row = [[0.5, 0.3, 0.2]]
        assert one(least_confidence, row) == pytest.approx(0.5, abs=1e-6)
        assert one(entropy_score, row) == pytest.approx(1.029653, abs=1e-6)
        assert one(margin_score, row) == pytest.approx(0.8, abs=1e-6)
    report("score formula suite", True, f"{t.seconds:.2f}s")


def test_c02_forgetting_oracle():
    rng = np.random.default_rng(20)
    with timed(5.0) as t:
        for _ in range(1000):
            e = int(rng.integers(2, 21))
            n = int(rng.integers(1, 51))
            acc = rng.integers(0, 2, size=(e, n)).astype(np.uint8)
            trace = make_trace(np.full((n, 2), 0.5, dtype=np.float32), [0] * n,
                               correctness=acc)
            got = forgetting_count(trace).scores
            for i in range(n):
                expected = 0
                for s in range(e - 1):
                    if acc[s, i] == 1 and acc[s + 1, i] == 0:
                        expected += 1
                if not acc[:, i].any():
                    expected = e
                assert got[i] == expected, (i, acc[:, i])
    report("forgetting brute-force oracle (1000 matrices)", True, f"{t.seconds:.2f}s")


def test_c03_grand_el2n_identity():
    rng = np.random.default_rng(21)
    with timed(5.0) as t:
        for _ in range(500):
            n = int(rng.integers(1, 30))
            c = int(rng.integers(2, 7))
            h = int(rng.integers(1, 9))
            trace, _ = random_trace(rng, n, c, h=h)
            el2n = el2n_score(trace).scores
            fnorm = np.linalg.norm(trace.penultimate.astype(np.float64), axis=1)
            np.testing.assert_allclose(grand_score(trace, include_bias=False).scores,
                                       el2n * fnorm, rtol=1e-9, atol=1e-15)
            np.testing.assert_allclose(grand_score(trace, include_bias=True).scores,
                                       el2n * np.sqrt(fnorm**2 + 1.0),
                                       rtol=1e-9, atol=1e-15)
    report("gradient-norm factorization identity (500 traces)", True, f"{t.seconds:.2f}s")


def test_c04_kcenter_two_approximation():
    rng = np.random.default_rng(22)
    with timed(30.0) as t:
        for _ in range(200):
            n = int(rng.integers(2, 11))
            k = int(rng.integers(1, min(3, n) + 1))
            x = rng.normal(size=(n, int(rng.integers(1, 4))))
            d = pairwise_distance(x, x, "euclidean").values
            optimal = min(
                d[:, list(sub)].min(axis=1).max()
                for sub in itertools.combinations(range(n), k)
            )
            labels = LabelVector((np.arange(n) % 2).astype(np.int32), 2)
            for init in range(n):
                r = k_center_greedy(x, labels, k, initial=init)
                radius = d[:, r.indices].min(axis=1).max()
                assert radius <= 2 * optimal + 1e-9, (radius, optimal)
    report("k-center greedy 2-approximation (200 instances, all inits)", True,
           f"{t.seconds:.2f}s")


def test_c05_submodular_greedy_bound_and_lazy_equivalence():
    rng = np.random.default_rng(23)
    with timed(60.0) as t:
        for _ in range(200):
            n = int(rng.integers(3, 13))
            k = int(rng.integers(1, min(4, n) + 1))
            sim = similarity_from_features(rng.normal(size=(n, 3)), "cosine_shifted")
            obj = SubmodularObjective("facility_location", sim.values)
            picks, _ = greedy_maximize(obj, k, lazy=True)
            _, opt = brute_force_optimum(obj, k)
            assert evaluate(obj, picks) >= (1 - 1 / np.e) * opt - 1e-9
        for _ in range(200):
            n = int(rng.integers(2, 41))
            k = int(rng.integers(1, n + 1))
            sim = similarity_from_features(rng.normal(size=(n, 4)), "cosine_shifted")
            if rng.random() < 0.5:
                obj = SubmodularObjective("facility_location", sim.values)
            else:
                obj = SubmodularObjective("graph_cut", sim.values,
                                          lam=float(rng.uniform(0, 1)))
            assert greedy_maximize(obj, k, lazy=False)[0] == \
                greedy_maximize(obj, k, lazy=True)[0]
    report("submodular greedy 1-1/e bound + lazy/naive equivalence (200+200)",
           True, f"{t.seconds:.2f}s")


def test_c06_omp_properties():
    rng = np.random.default_rng(24)
    with timed(10.0) as t:
        for _ in range(200):
            g = int(rng.integers(2, 12))
            m = int(rng.integers(2, 20))
            k = int(rng.integers(1, m + 1))
            _, _, norms = omp_solve(rng.normal(size=(g, m)), rng.normal(size=g),
                                    k, lam=0.0)
            assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))
        for _ in range(50):
            g = int(rng.integers(2, 9))
            columns = rng.normal(size=(g, g + int(rng.integers(0, 8))))
            _, _, norms = omp_solve(columns, rng.normal(size=g), g, lam=0.0)
            assert norms[-1] < 1e-6
        for _ in range(50):
            g = int(rng.integers(2, 9))
            q, _ = np.linalg.qr(rng.normal(size=(g, g)))
            b = rng.normal(size=g)
            k = int(rng.integers(1, g + 1))
            picks, weights, _ = omp_solve(q, b, k, lam=0.0)
            inner = q.T @ b
            order = np.argsort(-np.abs(inner), kind="stable")[:k]
            assert picks == [int(j) for j in order]
            np.testing.assert_allclose(weights, inner[order], atol=1e-9)
    report("matching pursuit: monotone residual, exact recovery, orthonormal form",
           True, f"{t.seconds:.2f}s")


def test_c07_deepfool_linear_oracle():
    rng = np.random.default_rng(25)
    with timed(10.0) as t:
        spec = SyntheticSpec(n_per_class=40, num_classes=4, dim=6,
                             cluster_separation=3.0, noise_sigma=1.0, seed=7)
        tf, tl, _, _ = generate_synthetic(spec)
        model = train("linear", tf, tl, cfg=TrainConfig(epochs=30, seed=7))
        x = tf.data[rng.choice(tf.n, size=100, replace=False)]
        iterative = deepfool_iterative(model, x, max_iters=50, overshoot=0.02)
        closed = deepfool_margin_linear(model.w2, model.b2, x)
        np.testing.assert_allclose(iterative.scores, closed.scores, rtol=1e-3)
        assert iterative.unflipped == 0
    report("iterative deepfool equals closed form on a linear model (100 samples)",
           True, f"{t.seconds:.2f}s")


def test_c08_trainer_gradient_check():
    rng = np.random.default_rng(26)
    with timed(10.0) as t:
        for trial in range(20):
            arch = "linear" if trial % 2 == 0 else "mlp1"
            n = int(rng.integers(4, 10))
            d = int(rng.integers(2, 5))
            c = int(rng.integers(2, 5))
            x = rng.normal(size=(n, d))
            y = rng.integers(0, c, n).astype(np.int32)
            weights = rng.uniform(0.5, 2.0, n) if trial % 3 == 0 else None
            model = train(arch, x, LabelVector(y, c),
                          cfg=TrainConfig(epochs=2, seed=trial), hidden=4)
            analytic = analytic_gradients(model, x, y, weights)
            numeric = finite_difference_gradients(model, x, y, weights)
            for name, grad in analytic.items():
                denom = max(np.linalg.norm(numeric[name]), 1e-12)
                rel = np.linalg.norm(grad - numeric[name]) / denom
                assert rel < 1e-4, (trial, arch, name, rel)
    report("analytic vs finite-difference gradients (20 models)", True,
           f"{t.seconds:.2f}s")


def test_c09_end_to_end_golden_run(golden, tmp_path):
    with timed(600.0) as t:
        artifact = load_artifact(golden)
        n = artifact.n
        assert n == 512 and artifact.labels.num_classes == 4

        # full-data upper bound (oracle run at repo creation: 1.00)
        sweep_csv = tmp_path / "sweep.csv"
        rc = main(["sweep", str(golden), "--methods", ",".join(method_names()),
                   "--fractions", "0.1,0.5,1.0", "--repeats", "3", "--balanced",
                   "--seed", "0", "-o", str(sweep_csv)])
        assert rc == 0
        rows = list(csv.DictReader(open(sweep_csv)))
        assert len(rows) == len(method_names()) * 3
        by_key = {(r["method"], float(r["fraction"])): float(r["mean_acc"])
                  for r in rows}
        full_acc = by_key[("random", 1.0)]
        report("full-data proxy accuracy >= 0.97", full_acc >= 0.97,
               f"{full_acc:.4f}")

        for method in method_names():
            gap = abs(by_key[(method, 0.5)] - full_acc)
            assert gap <= 0.03, (method, by_key[(method, 0.5)], full_acc)
        report("every method at fraction 0.5 within 3 points of full", True)

        random_gap = abs(by_key[("random", 0.5)] - full_acc)
        report("random baseline at fraction 0.5 within 2 points of full",
               random_gap <= 0.02, f"gap {random_gap:.4f}")

        # balanced quota contract on every method and fraction
        for method in method_names():
            for fraction in (0.1, 0.5, 1.0):
                result = run_method(artifact, method, fraction, True, 0, {})
                counts = np.bincount(artifact.labels.labels[result.indices],
                                     minlength=4)
                k = budget_from_fraction(n, fraction)
                assert len(result.indices) == k
                assert counts.max() - counts.min() <= 1, (method, fraction, counts)
                assert counts.sum() == k
        report("balanced selections produce exact class quotas in all runs", True)
    report("end-to-end desk run (18 methods x 3 fractions x 3 seeds)", True,
           f"{t.seconds:.1f}s < 600s")


def test_c10_cli_determinism(golden, tmp_path):
    again = tmp_path / "again"
    rc = main(GOLDEN_TRACE_FLAGS + ["-o", str(again)])
    assert rc == 0

    def tree(root):
        return {str(p.relative_to(root)): p.read_bytes()
                for p in sorted(Path(root).rglob("*")) if p.is_file()}

    report("trace rerun is byte-identical", tree(golden) == tree(again))

    picks = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        rc = main(["select", str(golden), "--method", "gc", "--fraction", "0.1",
                   "--balanced", "--seed", "3", "-o", str(out)])
        assert rc == 0
        picks.append(out.read_bytes())
    report("select rerun is byte-identical", picks[0] == picks[1])

    reports = []
    coreset = tmp_path / "a.json"
    for name in ("r1.json", "r2.json"):
        out = tmp_path / name
        rc = main(["eval", str(golden), "--coreset", str(coreset),
                   "--repeats", "2", "--epochs", "20", "-o", str(out)])
        assert rc == 0
        reports.append(out.read_bytes())
    report("eval rerun is byte-identical", reports[0] == reports[1])
