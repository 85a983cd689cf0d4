import json
from pathlib import Path

import numpy as np
import pytest

from coresel import load_artifact, run_method, train, TrainConfig
from coresel.cli import main, read_coreset, write_coreset


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def artifact_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("art") / "golden"
    rc = main(["trace", "--synthetic", "c4-n40-d8-sep8", "--epochs", "6",
               "--ref-epoch", "3", "--seed", "1", "--val-fraction", "0.2",
               "-o", str(out)])
    assert rc == 0
    return out


class TestTrace:
    def test_produces_loadable_artifact_with_test_split(self, artifact_dir):
        art = load_artifact(artifact_dir)
        assert art.trace is not None
        assert art.validation is not None
        test = load_artifact(artifact_dir / "test")
        assert test.trace is None
        assert test.n == 32  # 40*4 total, 20% test

    def test_rerun_is_byte_identical(self, artifact_dir, tmp_path):
        again = tmp_path / "again"
        rc = main(["trace", "--synthetic", "c4-n40-d8-sep8", "--epochs", "6",
                   "--ref-epoch", "3", "--seed", "1", "--val-fraction", "0.2",
                   "-o", str(again)])
        assert rc == 0
        assert tree_bytes(again) == tree_bytes(artifact_dir)

    def test_ref_epoch_beyond_epochs(self, tmp_path, capsys):
        rc = main(["trace", "--synthetic", "c2-n10-d4-sep5", "--epochs", "20",
                   "--ref-epoch", "30", "-o", str(tmp_path / "x")])
        assert rc == 2
        assert "reference_epoch" in capsys.readouterr().err

    def test_requires_exactly_one_source(self, tmp_path, capsys):
        rc = main(["trace", "--epochs", "5", "--ref-epoch", "2",
                   "-o", str(tmp_path / "x")])
        assert rc == 2

    def test_csv_source(self, tmp_path):
        csv_path = tmp_path / "data.csv"
        rng = np.random.default_rng(0)
        rows = ["%f,%f,%d" % (a, b, label)
                for label in (0, 1) for a, b in rng.normal(label * 6, 1, (20, 2))]
        csv_path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "csvart"
        rc = main(["trace", "--csv", str(csv_path), "--epochs", "4",
                   "--ref-epoch", "2", "-o", str(out)])
        assert rc == 0
        assert load_artifact(out).n == 40


class TestSelect:
    def test_balanced_random_quota(self, artifact_dir, tmp_path):
        out = tmp_path / "coreset.json"
        rc = main(["select", str(artifact_dir), "--method", "random",
                   "--fraction", "0.5", "--balanced", "--seed", "5",
                   "-o", str(out)])
        assert rc == 0
        result, params = read_coreset(out)
        art = load_artifact(artifact_dir)
        counts = np.bincount(art.labels.labels[result.indices], minlength=4)
        assert len(set(counts)) == 1  # equal per class

    def test_cli_matches_library_call(self, artifact_dir, tmp_path):
        out = tmp_path / "gc.json"
        rc = main(["select", str(artifact_dir), "--method", "gc",
                   "--fraction", "0.1", "--seed", "0", "-o", str(out)])
        assert rc == 0
        result, _ = read_coreset(out)
        art = load_artifact(artifact_dir)
        direct = run_method(art, "gc", 0.1, False, 0, {})
        assert np.array_equal(result.indices, direct.indices)
        assert np.allclose(result.weights, direct.weights)

    def test_missing_validation_exits_3(self, tmp_path, capsys):
        plain = tmp_path / "noval"
        main(["trace", "--synthetic", "c2-n10-d4-sep5", "--epochs", "4",
              "--ref-epoch", "2", "-o", str(plain)])
        rc = main(["select", str(plain), "--method", "glister",
                   "--fraction", "0.5", "-o", str(tmp_path / "c.json")])
        assert rc == 3
        assert "val_" in capsys.readouterr().err

    def test_rerun_byte_identical(self, artifact_dir, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            rc = main(["select", str(artifact_dir), "--method", "craig",
                       "--fraction", "0.25", "--seed", "3", "-o", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()

    def test_every_method_runs(self, artifact_dir, tmp_path):
        from coresel import method_names
        for method in method_names():
            out = tmp_path / f"{method}.json"
            rc = main(["select", str(artifact_dir), "--method", method,
                       "--fraction", "0.2", "--balanced", "--seed", "1",
                       "-o", str(out)])
            assert rc == 0, method
            result, _ = read_coreset(out)
            assert len(result.indices) == round(0.2 * load_artifact(artifact_dir).n)

    def test_runs_averaging(self, artifact_dir, tmp_path):
        other = tmp_path / "other"
        rc = main(["trace", "--synthetic", "c4-n40-d8-sep8", "--epochs", "6",
                   "--ref-epoch", "3", "--seed", "9", "--val-fraction", "0.2",
                   "-o", str(other)])
        assert rc == 0
        out = tmp_path / "avg.json"
        rc = main(["select", str(artifact_dir), "--method", "el2n",
                   "--fraction", "0.2", "--runs", str(other), "-o", str(out)])
        assert rc == 0
        result, _ = read_coreset(out)
        assert result.metadata.get("runs_averaged") == 2

    def test_coreset_roundtrip_idempotent(self, artifact_dir, tmp_path):
        out = tmp_path / "c.json"
        main(["select", str(artifact_dir), "--method", "margin",
              "--fraction", "0.3", "-o", str(out)])
        result, params = read_coreset(out)
        rewritten = tmp_path / "c2.json"
        write_coreset(result, params, rewritten)
        assert out.read_bytes() == rewritten.read_bytes()


class TestEval:
    def test_full_coreset_equals_full_training(self, artifact_dir, tmp_path):
        coreset = tmp_path / "full.json"
        main(["select", str(artifact_dir), "--method", "random",
              "--fraction", "1.0", "-o", str(coreset)])
        report_path = tmp_path / "report.json"
        rc = main(["eval", str(artifact_dir), "--coreset", str(coreset),
                   "--repeats", "1", "--seed", "4", "--epochs", "8",
                   "--arch", "linear", "-o", str(report_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        art = load_artifact(artifact_dir)
        test = load_artifact(artifact_dir / "test")
        model = train("linear", art.features, art.labels,
                      cfg=TrainConfig(epochs=8, seed=4))
        direct = model.accuracy(test.features.data, test.labels.labels)
        assert report["accuracies"][0] == direct

    def test_std_over_exactly_r_seeds(self, artifact_dir, tmp_path):
        coreset = tmp_path / "half.json"
        main(["select", str(artifact_dir), "--method", "random",
              "--fraction", "0.5", "-o", str(coreset)])
        report_path = tmp_path / "r.json"
        rc = main(["eval", str(artifact_dir), "--coreset", str(coreset),
                   "--repeats", "5", "--epochs", "6", "--arch", "linear",
                   "-o", str(report_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert len(report["accuracies"]) == 5
        assert report["std_acc"] == pytest.approx(
            float(np.std(report["accuracies"])), abs=1e-12)  # denominator r

    def test_index_out_of_range(self, artifact_dir, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        doc = {"version": 1, "method": "random", "fraction": 0.1, "seed": 0,
               "params": {}, "indices": [0, 10_000], "weights": [1.0, 1.0],
               "metadata": {}}
        bad.write_text(json.dumps(doc))
        rc = main(["eval", str(artifact_dir), "--coreset", str(bad),
                   "--repeats", "1", "--epochs", "2"])
        assert rc == 2


class TestSweep:
    def test_csv_rows_and_table(self, artifact_dir, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        rc = main(["sweep", str(artifact_dir), "--methods", "random,herding,fl",
                   "--fractions", "0.2,0.5,1.0", "--repeats", "2",
                   "--epochs", "5", "--arch", "linear", "-o", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "method,fraction,repeats,mean_acc,std_acc,seconds"
        assert len(lines) == 10  # header + 3 methods x 3 fractions
        printed = capsys.readouterr().out
        assert "upper bound" in printed

    def test_empty_methods_usage_error(self, artifact_dir, capsys):
        rc = main(["sweep", str(artifact_dir), "--methods", "",
                   "--fractions", "0.5", "--epochs", "2"])
        assert rc == 2

    def test_unknown_method_rejected(self, artifact_dir, capsys):
        rc = main(["sweep", str(artifact_dir), "--methods", "telepathy",
                   "--fractions", "0.5", "--epochs", "2"])
        assert rc == 2


def test_argparse_bad_choice_exits_2(artifact_dir):
    with pytest.raises(SystemExit) as err:
        main(["select", str(artifact_dir), "--method", "nope", "--fraction", "0.5"])
    assert err.value.code == 2
