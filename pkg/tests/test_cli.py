import csv
import sys

import pytest

from conftest import LISTING_1
from plangen import cli

CONFIG = """
[run]
domain = blocksworld
seed = 1
out = run

[generation]
max_init_atoms = 5

[nlm]
depth = 2
hidden_channels = 4

[ppo]
trajectories_per_iter = 3
iterations = 2
checkpoint_every = 1

[evaluate]
norm_corpus_size = 3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "run.cfg").write_text(CONFIG)
    return d


@pytest.fixture(scope="module")
def trained(workdir):
    assert cli.main(["train", "--config", str(workdir / "run.cfg")]) == 0
    return workdir / "run"


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_train_outputs(trained):
    metrics = rows(trained / "metrics.csv")
    assert [r["iter"] for r in metrics] == ["0", "1"]
    assert list(metrics[0]) == ["iter", "mean_reward", "mean_difficulty", "discard_rate", "entropy_init",
                                "entropy_goal", "loss_init", "loss_goal", "wall_s"]
    assert (trained / "checkpoint.npz").exists()
    assert (trained / "norms_5.txt").exists()


def test_train_resume(workdir, trained, tmp_path):
    out = tmp_path / "resumed"
    code = cli.main(["train", "--config", str(workdir / "run.cfg"), "--checkpoint", str(trained / "checkpoint.npz"),
                     "--iterations", "3", "--out", str(out)])
    assert code == 0
    assert [r["iter"] for r in rows(out / "metrics.csv")] == ["2"]


def test_generate_and_evaluate(workdir, trained, tmp_path, capsys):
    corpus = tmp_path / "gen"
    code = cli.main(["generate", "--config", str(workdir / "run.cfg"), "--checkpoint", str(trained / "checkpoint.npz"),
                     "--count", "3", "--out", str(corpus)])
    assert code == 0
    manifest = rows(corpus / "manifest.csv")
    assert [r["file"] for r in manifest] == ["p0001.pddl", "p0002.pddl", "p0003.pddl"]
    assert all((corpus / r["file"]).exists() for r in manifest)
    assert cli.main(["evaluate", str(corpus), "--config", str(workdir / "run.cfg")]) == 0
    report = rows(corpus / "report.csv")
    assert list(report[0])[:5] == ["file", "size", "difficulty", "diversity", "time"]
    assert report[-1]["file"] == "mean" and len(report) == 4
    assert "difficulty=" in capsys.readouterr().out


def test_baseline_corpus(workdir, tmp_path):
    corpus = tmp_path / "base"
    assert cli.main(["baseline", "--config", str(workdir / "run.cfg"), "--count", "4", "--seed", "9",
                     "--out", str(corpus)]) == 0
    manifest = rows(corpus / "manifest.csv")
    assert len(manifest) == 4 and all(int(r["atoms"]) >= 3 for r in manifest)


def test_count_zero(workdir, tmp_path):
    corpus = tmp_path / "empty"
    assert cli.main(["baseline", "--config", str(workdir / "run.cfg"), "--count", "0", "--out", str(corpus)]) == 0
    assert rows(corpus / "manifest.csv") == []


def test_single_problem_diversity(workdir, tmp_path):
    corpus = tmp_path / "one"
    corpus.mkdir()
    (corpus / "p.pddl").write_text(LISTING_1)
    assert cli.main(["evaluate", str(corpus), "--config", str(workdir / "run.cfg")]) == 0
    report = rows(corpus / "report.csv")
    assert report[0]["diversity"] == "n/a" and report[0]["time"] == "n/a"


def test_validate_listing1(workdir, tmp_path, capsys):
    path = tmp_path / "l1.pddl"
    path.write_text(LISTING_1)
    assert cli.main(["validate", str(path), "--config", str(workdir / "run.cfg")]) == 0
    assert "VALID" in capsys.readouterr().out


def test_validate_inconsistent(workdir, tmp_path, capsys):
    path = tmp_path / "bad.pddl"
    path.write_text(LISTING_1.replace("(clear o2) (handempty)", "(handempty)"))
    assert cli.main(["validate", str(path), "--config", str(workdir / "run.cfg")]) == 1
    out = capsys.readouterr().out
    assert "INCONSISTENT bw." in out and "VALID\n" not in out


def test_usage_errors(workdir, tmp_path):
    cfg = str(workdir / "run.cfg")
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["baseline", "--config", cfg, "--count", "-1"]) == 2
    assert cli.main(["generate", "--config", cfg, "--checkpoint", str(tmp_path / "none.npz")]) == 2
    assert cli.main(["evaluate", str(tmp_path), "--config", cfg]) == 2
    with pytest.raises(SystemExit) as err:
        cli.main([])
    assert err.value.code == 2


def test_wrong_domain_checkpoint(trained, tmp_path):
    conf = tmp_path / "lg.cfg"
    conf.write_text(CONFIG.replace("blocksworld", "logistics"))
    assert cli.main(["generate", "--config", str(conf), "--checkpoint", str(trained / "checkpoint.npz")]) == 2


def test_runtime_error_on_bad_problem(workdir, tmp_path, capsys):
    path = tmp_path / "broken.pddl"
    path.write_text("(define (problem")
    assert cli.main(["validate", str(path), "--config", str(workdir / "run.cfg")]) == 1
    assert "error" in capsys.readouterr().err


def test_module_entry_point(workdir, tmp_path):
    import subprocess

    path = tmp_path / "l1.pddl"
    path.write_text(LISTING_1)
    proc = subprocess.run([sys.executable, "-m", "plangen.cli", "validate", str(path), "--config",
                           str(workdir / "run.cfg")], capture_output=True, text=True)
    assert proc.returncode == 0 and "VALID" in proc.stdout
