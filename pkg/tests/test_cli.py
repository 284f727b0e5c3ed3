import hashlib

import numpy as np
import pytest

from popcnn.cli import main
from popcnn.pop_model import PopConfig, PopNetwork, build
from popcnn.signal_model import read_manifest, save_sample_csv

SMALL = """\
train_odors = 6
essential_oil_odors = 4
novel_odors = 4
repeats_per_odor = 2
seconds = 520
"""


def digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.cfg").write_text(SMALL)
    assert main(["synth", "--config", str(root / "small.cfg"), "--out", str(root / "raw"),
                 "--seed", "1"]) == 0
    assert main(["preprocess", "--manifest", str(root / "raw" / "manifest.csv"),
                 "--out", str(root / "proc")]) == 0
    return root


def test_synth_default_counts(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("seconds = 20\nrepeats_per_odor = 1\n")
    code, out, _ = run(capsys, "synth", "--config", tmp_path / "c.cfg", "--out", tmp_path / "d")
    assert code == 0 and "45/22/21" in out
    ds = read_manifest(tmp_path / "d" / "manifest.csv")
    assert [len(ds.split(s).odor_ids()) for s in ("train", "essential_oils", "novel")] == \
        [45, 22, 21]


def test_synth_rerun_identical(tmp_path, capsys, monkeypatch):
    (tmp_path / "c.cfg").write_text(SMALL)
    for name in ("a", "b"):
        run(capsys, "synth", "--config", tmp_path / "c.cfg", "--out", tmp_path / name,
            "--seed", 3)
    monkeypatch.setenv("POP_SEED", "3")
    run(capsys, "synth", "--config", tmp_path / "c.cfg", "--out", tmp_path / "env")
    run(capsys, "synth", "--config", tmp_path / "c.cfg", "--out", tmp_path / "flag",
        "--seed", 4)
    assert digest(tmp_path / "a") == digest(tmp_path / "b") == digest(tmp_path / "env")
    assert digest(tmp_path / "a") != digest(tmp_path / "flag")


def test_synth_unwritable(tmp_path, capsys):
    (tmp_path / "file").write_text("")
    code, _, err = run(capsys, "synth", "--out", tmp_path / "file" / "sub")
    assert code == 2 and "error" in err


def test_preprocess_uniform(workdir):
    ds = read_manifest(workdir / "proc" / "manifest.csv")
    assert ds.shape == (16, 250)
    assert (workdir / "proc" / "norm_stats.csv").exists()
    assert (workdir / "proc" / "schedule.csv").exists()


def test_preprocess_nonuniform_deterministic(workdir, tmp_path, capsys):
    before = digest(workdir / "raw")
    for name in ("a", "b"):
        code, _, _ = run(capsys, "preprocess", "--manifest", workdir / "raw" / "manifest.csv",
                         "--out", tmp_path / name, "--mode", "nonuniform",
                         "--threshold-T", 400)
        assert code == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert digest(workdir / "raw") == before
    idx = np.loadtxt(tmp_path / "a" / "schedule.csv", dtype=int)
    assert idx[0] == 0 and idx[-1] == 499
    assert read_manifest(tmp_path / "a" / "manifest.csv").shape == (16, len(idx))


def test_preprocess_errors(workdir, tmp_path, capsys):
    code, _, _ = run(capsys, "preprocess", "--manifest", tmp_path / "none.csv", "--out", tmp_path)
    assert code == 2
    d = tmp_path / "ragged"
    d.mkdir()
    save_sample_csv(d / "a.csv", np.ones((16, 600)))
    save_sample_csv(d / "b.csv", np.ones((16, 550)))
    (d / "m.csv").write_text("a,0,a.csv,10,train\nb,0,b.csv,20,train\n")
    code, _, err = run(capsys, "preprocess", "--manifest", d / "m.csv", "--out", tmp_path / "o")
    assert code == 3 and "shape" in err
    save_sample_csv(d / "b.csv", np.ones((16, 300)))
    code, _, err = run(capsys, "preprocess", "--manifest", d / "m.csv", "--out", tmp_path / "o")
    assert code == 3


def test_gradient_profile(workdir, tmp_path, capsys):
    code, out, _ = run(capsys, "gradient-profile", "--manifest", workdir / "raw" / "manifest.csv",
                       "--out", tmp_path)
    assert code == 0
    prof = np.loadtxt(tmp_path / "profile.csv")
    assert prof.shape == (499,)
    assert np.loadtxt(tmp_path / "schedule.csv", dtype=int)[-1] == 499


def test_train_evaluate_overfit(workdir, tmp_path, capsys):
    man = workdir / "proc" / "manifest.csv"
    code, _, _ = run(capsys, "train", "--manifest", man, "--out", tmp_path, "--val-split",
                     "novel")
    assert code == 0
    assert (tmp_path / "history.csv").read_text().startswith("epoch,loss,lr,val_correlation")
    code, out, _ = run(capsys, "evaluate", "--weights", tmp_path / "weights.popw",
                       "--manifest", man, "--split", "train", "--out", tmp_path / "ev")
    assert code == 0
    r = float(out.split("pearson_r=")[1].split()[0])
    assert r > 0.99
    for name in ("report.csv", "scatter.csv", "summary.txt"):
        assert (tmp_path / "ev" / name).exists()


def test_train_repeated_runs(workdir, tmp_path, capsys):
    (tmp_path / "fast.cfg").write_text("epochs = 5\n")
    code, out, _ = run(capsys, "train", "--manifest", workdir / "proc" / "manifest.csv",
                       "--config", tmp_path / "fast.cfg", "--out", tmp_path, "--runs", 2,
                       "--n-train-odors", 4, "--seed", 8)
    assert code == 0 and "runs=2" in out
    runs = (tmp_path / "runs.csv").read_text().splitlines()
    assert runs[0] == "run,seed,val_correlation" and runs[1].startswith("0,8,")
    assert (tmp_path / "summary.csv").read_text().startswith("n_train_odors,k_runs,mean_r")


def test_train_shape_mismatch_names_dimension(workdir, tmp_path, capsys):
    (tmp_path / "w.cfg").write_text("width = 128\n")
    code, _, err = run(capsys, "train", "--manifest", workdir / "proc" / "manifest.csv",
                       "--config", tmp_path / "w.cfg", "--out", tmp_path)
    assert code == 3 and "width" in err
    (tmp_path / "bad.cfg").write_text("widht = 128\n")
    code, _, err = run(capsys, "train", "--manifest", workdir / "proc" / "manifest.csv",
                       "--config", tmp_path / "bad.cfg", "--out", tmp_path)
    assert code == 3 and "widht" in err


def test_predict_zero_case(tmp_path, capsys):
    net = build()
    for p in net.parameters():
        p[...] = 0.0
    net.save(tmp_path / "z.popw")
    save_sample_csv(tmp_path / "z.csv", np.zeros((16, 250)))
    code, out, _ = run(capsys, "predict", "--weights", tmp_path / "z.popw", "--sample",
                       tmp_path / "z.csv")
    assert code == 0 and out.split() == ["0", "unpleasant-or-boundary"]


def test_predict_with_schedule_and_stats(workdir, tmp_path, capsys):
    net = build(PopConfig(seed=6))
    net.save(tmp_path / "n.popw")
    raw = sorted((workdir / "raw" / "samples").glob("*.csv"))[0]
    done = workdir / "proc" / "samples" / raw.name
    _, a, _ = run(capsys, "predict", "--weights", tmp_path / "n.popw", "--sample", raw,
                  "--schedule", workdir / "proc" / "schedule.csv",
                  "--norm-stats", workdir / "proc" / "norm_stats.csv")
    _, b, _ = run(capsys, "predict", "--weights", tmp_path / "n.popw", "--sample", done)
    assert a == b and b.split()[1] in ("pleasant", "unpleasant")
    code, _, err = run(capsys, "predict", "--weights", tmp_path / "n.popw", "--sample", raw)
    assert code == 3 and "width" in err
    code, _, _ = run(capsys, "predict", "--weights", tmp_path / "nope.popw", "--sample", raw)
    assert code == 2


def test_evaluate_ratio_from_known_correlation(tmp_path, capsys):
    """Labels are built so the network's odor predictions correlate at exactly 0.6918."""
    rng = np.random.default_rng(0)
    net = build(PopConfig(seed=11))
    net.save(tmp_path / "n.popw")
    mats = rng.uniform(size=(12, 16, 250))
    p = net.predict_batch(mats)
    pc = (p - p.mean()) / np.linalg.norm(p - p.mean())
    noise = rng.standard_normal(12)
    noise -= noise.mean()
    noise -= (noise @ pc) * pc
    noise /= np.linalg.norm(noise)
    r = 0.6918
    y = 10 * (r * pc + np.sqrt(1 - r * r) * noise)
    lines = []
    for i in range(12):
        save_sample_csv(tmp_path / f"s{i}.csv", mats[i])
        lines.append(f"o{i},0,s{i}.csv,{float(15 + y[i])!r},essential_oils")
    (tmp_path / "m.csv").write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "evaluate", "--weights", tmp_path / "n.popw", "--manifest",
                       tmp_path / "m.csv", "--human-human-r", 0.72, "--out", tmp_path / "ev")
    assert code == 0
    assert float(out.split("pearson_r=")[1].split()[0]) == pytest.approx(0.6918, abs=1e-12)
    assert "machine_human_ratio=96%" in out


def test_evaluate_shape_mismatch(workdir, tmp_path, capsys):
    build(PopConfig(width=200)).save(tmp_path / "n.popw")
    code, _, err = run(capsys, "evaluate", "--weights", tmp_path / "n.popw", "--manifest",
                       workdir / "proc" / "manifest.csv", "--out", tmp_path)
    assert code == 3 and "width" in err


def test_overrides_logged(workdir, tmp_path, capsys):
    code, _, err = run(capsys, "gradient-profile", "-v", "--manifest",
                       workdir / "raw" / "manifest.csv", "--out", tmp_path,
                       "--threshold-T", 100, "--seed", 2)
    assert code == 0 and "override threshold_T=100" in err and "override seed=2" in err


@pytest.mark.parametrize("header,rows", [
    ("epoch,loss,lr,val_correlation", ["1,4.0,0.01,", "2,3.0,0.01,0.5"]),
    ("prediction,human_median", ["1.0,2.0", "-1.0,-3.0", "0.5,1.0"]),
    ("n_train_odors,k_runs,mean_r,median_r,std_r,min_r,max_r",
     ["20,20,0.7,0.71,0.1,0.5,0.9", "40,20,0.8,0.8,0.05,0.7,0.9"]),
])
def test_plot_kinds(tmp_path, capsys, header, rows):
    src = tmp_path / "in.csv"
    src.write_text("\n".join([header, *rows]) + "\n")
    code, out, _ = run(capsys, "plot", src, "--out", tmp_path / "fig.svg")
    assert code == 0
    assert "<svg" in (tmp_path / "fig.svg").read_text()
    assert out == src.read_text()


@pytest.mark.parametrize("text", ["", "epoch,loss\n", "a,b\n1,2\n", "epoch,loss\n1,x\n"])
def test_plot_bad_input(tmp_path, capsys, text):
    (tmp_path / "in.csv").write_text(text)
    code, _, _ = run(capsys, "plot", tmp_path / "in.csv", "--out", tmp_path / "f.svg")
    assert code == 3


def test_plot_missing_input(tmp_path, capsys):
    code, _, _ = run(capsys, "plot", tmp_path / "none.csv", "--out", tmp_path / "f.svg")
    assert code == 2


def test_weights_loadable_after_train(workdir, tmp_path, capsys):
    (tmp_path / "fast.cfg").write_text("epochs = 3\n")
    run(capsys, "train", "--manifest", workdir / "proc" / "manifest.csv",
        "--config", tmp_path / "fast.cfg", "--out", tmp_path)
    assert PopNetwork.load(tmp_path / "weights.popw").input_shape == (16, 250)


def test_midpoint_consistent_between_synth_and_read(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("seconds = 10\nrepeats_per_odor = 1\nmidpoint = 50\n"
                                    "train_odors = 3\nessential_oil_odors = 1\nnovel_odors = 1\n")
    run(capsys, "synth", "--config", tmp_path / "c.cfg", "--out", tmp_path / "d")
    ds = read_manifest(tmp_path / "d" / "manifest.csv", midpoint=50)
    labels = [s.label for s in ds]
    assert max(abs(v) for v in labels) < 20
    raw = [float(line.split(",")[3]) for line in
           (tmp_path / "d" / "manifest.csv").read_text().splitlines()]
    assert min(raw) > 25
