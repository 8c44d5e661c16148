import json
import subprocess
import sys

import numpy as np
import pytest

from seqdpp.cli import main
from seqdpp.io import load_kernel
from seqdpp.kernel import build_kernel
from seqdpp.sequences import similarity_matrix


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _seqs(*frames):
    return {"sequences": [{"id": f"s{i}", "frames": f} for i, f in enumerate(frames)]}


@pytest.fixture
def ws(tmp_path):
    rng = np.random.default_rng(0)
    frames = [list(1.0 + 0.3 * rng.normal(size=int(t))) for t in (4, 5, 3, 6, 4, 5)]
    paths = {
        "tiny": _write(tmp_path / "tiny.json", _seqs([0.0], [1.0], [2.5])),
        "seqs": _write(tmp_path / "seqs.json", _seqs(*frames)),
        "ctx": _write(tmp_path / "ctx.json", _seqs(list(1 + 0.2 * rng.normal(size=6)),
                                                   list(1 + 0.2 * rng.normal(size=6)))),
        "cfg": _write(tmp_path / "cfg.json", {"steps": 6, "n_c": 4, "max_len": 6}),
        "text": _write(tmp_path / "text.json", {"words": list("abcdefghi"),
                                                "prominence": [1, 0, 0, 1, 0, 0, 0, 1, 0]}),
        "dir": tmp_path,
    }
    return paths


def run(*argv):
    return main([str(a) for a in argv])


def test_kernel_smoke_and_round_trip(ws, capsys):
    out = ws["dir"] / "k.json"
    assert run("kernel", "--in", ws["tiny"], "--out", out) == 0
    assert "min eigenvalue" in capsys.readouterr().err
    K = load_kernel(out)
    assert K.L.shape == (3, 3)
    # re-derive in memory and compare bit-for-bit
    S = similarity_matrix([[0.0], [1.0], [2.5]], 1.0)
    np.testing.assert_array_equal(build_kernel(S, K.q).L, K.L)
    man = json.loads((ws["dir"] / "k.json.manifest.json").read_text())
    assert man["subcommand"] == "kernel" and man["seed"] == 0
    assert set(man["outputs"]) == {str(out)}
    assert man["config"]["gamma"] == 1.0 and "version" in man


def test_malformed_json_exit_2(ws, capsys):
    bad = ws["dir"] / "bad.json"
    bad.write_text('{"sequences": [\n  {"frames": [1, 2,]}\n]}')
    assert run("kernel", "--in", bad) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


@pytest.mark.parametrize("argv", [
    ["kernel", "--in", "missing.json"],
    ["segment", "--in", "{text}", "--mode", "prominence", "--threshold", "2.0"],
    ["metrics", "--in", "{tiny}", "--metric", "det"],  # zero-norm frame
    ["sample", "--kernel", "{k}", "--mode", "kdpp"],
    ["kernel", "--in", "{tiny}", "--cond", "0,x"],
    ["kernel", "--in", "{tiny}", "--cond", "7"],
])
def test_input_errors_exit_2(ws, argv):
    run("kernel", "--in", ws["tiny"], "--out", ws["dir"] / "k.json", "--quiet")
    fill = {"text": ws["text"], "tiny": ws["tiny"], "k": ws["dir"] / "k.json"}
    assert run(*[a.format(**fill) for a in argv], "--quiet") == 2


def test_psd_violation_exit_1(ws):
    # the unnormalised similarity is indefinite on these sequences
    rng = np.random.default_rng(0)
    p = _write(ws["dir"] / "r.json", _seqs(*[list(rng.normal(size=int(rng.integers(3, 11)))) for _ in range(8)]))
    assert run("kernel", "--in", p, "--raw-similarity", "--k=-1e6", "--quiet", "--out", ws["dir"] / "r_k.json") == 1
    assert run("kernel", "--in", p, "--quiet", "--out", ws["dir"] / "r_k.json") == 0


def test_sample_modes(ws, capsys):
    k = ws["dir"] / "k.json"
    run("kernel", "--in", ws["seqs"], "--cond", "0,1", "--out", k, "--quiet")
    capsys.readouterr()
    for mode, extra in (("dpp", []), ("kdpp", ["--k", "2"]), ("cond", [])):
        assert run("sample", "--kernel", k, "--mode", mode, "--draws", 50, "--seed", 3, "--quiet", *extra) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 50
        for line in lines:
            idx = [int(t) for t in line.split()]
            assert idx == sorted(idx)
            if mode == "kdpp":
                assert len(idx) == 2 and not {0, 1} & set(idx)
            if mode == "cond":
                assert not {0, 1} & set(idx)
    emp = ws["dir"] / "emp.csv"
    run("sample", "--kernel", k, "--mode", "cond", "--draws", 100, "--empirical", emp, "--quiet",
        "--out", ws["dir"] / "draws.txt")
    rows = emp.read_text().splitlines()
    assert rows[0] == "subset,count,frequency"
    assert sum(int(r.split(",")[1]) for r in rows[1:]) == 100


def test_map_and_mic(ws, capsys):
    k = ws["dir"] / "k.json"
    run("kernel", "--in", ws["seqs"], "--cond", "0,1", "--out", k, "--quiet")
    capsys.readouterr()
    assert run("map", "--kernel", k, "--quiet") == 0
    res = json.loads(capsys.readouterr().out)
    assert res["selected"] in range(2, 6)
    assert res["log_det"][0] is None
    assert run("mic", "--kernel", k, "--quiet") == 0
    head, vals = capsys.readouterr().out.splitlines()
    assert head.startswith("mic_objective,mle_objective")
    assert 0 <= float(vals.split(",")[0]) <= 4


def test_train_infer_sweep_compare(ws, capsys):
    d = ws["dir"]
    assert run("train", "--config", ws["cfg"], "--trace-out", d / "t.csv", "--params-out", d / "p.json",
               "--manifest", d / "m.json", "--quiet") == 0
    assert len((d / "t.csv").read_text().splitlines()) == 7
    assert run("infer", "--params", d / "p.json", "--contexts", ws["ctx"], "--config", ws["cfg"],
               "--mode", "kdpp", "--k", 3, "--seed", 4, "--out", d / "inf.json", "--quiet") == 0
    assert len(json.loads((d / "inf.json").read_text())["selected"]) == 3
    assert run("sweep", "--params", d / "p.json", "--contexts", ws["ctx"], "--config", ws["cfg"],
               "--out-dir", d / "sw", "--out", d / "sw.csv", "--quiet") == 0
    assert len(list((d / "sw").glob("contour_w*.csv"))) == 4
    assert run("compare-objectives", "--config", ws["cfg"], "--out", d / "pc.csv", "--quiet") == 0
    rows = (d / "pc.csv").read_text().splitlines()
    assert rows[0].startswith("step,mic_obj,mic_gradnorm,mle_obj,mle_gradnorm")
    assert len(rows) == 7
    assert rows[1].split(",")[3] == "-inf"  # step 0 injects an exact duplicate


def test_segment_and_metrics(ws, capsys):
    assert run("segment", "--in", ws["text"], "--mode", "fixed", "--n", 3, "--quiet") == 0
    assert json.loads(capsys.readouterr().out) == [[[0, 3], [3, 6], [6, 9]]]
    assert run("segment", "--in", ws["text"], "--quiet") == 0
    seg = json.loads(capsys.readouterr().out)
    assert [t[1] for t in seg] == [[0, 3], [3, 7], [7, 9]]
    assert run("metrics", "--in", ws["seqs"], "--metric", "sigma", "--quiet") == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "id,sigma_p" and len(rows) == 7


def test_replay_detects_changes(ws, capsys):
    d = ws["dir"]
    run("kernel", "--in", ws["seqs"], "--out", d / "k.json", "--quiet")
    assert run("replay", d / "k.json.manifest.json", "--quiet") == 0
    (d / "k.json").write_text("{}")
    assert run("replay", d / "k.json.manifest.json", "--quiet") == 0  # replay rewrites it
    m = json.loads((d / "k.json.manifest.json").read_text())
    m["outputs"][str(d / "k.json")] = "0" * 64
    (d / "k.json.manifest.json").write_text(json.dumps(m))
    assert run("replay", d / "k.json.manifest.json", "--quiet") == 1


def test_module_entry_point_and_help():
    r = subprocess.run([sys.executable, "-m", "seqdpp", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("kernel", "sample", "map", "mic", "train", "infer", "compare-objectives",
                "segment", "metrics", "sweep"):
        assert sub in r.stdout
    assert "examples:" in r.stdout
