"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure (PSD, conditioning, degenerate
candidates, non-finite gradients), 2 input error.

Every run writes a manifest (argv, seed, version, input and output
digests) to ``--manifest``, or to ``<out>.manifest.json`` when ``--out`` is
a file. ``seqdpp replay <manifest>`` re-runs it and checks the outputs are
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, cdpp, diversifier as dv, segmentation as seg
from .errors import InputError, NumericalError
from .io import (
    load_kernel,
    load_sequences,
    matrix_csv,
    read_json,
    sha256_file,
)
from .kernel import build_kernel
from .metrics import diversity_determinant, sigma_p
from .sampling import make_rng, map_scores, map_single, sample_many
from .sequences import similarity_matrix

EXAMPLES = """\
examples:
  seqdpp kernel --in seqs.json --cond 0,1 --out kernel.json
  seqdpp sample --kernel kernel.json --mode cond --draws 1000 --seed 7 --empirical freq.csv
  seqdpp map --kernel kernel.json
  seqdpp mic --kernel kernel.json
  seqdpp train --config train.json --trace-out trace.csv --params-out params.json
  seqdpp infer --params params.json --contexts ctx.json --mode kdpp --k 3 --out picked.json
  seqdpp compare-objectives --config train.json --out paired.csv
  seqdpp segment --in text.json --mode prominence --threshold 0.5
  seqdpp metrics --in samples.json --metric det
  seqdpp sweep --params params.json --contexts ctx.json --weights 1,2,5,10 --out-dir contours
  seqdpp replay kernel.json.manifest.json
"""


class Run:
    """Collects input/output files for the manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: list[str] = []
        self.outputs: list[str] = []

    def input(self, path):
        self.inputs.append(str(path))
        return path

    def write(self, text: str, path=None):
        path = path if path is not None else self.args.out
        if path is None or str(path) == "-":
            sys.stdout.write(text)
            return
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.outputs.append(str(path))

    def log(self, msg: str):
        if not self.args.quiet:
            print(msg, file=sys.stderr)


def _ints(text):
    if text is None or text == "":
        return []
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _load_config(run, path) -> dv.TrainConfig:
    if path is None:
        return dv.TrainConfig()
    d = read_json(run.input(path))
    if not isinstance(d, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return dv.TrainConfig.from_json(d)


def _subset_line(Y) -> str:
    return " ".join(str(i) for i in sorted(Y))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_kernel(run, a):
    seqs = load_sequences(run.input(a.input))
    S = similarity_matrix(seqs, a.gamma, normalized=not a.raw_similarity)
    density = dv.DensityModel(a.density_mean, a.density_std, a.density_ar)
    pi = np.array([density.log_density(s) for s in seqs])
    if a.k is None:
        ks = np.array([density.threshold(len(s), s.dim) for s in seqs])
    else:
        ks = np.full(len(seqs), a.k)
    q = a.w * np.exp(np.minimum(pi - ks, 0.0))
    K = build_kernel(S, q, _ints(a.cond))
    K = replace(K, w=a.w, k=float(ks[0]) if np.all(ks == ks[0]) else ks.tolist())
    lam = K.min_eigenvalue()
    run.log(f"min eigenvalue of L: {lam:.6e}")
    K.check_psd(a.psd_tol)
    run.write(_dumps(K.to_json()))
    if a.similarity_csv:
        run.write(matrix_csv(S.entries), a.similarity_csv)


def cmd_sample(run, a):
    K = load_kernel(run.input(a.kernel))
    if a.draws < 1:
        raise InputError("--draws must be >= 1")
    if a.mode == "kdpp" and a.k is None:
        raise InputError("--mode kdpp needs --k")
    draws = sample_many(K, a.draws, a.mode, a.k, make_rng(a.seed), conditioned=not a.unconditioned)
    lines, counts = [], Counter()
    for Y in draws:
        key = _subset_line(Y)
        lines.append(key + "\n")
        counts[key] += 1
    run.write("".join(lines))
    if a.empirical:
        rows = ["subset,count,frequency\n"]
        for key in sorted(counts, key=lambda s: (len(s.split()), [int(t) for t in s.split()])):
            rows.append(f"{key or '{}'},{counts[key]},{format(counts[key] / a.draws, '.17g')}\n")
        run.write("".join(rows), a.empirical)


def cmd_map(run, a):
    K = load_kernel(run.input(a.kernel))
    best = map_single(K)
    scores = map_scores(K)
    run.write(_dumps({"selected": best, "cond_indices": list(K.cond),
                      "log_det": [float(v) if np.isfinite(v) else None for v in scores]}))


def cmd_mic(run, a):
    K = load_kernel(run.input(a.kernel))
    value, G = cdpp.mic_value_and_gradient(K)
    mle = cdpp.mle_objective(K)
    cols = ["mic_objective", "mle_objective", "mic_grad_norm", "grad_bound", "n_free"]
    vals = [value, mle, float(np.linalg.norm(G)), cdpp.mic_gradient_bound(K), len(K.free)]
    run.write(",".join(cols) + "\n" + ",".join(dv.fmt(v) for v in vals) + "\n")
    if a.gradient_csv:
        run.write(matrix_csv(G), a.gradient_csv)


def cmd_train(run, a):
    cfg = _load_config(run, a.config)
    if a.steps is not None:
        cfg = replace(cfg, steps=a.steps)
    if a.seed_given:
        cfg = replace(cfg, seed=a.seed)
    params, trace = dv.train(cfg)
    run.log(f"trained {cfg.steps} steps; final objective "
            f"{trace.records[-1].objective if trace.records else float('nan'):.6g}")
    run.write(trace.to_csv(timing=a.timing), a.trace_out)
    run.write(_dumps(params.to_json()), a.params_out)


def _contexts(run, path):
    seqs = load_sequences(run.input(path))
    if len(seqs) > 2:
        raise InputError(f"{path}: expected at most two context sequences, got {len(seqs)}")
    return [s.frames for s in seqs]


def cmd_infer(run, a):
    cfg = _load_config(run, a.config)
    params = dv.GeneratorParams.from_json(read_json(run.input(a.params)))
    ctx = _contexts(run, a.contexts)
    res = dv.infer(params, ctx, cfg, mode=a.mode, k=a.k, seed=a.seed, n_c=a.n_c,
                   conditioned=not a.unconditioned)
    run.write(_dumps(res.to_json()))


def cmd_compare(run, a):
    cfg = _load_config(run, a.config)
    if a.steps is not None:
        cfg = replace(cfg, steps=a.steps)
    if a.seed_given:
        cfg = replace(cfg, seed=a.seed)
    if a.inject_every is not None:
        cfg = replace(cfg, inject_every=a.inject_every)
    elif not cfg.inject_every:
        cfg = replace(cfg, inject_every=10)
    mic, mle = dv.compare_objectives(cfg)
    run.write(dv.paired_csv(mic, mle))


def cmd_segment(run, a):
    d = read_json(run.input(a.input))
    if not isinstance(d, dict):
        raise InputError(f"{a.input}: expected an object with 'words'")
    if a.mode == "prominence":
        s = seg.segment_prominence(seg.ProminenceLabeledText.from_json(d), a.threshold)
    else:
        words = d.get("words")
        if not isinstance(words, list):
            raise InputError(f"{a.input}: 'words' must be a list")
        s = seg.segment_fixed(words, a.n)
    run.write(json.dumps(s.to_json()) + "\n")


def cmd_metrics(run, a):
    seqs = load_sequences(run.input(a.input))
    if a.metric == "sigma":
        rows = ["id,sigma_p\n"] + [f"{s.id},{dv.fmt(sigma_p(s))}\n" for s in seqs]
    else:
        rows = ["determinant\n", dv.fmt(diversity_determinant(seqs)) + "\n"]
    run.write("".join(rows))


def cmd_sweep(run, a):
    cfg = _load_config(run, a.config)
    params = dv.GeneratorParams.from_json(read_json(run.input(a.params)))
    ctx = _contexts(run, a.contexts)
    entries = dv.quality_weight_sweep(params, ctx, cfg, _floats(a.weights), seed=a.seed)
    out_dir = Path(a.out_dir)
    rows = ["w,selected,sigma_p,contour_file\n"]
    for e in entries:
        name = f"contour_w{dv.fmt(e.w)}.csv"
        buf_path = out_dir / name
        dv.write_contour(buf_path, e.result)
        run.outputs.append(str(buf_path))
        rows.append(f"{dv.fmt(e.w)},{e.result.selected[0]},{dv.fmt(e.sigma)},{name}\n")
    run.write("".join(rows))


def cmd_replay(run, a):
    m = read_json(run.input(a.manifest))
    argv = m.get("argv")
    if not isinstance(argv, list):
        raise InputError(f"{a.manifest}: not a run manifest")
    code = main(argv + ["--quiet"], write_manifest=False)
    if code:
        return code
    bad = [p for p, h in m.get("outputs", {}).items()
           if not Path(p).exists() or sha256_file(p) != h]
    if bad:
        run.log("outputs differ from manifest: " + ", ".join(bad))
        return 1
    run.log(f"replayed {m.get('subcommand')}: {len(m.get('outputs', {}))} outputs identical")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--manifest", default=None, help="manifest path")

    p = argparse.ArgumentParser(
        prog="seqdpp", description=__doc__.splitlines()[0], epilog=EXAMPLES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"seqdpp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, parents=[common], help=help, description=help)
        sp.set_defaults(func=func)
        return sp

    sp = add("kernel", cmd_kernel, "build a DPP kernel from sequences")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--w", type=float, default=10.0)
    sp.add_argument("--k", type=float, default=None, help="log-density threshold (default: reference mean)")
    sp.add_argument("--cond", default="", help="conditioning indices, e.g. 0,1")
    sp.add_argument("--density-mean", type=float, default=dv.DensityModel.mean)
    sp.add_argument("--density-std", type=float, default=dv.DensityModel.innovation_std)
    sp.add_argument("--density-ar", type=float, default=dv.DensityModel.ar)
    sp.add_argument("--raw-similarity", action="store_true", help="unnormalised exp(-sdtw) similarity")
    sp.add_argument("--psd-tol", type=float, default=1e-8)
    sp.add_argument("--similarity-csv", default=None)

    sp = add("sample", cmd_sample, "draw subsets from a kernel")
    sp.add_argument("--kernel", required=True)
    sp.add_argument("--mode", choices=["dpp", "kdpp", "cond"], default="dpp")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--draws", type=int, default=1)
    sp.add_argument("--empirical", default=None, help="CSV of subset frequencies")
    sp.add_argument("--unconditioned", action="store_true", help="k-DPP ignores the conditioning set")

    sp = add("map", cmd_map, "singleton MAP inference given the conditioning set")
    sp.add_argument("--kernel", required=True)

    sp = add("mic", cmd_mic, "evaluate MIC and MLE objectives")
    sp.add_argument("--kernel", required=True)
    sp.add_argument("--gradient-csv", default=None)

    sp = add("train", cmd_train, "train the candidate generator on the MIC (or MLE) objective")
    sp.add_argument("--config", default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--trace-out", default=None)
    sp.add_argument("--params-out", default=None)
    sp.add_argument("--timing", action="store_true", help="add wall_time to the trace (not reproducible)")

    sp = add("infer", cmd_infer, "generate candidates and select by MAP or k-DPP")
    sp.add_argument("--params", required=True)
    sp.add_argument("--contexts", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--mode", choices=["map", "kdpp"], default="map")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--n-c", type=int, default=None)
    sp.add_argument("--unconditioned", action="store_true")

    sp = add("compare-objectives", cmd_compare, "paired MIC / MLE training with duplicate injection")
    sp.add_argument("--config", default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--inject-every", type=int, default=None)

    sp = add("segment", cmd_segment, "split words into target/context spans")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--mode", choices=["prominence", "fixed"], default="prominence")
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=3)

    sp = add("metrics", cmd_metrics, "sigma_p or cosine-similarity determinant")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--metric", choices=["sigma", "det"], default="sigma")

    sp = add("sweep", cmd_sweep, "MAP selection across quality weights")
    sp.add_argument("--params", required=True)
    sp.add_argument("--contexts", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--weights", default="1,2,5,10")
    sp.add_argument("--out-dir", required=True)

    sp = add("replay", cmd_replay, "re-run a manifest and verify outputs")
    sp.add_argument("manifest")
    return p


def _write_manifest(run, argv):
    a = run.args
    path = a.manifest
    if path is None and a.out not in (None, "-"):
        path = f"{a.out}.manifest.json"
    config = {k: v for k, v in vars(a).items()
              if k not in ("func", "manifest", "quiet", "seed_given")}
    m = {
        "subcommand": a.command,
        "argv": [t for t in argv if t != "--quiet"],
        "config": config,
        "seed": a.seed,
        "version": __version__,
        "inputs": {p: sha256_file(p) for p in run.inputs if Path(p).exists()},
        "outputs": {p: sha256_file(p) for p in run.outputs},
    }
    text = json.dumps(m, indent=1, sort_keys=True) + "\n"
    if path is None:
        if not a.quiet:
            sys.stderr.write(text)
        return
    Path(path).write_text(text)


def _strip_manifest(argv):
    out, skip = [], False
    for t in argv:
        if skip:
            skip = False
            continue
        if t == "--manifest":
            skip = True
            continue
        if t.startswith("--manifest="):
            continue
        out.append(t)
    return out


def main(argv=None, write_manifest: bool = True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    run = Run(args)
    try:
        code = args.func(run, args) or 0
    except InputError as exc:
        print(f"seqdpp {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"seqdpp {args.command}: numerical error: {exc}", file=sys.stderr)
        return 1
    if write_manifest and args.command != "replay":
        _write_manifest(run, _strip_manifest(argv))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
