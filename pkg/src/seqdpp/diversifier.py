"""Desk-scale candidate diversifier trained on the conditional MIC objective.

A per-frame affine generator maps Gaussian noise to ``n_c`` target
sequences. Together with the left/right contexts they form the ground set
``[d_L, d_R, d_1, ..., d_n]`` with A = {contexts}. The kernel is
``diag(q) S diag(q)`` with soft-DTW similarities and thresholded
log-density qualities, and the generator is updated by gradient ascent on
``tr(K^A)``. The gradient is composed by hand:

    dMIC/dL -> (dL/dq, dL/dS) -> (quality slope * grad log-density, soft-DTW backward)
            -> frames -> (log_scale, shift)

Context qualities and frames are treated as constants.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cdpp
from .errors import InputError, NonFiniteGradientError, NumericalError
from .kernel import DppKernel, build_kernel, quality_score, quality_score_grad
from .metrics import sigma_p
from .sampling import kdpp_sample, make_rng, map_scores, map_single
from .sequences import as_frames, similarity_matrix, similarity_vjp

OBJECTIVES = ("mic", "mle")


# --------------------------------------------------------------------------
# density model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityModel:
    """Stationary Gaussian AR(1) density, independent across frame dimensions.

    ``x_1 ~ N(mean, s^2 / (1 - ar^2))``, ``x_t = mean + ar (x_{t-1} - mean) + s e_t``.
    """

    mean: float = 1.0
    innovation_std: float = 0.3
    ar: float = 0.7
    kind: str = "gaussian-ar1"

    def __post_init__(self):
        if self.kind != "gaussian-ar1":
            raise InputError(f"unknown density kind {self.kind!r}")
        if not self.innovation_std > 0:
            raise InputError("innovation_std must be positive")
        if not -1 < self.ar < 1:
            raise InputError("ar coefficient must lie in (-1, 1)")

    @property
    def stationary_var(self) -> float:
        return self.innovation_std ** 2 / (1 - self.ar ** 2)

    def _residuals(self, x):
        c = x - self.mean
        r = np.empty_like(c)
        r[0] = c[0]
        r[1:] = c[1:] - self.ar * c[:-1]
        return c, r

    def log_density(self, x) -> float:
        x = as_frames(x)
        T, d = x.shape
        _, r = self._residuals(x)
        s2 = self.innovation_std ** 2
        v0 = self.stationary_var
        lp = -0.5 * (np.log(2 * np.pi * v0) + r[0] ** 2 / v0).sum()
        lp -= 0.5 * ((T - 1) * d * np.log(2 * np.pi * s2) + (r[1:] ** 2).sum() / s2)
        return float(lp)

    def grad_log_density(self, x) -> np.ndarray:
        x = as_frames(x)
        _, r = self._residuals(x)
        s2 = self.innovation_std ** 2
        e = np.empty_like(r)
        e[0] = r[0] / self.stationary_var
        e[1:] = r[1:] / s2
        g = -e
        g[:-1] += self.ar * e[1:]
        return g

    def sample(self, n: int, length: int, rng, dim: int = 1) -> np.ndarray:
        """``n`` draws of shape (length, dim), returned as (n, length, dim)."""
        eps = rng.standard_normal((n, length, dim))
        x = np.empty_like(eps)
        x[:, 0] = self.mean + np.sqrt(self.stationary_var) * eps[:, 0]
        for t in range(1, length):
            x[:, t] = self.mean + self.ar * (x[:, t - 1] - self.mean) + self.innovation_std * eps[:, t]
        return x

    def threshold(self, length: int, dim: int = 1, n_samples: int = 1000, seed: int = 0) -> float:
        """Mean log-density of a fixed-seed reference corpus of the given length."""
        return _threshold(self, int(length), int(dim), int(n_samples), int(seed))


@lru_cache(maxsize=256)
def _threshold(model, length, dim, n_samples, seed):
    xs = model.sample(n_samples, length, make_rng(seed), dim)
    return float(np.mean([model.log_density(x) for x in xs]))


# --------------------------------------------------------------------------
# generator, configuration, traces
# --------------------------------------------------------------------------


@dataclass
class GeneratorParams:
    """Per-frame affine map ``d_t = exp(log_scale_t) * z_t + shift_t``.

    Parameters cover ``max_len`` frames; a target of length T uses the first
    T rows. The scale is kept in log form so it stays positive.
    """

    log_scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.log_scale = np.array(self.log_scale, dtype=np.float64, ndmin=2)
        self.shift = np.array(self.shift, dtype=np.float64, ndmin=2)
        if self.log_scale.shape != self.shift.shape:
            raise InputError("log_scale and shift must have the same shape")

    @classmethod
    def init(cls, max_len: int = 12, dim: int = 1, scale: float = 1.0, shift: float = 0.0):
        if not scale > 0:
            raise InputError("scale must be positive")
        return cls(np.full((max_len, dim), np.log(scale)), np.full((max_len, dim), float(shift)))

    @property
    def max_len(self) -> int:
        return self.shift.shape[0]

    @property
    def dim(self) -> int:
        return self.shift.shape[1]

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def apply(self, z: np.ndarray) -> np.ndarray:
        T = z.shape[-2]
        if T > self.max_len:
            raise InputError(f"target length {T} exceeds generator max_len {self.max_len}")
        return self.scale[:T] * z + self.shift[:T]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.log_scale.ravel(), self.shift.ravel()])

    def from_flat(self, v) -> "GeneratorParams":
        v = np.asarray(v, dtype=np.float64)
        k = self.log_scale.size
        return GeneratorParams(v[:k].reshape(self.log_scale.shape), v[k:].reshape(self.shift.shape))

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.log_scale.copy(), self.shift.copy())

    def to_json(self) -> dict:
        return {"log_scale": self.log_scale.tolist(), "shift": self.shift.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorParams":
        try:
            return cls(d["log_scale"], d["shift"])
        except (KeyError, TypeError):
            raise InputError("params JSON needs 'log_scale' and 'shift'") from None


@dataclass(frozen=True)
class TrainConfig:
    n_c: int = 8
    gamma: float = 1.0
    w: float = 10.0
    k: Optional[float] = None  # None: per-length reference threshold of the density
    lr: float = 1e-2
    steps: int = 200
    seed: int = 0
    objective: str = "mic"
    max_len: int = 12
    target_len: Optional[int] = None  # None: max_len
    dim: int = 1
    noise_scale: float = 1.0
    init_scale: float = 0.1
    init_shift: Optional[float] = None  # None: density mean
    density: DensityModel = field(default_factory=DensityModel)
    normalized_similarity: bool = True
    # duplicate injection: every `inject_every` steps candidate 1 copies candidate 0
    inject_every: int = 0
    inject_eps: float = 0.0
    skip_nonfinite: bool = False

    def __post_init__(self):
        if self.n_c < 1:
            raise InputError("n_c must be >= 1")
        if self.steps < 0:
            raise InputError("steps must be >= 0")
        if self.objective not in OBJECTIVES:
            raise InputError(f"objective must be one of {OBJECTIVES}")
        if self.target_len is not None and not 1 <= self.target_len <= self.max_len:
            raise InputError("target_len must lie in [1, max_len]")
        if isinstance(self.density, dict):
            object.__setattr__(self, "density", DensityModel(**self.density))

    @property
    def length(self) -> int:
        return self.target_len or self.max_len

    def init_params(self) -> GeneratorParams:
        shift = self.density.mean if self.init_shift is None else self.init_shift
        return GeneratorParams.init(self.max_len, self.dim, self.init_scale, shift)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise InputError(f"unknown config keys: {sorted(bad)}")
        return cls(**d)


@dataclass
class StepRecord:
    step: int
    objective: float
    loss: float
    grad_norm: float          # w.r.t. generator parameters
    kernel_grad_norm: float   # Frobenius norm of d objective / d L
    grad_bound: float         # |Abar| max(1, 1/lambda_min(L + I_Abar))^2
    min_eig: float            # min eigenvalue of L
    injected: bool = False
    finite: bool = True
    wall_time: float = 0.0


TRACE_COLUMNS = ("step", "objective", "loss", "grad_norm", "kernel_grad_norm",
                 "grad_bound", "min_eig", "injected", "finite")


@dataclass
class LossTrace:
    records: list = field(default_factory=list)

    def append(self, rec: StepRecord):
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("trace steps must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, timing: bool = False) -> str:
        cols = TRACE_COLUMNS + (("wall_time",) if timing else ())
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.records:
            wr.writerow([fmt(getattr(r, c)) for c in cols])
        return buf.getvalue()


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


# --------------------------------------------------------------------------
# candidates and kernels
# --------------------------------------------------------------------------


@dataclass
class CandidateSet:
    """Ground set ``contexts + targets`` with A = the context positions."""

    contexts: list
    targets: list
    z: Optional[np.ndarray] = None

    @property
    def sequences(self) -> list:
        return list(self.contexts) + list(self.targets)

    @property
    def cond(self) -> tuple:
        return tuple(range(len(self.contexts)))

    @property
    def n_ctx(self) -> int:
        return len(self.contexts)

    def __len__(self):
        return len(self.contexts) + len(self.targets)


def _contexts(context) -> list:
    if context is None:
        return []
    return [as_frames(c) for c in context if c is not None]


def generate_candidates(params: GeneratorParams, context, n_c: int, seed: int = 0,
                        noise_scale: float = 1.0, length: Optional[int] = None,
                        stream: int = 0) -> CandidateSet:
    """Draw ``n_c`` targets through the generator and prepend the contexts."""
    if n_c < 1:
        raise InputError("n_c must be >= 1")
    T = length or params.max_len
    rng = make_rng(seed, stream)
    z = noise_scale * rng.standard_normal((n_c, T, params.dim))
    return candidates_from_noise(params, context, z)


def candidates_from_noise(params: GeneratorParams, context, z) -> CandidateSet:
    z = np.asarray(z, dtype=np.float64)
    ctx = _contexts(context)
    targets = [as_frames(x) for x in params.apply(z)]
    return CandidateSet(ctx, targets, z)


def _qualities(seqs, density: DensityModel, w, k):
    pi = np.array([density.log_density(s) for s in seqs])
    if k is None:
        ks = np.array([density.threshold(len(s), s.shape[1]) for s in seqs])
    else:
        ks = np.full(len(seqs), float(k))
    q = quality_score(pi - ks, w, 0.0)
    dq = quality_score_grad(pi - ks, w, 0.0)
    return pi, ks, np.atleast_1d(q), np.atleast_1d(dq)


def candidate_kernel(cands: CandidateSet, cfg: TrainConfig) -> DppKernel:
    seqs = cands.sequences
    S = similarity_matrix(seqs, cfg.gamma, cfg.normalized_similarity)
    _, ks, q, _ = _qualities(seqs, cfg.density, cfg.w, cfg.k)
    K = build_kernel(S, q, cands.cond)
    k_out = float(ks[0]) if np.all(ks == ks[0]) else ks.tolist()
    return replace(K, w=float(cfg.w), k=k_out)


# --------------------------------------------------------------------------
# objective and gradient
# --------------------------------------------------------------------------


def objective_and_grad(params: GeneratorParams, cands: CandidateSet, cfg: TrainConfig):
    """Objective (MIC or MLE) and its gradient w.r.t. the generator parameters.

    Returns ``(value, grad, info)``; ``grad`` is a flat vector matching
    ``params.flat()``. ``info`` carries the kernel and kernel-level gradient.
    """
    seqs = cands.sequences
    S = similarity_matrix(seqs, cfg.gamma, cfg.normalized_similarity)
    pi, ks, q, dq = _qualities(seqs, cfg.density, cfg.w, cfg.k)
    K = build_kernel(S, q, cands.cond)
    if cfg.objective == "mic":
        value, G = cdpp.mic_value_and_gradient(K)
    else:
        value, G = cdpp.mle_value_and_gradient(K)
    info = {"kernel": K, "G": G}
    if not np.isfinite(value) or not np.all(np.isfinite(G)):
        return value, np.full(params.flat().shape, np.nan), info

    Sm = S.entries
    dq_total = ((G + G.T) * Sm * q[None, :]).sum(axis=1)
    U = G * q[:, None] * q[None, :]
    frame_grads = similarity_vjp(seqs, cfg.gamma, U, cfg.normalized_similarity)

    g_log_scale = np.zeros_like(params.log_scale)
    g_shift = np.zeros_like(params.shift)
    scale = params.scale
    for t, x in enumerate(cands.targets):
        i = cands.n_ctx + t
        g = frame_grads[i] + dq_total[i] * dq[i] * cfg.density.grad_log_density(x)
        T = x.shape[0]
        g_shift[:T] += g
        g_log_scale[:T] += g * scale[:T] * cands.z[t]
    grad = np.concatenate([g_log_scale.ravel(), g_shift.ravel()])
    return value, grad, info


def objective_value(params: GeneratorParams, context, z, cfg: TrainConfig) -> float:
    """Objective for fixed noise ``z``; used for finite-difference checks."""
    cands = candidates_from_noise(params, context, z)
    K = build_kernel(similarity_matrix(cands.sequences, cfg.gamma, cfg.normalized_similarity),
                     _qualities(cands.sequences, cfg.density, cfg.w, cfg.k)[2], cands.cond)
    if cfg.objective == "mic":
        return cdpp.mic_objective(K)
    return cdpp.mle_objective(K)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def sample_instance(cfg: TrainConfig, seed: int, step: int, dim: int = None):
    """Contexts and noise for one step; depends only on (seed, step)."""
    dim = dim or cfg.dim
    rng = make_rng(seed, step)
    T = cfg.length
    ctx = list(cfg.density.sample(2, T, rng, dim))
    z = cfg.noise_scale * rng.standard_normal((cfg.n_c, T, dim))
    injected = bool(cfg.inject_every) and step % cfg.inject_every == 0 and cfg.n_c >= 2
    if injected:
        z[1] = z[0] + cfg.inject_eps * rng.standard_normal(z[0].shape)
    return ctx, z, injected


def train_step(params: GeneratorParams, context, cfg: TrainConfig, z=None, seed: int = 0,
               step: int = 0, injected: bool = False):
    """One gradient-ascent update on the configured objective.

    Returns ``(new_params, record)``. A non-finite objective or gradient
    raises :class:`NonFiniteGradientError` carrying the record, unless
    ``cfg.skip_nonfinite`` is set, in which case parameters are left
    unchanged and the record is flagged.
    """
    t0 = time.perf_counter()
    if z is None:
        z = cfg.noise_scale * make_rng(seed, step).standard_normal((cfg.n_c, cfg.length, params.dim))
    try:
        cands = candidates_from_noise(params, context, z)
        value, grad, info = objective_and_grad(params, cands, cfg)
        K, G = info["kernel"], info["G"]
        bound = cdpp.mic_gradient_bound(K)
        min_eig = K.min_eigenvalue()
    except (InputError, NumericalError, FloatingPointError, np.linalg.LinAlgError):
        value, grad, G = float("nan"), np.full(params.flat().shape, np.nan), None
        bound = min_eig = float("nan")

    finite = bool(np.isfinite(value) and np.all(np.isfinite(grad)))
    rec = StepRecord(
        step=step,
        objective=value,
        loss=-value,
        grad_norm=float(np.linalg.norm(grad)) if finite else float("inf"),
        kernel_grad_norm=float(np.linalg.norm(G)) if G is not None and finite else float("inf"),
        grad_bound=bound,
        min_eig=min_eig,
        injected=injected,
        finite=finite,
    )
    if not finite:
        rec.wall_time = time.perf_counter() - t0
        if cfg.skip_nonfinite:
            return params.copy(), rec
        raise NonFiniteGradientError(f"non-finite objective/gradient at step {step}", rec)
    new = params.from_flat(params.flat() + cfg.lr * grad)
    rec.wall_time = time.perf_counter() - t0
    return new, rec


def train(cfg: TrainConfig, params: GeneratorParams = None):
    """Run ``cfg.steps`` updates on freshly sampled contexts; returns ``(params, trace)``."""
    params = cfg.init_params() if params is None else params.copy()
    trace = LossTrace()
    for step in range(cfg.steps):
        ctx, z, injected = sample_instance(cfg, cfg.seed, step, params.dim)
        params, rec = train_step(params, ctx, cfg, z=z, step=step, injected=injected)
        trace.append(rec)
    return params, trace


def evaluate_mic(params: GeneratorParams, cfg: TrainConfig, n_instances: int = 16,
                 seed: int = 2 ** 32 + 7) -> float:
    """Mean MIC over a fixed set of held-out instances (no injection)."""
    cfg = replace(cfg, inject_every=0, objective="mic")
    vals = []
    for i in range(n_instances):
        ctx, z, _ = sample_instance(cfg, seed, i, params.dim)
        vals.append(objective_value(params, ctx, z, cfg))
    return float(np.mean(vals))


def compare_objectives(cfg: TrainConfig):
    """Paired MIC / MLE runs on identical instances; returns both traces."""
    base = replace(cfg, skip_nonfinite=True)
    _, mic = train(replace(base, objective="mic"))
    _, mle = train(replace(base, objective="mle"))
    return mic, mle


PAIRED_COLUMNS = ("step", "mic_obj", "mic_gradnorm", "mle_obj", "mle_gradnorm",
                  "mic_grad_bound", "mic_param_gradnorm", "mle_param_gradnorm", "injected")


def paired_csv(mic: LossTrace, mle: LossTrace) -> str:
    """Gradnorm columns are Frobenius norms of d objective / d L."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(PAIRED_COLUMNS)
    for a, b in zip(mic.records, mle.records):
        wr.writerow([a.step, fmt(a.objective), fmt(a.kernel_grad_norm), fmt(b.objective),
                     fmt(b.kernel_grad_norm), fmt(a.grad_bound), fmt(a.grad_norm),
                     fmt(b.grad_norm), fmt(a.injected)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# inference
# --------------------------------------------------------------------------


@dataclass
class InferenceResult:
    selected: list          # ground-set indices
    sequences: list         # the selected target sequences
    candidates: CandidateSet
    kernel: DppKernel
    scores: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        return {
            "selected": [int(i) for i in self.selected],
            "target_indices": [int(i) - self.candidates.n_ctx for i in self.selected],
            "sequences": [{"id": f"target_{int(i) - self.candidates.n_ctx}", "frames": s.tolist()}
                          for i, s in zip(self.selected, self.sequences)],
            "candidates": [{"id": f"target_{t}", "frames": s.tolist()}
                           for t, s in enumerate(self.candidates.targets)],
            "map_scores": None if self.scores is None else [fmt(v) for v in self.scores],
        }


def select(cands: CandidateSet, cfg: TrainConfig, mode: str = "map", k: int = None,
           seed: int = 0, conditioned: bool = True) -> InferenceResult:
    """MAP (one target) or k-DPP (k targets) selection over a candidate set."""
    K = candidate_kernel(cands, cfg)
    if mode == "map":
        idx = [map_single(K)]
        scores = map_scores(K)
    elif mode == "kdpp":
        if k is None:
            raise InputError("kdpp mode needs k")
        idx = kdpp_sample(K, int(k), make_rng(seed, 1), conditioned=conditioned)
        scores = None
    else:
        raise InputError(f"unknown mode {mode!r}")
    seqs = [cands.sequences[i] for i in idx]
    return InferenceResult(idx, seqs, cands, K, scores)


def infer(params: GeneratorParams, context, cfg: TrainConfig, mode: str = "map", k: int = None,
          seed: int = 0, n_c: int = None, conditioned: bool = True) -> InferenceResult:
    """Generate candidates, build the conditioned kernel and select from it."""
    n_c = n_c or cfg.n_c
    ctx = _contexts(context)
    length = cfg.target_len or (ctx[0].shape[0] if ctx else None) or params.max_len
    length = min(length, params.max_len)
    cands = generate_candidates(params, ctx, n_c, seed, cfg.noise_scale, length)
    return select(cands, cfg, mode, k, seed, conditioned)


@dataclass
class SweepEntry:
    w: float
    result: InferenceResult
    sigma: float


def quality_weight_sweep(params: GeneratorParams, context, cfg: TrainConfig,
                         weights: Sequence[float], seed: int = 0, mode: str = "map",
                         k: int = None, candidates: CandidateSet = None,
                         out_dir=None) -> list[SweepEntry]:
    """Select with each quality weight on one shared candidate set.

    ``sigma`` is sigma_p of the (first) selected sequence. With ``out_dir``
    one contour CSV per weight is written (``contour_w<w>.csv``).
    """
    if any(not w > 0 for w in weights):
        raise InputError("quality weights must be positive")
    if candidates is None:
        ctx = _contexts(context)
        length = min(cfg.target_len or (ctx[0].shape[0] if ctx else params.max_len), params.max_len)
        candidates = generate_candidates(params, ctx, cfg.n_c, seed, cfg.noise_scale, length)
    out = []
    for w in weights:
        res = select(candidates, replace(cfg, w=float(w)), mode, k, seed)
        out.append(SweepEntry(float(w), res, sigma_p(res.sequences[0][:, :1])))
        if out_dir is not None:
            write_contour(Path(out_dir) / f"contour_w{fmt(w)}.csv", res)
    return out


def write_contour(path, res: InferenceResult):
    """Frame-indexed CSV: selected contour(s) then every candidate (dimension 0)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cands = res.candidates.targets
    T = max(s.shape[0] for s in cands)
    cols = ["frame"] + [f"selected_{j}" for j in range(len(res.sequences))] + \
           [f"candidate_{t}" for t in range(len(cands))]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for f in range(T):
        row = [f]
        for s in list(res.sequences) + list(cands):
            row.append(fmt(s[f, 0]) if f < s.shape[0] else "")
        wr.writerow(row)
    path.write_text(buf.getvalue())
