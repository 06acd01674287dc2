"""A minimal log-linear caption generator trained in two stages.

The model scores the next token as

    logits = b + W_prev[:, prev] + W_vid @ v_mean + W_sub @ sub_bow

followed by a PAD-masked softmax. v_mean is the column mean of the
fused video feature matrix and sub_bow the subtitle bag-of-words count
vector, so the whole context enters through two fixed-length vectors.

Stage one minimizes teacher-forced cross-entropy by full-batch gradient
descent (the objective is convex in the parameters). Stage two is
self-critical policy gradient: the reward is sentence CIDEr-D of a
sampled caption, the baseline the CIDEr-D of the current greedy decode,
and the gradient weights the sampled path's log-probability by the
advantage. All gradients are analytic and checkable against finite
differences via `gradient_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import StepModel, VideoContext
from .errors import EmptyBatch, EmptyDataset, ShapeMismatch
from .rng import Splitmix64
from .text_metrics import CorpusIdf, cider_d, tokenize
from .vocab import BOS, EOS, PAD, Vocab


@dataclass(frozen=True)
class ToyParams:
    """Log-linear weights; shapes fixed by vocab size V and feature width D."""

    w_prev: np.ndarray = field(repr=False)  # (V, V) previous-token logits
    w_vid: np.ndarray = field(repr=False)   # (V, D) video-feature logits
    w_sub: np.ndarray = field(repr=False)   # (V, V) subtitle bag-of-words logits
    b: np.ndarray = field(repr=False)       # (V,) bias

    def __post_init__(self):
        for name in ("w_prev", "w_vid", "w_sub", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        v = self.b.shape[0] if self.b.ndim == 1 else -1
        if (v < 5 or self.w_prev.shape != (v, v) or self.w_sub.shape != (v, v)
                or self.w_vid.ndim != 2 or self.w_vid.shape[0] != v):
            raise ShapeMismatch(
                f"inconsistent parameter shapes: b {self.b.shape}, w_prev {self.w_prev.shape}, "
                f"w_vid {self.w_vid.shape}, w_sub {self.w_sub.shape}")
        for name in ("w_prev", "w_vid", "w_sub", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def vocab_size(self) -> int:
        return self.b.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.w_vid.shape[1]

    @classmethod
    def zeros(cls, vocab_size: int, feat_dim: int) -> "ToyParams":
        return cls(
            w_prev=np.zeros((vocab_size, vocab_size)),
            w_vid=np.zeros((vocab_size, feat_dim)),
            w_sub=np.zeros((vocab_size, vocab_size)),
            b=np.zeros(vocab_size),
        )


def init_params(vocab_size: int, feat_dim: int, seed: int, scale: float = 0.1) -> ToyParams:
    """Seeded uniform init in [-scale, scale], reproducible bit-for-bit."""
    rng = Splitmix64(seed)

    def fill(shape):
        flat = np.array([rng.next_float() * 2.0 - 1.0 for _ in range(int(np.prod(shape)))])
        return (flat * scale).reshape(shape)

    return ToyParams(
        w_prev=fill((vocab_size, vocab_size)),
        w_vid=fill((vocab_size, feat_dim)),
        w_sub=fill((vocab_size, vocab_size)),
        b=fill((vocab_size,)),
    )


@dataclass(frozen=True)
class TrainConfig:
    """Stage-one (cross-entropy) settings."""

    learning_rate: float
    epochs: int
    seed: int = 0
    max_len: int = 16

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class SCSTConfig:
    """Stage-two (self-critical policy gradient) settings.

    max_len bounds both the sampled and the greedy decode; it is not a
    tuning knob of the update itself.
    """

    steps: int
    learning_rate: float
    seed: int = 0
    samples_per_video: int = 1
    max_len: int = 16

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.samples_per_video < 1:
            raise ValueError("samples_per_video must be >= 1")


@dataclass(frozen=True)
class TrainExample:
    """One video's decoding context and tokenized reference captions."""

    video_id: str
    context: VideoContext
    references: tuple

    def __post_init__(self):
        object.__setattr__(self, "references",
                           tuple(tuple(r) for r in self.references))


@dataclass(frozen=True)
class SampledCaption:
    """A sampled decode: content tokens, all drawn tokens, and their log-probs.

    drawn_ids includes the terminating EOS when one was drawn, so
    log_probs aligns with drawn_ids one-to-one.
    """

    token_ids: tuple
    drawn_ids: tuple
    log_probs: tuple


@dataclass(frozen=True)
class ScstDiagnostics:
    """Per-update means of sampled reward, greedy baseline, and advantage."""

    reward: float
    baseline: float
    advantage: float


def make_context(fused: np.ndarray, subtitle: str, vocab: Vocab,
                 video_id: str = "") -> VideoContext:
    """Collapse a fused feature matrix and subtitle into a decode context."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.ndim != 2 or fused.shape[0] < 1:
        raise ShapeMismatch(f"fused matrix must be 2-D and non-empty, got {fused.shape}")
    sub_bow = np.zeros(len(vocab), dtype=np.float64)
    for tok in tokenize(subtitle):
        sub_bow[vocab.id(tok)] += 1.0
    return VideoContext(video_id=video_id, v_mean=fused.mean(axis=0), sub_bow=sub_bow)


def forward_step(p: ToyParams, prev_token: int, v_mean: np.ndarray,
                 sub_bow: np.ndarray) -> np.ndarray:
    """Next-token distribution; PAD is masked to probability 0.

    Raises:
        ShapeMismatch: if the context vectors do not fit the parameters.
    """
    v = p.vocab_size
    v_mean = np.asarray(v_mean, dtype=np.float64)
    sub_bow = np.asarray(sub_bow, dtype=np.float64)
    if not 0 <= prev_token < v:
        raise ShapeMismatch(f"prev_token {prev_token} outside vocab of size {v}")
    if v_mean.shape != (p.feat_dim,):
        raise ShapeMismatch(f"v_mean shape {v_mean.shape}, expected ({p.feat_dim},)")
    if sub_bow.shape != (v,):
        raise ShapeMismatch(f"sub_bow shape {sub_bow.shape}, expected ({v},)")
    logits = p.b + p.w_prev[:, prev_token] + p.w_vid @ v_mean + p.w_sub @ sub_bow
    logits = logits - logits.max()
    exp = np.exp(logits)
    exp[PAD] = 0.0
    return exp / exp.sum()


class _Grads:
    """Accumulator for d(objective)/d(params), mirroring ToyParams shapes."""

    def __init__(self, vocab_size: int, feat_dim: int):
        self.w_prev = np.zeros((vocab_size, vocab_size))
        self.w_vid = np.zeros((vocab_size, feat_dim))
        self.w_sub = np.zeros((vocab_size, vocab_size))
        self.b = np.zeros(vocab_size)

    def add_step(self, g_logits: np.ndarray, prev_token: int, ctx: VideoContext) -> None:
        # g_logits = d(objective)/d(logits) for one step; the log-linear
        # form makes every parameter gradient an outer product with the
        # step inputs.
        self.b += g_logits
        self.w_prev[:, prev_token] += g_logits
        self.w_vid += np.outer(g_logits, ctx.v_mean)
        self.w_sub += np.outer(g_logits, ctx.sub_bow)

    def scale(self, f: float) -> None:
        self.w_prev *= f
        self.w_vid *= f
        self.w_sub *= f
        self.b *= f


def _apply_update(p: ToyParams, g: _Grads, lr: float) -> ToyParams:
    return ToyParams(
        w_prev=p.w_prev - lr * g.w_prev,
        w_vid=p.w_vid - lr * g.w_vid,
        w_sub=p.w_sub - lr * g.w_sub,
        b=p.b - lr * g.b,
    )


def _xe_loss_and_grad(p: ToyParams, encoded: list) -> tuple[float, _Grads]:
    """Mean token NLL with teacher forcing, plus its analytic gradient.

    encoded: list of (context, list of target id sequences). Each target
    sequence already ends with EOS; the input at step t is BOS followed
    by the targets up to t-1.
    """
    grads = _Grads(p.vocab_size, p.feat_dim)
    total = 0.0
    count = 0
    for ctx, seqs in encoded:
        for seq in seqs:
            prev = BOS
            for target in seq:
                probs = forward_step(p, prev, ctx.v_mean, ctx.sub_bow)
                total -= math.log(probs[target])
                g = probs.copy()
                g[target] -= 1.0
                grads.add_step(g, prev, ctx)
                count += 1
                prev = target
    if count == 0:
        raise EmptyDataset("no target tokens in dataset")
    grads.scale(1.0 / count)
    return total / count, grads


def _encode_dataset(data: list[TrainExample], vocab: Vocab) -> list:
    encoded = []
    for ex in data:
        seqs = [vocab.encode(list(ref)) + [EOS] for ref in ex.references]
        encoded.append((ex.context, seqs))
    return encoded


def xe_train(p: ToyParams, vocab: Vocab, data: list[TrainExample],
             cfg: TrainConfig) -> tuple[ToyParams, list[float]]:
    """Full-batch gradient descent on the teacher-forced cross-entropy.

    Returns the trained parameters and the per-epoch loss curve (loss
    evaluated before each update).

    Raises:
        EmptyDataset: if data is empty.
    """
    if not data:
        raise EmptyDataset("cross-entropy training needs at least one example")
    encoded = _encode_dataset(data, vocab)
    losses = []
    for _ in range(cfg.epochs):
        loss, grads = _xe_loss_and_grad(p, encoded)
        losses.append(loss)
        p = _apply_update(p, grads, cfg.learning_rate)
    return p, losses


def greedy_decode(p: ToyParams, ctx: VideoContext, max_len: int) -> list[int]:
    """Argmax decode (lowest id on ties); stops at EOS or max_len tokens."""
    out: list[int] = []
    prev = BOS
    while len(out) < max_len:
        probs = forward_step(p, prev, ctx.v_mean, ctx.sub_bow)
        tok = int(np.argmax(probs))
        if tok == EOS:
            break
        out.append(tok)
        prev = tok
    return out


def _draw(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    for i, pv in enumerate(probs):
        acc += pv
        if u < acc:
            return i
    # guard against the cumulative sum landing below u by rounding
    nz = np.nonzero(probs)[0]
    return int(nz[-1])


def sample_decode(p: ToyParams, ctx: VideoContext, max_len: int,
                  rng: Splitmix64) -> SampledCaption:
    """Multinomial decode through the seeded generator.

    Records the log-probability of every drawn token, including the
    terminating EOS when one is drawn.
    """
    token_ids: list[int] = []
    drawn: list[int] = []
    log_probs: list[float] = []
    prev = BOS
    while len(token_ids) < max_len:
        probs = forward_step(p, prev, ctx.v_mean, ctx.sub_bow)
        tok = _draw(probs, rng.next_float())
        drawn.append(tok)
        log_probs.append(math.log(probs[tok]))
        if tok == EOS:
            break
        token_ids.append(tok)
        prev = tok
    return SampledCaption(token_ids=tuple(token_ids), drawn_ids=tuple(drawn),
                          log_probs=tuple(log_probs))


def _path_logp_grad(p: ToyParams, ctx: VideoContext, drawn_ids,
                    grads: _Grads, weight: float) -> None:
    """Accumulate weight * d(-sum_t log p(drawn_t))/d(params) into grads."""
    prev = BOS
    for tok in drawn_ids:
        probs = forward_step(p, prev, ctx.v_mean, ctx.sub_bow)
        g = weight * probs
        g[tok] -= weight
        grads.add_step(g, prev, ctx)
        if tok != EOS:
            prev = tok


def scst_update(p: ToyParams, vocab: Vocab, batch: list[TrainExample],
                idf: CorpusIdf, cfg: SCSTConfig,
                rng: Splitmix64) -> tuple[ToyParams, ScstDiagnostics]:
    """One self-critical policy-gradient step over the batch.

    Per video: reward = CIDEr-D of a sampled caption, baseline = CIDEr-D
    of the current greedy decode, advantage = reward - baseline. The
    batch-mean gradient of -advantage * sum_t log p(sampled token) is
    applied as one descent step.

    Raises:
        EmptyBatch: if batch is empty.
    """
    if not batch:
        raise EmptyBatch("policy-gradient update needs at least one video")
    grads = _Grads(p.vocab_size, p.feat_dim)
    n_draws = len(batch) * cfg.samples_per_video
    reward_sum = 0.0
    baseline_sum = 0.0
    for ex in batch:
        refs = [list(r) for r in ex.references]
        greedy_ids = greedy_decode(p, ex.context, cfg.max_len)
        baseline = cider_d(vocab.decode(greedy_ids), refs, idf)
        for _ in range(cfg.samples_per_video):
            samp = sample_decode(p, ex.context, cfg.max_len, rng)
            reward = cider_d(vocab.decode(samp.token_ids), refs, idf)
            advantage = reward - baseline
            if advantage != 0.0:
                _path_logp_grad(p, ex.context, samp.drawn_ids, grads, advantage)
            reward_sum += reward
            baseline_sum += baseline
    grads.scale(1.0 / n_draws)
    new_p = _apply_update(p, grads, cfg.learning_rate)
    diag = ScstDiagnostics(
        reward=reward_sum / n_draws,
        baseline=baseline_sum / n_draws,
        advantage=(reward_sum - baseline_sum) / n_draws,
    )
    return new_p, diag


def scst_train(p: ToyParams, vocab: Vocab, data: list[TrainExample], idf: CorpusIdf,
               cfg: SCSTConfig) -> tuple[ToyParams, list[ScstDiagnostics]]:
    """Run cfg.steps self-critical updates with one generator seeded once."""
    rng = Splitmix64(cfg.seed)
    curve = []
    for _ in range(cfg.steps):
        p, diag = scst_update(p, vocab, data, idf, cfg, rng)
        curve.append(diag)
    return p, curve


@dataclass(frozen=True)
class GradCheckInstance:
    """Inputs for one gradient check: a context, teacher-forcing targets,
    and a sampled decode path."""

    context: VideoContext
    references: tuple        # id sequences for the XE objective (EOS included)
    sampled_path: tuple      # drawn ids of one sampled decode (EOS included)


def gradient_check(p: ToyParams, instance: GradCheckInstance, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks both objectives: the XE loss over instance.references and the
    summed log-probability of instance.sampled_path. Relative error is
    |a - n| / max(1, |a|, |n|) per parameter entry.
    """
    ctx = instance.context
    refs = [list(r) for r in instance.references]
    path = list(instance.sampled_path)

    def xe_loss(params: ToyParams) -> float:
        loss, _ = _xe_loss_and_grad(params, [(ctx, refs)])
        return loss

    def path_logp(params: ToyParams) -> float:
        total = 0.0
        prev = BOS
        for tok in path:
            probs = forward_step(params, prev, ctx.v_mean, ctx.sub_bow)
            total += math.log(probs[tok])
            if tok != EOS:
                prev = tok
        return total

    _, xe_grads = _xe_loss_and_grad(p, [(ctx, refs)])
    lp_grads = _Grads(p.vocab_size, p.feat_dim)
    # analytic gradient of +sum log p is minus the accumulated NLL form
    _path_logp_grad(p, ctx, path, lp_grads, -1.0)

    max_err = 0.0
    for objective, grads in ((xe_loss, xe_grads), (path_logp, lp_grads)):
        for name in ("w_prev", "w_vid", "w_sub", "b"):
            analytic = getattr(grads, name)
            base = getattr(p, name)
            it = np.nditer(base, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                arrays = {n: getattr(p, n).copy() for n in ("w_prev", "w_vid", "w_sub", "b")}
                arrays[name][idx] += h
                hi = objective(ToyParams(**arrays))
                arrays[name][idx] -= 2 * h
                lo = objective(ToyParams(**arrays))
                numeric = (hi - lo) / (2 * h)
                a = float(analytic[idx])
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                if err > max_err:
                    max_err = err
    return max_err


class ToyStepModel(StepModel):
    """StepModel view of trained parameters, for ensembling."""

    def __init__(self, params: ToyParams, vocab: Vocab):
        if params.vocab_size != len(vocab):
            raise ShapeMismatch(
                f"params vocab size {params.vocab_size} != vocab length {len(vocab)}")
        self._params = params
        self._vocab = vocab
        self._ctx: VideoContext | None = None

    @property
    def vocab(self) -> Vocab:
        return self._vocab

    def reset(self, context: VideoContext) -> None:
        if context.v_mean is None or context.sub_bow is None:
            raise ValueError("ToyStepModel needs a context with v_mean and sub_bow")
        self._ctx = context

    def step(self, prefix: list[int]) -> np.ndarray:
        if self._ctx is None:
            raise ValueError("reset() must be called before step()")
        return forward_step(self._params, prefix[-1], self._ctx.v_mean, self._ctx.sub_bow)
