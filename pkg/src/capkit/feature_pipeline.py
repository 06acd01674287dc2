"""Frame/clip index arithmetic and multi-extractor feature assembly.

Covers three deterministic pipeline stages that sit between raw feature
extraction and the captioner input:

  * a sliding-window clip schedule (window 1.5 s, stride 0.3 s by
    default) used to plan fixed-length clip extraction over a video;
  * segment-based frame sampling: train mode draws one random frame per
    segment through the seeded generator, test mode takes segment
    centers;
  * row-wise fusion of several per-extractor feature matrices into one
    matrix of width sum(dims), plus the 0/1 token-type labelling of the
    fused video rows and subtitle tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFeatureList, NonPositiveDuration
from .rng import Splitmix64, derive_seed
from .text_metrics import TokenSequence, tokenize

DEFAULT_WINDOW_S = 1.5
DEFAULT_STRIDE_S = 0.3
DEFAULT_SEGMENTS = 20


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame feature vectors from one extractor: (n_frames, dim) float64."""

    name: str
    fps: float
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"frames must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frames contain non-finite values")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", arr)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class ClipWindowSchedule:
    """Planned (start_s, end_s) clip boundaries for one video."""

    window_s: float
    stride_s: float
    clips: tuple


@dataclass(frozen=True)
class TSNConfig:
    """Segment count and seed for train-mode frame sampling."""

    k: int
    seed: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class TokenTypedSequence:
    """Fused video rows plus subtitle tokens with 0/1 type labels."""

    video_part: np.ndarray = field(repr=False)
    subtitle_tokens: tuple
    type_ids: tuple


def sliding_windows(duration_s: float, window_s: float = DEFAULT_WINDOW_S,
                    stride_s: float = DEFAULT_STRIDE_S) -> ClipWindowSchedule:
    """Clip schedule [t, t+window] for t = 0, stride, 2*stride, ...

    Emits clips while t + window <= duration (with a 1e-9 slack for
    float drift). Videos shorter than one window get the single clip
    [0, duration].

    Raises:
        NonPositiveDuration: if duration_s <= 0.
    """
    if duration_s <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {duration_s}")
    if window_s <= 0 or stride_s <= 0:
        raise ValueError("window and stride must be positive")
    clips = []
    i = 0
    while i * stride_s + window_s <= duration_s + 1e-9:
        start = i * stride_s
        clips.append((start, start + window_s))
        i += 1
    if not clips:
        clips.append((0.0, duration_s))
    return ClipWindowSchedule(window_s=window_s, stride_s=stride_s, clips=tuple(clips))


def tsn_test_indices(n_frames: int, k: int) -> list[int]:
    """Deterministic segment-center indices: floor((i + 0.5) * n / k), clamped.

    Exact integer arithmetic, so every platform agrees.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return [min((2 * i + 1) * n_frames // (2 * k), n_frames - 1) for i in range(k)]


def tsn_train_indices(n_frames: int, cfg: TSNConfig) -> list[int]:
    """One uniformly sampled frame index per segment, via the seeded generator.

    Segment i covers [floor(i*n/k), floor((i+1)*n/k)). Videos with fewer
    frames than segments fall back to the deterministic indices of a
    sequence padded by repeating the last frame.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    k = cfg.k
    if n_frames < k:
        return [min(j, n_frames - 1) for j in range(k)]
    rng = Splitmix64(cfg.seed)
    out = []
    for i in range(k):
        lo = i * n_frames // k
        hi = (i + 1) * n_frames // k
        out.append(lo + rng.below(hi - lo))
    return out


def align_and_fuse(features: list[FeatureSequence], k: int, mode: str, seed: int = 0,
                   shared_seed: bool = False) -> np.ndarray:
    """Sample every feature sequence down to k rows and concatenate row-wise.

    Args:
        features: per-extractor sequences, fused in input order.
        k: common number of rows after sampling.
        mode: "train" (seeded per-segment sampling) or "test"
            (deterministic segment centers).
        seed: base seed for train mode. Each feature draws from its own
            derived substream unless shared_seed is set.
        shared_seed: give every feature the identical index stream.

    Returns:
        (k, sum of dims) float64 matrix.

    Raises:
        EmptyFeatureList: if features is empty.
    """
    if not features:
        raise EmptyFeatureList("fusion needs at least one feature sequence")
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    parts = []
    for pos, feat in enumerate(features):
        if mode == "test":
            idx = tsn_test_indices(feat.n_frames, k)
        else:
            sub_seed = seed if shared_seed else derive_seed(seed, pos)
            idx = tsn_train_indices(feat.n_frames, TSNConfig(k=k, seed=sub_seed))
        parts.append(feat.frames[idx])
    return np.concatenate(parts, axis=1)


def assemble_bimodal(fused: np.ndarray, subtitle: str) -> TokenTypedSequence:
    """Attach tokenized subtitle text to fused video rows with 0/1 type ids.

    Video rows are labelled 0, subtitle token positions 1.
    """
    fused = np.asarray(fused, dtype=np.float64)
    if fused.ndim != 2 or fused.shape[0] < 1:
        raise ValueError(f"fused matrix must have at least one row, got shape {fused.shape}")
    tokens: TokenSequence = tokenize(subtitle)
    k = fused.shape[0]
    type_ids = (0,) * k + (1,) * len(tokens)
    return TokenTypedSequence(video_part=fused, subtitle_tokens=tuple(tokens), type_ids=type_ids)
