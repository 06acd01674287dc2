"""Bundled synthetic captioning task for training demos and tests.

Every video belongs to one of a few latent classes; its feature rows are
a class one-hot plus small seeded noise and its single reference caption
is three words drawn from position-disjoint slices of the vocabulary
(word identity determined by the class alone). The mapping from feature
to caption is therefore deterministic and exactly learnable by the
log-linear toy captioner, while staying non-trivial enough that an
underfit model leaves headroom for reward-driven fine-tuning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus_io import CaptionRecord, write_captions, write_features
from .ensemble import VideoContext
from .feature_pipeline import FeatureSequence, align_and_fuse
from .rng import Splitmix64
from .toy_captioner import TrainExample, make_context
from .vocab import Vocab

DEFAULT_VIDEOS = 50
DEFAULT_VOCAB_WORDS = 25


@dataclass(frozen=True)
class SyntheticVideo:
    """One generated video: frames, subtitle, and reference captions."""

    video_id: str
    frames: np.ndarray = field(repr=False)
    subtitle: str
    references: tuple


def _position_words(vocab_words: int) -> tuple[list[str], list[str], list[str]]:
    if vocab_words < 3:
        raise ValueError("need at least 3 content words")
    words = [f"w{i:02d}" for i in range(vocab_words)]
    a = (vocab_words + 2) // 3
    b = (vocab_words - a + 1) // 2
    return words[:a], words[a:a + b], words[a + b:]


def synthetic_corpus(n_videos: int = DEFAULT_VIDEOS, vocab_words: int = DEFAULT_VOCAB_WORDS,
                     seed: int = 0, noise: float = 0.05) -> list[SyntheticVideo]:
    """Generate the deterministic class -> caption corpus.

    Class count is the smallest of the three position slices; video i
    belongs to class i mod n_classes. Feature rows are the class one-hot
    with uniform noise of half-width `noise` added.
    """
    pos1, pos2, pos3 = _position_words(vocab_words)
    n_classes = min(len(pos1), len(pos2), len(pos3))
    rng = Splitmix64(seed)
    videos = []
    for i in range(n_videos):
        c = i % n_classes
        caption = f"{pos1[c]} {pos2[c]} {pos3[c]}"
        n_frames = 24 + 3 * (i % 7)
        frames = np.zeros((n_frames, n_classes))
        frames[:, c] = 1.0
        for r in range(n_frames):
            for j in range(n_classes):
                frames[r, j] += (rng.next_float() * 2.0 - 1.0) * noise
        videos.append(SyntheticVideo(
            video_id=f"v{i:03d}",
            frames=frames,
            subtitle=pos1[c],
            references=(caption,),
        ))
    return videos


def corpus_vocab(videos: list[SyntheticVideo]) -> Vocab:
    """Vocabulary over every word in the corpus references and subtitles."""
    words: set = set()
    for v in videos:
        words.update(v.subtitle.split())
        for ref in v.references:
            words.update(ref.split())
    return Vocab.from_content(sorted(words))


def build_examples(videos: list[SyntheticVideo], vocab: Vocab, k: int = 8,
                   mode: str = "test", seed: int = 0) -> list[TrainExample]:
    """Fuse each video's frames to k rows and build training examples."""
    examples = []
    for v in videos:
        feat = FeatureSequence(name=v.video_id, fps=10.0, frames=v.frames)
        fused = align_and_fuse([feat], k=k, mode=mode, seed=seed)
        ctx = make_context(fused, v.subtitle, vocab, video_id=v.video_id)
        examples.append(TrainExample(
            video_id=v.video_id,
            context=VideoContext(video_id=v.video_id, v_mean=ctx.v_mean, sub_bow=ctx.sub_bow),
            references=tuple(tuple(r.split()) for r in v.references),
        ))
    return examples


def write_corpus_dir(videos: list[SyntheticVideo], out_dir) -> None:
    """Materialize a corpus as a training data directory.

    Layout: features/<video_id>.cff, refs.jsonl, subtitles.jsonl.
    """
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    refs = []
    subs = []
    for v in videos:
        write_features(out / "features" / f"{v.video_id}.cff", v.frames)
        refs.append(CaptionRecord(video_id=v.video_id, captions=v.references))
        subs.append(CaptionRecord(video_id=v.video_id, caption=v.subtitle))
    write_captions(out / "refs.jsonl", refs)
    write_captions(out / "subtitles.jsonl", subs)
