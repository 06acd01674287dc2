"""Multi-model caption ensembling.

Two composable strategies:

  * word level: several step models decode one caption together, the
    next-token distributions being arithmetically averaged at every
    step of a greedy loop;
  * sentence level: each candidate caption of a video is scored by
    leave-one-out CIDEr-D against the remaining candidates and the
    argmax wins.

`full_ensemble` applies them in order: the word-level decode joins the
per-model single captions as one extra candidate, then the sentence
level consensus picks the winner per video.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyCandidateSet, EmptyPool, InvalidDistribution,
                     VideoIdMismatch, VocabMismatch)
from .text_metrics import CorpusIdf, build_idf, cider_d, join_tokens, tokenize
from .vocab import BOS, EOS, Vocab

DISTRIBUTION_TOL = 1e-6


@dataclass(frozen=True)
class VideoContext:
    """Opaque per-video decoding context handed to StepModel.reset.

    Live models read the feature summary (v_mean) and the subtitle
    bag-of-words (sub_bow); replayed models only need the video id.
    """

    video_id: str = ""
    v_mean: np.ndarray | None = field(default=None, repr=False)
    sub_bow: np.ndarray | None = field(default=None, repr=False)


class StepModel(ABC):
    """Anything that yields a next-token distribution given a decoded prefix."""

    @property
    @abstractmethod
    def vocab(self) -> Vocab:
        ...

    @abstractmethod
    def reset(self, context: VideoContext) -> None:
        """Bind the model to one video before decoding."""

    @abstractmethod
    def step(self, prefix: list[int]) -> np.ndarray:
        """Probability vector over the vocab; prefix[0] is always BOS."""


@dataclass(frozen=True)
class CandidateSet:
    """Ordered candidate captions of one video; duplicates allowed."""

    video_id: str
    candidates: tuple

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class ConsensusResult:
    """Winning candidate plus the leave-one-out score of every candidate."""

    winner_index: int
    winner: str
    scores: tuple


def _check_distribution(p: np.ndarray, size: int) -> None:
    if p.shape != (size,):
        raise InvalidDistribution(f"expected shape ({size},), got {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistribution("distribution has negative or non-finite entries")
    s = float(p.sum())
    if abs(s - 1.0) > DISTRIBUTION_TOL:
        raise InvalidDistribution(f"distribution sums to {s!r}")


def word_level_decode(models: list[StepModel], video: VideoContext, max_len: int) -> list[int]:
    """Greedy decode driven by the mean of all models' step distributions.

    At each step every model sees the same prefix; the emitted token is
    the argmax of the averaged distribution (lowest id on exact ties)
    and is fed back to every model. Stops at EOS or after max_len
    tokens. Returns content token ids (no BOS/EOS).

    Raises:
        VocabMismatch: if the models do not share one vocabulary.
        InvalidDistribution: if any model emits a non-distribution.
    """
    if not models:
        raise ValueError("word_level_decode needs at least one model")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    vocab = models[0].vocab
    for m in models[1:]:
        if m.vocab != vocab:
            raise VocabMismatch("ensemble models use different vocabularies")
    for m in models:
        m.reset(video)
    size = len(vocab)
    prefix = [BOS]
    out: list[int] = []
    while len(out) < max_len:
        mean = np.zeros(size, dtype=np.float64)
        for m in models:
            p = np.asarray(m.step(prefix), dtype=np.float64)
            _check_distribution(p, size)
            mean += p
        mean /= len(models)
        tok = int(np.argmax(mean))
        if tok == EOS:
            break
        out.append(tok)
        prefix.append(tok)
    return out


def sentence_consensus(cand_set: CandidateSet, idf: CorpusIdf) -> ConsensusResult:
    """Pick the candidate with the highest leave-one-out CIDEr-D score.

    Candidate i is scored against all other positions (an exact
    duplicate elsewhere stays in the reference set, so repeated captions
    reinforce each other). Singleton sets pass through with score 0.

    Raises:
        EmptyCandidateSet: if there are no candidates.
    """
    cands = cand_set.candidates
    if not cands:
        raise EmptyCandidateSet(f"video {cand_set.video_id!r} has no candidates")
    if len(cands) == 1:
        return ConsensusResult(winner_index=0, winner=cands[0], scores=(0.0,))
    toks = [tokenize(c) for c in cands]
    scores = []
    for i, hyp in enumerate(toks):
        refs = toks[:i] + toks[i + 1:]
        scores.append(cider_d(hyp, refs, idf))
    winner = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return ConsensusResult(winner_index=winner, winner=cands[winner], scores=tuple(scores))


def build_pool_idf(all_sets: list[CandidateSet]) -> CorpusIdf:
    """IDF over the candidate pool itself, one document per video.

    Consensus runs at submission time with no ground truth available,
    so the candidates are the only usable corpus.

    Raises:
        EmptyPool: if no candidate sets are given.
    """
    if not all_sets:
        raise EmptyPool("pool IDF needs at least one candidate set")
    docs = [(s.video_id, [tokenize(c) for c in s.candidates]) for s in all_sets]
    return build_idf(docs)


def full_ensemble(models: list[StepModel], single_outputs: list[dict],
                  videos: dict | None = None, max_len: int = 20) -> dict:
    """Word-level decode first, then sentence-level consensus per video.

    Args:
        models: step models for the word-level stage; may be empty, in
            which case only the sentence level runs.
        single_outputs: one video_id -> caption map per single model.
        videos: video_id -> VideoContext, required when models are given.
        max_len: decode length cap for the word-level stage.

    Returns:
        video_id -> winning caption, in sorted video order.

    Raises:
        VideoIdMismatch: if the caption maps (or videos) disagree on ids.
    """
    if not single_outputs:
        raise ValueError("full_ensemble needs at least one single-model output map")
    ids = set(single_outputs[0])
    for m in single_outputs[1:]:
        if set(m) != ids:
            raise VideoIdMismatch("single-model outputs cover different video ids")
    if models:
        if videos is None or not ids.issubset(videos):
            raise VideoIdMismatch("missing decoding contexts for some video ids")
        vocab = models[0].vocab

    order = sorted(ids)
    sets = []
    for vid in order:
        cands = [m[vid] for m in single_outputs]
        if models:
            ids_out = word_level_decode(models, videos[vid], max_len)
            cands.append(join_tokens(vocab.decode(ids_out)))
        sets.append(CandidateSet(video_id=vid, candidates=tuple(cands)))
    idf = build_pool_idf(sets)
    return {s.video_id: sentence_consensus(s, idf).winner for s in sets}
