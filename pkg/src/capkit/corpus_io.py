"""Portable file formats: captions, features, step traces, checkpoints.

Text formats are UTF-8 JSON, one record per line (captions, traces) or
one document per file (checkpoints); floats round-trip exactly through
Python's shortest-repr JSON encoding. The feature format CFF1 is binary:

    bytes 0..3   magic "CFF1"
    bytes 4..7   n_frames, unsigned 32-bit little-endian
    bytes 8..11  dim, unsigned 32-bit little-endian
    then n_frames * dim IEEE-754 float32 little-endian values, row-major

Features are stored at 32-bit precision; everything downstream computes
in 64-bit. Readers validate invariants and raise instead of returning
malformed values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import StepModel, VideoContext
from .errors import (BadMagic, DistributionNotNormalized, DuplicateVideoId,
                     NonFiniteValue, ParseError, ShapeMismatch, TraceExhausted,
                     TruncatedFile)
from .feature_pipeline import FeatureSequence
from .toy_captioner import ToyParams
from .vocab import Vocab

CFF1_MAGIC = b"CFF1"
CHECKPOINT_FORMAT = "CKPT1"
TRACE_SUM_TOL = 1e-6


# --- caption files ---

@dataclass(frozen=True)
class CaptionRecord:
    """One video's hypothesis caption or reference caption list."""

    video_id: str
    caption: str | None = None
    captions: tuple | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if (self.caption is None) == (self.captions is None):
            raise ValueError("record needs exactly one of caption / captions")
        if self.captions is not None:
            caps = tuple(self.captions)
            if not caps:
                raise ValueError("reference caption list must be non-empty")
            object.__setattr__(self, "captions", caps)


def write_captions(path, records: list[CaptionRecord]) -> None:
    path = Path(path)
    lines = []
    for rec in records:
        obj: dict = {"video_id": rec.video_id}
        if rec.caption is not None:
            obj["caption"] = rec.caption
        else:
            obj["captions"] = list(rec.captions)
        lines.append(json.dumps(obj, sort_keys=True, ensure_ascii=False))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_captions(path) -> list[CaptionRecord]:
    """Parse a caption file; rejects duplicate video ids.

    Raises:
        ParseError: on malformed JSON or records.
        DuplicateVideoId: if a video id repeats.
    """
    records: list[CaptionRecord] = []
    seen: set = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
        if not isinstance(obj, dict) or not isinstance(obj.get("video_id"), str):
            raise ParseError("record must be an object with a string video_id", line=lineno)
        vid = obj["video_id"]
        if vid in seen:
            raise DuplicateVideoId(vid, line=lineno)
        seen.add(vid)
        caption = obj.get("caption")
        captions = obj.get("captions")
        try:
            if captions is not None:
                if not isinstance(captions, list) or not all(isinstance(c, str) for c in captions):
                    raise ValueError("captions must be a list of strings")
                rec = CaptionRecord(video_id=vid, captions=tuple(captions))
            elif isinstance(caption, str):
                rec = CaptionRecord(video_id=vid, caption=caption)
            else:
                raise ValueError("record needs a caption string or a captions list")
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from e
        records.append(rec)
    return records


def hypothesis_map(records: list[CaptionRecord]) -> dict:
    """video_id -> caption string; every record must be a hypothesis."""
    out = {}
    for rec in records:
        if rec.caption is None:
            raise ParseError(f"video {rec.video_id!r}: expected a hypothesis record")
        out[rec.video_id] = rec.caption
    return out


def reference_map(records: list[CaptionRecord]) -> dict:
    """video_id -> list of caption strings; hypothesis records are promoted."""
    out = {}
    for rec in records:
        out[rec.video_id] = list(rec.captions) if rec.captions is not None else [rec.caption]
    return out


# --- CFF1 feature files ---

def write_features(path, frames: np.ndarray) -> None:
    """Write a feature matrix as CFF1 (float32 little-endian payload).

    Raises:
        NonFiniteValue: if any value is NaN or infinite.
    """
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"frames must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("refusing to write non-finite feature values")
    n, d = arr.shape
    payload = arr.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(CFF1_MAGIC + struct.pack("<II", n, d) + payload)


def read_features(path, name: str | None = None, fps: float = 10.0) -> FeatureSequence:
    """Read a CFF1 file into a FeatureSequence (values widened to float64).

    The format stores only the matrix; extractor name and fps are
    caller-supplied metadata (name defaults to the file stem).

    Raises:
        BadMagic, TruncatedFile, NonFiniteValue, ParseError.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) >= 4 and blob[:4] != CFF1_MAGIC:
        raise BadMagic(f"{path}: expected magic {CFF1_MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 12:
        raise _truncated(path, 12, len(blob))
    n, d = struct.unpack("<II", blob[4:12])
    if n == 0 or d == 0:
        raise ParseError(f"{path}: feature matrix must be non-empty, header says {n}x{d}")
    expected = 12 + 4 * n * d
    if len(blob) < expected:
        raise _truncated(path, expected, len(blob))
    if len(blob) > expected:
        raise ParseError(f"{path}: {len(blob) - expected} trailing bytes after payload")
    values = np.frombuffer(blob, dtype="<f4", count=n * d, offset=12)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: payload contains non-finite values")
    frames = values.astype(np.float64).reshape(n, d)
    return FeatureSequence(name=name if name is not None else path.stem, fps=fps, frames=frames)


def _truncated(path, expected: int, got: int) -> TruncatedFile:
    return TruncatedFile(f"{path}: need {expected} bytes, file has {got}")


# --- step-distribution traces ---

@dataclass(frozen=True)
class TraceRecord:
    """Recorded per-step next-token distributions for one video."""

    video_id: str
    steps: tuple  # tuple of tuples of floats, one inner tuple per step

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(map(float, s)) for s in self.steps))


def write_trace(path, vocab: Vocab, records: list[TraceRecord]) -> None:
    """Write a trace file: a vocab header line, then one record per line."""
    lines = [json.dumps({"vocab": list(vocab.tokens)}, ensure_ascii=False)]
    for rec in records:
        lines.append(json.dumps(
            {"steps": [list(s) for s in rec.steps], "video_id": rec.video_id},
            sort_keys=True, ensure_ascii=False))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_trace(path) -> tuple[Vocab, list[TraceRecord]]:
    """Parse a trace file, validating every stored distribution.

    Raises:
        ParseError, DuplicateVideoId, DistributionNotNormalized.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise ParseError("trace file has no vocab header")
    head_no, head = lines[0]
    try:
        head_obj = json.loads(head)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=head_no) from e
    tokens = head_obj.get("vocab") if isinstance(head_obj, dict) else None
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ParseError("header must carry a vocab token list", line=head_no)
    try:
        vocab = Vocab(tokens)
    except ValueError as e:
        raise ParseError(str(e), line=head_no) from e

    records: list[TraceRecord] = []
    seen: set = set()
    for lineno, line in lines[1:]:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
        if not isinstance(obj, dict) or not isinstance(obj.get("video_id"), str) \
                or not isinstance(obj.get("steps"), list):
            raise ParseError("record must carry video_id and steps", line=lineno)
        vid = obj["video_id"]
        if vid in seen:
            raise DuplicateVideoId(vid, line=lineno)
        seen.add(vid)
        steps = []
        for t, vec in enumerate(obj["steps"]):
            if not isinstance(vec, list) or len(vec) != len(vocab):
                raise ParseError(f"step {t}: vector length must be {len(vocab)}", line=lineno)
            arr = [float(x) for x in vec]
            if any(not np.isfinite(x) or x < 0 for x in arr):
                raise DistributionNotNormalized(
                    f"line {lineno}, step {t}: negative or non-finite entry")
            s = sum(arr)
            if abs(s - 1.0) > TRACE_SUM_TOL:
                raise DistributionNotNormalized(f"line {lineno}, step {t}: sums to {s!r}")
            steps.append(tuple(arr))
        records.append(TraceRecord(video_id=vid, steps=tuple(steps)))
    return vocab, records


class TraceStepModel(StepModel):
    """Replays recorded distributions as a StepModel, keyed by video id."""

    def __init__(self, vocab: Vocab, records: list[TraceRecord]):
        self._vocab = vocab
        self._by_video = {r.video_id: r for r in records}
        self._steps: tuple | None = None
        self._video_id = ""

    @property
    def vocab(self) -> Vocab:
        return self._vocab

    def video_ids(self) -> list[str]:
        return sorted(self._by_video)

    def reset(self, context: VideoContext) -> None:
        vid = context.video_id
        if vid not in self._by_video:
            raise KeyError(f"trace has no video {vid!r}")
        self._video_id = vid
        self._steps = self._by_video[vid].steps

    def step(self, prefix: list[int]) -> np.ndarray:
        if self._steps is None:
            raise ValueError("reset() must be called before step()")
        t = len(prefix) - 1
        if t >= len(self._steps):
            raise TraceExhausted(
                f"video {self._video_id!r}: step {t} beyond {len(self._steps)} recorded steps")
        return np.asarray(self._steps[t], dtype=np.float64)


def read_trace_model(path) -> TraceStepModel:
    vocab, records = read_trace(path)
    return TraceStepModel(vocab, records)


# --- checkpoints ---

def write_checkpoint(path, params: ToyParams, vocab: Vocab) -> None:
    """Write parameters and vocab as one JSON document (exact float repr)."""
    if params.vocab_size != len(vocab):
        raise ShapeMismatch(
            f"params vocab size {params.vocab_size} != vocab length {len(vocab)}")
    doc = {
        "format": CHECKPOINT_FORMAT,
        "vocab": list(vocab.tokens),
        "feat_dim": params.feat_dim,
        "w_prev": params.w_prev.tolist(),
        "w_vid": params.w_vid.tolist(),
        "w_sub": params.w_sub.tolist(),
        "b": params.b.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def read_checkpoint(path) -> tuple[ToyParams, Vocab]:
    """Read a checkpoint; validates shapes against the stored vocab.

    Raises:
        ParseError, ShapeMismatch.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e.msg}") from e
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    try:
        vocab = Vocab(doc["vocab"])
        feat_dim = int(doc["feat_dim"])
        params = ToyParams(
            w_prev=np.array(doc["w_prev"], dtype=np.float64),
            w_vid=np.array(doc["w_vid"], dtype=np.float64),
            w_sub=np.array(doc["w_sub"], dtype=np.float64),
            b=np.array(doc["b"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: malformed checkpoint: {e}") from e
    if params.vocab_size != len(vocab) or params.feat_dim != feat_dim:
        raise ShapeMismatch(
            f"{path}: weights shaped for V={params.vocab_size}, D={params.feat_dim}, "
            f"header says V={len(vocab)}, D={feat_dim}")
    return params, vocab
