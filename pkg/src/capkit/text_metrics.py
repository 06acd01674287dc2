"""Captioning metrics computed from scratch: BLEU-4, ROUGE-L, CIDEr-D.

All three operate on token sequences produced by `tokenize`, the single
canonical tokenizer of the toolkit. CIDEr-D additionally needs corpus
IDF statistics (`CorpusIdf`), built once per reference corpus.

Conventions fixed here:
  * BLEU-4 is unsmoothed; any zero clipped precision gives 0. The
    brevity penalty uses the reference length closest to the hypothesis
    length, ties broken toward the shorter reference. Corpus BLEU pools
    clipped counts across videos.
  * ROUGE-L uses beta = 1.2 and takes the maximum F over references.
  * CIDEr-D uses sigma = 6.0, clips hypothesis counts against each
    reference, scales by 10, and gives n-grams unseen in the IDF corpus
    a weight of 0.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import EmptyCorpus, MissingInput, MissingReference, NoReferences

# A token sequence is a list of lowercase, whitespace-free words.
TokenSequence = list[str]

# An n-gram profile maps n-gram tuples (length 1..4) to occurrence counts.
NGram = tuple[str, ...]
NGramProfile = Counter

_NON_WORD = re.compile(r"[^a-z0-9']+")

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


def tokenize(raw: str) -> TokenSequence:
    """Lowercase, strip everything outside [a-z0-9'], split on whitespace.

    The only tokenizer in the toolkit; every caption and subtitle goes
    through it so metric inputs are comparable everywhere.
    """
    return _NON_WORD.sub(" ", raw.lower()).split()


def join_tokens(tokens: TokenSequence) -> str:
    """Inverse-ish of tokenize: space-join (tokenize(join(t)) == t)."""
    return " ".join(tokens)


def ngram_counts(s: TokenSequence, n_max: int = 4) -> NGramProfile:
    """Counts of every contiguous n-gram of order 1..n_max.

    Args:
        s: token sequence.
        n_max: largest n-gram order, 1..4.

    Returns:
        Counter mapping n-gram tuples to multiplicities.
    """
    if not 1 <= n_max <= 4:
        raise ValueError(f"n_max must be in 1..4, got {n_max}")
    counts: NGramProfile = Counter()
    for n in range(1, n_max + 1):
        for i in range(len(s) - n + 1):
            counts[tuple(s[i:i + n])] += 1
    return counts


@dataclass(frozen=True)
class CorpusIdf:
    """Document-frequency statistics over a reference corpus.

    One document per video; an n-gram's document frequency is the number
    of videos in which it occurs in at least one reference sentence.
    """

    num_docs: int
    doc_freq: dict = field(repr=False)

    def idf(self, gram: NGram) -> float:
        """ln(num_docs / doc_freq); 0 for n-grams unseen in the corpus."""
        df = self.doc_freq.get(gram)
        if df is None:
            return 0.0
        return math.log(self.num_docs / df)


@dataclass(frozen=True)
class MetricReport:
    """Corpus-level scores plus per-video CIDEr-D."""

    bleu4: float
    rouge_l: float
    cider_d: float
    per_video: dict = field(repr=False)


def build_idf(ref_docs: list[tuple[str, list[TokenSequence]]]) -> CorpusIdf:
    """Build IDF statistics from (video_id, reference sentences) documents.

    Raises:
        EmptyCorpus: if no documents are given.
    """
    if not ref_docs:
        raise EmptyCorpus("IDF needs at least one reference document")
    doc_freq: dict = {}
    for _vid, refs in ref_docs:
        seen: set = set()
        for ref in refs:
            seen.update(ngram_counts(ref, CIDER_MAX_N))
        for gram in seen:
            doc_freq[gram] = doc_freq.get(gram, 0) + 1
    return CorpusIdf(num_docs=len(ref_docs), doc_freq=doc_freq)


def _closest_ref_len(hyp_len: int, refs: list[TokenSequence]) -> int:
    # Ties in |len - hyp_len| go to the shorter reference.
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def _clipped_matches(hyp: TokenSequence, refs: list[TokenSequence], n: int) -> tuple[int, int]:
    """(clipped match count, total hypothesis n-gram count) for one order n."""
    total = max(0, len(hyp) - n + 1)
    if total == 0:
        return 0, 0
    hyp_counts = Counter(tuple(hyp[i:i + n]) for i in range(total))
    # clip against the per-n-gram maximum count over all references
    max_ref: dict = {}
    for ref in refs:
        ref_counts = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        for g, c in ref_counts.items():
            if c > max_ref.get(g, 0):
                max_ref[g] = c
    clipped = sum(min(c, max_ref.get(g, 0)) for g, c in hyp_counts.items())
    return clipped, total


def bleu4(hyp: TokenSequence, refs: list[TokenSequence]) -> float:
    """Sentence BLEU-4: geometric mean of clipped precisions times brevity penalty.

    Unsmoothed: returns 0.0 whenever any order-n precision is zero
    (including hypotheses shorter than 4 tokens).

    Raises:
        NoReferences: if refs is empty.
    """
    if not refs:
        raise NoReferences("BLEU needs at least one reference")
    if not hyp:
        return 0.0
    log_prec_sum = 0.0
    for n in range(1, 5):
        clipped, total = _clipped_matches(hyp, refs, n)
        if clipped == 0:
            return 0.0
        log_prec_sum += math.log(clipped / total)
    c = len(hyp)
    r = _closest_ref_len(c, refs)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_prec_sum / 4.0)


def _lcs_len(a: TokenSequence, b: TokenSequence) -> int:
    # Rolling-row dynamic program, O(len(a) * len(b)) time, O(len(b)) space.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hyp: TokenSequence, refs: list[TokenSequence]) -> float:
    """ROUGE-L: max over references of the LCS-based F-measure (beta = 1.2).

    Raises:
        NoReferences: if refs is empty.
    """
    if not refs:
        raise NoReferences("ROUGE-L needs at least one reference")
    beta_sq = ROUGE_BETA * ROUGE_BETA
    best = 0.0
    for ref in refs:
        lcs = _lcs_len(hyp, ref)
        if lcs == 0:
            continue
        p = lcs / len(hyp)
        r = lcs / len(ref)
        f = (1.0 + beta_sq) * p * r / (r + beta_sq * p)
        if f > best:
            best = f
    return best


def _tfidf_vectors(counts: NGramProfile, idf: CorpusIdf) -> tuple[list[dict], list[float]]:
    """Per-order TF-IDF vectors and their Euclidean norms.

    Term frequency is the raw n-gram count; n-grams with zero IDF are
    dropped (they cannot contribute to any inner product or norm).
    """
    vecs: list[dict] = [{} for _ in range(CIDER_MAX_N)]
    norms_sq = [0.0] * CIDER_MAX_N
    for gram, count in counts.items():
        w = count * idf.idf(gram)
        if w == 0.0:
            continue
        k = len(gram) - 1
        vecs[k][gram] = w
        norms_sq[k] += w * w
    return vecs, [math.sqrt(x) for x in norms_sq]


def cider_d(hyp: TokenSequence, refs: list[TokenSequence], idf: CorpusIdf,
            sigma: float = CIDER_SIGMA) -> float:
    """CIDEr-D score of one hypothesis against its references.

    For each order n = 1..4 and each reference: cosine similarity of
    TF-IDF vectors with the hypothesis counts clipped to the reference
    counts, damped by a Gaussian penalty on the token-length difference.
    Averaged over references and orders, scaled by 10.

    Raises:
        NoReferences: if refs is empty.
    """
    if not refs:
        raise NoReferences("CIDEr needs at least one reference")
    hyp_vecs, hyp_norms = _tfidf_vectors(ngram_counts(hyp, CIDER_MAX_N), idf)
    acc = 0.0
    for ref in refs:
        ref_vecs, ref_norms = _tfidf_vectors(ngram_counts(ref, CIDER_MAX_N), idf)
        delta = len(hyp) - len(ref)
        penalty = math.exp(-(delta * delta) / (2.0 * sigma * sigma))
        for k in range(CIDER_MAX_N):
            if hyp_norms[k] == 0.0 or ref_norms[k] == 0.0:
                continue
            rv = ref_vecs[k]
            num = 0.0
            for gram, w in hyp_vecs[k].items():
                rw = rv.get(gram, 0.0)
                if rw:
                    num += min(w, rw) * rw
            acc += penalty * num / (hyp_norms[k] * ref_norms[k])
    return 10.0 * acc / (CIDER_MAX_N * len(refs))


def corpus_eval(hyps: dict, refs: dict) -> MetricReport:
    """Score a corpus of hypotheses against reference sets.

    Args:
        hyps: video_id -> hypothesis TokenSequence.
        refs: video_id -> list of reference TokenSequences.

    Corpus BLEU-4 pools clipped counts over videos; ROUGE-L and CIDEr-D
    are arithmetic means of per-video scores. IDF is built from all of
    `refs`.

    Raises:
        MissingInput: if hyps is empty.
        MissingReference: if a hypothesis video id has no references.
    """
    if not hyps:
        raise MissingInput("no hypotheses to evaluate")
    for vid in sorted(hyps):
        if vid not in refs:
            raise MissingReference(vid)
    idf = build_idf([(vid, refs[vid]) for vid in sorted(refs)])

    order = sorted(hyps)
    per_video: dict = {}
    rouge_sum = 0.0
    clipped_tot = [0] * 4
    total_tot = [0] * 4
    hyp_len_tot = 0
    ref_len_tot = 0
    for vid in order:
        hyp = hyps[vid]
        vrefs = refs[vid]
        per_video[vid] = cider_d(hyp, vrefs, idf)
        rouge_sum += rouge_l(hyp, vrefs)
        for n in range(1, 5):
            clipped, total = _clipped_matches(hyp, vrefs, n)
            clipped_tot[n - 1] += clipped
            total_tot[n - 1] += total
        hyp_len_tot += len(hyp)
        ref_len_tot += _closest_ref_len(len(hyp), vrefs)

    if hyp_len_tot == 0 or any(c == 0 for c in clipped_tot):
        corpus_bleu = 0.0
    else:
        log_sum = sum(math.log(c / t) for c, t in zip(clipped_tot, total_tot))
        bp = 1.0 if hyp_len_tot > ref_len_tot else math.exp(1.0 - ref_len_tot / hyp_len_tot)
        corpus_bleu = bp * math.exp(log_sum / 4.0)

    n = len(order)
    return MetricReport(
        bleu4=corpus_bleu,
        rouge_l=rouge_sum / n,
        cider_d=sum(per_video.values()) / n,
        per_video=per_video,
    )
