"""Corpus diversity: Self-BLEU and embedding similarity with seeded subsampling."""
from __future__ import annotations

import hashlib
import math
import os
import random
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx
import numpy as np

DEFAULT_MAX_N = 4
SMOOTHING_EPSILON = 0.1
METRICS = ("self_bleu", "embedding")
_TOKEN = re.compile(r"[a-z0-9]+")


class MetricError(ValueError):
    pass


@dataclass
class Corpus:
    texts: list[str]
    source_label: str = ""


@dataclass
class DiversityReport:
    metric: str
    mean: float
    std: float
    sample_size: int
    repeats: int
    seed: int
    scores: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric, "mean": self.mean, "std": self.std, "sample_size": self.sample_size,
            "repeats": self.repeats, "seed": self.seed, "scores": self.scores,
        }


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def load_corpus(path: str | Path) -> Corpus:
    """One description per line; bare names resolve to the bundled corpora."""
    p = Path(path)
    if p.exists():
        text, label = p.read_text(), p.stem
    else:
        name = str(path).removesuffix(".txt")
        res = resources.files("regen.data.corpora").joinpath(f"{name}.txt")
        if not res.is_file():
            raise MetricError(f"cannot read corpus {path!r}: no such file or bundled corpus")
        text, label = res.read_text(), name
    texts = [line.strip() for line in text.splitlines() if line.strip()]
    return Corpus(texts, label)


def bundled_corpora() -> list[str]:
    return sorted(f.name[:-4] for f in resources.files("regen.data.corpora").iterdir() if f.name.endswith(".txt"))


# -- BLEU ----------------------------------------------------------------------
def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(hypothesis: Sequence[str], references: Sequence[Sequence[str]],
                  max_n: int = DEFAULT_MAX_N, epsilon: float = SMOOTHING_EPSILON) -> float:
    """BLEU of one tokenized hypothesis against several references.

    Uniform weights over orders 1..min(max_n, len(hypothesis)); a zero clipped
    count is replaced by ``epsilon``; brevity penalty uses the reference length
    closest to the hypothesis (shorter wins ties).
    """
    c = len(hypothesis)
    if c == 0 or not references:
        return 0.0
    orders = min(max_n, c)
    log_sum = 0.0
    for n in range(1, orders + 1):
        hyp = _ngrams(hypothesis, n)
        best: Counter = Counter()
        for ref in references:
            for g, k in _ngrams(ref, n).items():
                if k > best[g]:
                    best[g] = k
        clipped = sum(min(k, best[g]) for g, k in hyp.items())
        total = c - n + 1
        log_sum += math.log((clipped if clipped else epsilon) / total)
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / orders)


def self_bleu(texts: Sequence[str], max_n: int = DEFAULT_MAX_N) -> float:
    """Mean BLEU of each text against all the others (a similarity in [0, 1])."""
    if len(texts) < 2:
        raise MetricError("Self-BLEU needs at least two texts")
    if max_n < 1:
        raise MetricError("max_n must be >= 1")
    toks = [tokenize(t) for t in texts]
    scores = [sentence_bleu(h, toks[:i] + toks[i + 1:], max_n) for i, h in enumerate(toks)]
    return math.fsum(scores) / len(scores)


# -- embeddings ------------------------------------------------------------------
Embedder = Callable[[Sequence[str]], np.ndarray]


@dataclass(frozen=True)
class HashEmbedder:
    """Feature hashing of token counts; deterministic and offline."""
    dim: int = 256

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, t in enumerate(texts):
            for tok in tokenize(t):
                h = int.from_bytes(hashlib.blake2b(tok.encode(), digest_size=8).digest(), "little")
                out[i, h % self.dim] += 1.0
        return out


@dataclass
class RemoteEmbedder:
    """POSTs ``{"input": texts}`` and reads ``data[i].embedding``."""
    endpoint: str
    model: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    transport: Optional[httpx.BaseTransport] = field(default=None, repr=False)
    timeout: float = 60.0

    @classmethod
    def from_env(cls, env=None, **kw) -> "RemoteEmbedder":
        env = os.environ if env is None else env
        url = env.get("REGEN_EMBED_URL")
        if not url:
            raise MetricError("REGEN_EMBED_URL is not set")
        return cls(url, env.get("REGEN_EMBED_MODEL"), env.get("REGEN_EMBED_KEY"), **kw)

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        body = {"input": list(texts)}
        if self.model:
            body["model"] = self.model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            with httpx.Client(transport=self.transport, timeout=self.timeout) as client:
                resp = client.post(self.endpoint, json=body, headers=headers)
                resp.raise_for_status()
                rows = [d["embedding"] for d in resp.json()["data"]]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise MetricError(f"embedding request failed: {exc}") from exc
        if len(rows) != len(texts):
            raise MetricError(f"embedder returned {len(rows)} vectors for {len(texts)} texts")
        return np.asarray(rows, dtype=float)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0 if na == nb else 0.0
    return float(np.dot(a, b)) / (na * nb)


def mean_pairwise_cosine(vectors: np.ndarray) -> float:
    n = len(vectors)
    if n < 2:
        raise MetricError("need at least two vectors")
    sims = [_cosine(vectors[i], vectors[j]) for i in range(n) for j in range(i + 1, n)]
    return math.fsum(sims) / len(sims)


def embedding_diversity(texts: Sequence[str], embedder: Embedder = HashEmbedder()) -> float:
    """1 minus the mean pairwise cosine similarity, clipped to [0, 1]."""
    if len(texts) < 2:
        raise MetricError("embedding diversity needs at least two texts")
    return min(1.0, max(0.0, 1.0 - mean_pairwise_cosine(embedder(texts))))


def diversity(texts: Sequence[str], metric: str, max_n: int = DEFAULT_MAX_N,
              embedder: Optional[Embedder] = None) -> float:
    if metric == "self_bleu":
        return 1.0 - self_bleu(texts, max_n)
    if metric == "embedding":
        return embedding_diversity(texts, embedder or HashEmbedder())
    raise MetricError(f"unknown metric {metric!r}; choose from {METRICS}")


def sampled_diversity(corpus: Corpus, metric: str, sample_size: int, repeats: int = 10, seed: int = 0,
                      max_n: int = DEFAULT_MAX_N, embedder: Optional[Embedder] = None) -> DiversityReport:
    """Diversity of ``repeats`` seeded samples drawn without replacement; mean and population std."""
    if metric not in METRICS:
        raise MetricError(f"unknown metric {metric!r}; choose from {METRICS}")
    if repeats < 1:
        raise MetricError("repeats must be >= 1")
    if sample_size < 2:
        raise MetricError("sample_size must be >= 2")
    if sample_size > len(corpus.texts):
        raise MetricError(f"sample_size {sample_size} exceeds corpus size {len(corpus.texts)}")
    rng = random.Random(seed)
    scores = []
    for _ in range(repeats):
        idx = rng.sample(range(len(corpus.texts)), sample_size)
        scores.append(diversity([corpus.texts[i] for i in idx], metric, max_n, embedder))
    mean = math.fsum(scores) / repeats
    return DiversityReport(metric, mean, statistics.pstdev(scores), sample_size, repeats, seed, scores)
