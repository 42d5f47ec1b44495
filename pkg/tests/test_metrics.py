import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_bleu, brute_self_bleu, brute_tokens
from regen.metrics import (
    Corpus, HashEmbedder, MetricError, RemoteEmbedder, bundled_corpora, diversity, embedding_diversity,
    load_corpus, sampled_diversity, self_bleu, sentence_bleu, tokenize,
)

FIVE = [
    "An ambulance approached from behind with its siren on.",
    "A pedestrian crossed in front of the ego vehicle.",
    "Debris lay on the lane ahead of the ego vehicle.",
    "A cyclist changed lanes in front of the ego vehicle.",
    "The car in front braked suddenly and stopped.",
]


def _fixed(vectors):
    arr = np.asarray(vectors, dtype=float)
    return lambda texts: arr[: len(texts)]


def test_identical_texts_have_similarity_one():
    assert self_bleu(["the car stopped at the light"] * 3) == pytest.approx(1.0)
    assert diversity(["a b c d"] * 4, "self_bleu") == pytest.approx(0.0)


def test_disjoint_vocabularies_are_dissimilar():
    texts = ["alpha beta gamma delta", "one two three four", "red green blue black"]
    assert self_bleu(texts) <= 0.1


def test_five_sentences_match_brute_force():
    assert abs(self_bleu(FIVE) - brute_self_bleu(FIVE)) < 1e-9
    for n in (1, 2, 3):
        assert abs(self_bleu(FIVE, n) - brute_self_bleu(FIVE, n)) < 1e-9


_word = st.sampled_from("the a car ego stops lane ahead pedestrian siren brakes".split())


@settings(max_examples=60)
@given(st.lists(st.lists(_word, min_size=1, max_size=8).map(" ".join), min_size=2, max_size=5))
def test_self_bleu_matches_brute_force(texts):
    assert abs(self_bleu(texts) - brute_self_bleu(texts)) < 1e-9


@given(st.text(max_size=40))
def test_tokenizer_matches_reference(text):
    assert tokenize(text) == brute_tokens(text)


def test_sentence_bleu_reference():
    hyp, refs = brute_tokens(FIVE[1]), [brute_tokens(t) for t in FIVE[2:]]
    assert sentence_bleu(hyp, refs) == pytest.approx(brute_bleu(hyp, refs), abs=1e-12)


def test_self_bleu_errors():
    with pytest.raises(MetricError):
        self_bleu(["only one"])
    with pytest.raises(MetricError):
        self_bleu(FIVE, max_n=0)


def test_embedding_diversity_cases():
    assert embedding_diversity(["x", "y"], _fixed([[1, 2], [2, 4]])) == pytest.approx(0.0)
    assert embedding_diversity(["x", "y"], _fixed([[1, 0], [0, 1]])) == pytest.approx(1.0)
    # pairwise cosines 0.5, 0.5, 1.0
    v = [[1, 0], [0.5, np.sqrt(3) / 2], [0.5, np.sqrt(3) / 2]]
    assert embedding_diversity(["x", "y", "z"], _fixed(v)) == pytest.approx(1 - 2 / 3)
    # negative cosines clip at 1
    assert embedding_diversity(["x", "y"], _fixed([[1, 0], [-1, 0]])) == 1.0
    assert embedding_diversity(FIVE[:1] * 3, HashEmbedder()) == pytest.approx(0.0)


def test_sampled_diversity_reproducible_and_bounded():
    corpus = Corpus(FIVE * 2)
    a = sampled_diversity(corpus, "self_bleu", 4, repeats=5, seed=3)
    b = sampled_diversity(corpus, "self_bleu", 4, repeats=5, seed=3)
    assert a.to_dict() == b.to_dict() and len(a.scores) == 5
    assert all(0.0 <= s <= 1.0 for s in a.scores)
    assert a.mean == pytest.approx(np.mean(a.scores)) and a.std == pytest.approx(np.std(a.scores))
    assert sampled_diversity(corpus, "self_bleu", 4, repeats=5, seed=4).scores != a.scores


@pytest.mark.parametrize("kw", [dict(metric="bleu"), dict(sample_size=1), dict(sample_size=99), dict(repeats=0)])
def test_sampled_diversity_errors(kw):
    args = dict(metric="self_bleu", sample_size=3, repeats=2) | kw
    with pytest.raises(MetricError):
        sampled_diversity(Corpus(FIVE), **args)


def test_remote_embedder_round_trip():
    seen = []

    def handler(request):
        body = json.loads(request.content)
        seen.append((body, request.headers.get("authorization")))
        return httpx.Response(200, json={"data": [{"embedding": [float(len(t)), 1.0]} for t in body["input"]]})

    emb = RemoteEmbedder("http://embed.test/v1", "m1", "k", transport=httpx.MockTransport(handler))
    out = emb(["ab", "abcd"])
    assert out.tolist() == [[2.0, 1.0], [4.0, 1.0]]
    assert seen == [({"input": ["ab", "abcd"], "model": "m1"}, "Bearer k")]


@pytest.mark.parametrize("response", [httpx.Response(500), httpx.Response(200, json={"data": []}),
                                      httpx.Response(200, content=b"not json")])
def test_remote_embedder_failures(response):
    emb = RemoteEmbedder("http://embed.test", transport=httpx.MockTransport(lambda r: response))
    with pytest.raises(MetricError):
        emb(["a"])


def test_remote_embedder_needs_endpoint():
    with pytest.raises(MetricError):
        RemoteEmbedder.from_env({})
    assert RemoteEmbedder.from_env({"REGEN_EMBED_URL": "http://x"}).endpoint == "http://x"


def test_corpora(tmp_path):
    assert "feasible_scenarios" in bundled_corpora()
    assert len(load_corpus("feasible_scenarios").texts) > 2
    p = tmp_path / "c.txt"
    p.write_text("one line\n\nsecond line\n")
    assert load_corpus(p).texts == ["one line", "second line"]
    with pytest.raises(MetricError):
        load_corpus(tmp_path / "missing.txt")
