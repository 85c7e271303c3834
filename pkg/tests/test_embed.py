import json

import httpx
import numpy as np
import pytest

from minibar.embed import (INSTRUCTION, EmbeddingError, EmbeddingMatrix, OfflineEmbedder,
                           RemoteEmbedder, cosine_similarity, embed_reviews, offline_embed)
from minibar.llm import ProviderUnavailable
from minibar.reviews import Review


def reviews(n):
    return [Review(f"r{i}", "a", f"review text number {i}", 3) for i in range(n)]


def test_shape_and_determinism():
    a = embed_reviews(reviews(5), OfflineEmbedder())
    b = embed_reviews(reviews(5), OfflineEmbedder())
    assert a.vectors.shape == (5, 256)
    assert np.array_equal(a.vectors, b.vectors)
    assert a.ids == tuple(f"r{i}" for i in range(5))


def test_empty_input_is_an_error():
    with pytest.raises(EmbeddingError):
        embed_reviews([], OfflineEmbedder())


@pytest.mark.parametrize("text", ["abc", "Problème de serveur récurrent", "x", "!!", "a" * 5000])
def test_unit_norm(text):
    assert abs(np.linalg.norm(offline_embed(text)) - 1.0) < 1e-9


def test_identical_text_identical_vector():
    assert np.array_equal(offline_embed("abc"), offline_embed("abc"))


def test_unrelated_texts_are_not_near_duplicates():
    assert cosine_similarity(offline_embed("sync issue"), offline_embed("watch face")) < 0.9


def test_shared_words_raise_similarity():
    base = offline_embed("bluetooth pairing fails")
    assert (cosine_similarity(base, offline_embed("bluetooth pairing broken"))
            > cosine_similarity(base, offline_embed("dark mode please")))


def test_cosine_examples():
    v = np.array([0.3, -2.0, 5.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [-1, 0]) == -1.0
    with pytest.raises(ValueError):
        cosine_similarity([0, 0], [1, 0])


@pytest.mark.parametrize("ids,vectors", [
    (("a", "a"), np.ones((2, 3))),
    (("a",), np.ones((2, 3))),
    (("a",), np.array([[np.nan, 1.0]])),
])
def test_matrix_invariants(ids, vectors):
    with pytest.raises(EmbeddingError):
        EmbeddingMatrix(ids, vectors)


def _remote(handler, tmp_path=None, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteEmbedder("https://embed.test", api_key="k", client=client, cache_dir=tmp_path,
                          sleep=lambda _: None, **kw)


def fake_vectors(request):
    body = json.loads(request.content)
    data = [{"index": i, "embedding": [float(len(t)), float(i)]}
            for i, t in enumerate(body["input"])]
    return httpx.Response(200, json={"data": list(reversed(data))})


def test_remote_prefixes_instruction_and_orders_by_index():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return fake_vectors(request)

    out = _remote(handler, batch_size=2).embed(["aa", "bbb", "c"])
    assert [len(b["input"]) for b in seen] == [2, 1]
    assert seen[0]["input"][0] == f"{INSTRUCTION}: aa"
    assert out[:, 0].tolist() == [len(INSTRUCTION) + 2 + n for n in (2, 3, 1)]


def test_remote_cache(tmp_path):
    calls = []

    def handler(request):
        calls.append(1)
        return fake_vectors(request)

    first = _remote(handler, tmp_path).embed(["aa", "bb"])
    second = _remote(handler, tmp_path).embed(["bb", "aa"])
    assert len(calls) == 1
    assert np.array_equal(first[::-1], second)


def test_remote_unavailable():
    with pytest.raises(ProviderUnavailable):
        _remote(lambda r: httpx.Response(503)).embed(["x"])


def test_remote_count_mismatch():
    with pytest.raises(EmbeddingError):
        _remote(lambda r: httpx.Response(200, json={"data": []})).embed(["x"])
