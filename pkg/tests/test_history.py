from itertools import combinations

import numpy as np
import pytest

from hyperevent.core import ActorRegistry, Publication
from hyperevent.history import HistoryError, HistoryIndex, StaleSnapshotError
from checks import attribute_mismatches, random_streams
from oracle import NaiveHistory
from streams import stream_of

REG = ActorRegistry.from_pairs([("a", True), ("b", False), ("c", True), ("d", False)])


def build(*records):
    return HistoryIndex.from_stream(stream_of(records, REG))


def pub(work, authors, citations=(), seq=0):
    return Publication(work, frozenset(authors), frozenset(citations), seq)


def test_coauthorship_counts_repeat():
    idx = HistoryIndex(REG)
    assert idx.coauth("a", "b") == 0
    idx.apply_event(pub("w1", "ab", seq=0))
    assert idx.coauth("a", "b") == 1
    idx.apply_event(pub("w2", "ab", seq=1))
    assert idx.coauth("a", "b") == 2 == idx.coauth("b", "a")


def test_author_citation_and_popularity():
    idx = build(("w1", {"b"}, set()), ("w2", {"a"}, {"w1"}))
    assert idx.cite_aa("a", "b") == 1
    assert idx.cite_aa("b", "a") == 0
    assert idx.citation_popularity("b") == 1
    assert idx.citation_popularity("a") == 0


def test_cite_aw():
    assert HistoryIndex(REG).cite_aw({"a"}, set()) == 0
    assert HistoryIndex(REG).cite_aw() == 0
    idx = build(("w1", {"a", "b"}, set()))
    assert idx.cite_aw({"a"}, set()) == 1
    assert idx.cite_aw(set(), set()) == 1
    recs = [
        ("w1", {"a"}, set()),
        ("w2", {"a", "b"}, {"w1"}),
        ("w3", {"a", "b", "c"}, {"w1", "w2"}),
        ("w4", {"b"}, {"w1"}),
    ]
    idx = build(*recs)
    naive = NaiveHistory(stream_of(recs, REG).publications, REG)
    assert idx.cite_aw({"a", "b"}, {"w1"}) == naive.cite_aw({"a", "b"}, {"w1"}) == 2
    assert idx.cite_aw(set(), set()) == 4


def test_subrep():
    idx = build(("w1", {"a", "b"}, set()))
    assert idx.subrep({"a", "b"}, set(), 2, 0) == 1
    assert idx.subrep({"a"}, set(), 2, 0) == 0
    with pytest.raises(ValueError):
        idx.subrep({"a"}, set(), 0, 0)


def test_subrep_matches_double_sum_on_six_events():
    recs = [
        ("w1", {"a"}, set()),
        ("w2", {"a", "b"}, {"w1"}),
        ("w3", {"c"}, {"w1", "w2"}),
        ("w4", {"b", "c"}, {"w2", "w3"}),
        ("w5", {"a", "c"}, {"w1", "w3", "w4"}),
        ("w6", {"a", "b", "d"}, {"w2", "w4"}),
    ]
    idx = build(*recs)
    naive = NaiveHistory(stream_of(recs, REG).publications, REG)
    A, C = {"a", "b", "c"}, {"w1", "w2", "w3", "w4"}
    want = sum(naive.cite_aw({i}, {h}) for i in A for h in C) / (len(A) * len(C))
    assert idx.subrep(A, C, 1, 1) == pytest.approx(want, abs=1e-12)


def test_cite_aa_counts_citing_works():
    # i = a publishes two works, each citing a different work by b
    idx = build(("w1", {"b"}, set()), ("w2", {"b"}, set()), ("w3", {"a"}, {"w1"}), ("w4", {"a"}, {"w2"}))
    assert idx.cite_aa("a", "b") == 2
    # one work citing two works of b counts once
    idx = build(("w1", {"b"}, set()), ("w2", {"b"}, set()), ("w3", {"a"}, {"w1", "w2"}))
    assert idx.cite_aa("a", "b") == 1
    assert build(("w1", {"a"}, set()), ("w2", {"b"}, set())).cite_aa("a", "b") == 0
    with pytest.raises(ValueError):
        idx.cite_aa("a", "a")


def test_citation_popularity():
    assert HistoryIndex(REG).citation_popularity("a") == 0
    idx = build(("w1", {"a"}, set()), ("w2", {"a"}, set()), ("w3", {"b"}, {"w1", "w2"}))
    assert idx.citation_popularity("a") == 1
    idx = build(("w1", {"a"}, set()), ("w2", {"b"}, {"w1"}), ("w3", {"c"}, {"w1"}))
    assert idx.citation_popularity("a") == 2
    with pytest.raises(KeyError):
        idx.citation_popularity("zz")


def test_work_attributes():
    idx = build(("w1", {"a"}, set()), ("w2", {"b"}, set()), ("w3", {"c"}, set()), ("w4", {"d"}, {"w1", "w2", "w3"}))
    assert idx.coauth("a", "c") == 0
    assert idx.cite_ww("w4", "w1") == 1
    assert idx.cite_ww("w1", "w4") == 0
    assert idx.outdegree("w4") == 3
    with pytest.raises(KeyError):
        idx.outdegree("w9")


def test_cocite_aa():
    assert HistoryIndex(REG).cocite_aa("a", "b") == 0
    idx = build(("w1", {"a"}, set()), ("w2", {"b"}, set()), ("w3", {"c"}, {"w1", "w2"}))
    assert idx.cocite_aa("a", "b") == 1
    idx = build(("w1", {"a", "b"}, set()), ("w2", {"c"}, {"w1"}))
    assert idx.cocite_aa("a", "b") == 1
    with pytest.raises(ValueError):
        idx.cocite_aa("a", "a")


def test_cite_aa_is_asymmetric_and_others_symmetric():
    idx = build(("w1", {"b"}, set()), ("w2", {"a", "c"}, {"w1"}), ("w3", {"d"}, {"w1", "w2"}))
    assert idx.cite_aa("a", "b") == 1 and idx.cite_aa("b", "a") == 0
    for i, j in combinations(REG.actors, 2):
        assert idx.coauth(i, j) == idx.coauth(j, i)
        assert idx.cocite_aa(i, j) == idx.cocite_aa(j, i)


@pytest.mark.parametrize("seed", range(8))
def test_oracle_equivalence(seed):
    rng = np.random.default_rng(100 + seed)
    for stream in random_streams(seed, 3):
        assert attribute_mismatches(stream, rng) == []


def _counts(idx):
    n = idx.n_actors
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    return np.concatenate(
        [
            idx.pubcount,
            idx.popularity,
            [idx.coauth_mat[i, j] for i, j in pairs],
            [idx.cite_aa_mat[i, j] for i, j in pairs],
            [idx.cocite_aa_mat[i, j] for i, j in pairs],
            idx.closure_work_mat.ravel(),
            idx.closure_coauth_mat.ravel(),
            idx.indegree,
            idx.aw_cite.ravel(),
        ]
    )


@pytest.mark.parametrize("seed", range(4))
def test_counts_monotone_in_time(seed):
    stream = random_streams(seed, 1, min_works=10)[0]
    idx = HistoryIndex(stream.registry, capacity=len(stream))
    prev = _counts(idx)
    for p in stream:
        idx.apply_event(p)
        cur = _counts(idx)
        assert np.all(cur >= prev)
        prev = cur


def test_prefix_determinism():
    stream = random_streams(7, 1, min_works=20)[0]
    a, b = HistoryIndex.from_stream(stream), HistoryIndex.from_stream(stream)
    assert np.array_equal(_counts(a), _counts(b))
    assert a.works == b.works
    half = HistoryIndex.from_stream(stream, upto=10)
    assert half.n_works == 10 and half.as_of == stream[9].seq + 1


def test_order_enforced():
    idx = build(("w1", {"a"}, set()), ("w2", {"b"}, set()))
    with pytest.raises(HistoryError):
        idx.apply_event(pub("w0", "a", seq=0))
    with pytest.raises(HistoryError):
        idx.apply_event(pub("w2", "a", seq=5))
    with pytest.raises(HistoryError):
        idx.apply_event(pub("w3", "a", {"w9"}, seq=5))


def test_snapshot_goes_stale():
    idx = build(("w1", {"a"}, set()))
    snap = idx.snapshot()
    assert snap.coauth("a", "b") == 0
    with pytest.raises(AttributeError):
        snap.as_of = 4
    idx.apply_event(pub("w2", "ab", seq=9))
    with pytest.raises(StaleSnapshotError):
        snap.coauth("a", "b")


def test_save_load_round_trip(tmp_path):
    stream = random_streams(3, 1, min_works=15)[0]
    idx = HistoryIndex.from_stream(stream)
    path = tmp_path / "idx.bin"
    idx.save(path)
    back = HistoryIndex.load(path)
    assert np.array_equal(_counts(idx), _counts(back))
    for i, j in combinations(stream.registry.actors, 2):
        assert back.cite_aw({i, j}) == idx.cite_aw({i, j})

    raw = bytearray(path.read_bytes())
    raw[-5] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(HistoryError, match="checksum"):
        HistoryIndex.load(path)
    path.write_bytes(b"garbage")
    with pytest.raises(HistoryError):
        HistoryIndex.load(path)
