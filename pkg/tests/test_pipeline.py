import numpy as np
import pytest

from hyperevent.history import HistoryIndex
from hyperevent.pipeline import ModelSpec, build_designs, fit_stream, to_choice_data
from hyperevent.sampling import ControlConfig
from hyperevent.simulation import SimulationConfig, simulate_stream
from hyperevent.statistics import (
    ALL_AUTHOR_STATS,
    ALL_CITATION_STATS,
    eval_author_stats,
    eval_citation_stats,
    fit_transform,
)
from streams import registry_of, stream_of


@pytest.fixture(scope="module")
def sim():
    cfg = SimulationConfig(n_actors=12, n_events=120, theta={"CoauthorPairRep": 0.8}, gamma={"SelfCitation": 1.0})
    return simulate_stream(cfg, 4).stream


SPEC = ModelSpec(controls=ControlConfig(m_author=40, m_citation=15, seed=2))


def test_design_layout(sim):
    strata = []
    designs, diags = build_designs(sim, SPEC, strata_sink=strata.append)
    a, c = designs["author"], designs["citation"]
    assert diags["author"].strata == len(sim)
    assert diags["citation"].strata == sum(1 for p in sim if p.citations)
    assert len(strata) == diags["author"].strata + diags["citation"].strata
    for raw in (a, c):
        heads = np.flatnonzero(raw.is_event)
        assert len(np.unique(raw.stratum)) == len(heads)
        assert np.all(np.diff(raw.stratum) >= 0)
        assert np.all(raw.stratum[heads] == np.unique(raw.stratum))
    assert a.values.shape[1] == len(ALL_AUTHOR_STATS) and c.values.shape[1] == len(ALL_CITATION_STATS)


def test_event_rows_use_prior_history(sim):
    designs, _ = build_designs(sim, SPEC)
    a, c = designs["author"], designs["citation"]
    idx = HistoryIndex(sim.registry, capacity=len(sim))
    a_heads = np.flatnonzero(a.is_event)
    c_heads = dict(zip(c.stratum[c.is_event].tolist(), np.flatnonzero(c.is_event).tolist()))
    for e, p in enumerate(sim):
        assert set(a.members(a_heads[e])) == p.authors
        assert np.allclose(a.values[a_heads[e]], eval_author_stats(idx, p.authors, ALL_AUTHOR_STATS))
        if p.citations:
            r = c_heads[e]
            assert set(c.members(r)) == p.citations
            want = eval_citation_stats(idx, p.citations, p.authors, ALL_CITATION_STATS)
            assert np.allclose(c.values[r], want)
        idx.apply_event(p)


def test_standardization_uses_all_rows(sim):
    designs, _ = build_designs(sim, SPEC, ("author",))
    raw = designs["author"]
    spec = fit_transform(raw, SPEC.transform_skeleton("author"))
    j = list(raw.kinds).index(ALL_AUTHOR_STATS[4])
    col = np.sqrt(raw.values[:, j])
    assert spec.means[j] == pytest.approx(col.mean())
    assert spec.sds[j] == pytest.approx(col.std(ddof=1))


def test_non_informative_strata_are_kept_but_not_fitted():
    # w2 cites both available works, so its citation risk set is a singleton
    recs = [
        ("w0", {"a0"}, set()),
        ("w1", {"a1"}, set()),
        ("w2", {"a2"}, {"w0", "w1"}),
        ("w3", {"a0", "a3"}, {"w2"}),
        ("w4", {"a1"}, {"w0", "w3"}),
    ]
    stream = stream_of(recs, registry_of(4))
    designs, diags = build_designs(stream, SPEC, ("citation",))
    raw = designs["citation"]
    assert diags["citation"].strata == 3 and diags["citation"].non_informative == 1
    assert raw.stratum.tolist().count(2) == 1
    data = to_choice_data(raw, fit_transform(raw, SPEC.transform_skeleton("citation")))
    assert data.n_strata == 2
    assert len(data.X) == len(raw) - 1


def test_fit_stream_both_models(sim):
    fits = fit_stream(sim, SPEC)
    assert set(fits) == {"author", "citation"}
    for m, f in fits.items():
        assert f.result.converged, m
        assert f.result.aic == 2 * f.result.n_params - 2 * f.result.loglik
    j = fits["citation"].result.index_of("SelfCitation")
    assert fits["citation"].result.coef[j] > 0


def test_design_is_reproducible(sim):
    a, _ = build_designs(sim, SPEC)
    b, _ = build_designs(sim, SPEC)
    for m in a:
        assert np.array_equal(a[m].values, b[m].values)
        assert np.array_equal(a[m].member_flat, b[m].member_flat)


def test_skip_events(sim):
    designs, diags = build_designs(sim, SPEC, ("author",), skip_events=100)
    assert diags["author"].strata == len(sim) - 100
    assert designs["author"].stratum.min() == 100


def test_unknown_model_rejected(sim):
    with pytest.raises(ValueError):
        build_designs(sim, SPEC, ("journal",))
