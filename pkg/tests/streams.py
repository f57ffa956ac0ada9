"""Stream builders shared by the test modules."""

import numpy as np

from hyperevent.core import ActorRegistry, EventStream, Publication


def registry_of(n, chilean=None):
    chilean = chilean if chilean is not None else [i % 2 == 0 for i in range(n)]
    return ActorRegistry(tuple(f"a{i}" for i in range(n)), tuple(bool(c) for c in chilean))


def stream_of(records, registry):
    """records: iterable of (work, authors, citations); seq is the position."""
    pubs = tuple(Publication(w, frozenset(a), frozenset(c), i) for i, (w, a, c) in enumerate(records))
    return EventStream(pubs, registry)


def random_stream(rng, max_actors=15, max_works=40, min_works=1):
    n_actors = int(rng.integers(2, max_actors + 1))
    chilean = rng.random(n_actors) < 0.5
    reg = registry_of(n_actors, chilean)
    n_works = int(rng.integers(min_works, max_works + 1))
    records = []
    for w in range(n_works):
        k = int(rng.integers(1, min(4, n_actors) + 1))
        # concentrate authorship on a few actors so counts repeat
        p = rng.dirichlet(np.ones(n_actors) * 0.5)
        authors = rng.choice(n_actors, size=k, replace=False, p=p)
        c = int(rng.integers(0, min(6, w) + 1)) if w else 0
        cites = rng.choice(w, size=c, replace=False) if c else []
        records.append((f"w{w}", {f"a{i}" for i in authors}, {f"w{j}" for j in cites}))
    return stream_of(records, reg)
