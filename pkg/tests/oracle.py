"""Naive reference implementation: every attribute and statistic rescans the raw prefix.

Deliberately written as literal sums over sets, independent of the
incremental index and the vectorized evaluators.
"""

from itertools import combinations
from math import comb


class NaiveHistory:
    def __init__(self, publications, registry):
        self.pubs = list(publications)
        self.registry = registry
        self.actors = list(registry.actors)
        self.by_work = {p.work: p for p in self.pubs}

    # network attributes -------------------------------------------------

    def cite_aw(self, A, C):
        A, C = set(A), set(C)
        return sum(1 for l in self.pubs if A <= l.authors and C <= l.citations)

    def auth(self, i, h):
        return int(i in self.by_work[h].authors)

    def subrep(self, A, C, k, kstar):
        A, C = sorted(set(A)), sorted(set(C))
        if len(A) < k or len(C) < kstar:
            return 0.0
        total = 0.0
        for sa in combinations(A, k):
            for sc in combinations(C, kstar):
                total += self.cite_aw(sa, sc) / (comb(len(A), k) * comb(len(C), kstar))
        return total

    def cite_aa(self, i, j):
        n = 0
        for l in self.pubs:
            if i in l.authors and sum(self.auth(j, m) for m in l.citations) >= 1:
                n += 1
        return n

    def popularity(self, i):
        return sum(1 for l in self.pubs if sum(self.auth(i, m) for m in l.citations) >= 1)

    def coauth(self, i, j):
        return self.cite_aw({i, j}, set())

    def cite_ww(self, k, h):
        return int(h in self.by_work[k].citations)

    def outdegree(self, l):
        return len(self.by_work[l].citations)

    def cocite_aa(self, i, j):
        n = 0
        for l in self.pubs:
            hit_i = any(self.auth(i, m) for m in l.citations)
            hit_j = any(self.auth(j, m) for m in l.citations)
            if hit_i and hit_j:
                n += 1
        return n

    # author statistics ---------------------------------------------------

    def chilean(self, i):
        return int(self.registry.is_chilean(i))

    def author_stats(self, A):
        A = sorted(set(A))
        nA = len(A)
        pairs = list(combinations(A, 2))
        npairs = comb(nA, 2)
        s = {}
        s["RatioChilean"] = sum(self.chilean(i) / nA for i in A)
        s["HeterogeneityChilean"] = sum(abs(self.chilean(i) - self.chilean(j)) / npairs for i, j in pairs)
        s["CitationPopAuthor"] = sum(self.popularity(i) / nA for i in A)
        s["PublicationActivity"] = self.subrep(A, [], 1, 0)
        s["CoauthorPairRep"] = self.subrep(A, [], 2, 0)
        s["CoauthorTripleRep"] = self.subrep(A, [], 3, 0)
        s["CoauthorQuartetRep"] = self.subrep(A, [], 4, 0)
        s["CollabWithCitingAuthor"] = sum(
            (self.cite_aa(i, j) + self.cite_aa(j, i)) / (2 * npairs) for i, j in pairs
        )
        s["ClosureByCoauthor"] = sum(
            min(self.coauth(i, k), self.coauth(j, k)) / npairs
            for i, j in pairs
            for k in self.actors
            if k != i and k != j
        )
        s["ClosureByCitingSameWork"] = sum(
            min(self.cite_aw({i}, {l.work}), self.cite_aw({j}, {l.work})) / npairs
            for i, j in pairs
            for l in self.pubs
        )
        return s

    # citation statistics -------------------------------------------------

    def citation_stats(self, C, A):
        C = sorted(set(C))
        A = sorted(set(A))
        nC, nA = len(C), len(A)
        cpairs = list(combinations(C, 2))
        ncp = comb(nC, 2)
        h = {}
        h["CitationPopWork"] = self.subrep([], C, 0, 1)
        h["CocitationPopPair"] = self.subrep([], C, 0, 2)
        h["CocitationPopTriple"] = self.subrep([], C, 0, 3)
        h["CitationRepetition"] = self.subrep(A, C, 1, 1)
        h["OutdegreePop"] = sum(self.outdegree(l) for l in C) / nC
        h["CiteWorkAndItsCitations"] = sum(
            (self.cite_ww(x, y) + self.cite_ww(y, x)) / ncp for x, y in cpairs
        )
        h["SelfCitation"] = sum(self.auth(i, k) / (nA * nC) for i in A for k in C)
        others = lambda i: [j for j in self.actors if j != i]
        h["AdoptCitationOfCoauthor"] = sum(
            min(self.coauth(i, j), self.cite_aw({j}, {l})) / (nA * nC) for i in A for j in others(i) for l in C
        )
        h["CiteWorkOfCoauthor"] = sum(
            min(self.coauth(i, j), self.auth(j, l)) / (nA * nC) for i in A for j in others(i) for l in C
        )
        h["AuthorCitesAuthorRep"] = sum(
            min(self.cite_aa(i, j), self.auth(j, l)) / (nA * nC) for i in A for j in others(i) for l in C
        )
        h["AuthorCitesAuthorRec"] = sum(
            min(self.cite_aa(j, i), self.auth(j, l)) / (nA * nC) for i in A for j in others(i) for l in C
        )
        h["CiteMuchCitedAuthors"] = sum(
            max(self.popularity(i) for i in self.by_work[l].authors) / nC for l in C
        )

        def linked(x, y, attr):
            # exists i author of x, j author of y, i != j, attr(i, j) > 0
            return any(
                i != j and attr(i, j) > 0 for i in self.by_work[x].authors for j in self.by_work[y].authors
            )

        h["CociteCoauthorPairs"] = sum(linked(x, y, self.coauth) / ncp for x, y in cpairs)
        h["AuthorCocitation"] = sum(linked(x, y, self.cocite_aa) / ncp for x, y in cpairs)
        return h
