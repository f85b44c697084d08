"""Greedy grid search over ordered hyper-parameter ranges.

Cursors are tuples of 0-based indices into each range. Ranges are ordered
from the simplest model to the most complex, and the search starts at the
all-zeros cursor.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

__all__ = ["HyperRange", "SearchReport", "neighbors", "greedy_grid_search"]


@dataclass(frozen=True)
class HyperRange:
    name: str
    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        if not values:
            raise ValueError(f"range {self.name!r} is empty")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass
class SearchReport:
    names: tuple
    cursor: tuple
    values: dict
    evaluations: dict = field(default_factory=dict)
    n_rounds: int = 0

    @property
    def score(self):
        return self.evaluations[self.cursor]

    def to_dict(self):
        return {
            "names": list(self.names),
            "cursor": list(self.cursor),
            "values": dict(self.values),
            "n_rounds": self.n_rounds,
            "evaluations": [[list(c), _encode_score(s)] for c, s in self.evaluations.items()],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            names=tuple(data["names"]),
            cursor=tuple(data["cursor"]),
            values=dict(data["values"]),
            evaluations={tuple(c): _decode_score(s) for c, s in data["evaluations"]},
            n_rounds=int(data["n_rounds"]),
        )


def _encode_score(score):
    return score if math.isfinite(score) else repr(score)


def _decode_score(score):
    return float(score)


def neighbors(cursor, width, sizes):
    """All in-range cursors within l1 distance ``width`` of ``cursor``, itself included."""
    cursor = tuple(cursor)
    out = []

    def walk(dim, budget, prefix):
        if dim == len(cursor):
            out.append(tuple(prefix))
            return
        lo = max(cursor[dim] - budget, 0)
        hi = min(cursor[dim] + budget, sizes[dim] - 1)
        for value in range(lo, hi + 1):
            walk(dim + 1, budget - abs(value - cursor[dim]), prefix + [value])

    walk(0, width, [])
    return out


def _rank(cursor, score):
    # ties: smaller l1 norm first, then lexicographically smaller cursor
    return (score, sum(cursor), cursor)


def greedy_grid_search(ranges, evaluate, width=1, n_jobs=None):
    """Descend from the simplest cursor to a local minimum of ``evaluate``.

    ``evaluate`` maps a tuple of hyper-parameter values to a score (lower is
    better) and must be deterministic; each distinct cursor is evaluated at
    most once. Each round scores the l1 ball of radius ``width`` around the
    incumbent and moves to its best point. The search stops when the
    incumbent is that best point.
    """
    ranges = list(ranges)
    if not ranges:
        raise ValueError("need at least one hyper-parameter range")
    if width < 1:
        raise ValueError(f"search width must be at least 1, got {width}")
    sizes = [len(r) for r in ranges]
    cache = {}

    def score_of(cursor):
        score = float(evaluate(tuple(r.values[i] for r, i in zip(ranges, cursor))))
        return math.inf if math.isnan(score) else score

    cursor = (0,) * len(ranges)
    rounds = 0
    pool = ThreadPoolExecutor(n_jobs) if n_jobs and n_jobs > 1 else None
    try:
        while True:
            rounds += 1
            candidates = neighbors(cursor, width, sizes)
            pending = [c for c in candidates if c not in cache]
            scores = pool.map(score_of, pending) if pool else map(score_of, pending)
            for c, s in zip(pending, scores):
                cache[c] = s
            best = min(candidates, key=lambda c: _rank(c, cache[c]))
            if best == cursor:
                break
            cursor = best
    finally:
        if pool:
            pool.shutdown()
    return SearchReport(
        names=tuple(r.name for r in ranges),
        cursor=cursor,
        values={r.name: r.values[i] for r, i in zip(ranges, cursor)},
        evaluations=cache,
        n_rounds=rounds,
    )
