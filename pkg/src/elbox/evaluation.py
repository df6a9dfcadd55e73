"""Scoring, ranking and ranking metrics.

All scores are oriented higher-is-better. Ranks are 1-based; when the true
candidate ties with others it is placed at the mean position of its tie
group, so ranks may be half-integers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import intersection_bounds
from .model import ModelParams


@dataclass(frozen=True)
class SubsumptionQuery:
    """Rank ``head`` among candidates for ``head ⊑ ∃relation.tail``."""

    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class EquivalenceQuery:
    c: int
    d: int
    true_e: int


@dataclass(frozen=True)
class BallEmbedding:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius >= 0:
            raise ValueError("ball radius must be non-negative")


@dataclass
class RankingReport:
    raw_ranks: list[float]
    filtered_ranks: list[float] | None
    num_candidates: int
    ks: tuple[int, ...]
    hits_at: dict[int, float] = field(default_factory=dict)
    mean_rank: float = float("nan")
    auc: float = float("nan")
    filtered_hits_at: dict[int, float] | None = None
    filtered_mean_rank: float | None = None
    filtered_auc: float | None = None


def score_subsumption(p1, rel, p2, params: ModelParams) -> float:
    """-||max(0, |c(p1) + r - c(p2)| - o(p1) - o(p2))||; 0 is the best score."""
    return float(subsumption_scores(np.atleast_1d(p1), rel, p2, params)[0])


def subsumption_scores(heads, rel, tail, params: ModelParams) -> np.ndarray:
    """Vectorized score of every head in ``heads`` for one (rel, tail)."""
    heads = np.asarray(heads, dtype=np.int64)
    cc = params.concept_centers
    oc = params.concept_offsets
    gap = np.abs(cc[heads] + params.relation_vecs[rel] - cc[tail]) - oc[heads] - oc[tail]
    v = np.maximum(gap, 0.0)
    return -np.sqrt(np.einsum("ij,ij->i", v, v))


def tie_aware_rank(scores: np.ndarray, true_index: int) -> float:
    """1-based rank of ``scores[true_index]`` under descending order, with the
    mean position inside its tie group."""
    s = scores[true_index]
    better = int(np.count_nonzero(scores > s))
    ties = int(np.count_nonzero(scores == s))
    return better + (ties + 1) / 2


def rank_query(
    q: SubsumptionQuery,
    candidates: Sequence[int],
    params: ModelParams,
    filter_set: Iterable[tuple[int, int, int]] = (),
) -> tuple[float, float]:
    """(raw, filtered) rank of ``q.head`` among ``candidates``.

    The filtered rank drops every other candidate h with (h, relation, tail)
    in ``filter_set``.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    hits = np.flatnonzero(candidates == q.head)
    if hits.size == 0:
        raise ValueError(f"true head {q.head} is not among the candidates")
    true_pos = int(hits[0])
    scores = subsumption_scores(candidates, q.relation, q.tail, params)
    raw = tie_aware_rank(scores, true_pos)

    filt = filter_set if isinstance(filter_set, (set, frozenset)) else set(filter_set)
    keep = np.array(
        [i == true_pos or (int(h), q.relation, q.tail) not in filt for i, h in enumerate(candidates)], dtype=bool
    )
    filtered = tie_aware_rank(scores[keep], int(np.count_nonzero(keep[:true_pos])))
    return raw, filtered


def _hits(ranks: np.ndarray, ks) -> dict[int, float]:
    return {k: float(np.mean(ranks <= k)) for k in ks}


def _auc(ranks: np.ndarray, n: int) -> float:
    if n <= 1:
        return 1.0
    return float(np.mean((n - ranks) / (n - 1)))


def aggregate_metrics(
    ranks: Sequence[float],
    num_candidates: int,
    ks: Iterable[int] = (10, 100),
    filtered_ranks: Sequence[float] | None = None,
) -> RankingReport:
    """Hits@k, mean rank and rank-based AUC = mean (N - rank) / (N - 1).

    Filtered ranks, when given, are scored against the same N so that
    removing known positives can only raise the AUC.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    r = np.asarray(ranks, dtype=float)
    if r.size == 0:
        raise ValueError("no ranks to aggregate")
    if np.any(r < 1) or np.any(r > num_candidates):
        raise ValueError("ranks must lie in [1, num_candidates]")
    report = RankingReport(
        raw_ranks=r.tolist(),
        filtered_ranks=None,
        num_candidates=num_candidates,
        ks=ks,
        hits_at=_hits(r, ks),
        mean_rank=float(r.mean()),
        auc=_auc(r, num_candidates),
    )
    if filtered_ranks is not None:
        f = np.asarray(filtered_ranks, dtype=float)
        if f.shape != r.shape:
            raise ValueError("raw and filtered rank lists differ in length")
        report.filtered_ranks = f.tolist()
        report.filtered_hits_at = _hits(f, ks)
        report.filtered_mean_rank = float(f.mean())
        report.filtered_auc = _auc(f, num_candidates)
    return report


def evaluate_subsumption(
    queries: Sequence[SubsumptionQuery],
    candidates: Sequence[int],
    params: ModelParams,
    filter_set: Iterable[tuple[int, int, int]] = (),
    ks=(10, 100),
) -> RankingReport:
    filt = set(filter_set)
    raw, filtered = [], []
    for q in queries:
        a, b = rank_query(q, candidates, params, filt)
        raw.append(a)
        filtered.append(b)
    return aggregate_metrics(raw, len(candidates), ks, filtered)


def subsumption_mean_rank(triples: Sequence[tuple[int, int, int]], params: ModelParams) -> float:
    """Raw mean rank of the heads of (c, r, d) triples among all concepts."""
    allc = np.arange(params.num_concepts)
    ranks = []
    for c, r, d in triples:
        scores = subsumption_scores(allc, r, d, params)
        ranks.append(tie_aware_rank(scores, c))
    return float(np.mean(ranks))


def equiv_box_scores(c, d, candidates, params: ModelParams) -> np.ndarray:
    cc, oc = params.concept_centers, params.concept_offsets
    box_min, box_max = intersection_bounds(cc[c], oc[c], cc[d], oc[d])
    mid = (box_min + box_max) / 2
    return -np.linalg.norm(cc[np.asarray(candidates, dtype=np.int64)] - mid, axis=1)


def score_equiv_box(c, d, e, params: ModelParams) -> float:
    """Minus the distance from e's center to the midpoint of the c ∩ d box."""
    return float(equiv_box_scores(c, d, [e], params)[0])


def ball_intersection_point(c: BallEmbedding, d: BallEmbedding) -> np.ndarray:
    """Center of the smallest ball around the lens c ∩ d, found along the
    segment between the two centers. Coincident centers give c's center."""
    delta = d.center - c.center
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        return c.center.copy()
    h = (c.radius**2 - d.radius**2 + dist**2) / (2 * dist)
    return c.center + (h / dist) * delta


def score_equiv_ball(c, d, e, balls) -> float:
    """Ball-embedding counterpart of :func:`score_equiv_box`; ``balls`` maps
    ids to :class:`BallEmbedding`."""
    point = ball_intersection_point(balls[c], balls[d])
    return -float(np.linalg.norm(point - balls[e].center))


def evaluate_equivalence(
    heldout: Sequence[tuple[int, int, int]],
    params: ModelParams,
    candidate_concepts: Sequence[int] | None = None,
    ks=(1, 3, 10),
) -> RankingReport:
    """Rank the true E of each (C, D, E) among the candidates by closeness to
    the C ∩ D midpoint."""
    if candidate_concepts is None:
        candidate_concepts = range(params.num_concepts)
    cand = np.asarray(candidate_concepts, dtype=np.int64)
    ranks = []
    for c, d, e in heldout:
        pos = np.flatnonzero(cand == e)
        if pos.size == 0:
            raise ValueError(f"concept {e} is not in the candidate pool")
        ranks.append(tie_aware_rank(equiv_box_scores(c, d, cand, params), int(pos[0])))
    return aggregate_metrics(ranks, len(cand), ks)


def evaluate_equivalence_balls(heldout, balls, candidate_concepts, ks=(1, 3, 10)) -> RankingReport:
    cand = list(candidate_concepts)
    ranks = []
    for c, d, e in heldout:
        point = ball_intersection_point(balls[c], balls[d])
        scores = -np.array([np.linalg.norm(point - balls[x].center) for x in cand])
        ranks.append(tie_aware_rank(scores, cand.index(e)))
    return aggregate_metrics(ranks, len(cand), ks)



def ppi_table(report: RankingReport) -> tuple[list[str], list[float]]:
    """Header and values in the order H@k(R), H@k(F) for each k, then MR and AUC."""
    header, values = [], []
    for k in report.ks:
        header += [f"H@{k}(R)", f"H@{k}(F)"]
        values += [report.hits_at[k], report.filtered_hits_at[k]]
    header += ["MR(R)", "MR(F)", "AUC(R)", "AUC(F)"]
    values += [report.mean_rank, report.filtered_mean_rank, report.auc, report.filtered_auc]
    return header, values


def equivalence_table(report: RankingReport) -> tuple[list[str], list[float]]:
    header = [f"H@{k}" for k in report.ks] + ["MR"]
    values = [report.hits_at[k] for k in report.ks] + [report.mean_rank]
    return header, values


def metric_records(task: str, report: RankingReport) -> list[tuple[str, str, str, float]]:
    """One (task, metric, variant, value) record per metric."""
    rows = [(task, f"H@{k}", "raw", report.hits_at[k]) for k in report.ks]
    rows += [(task, "MR", "raw", report.mean_rank), (task, "AUC", "raw", report.auc)]
    if report.filtered_hits_at is not None:
        rows += [(task, f"H@{k}", "filtered", report.filtered_hits_at[k]) for k in report.ks]
        rows += [(task, "MR", "filtered", report.filtered_mean_rank), (task, "AUC", "filtered", report.filtered_auc)]
    return rows
