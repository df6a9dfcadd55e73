"""Box losses for the seven normal forms and for negative NF3 samples.

Every loss has the shape ``||max(0, u)||`` (L2 norm) for a per-dimension
residual ``u``, except the two bottom losses which are ``||offset||``.
Gradients are written out by hand. At kinks the subgradient of ``max(0, x)``
and of ``|x|`` is taken to be 0, and the norm has gradient 0 at the origin.

Kernels take integer id arrays and work on whole batches. The scalar
``loss_*`` functions wrap them and return a :class:`LossValue` whose
gradients are keyed by ``(table, id)`` with table one of ``center``,
``offset``, ``relation``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ModelParams
from .ontology import FORMS, Axiom, VocabularyError


@dataclass
class LossValue:
    value: float
    grads: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)


def _hinge_norm(u):
    """Row-wise ||max(0, u)|| and its gradient with respect to u."""
    v = np.maximum(u, 0.0)
    val = np.sqrt(np.einsum("ij,ij->i", v, v))
    safe = np.where(val > 0, val, 1.0)
    return val, v / safe[:, None]


def _norm(x):
    val = np.sqrt(np.einsum("ij,ij->i", x, x))
    safe = np.where(val > 0, val, 1.0)
    return val, x / safe[:, None]


# Each kernel returns (values[B], [(table, ids[B], grad_rows[B, n]), ...]).


def _nf1(P: ModelParams, c, d, m):
    diff = P.concept_centers[c] - P.concept_centers[d]
    u = np.abs(diff) + P.concept_offsets[c] - P.concept_offsets[d] - m
    val, g = _hinge_norm(u)
    gs = g * np.sign(diff)
    return val, [("center", c, gs), ("center", d, -gs), ("offset", c, g), ("offset", d, -g)]


def _nf2(P: ModelParams, c, d, e, m):
    cc, oc = P.concept_centers[c], P.concept_offsets[c]
    cd, od = P.concept_centers[d], P.concept_offsets[d]
    lo_from_c = (cc - oc) >= (cd - od)
    hi_from_c = (cc + oc) <= (cd + od)
    lo = np.where(lo_from_c, cc - oc, cd - od)
    hi = np.where(hi_from_c, cc + oc, cd + od)
    width = hi - lo
    new_c = (lo + hi) / 2
    new_o = np.abs(width) / 2
    diff = new_c - P.concept_centers[e]
    u = np.abs(diff) + new_o - P.concept_offsets[e] - m
    val, g = _hinge_norm(u)
    s_diff = np.sign(diff)
    s_width = np.sign(width)
    g_lo = g * 0.5 * (s_diff - s_width)
    g_hi = g * 0.5 * (s_diff + s_width)
    # lo = center - offset, hi = center + offset of whichever box supplies it
    g_lo_c, g_lo_d = np.where(lo_from_c, g_lo, 0.0), np.where(lo_from_c, 0.0, g_lo)
    g_hi_c, g_hi_d = np.where(hi_from_c, g_hi, 0.0), np.where(hi_from_c, 0.0, g_hi)
    return val, [
        ("center", c, g_lo_c + g_hi_c),
        ("offset", c, g_hi_c - g_lo_c),
        ("center", d, g_lo_d + g_hi_d),
        ("offset", d, g_hi_d - g_lo_d),
        ("center", e, -g * s_diff),
        ("offset", e, -g),
    ]


def _nf3(P: ModelParams, c, r, d, m):
    diff = P.concept_centers[c] + P.relation_vecs[r] - P.concept_centers[d]
    u = np.abs(diff) + P.concept_offsets[c] - P.concept_offsets[d] - m
    val, g = _hinge_norm(u)
    gs = g * np.sign(diff)
    return val, [
        ("center", c, gs),
        ("relation", r, gs),
        ("center", d, -gs),
        ("offset", c, g),
        ("offset", d, -g),
    ]


def _nf4(P: ModelParams, r, c, d, m):
    diff = P.concept_centers[c] - P.relation_vecs[r] - P.concept_centers[d]
    u = np.abs(diff) - P.concept_offsets[c] - P.concept_offsets[d] - m
    val, g = _hinge_norm(u)
    gs = g * np.sign(diff)
    return val, [
        ("center", c, gs),
        ("relation", r, -gs),
        ("center", d, -gs),
        ("offset", c, -g),
        ("offset", d, -g),
    ]


def _nf5(P: ModelParams, c, d, m):
    cc, oc = P.concept_centers[c], P.concept_offsets[c]
    cd, od = P.concept_centers[d], P.concept_offsets[d]
    box_min = np.maximum(cc - oc, cd - od)
    box_max = np.minimum(cc + oc, cd + od)
    overlapping = np.all(box_max >= box_min, axis=1)
    diff = cc - cd
    u = -np.abs(diff) + oc + od + m
    val, g = _hinge_norm(u)
    val = np.where(overlapping, val, 0.0)
    g = g * overlapping[:, None]
    gs = g * np.sign(diff)
    return val, [("center", c, -gs), ("center", d, gs), ("offset", c, g), ("offset", d, g)]


def _bottom(P: ModelParams, c):
    val, g = _norm(P.concept_offsets[c])
    return val, [("offset", c, g)]


def _nf6(P: ModelParams, r, c, m):
    # the relation plays no part in this loss
    return _bottom(P, c)


def _nf7(P: ModelParams, c, m):
    return _bottom(P, c)


def _negative(P: ModelParams, c, r, d, m):
    diff = P.concept_centers[c] + P.relation_vecs[r] - P.concept_centers[d]
    u = -np.abs(diff) + P.concept_offsets[c] + P.concept_offsets[d] + m
    val, g = _hinge_norm(u)
    gs = g * np.sign(diff)
    return val, [
        ("center", c, -gs),
        ("relation", r, -gs),
        ("center", d, gs),
        ("offset", c, g),
        ("offset", d, g),
    ]


KERNELS = {
    "nf1": _nf1,
    "nf2": _nf2,
    "nf3": _nf3,
    "nf4": _nf4,
    "nf5": _nf5,
    "nf6": _nf6,
    "nf7": _nf7,
    "neg": _negative,
}
ARGS = dict(FORMS, neg="crc")


def _check_ids(P: ModelParams, kind: str, ids: np.ndarray):
    roles = ARGS[kind]
    for col, role in enumerate(roles):
        limit = P.num_concepts if role == "c" else P.num_relations
        column = ids[:, col]
        if column.size and (column.min() < 0 or column.max() >= limit):
            what = "concept" if role == "c" else "relation"
            raise VocabularyError(f"{kind}: {what} id out of range")


def evaluate_kernel(kind: str, ids, params: ModelParams, margin: float = 0.0):
    """Per-row values and gradient terms for an ``(B, arity)`` id array."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1, len(ARGS[kind]))
    _check_ids(params, kind, ids)
    return KERNELS[kind](params, *ids.T, float(margin))


def _single(kind: str, params: ModelParams, ids, margin) -> LossValue:
    val, terms = evaluate_kernel(kind, [ids], params, margin)
    grads: dict[tuple[str, int], np.ndarray] = {}
    for table, idx, rows in terms:
        key = (table, int(idx[0]))
        grads[key] = grads.get(key, 0.0) + rows[0]
    return LossValue(float(val[0]), grads)


def loss_nf1(params, c, d, margin=0.0) -> LossValue:
    """C ⊑ D: the box of c lies inside the box of d."""
    return _single("nf1", params, (c, d), margin)


def loss_nf2(params, c, d, e, margin=0.0) -> LossValue:
    """C ⊓ D ⊑ E: the intersection box of c and d lies inside e."""
    return _single("nf2", params, (c, d, e), margin)


def loss_nf3(params, c, r, d, margin=0.0) -> LossValue:
    """C ⊑ ∃R.D: c translated by r lies inside d."""
    return _single("nf3", params, (c, r, d), margin)


def loss_nf4(params, r, c, d, margin=0.0) -> LossValue:
    """∃R.C ⊑ D: c translated by -r overlaps d."""
    return _single("nf4", params, (r, c, d), margin)


def loss_nf5(params, c, d, margin=0.0) -> LossValue:
    """C ⊓ D ⊑ ⊥: zero once the boxes are disjoint."""
    return _single("nf5", params, (c, d), margin)


def loss_nf6(params, r, c, margin=0.0) -> LossValue:
    return _single("nf6", params, (r, c), margin)


def loss_nf7(params, c, margin=0.0) -> LossValue:
    return _single("nf7", params, (c,), margin)


def loss_negative(params, c, r, d, margin=0.0) -> LossValue:
    """C ⋢ ∃R.D: pushes c translated by r away from d."""
    return _single("neg", params, (c, r, d), margin)


def group_axioms(axioms: Iterable[Axiom]) -> dict[str, np.ndarray]:
    """Stack axiom ids into one ``(k, arity)`` int array per normal form."""
    buckets: dict[str, list] = {}
    for ax in axioms:
        buckets.setdefault(ax.form, []).append(ax.args)
    return {
        form: np.asarray(buckets[form], dtype=np.int64).reshape(-1, len(FORMS[form]))
        for form in FORMS
        if form in buckets
    }


def _accumulate_chunk(groups, params, margin):
    grads = params.zeros_like()
    total = 0.0
    for kind, ids in groups.items():
        if len(ids) == 0:
            continue
        val, terms = evaluate_kernel(kind, ids, params, margin)
        total += float(val.sum())
        for table, idx, rows in terms:
            np.add.at(grads[table], idx, rows)
    return total, grads


def accumulate_gradients(
    groups: dict[str, np.ndarray],
    params: ModelParams,
    margin: float = 0.0,
    threads: int = 1,
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed loss and dense gradient tables for grouped ids.

    ``groups`` maps a normal form (or ``"neg"``) to an id array. With
    ``threads > 1`` each group is split into contiguous chunks evaluated in
    parallel; partial results are merged in chunk order.
    """
    if threads <= 1:
        return _accumulate_chunk(groups, params, margin)
    splits = {k: np.array_split(v, threads) for k, v in groups.items()}
    chunks = [{k: parts[i] for k, parts in splits.items()} for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda g: _accumulate_chunk(g, params, margin), chunks))
    total = 0.0
    grads = params.zeros_like()
    for part_total, part_grads in results:
        total += part_total
        for k in grads:
            grads[k] += part_grads[k]
    return total, grads


def batch_loss(
    axioms: Sequence[Axiom],
    negatives: Sequence[tuple[int, int, int]],
    params: ModelParams,
    margin: float = 0.0,
) -> LossValue:
    """Sum of the axiom losses and negative-sample losses, with gradients
    accumulated per parameter slot."""
    groups = group_axioms(axioms)
    if len(negatives):
        groups["neg"] = np.asarray(negatives, dtype=np.int64).reshape(-1, 3)
    total, dense = accumulate_gradients(groups, params, margin)
    touched: dict[str, set] = {k: set() for k in dense}
    for kind, ids in groups.items():
        for col, role in enumerate(ARGS[kind]):
            if role == "c":
                touched["center"].update(ids[:, col].tolist())
                touched["offset"].update(ids[:, col].tolist())
            else:
                touched["relation"].update(ids[:, col].tolist())
    grads = {(table, i): dense[table][i].copy() for table in dense for i in sorted(touched[table])}
    return LossValue(total, grads)
