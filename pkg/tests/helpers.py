"""Shared test fixtures: random loss points and the gradient comparison."""
import numpy as np

from elbox.losses import evaluate_kernel, loss_negative, loss_nf1, loss_nf2, loss_nf3, loss_nf4, loss_nf5, loss_nf6, loss_nf7
from elbox.geometry import Box, containment_residual, intersect, lower, upper
from elbox.evaluation import SubsumptionQuery
from elbox.model import ModelParams

import oracles
from oracles import SLOTS, kink_distance, loss_rows, numeric_gradient

FORMS = ("nf1", "nf2", "nf3", "nf4", "nf5", "nf6", "nf7", "neg")
KINK_TOL = 1e-3

# concept 0 plays C, concept 1 plays D, concept 2 plays E; relation 0 is R
SLOT_KEYS = {
    "cc": ("center", 0), "oc": ("offset", 0),
    "cd": ("center", 1), "od": ("offset", 1),
    "ce": ("center", 2), "oe": ("offset", 2),
    "r": ("relation", 0),
}
CALLS = {
    "nf1": lambda p, m: loss_nf1(p, 0, 1, m),
    "nf2": lambda p, m: loss_nf2(p, 0, 1, 2, m),
    "nf3": lambda p, m: loss_nf3(p, 0, 0, 1, m),
    "nf4": lambda p, m: loss_nf4(p, 0, 0, 1, m),
    "nf5": lambda p, m: loss_nf5(p, 0, 1, m),
    "nf6": lambda p, m: loss_nf6(p, 0, 0, m),
    "nf7": lambda p, m: loss_nf7(p, 0, m),
    "neg": lambda p, m: loss_negative(p, 0, 0, 1, m),
}


def params_from_point(point):
    centers = np.stack([point["cc"], point["cd"], point["ce"]])
    offsets = np.stack([point["oc"], point["od"], point["oe"]])
    return ModelParams(centers, offsets, point["r"][None, :])


def sample_point(dim, rng, spread=0.7, width=(0.2, 1.2)):
    """Three boxes scattered around a shared anchor plus a short relation."""
    base = rng.normal(size=dim)
    point = {}
    for c, o in (("cc", "oc"), ("cd", "od"), ("ce", "oe")):
        point[c] = base + rng.normal(scale=spread, size=dim)
        point[o] = rng.uniform(*width, size=dim)
    point["r"] = rng.normal(scale=0.5, size=dim)
    return point, float(rng.uniform(-0.1, 0.1))


def analytic_gradient(form, point, m):
    lv = CALLS[form](params_from_point(point), m)
    out = {}
    for s in SLOTS[form]:
        out[s] = np.asarray(lv.grads.get(SLOT_KEYS[s], np.zeros(len(point["oc"]))), dtype=float)
    return lv.value, out


def relative_error(a, b):
    a = np.concatenate([a[s] for s in sorted(a)])
    b = np.concatenate([b[s] for s in sorted(b)])
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def gradient_check(form, dim, n_points, rng, max_tries=100_000):
    """Compare analytic and central-difference gradients at ``n_points``
    random points that sit at least ``KINK_TOL`` away from every kink and
    have a positive loss. Returns (worst relative error, points used, points drawn)."""
    worst, used, tries = 0.0, 0, 0
    while used < n_points:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"{form}: could not find {n_points} non-kink points")
        # disjointness needs overlapping boxes in every dimension to be non-trivial
        point, m = sample_point(dim, rng, spread=0.3, width=(0.6, 1.5)) if form == "nf5" else sample_point(dim, rng)
        X = {k: v[None, :] for k, v in point.items()}
        if kink_distance(form, X, m) < KINK_TOL or loss_rows(form, X, m)[0] <= 0:
            continue
        value, ana = analytic_gradient(form, point, m)
        num = numeric_gradient(form, point, m)
        worst = max(worst, relative_error(ana, num))
        used += 1
    return worst, used, tries


def kernel_value(form, ids, params, margin=0.0):
    return float(evaluate_kernel(form, [ids], params, margin)[0][0])


def grid_check(dim):
    """Exhaustive integer-grid comparison against point membership.

    Each box's set of lattice points is a bitmask; the box returned by
    ``intersect`` is mapped back to the lattice through its own bounds, so
    every pair is compared as sets of points. Returns the number of pairs.
    """
    boxes = oracles.grid_boxes(dim)
    pts = oracles.grid_points(dim)
    mask = {bx: sum(1 << i for i, p in enumerate(pts) if oracles.inside(bx, p)) for bx in boxes}
    items = [(bx, Box.from_bounds([a for a, _ in bx], [b for _, b in bx]), mask[bx]) for bx in boxes]
    count_nonzero = np.count_nonzero
    pairs = 0
    for a, A, ma in items:
        for b, B, mb in items:
            got = intersect(A, B)
            both = ma & mb
            if got is None:
                if both:
                    raise AssertionError(f"{a} and {b} share points but intersect() is empty")
            else:
                region = tuple(zip(lower(got).tolist(), upper(got).tolist()))
                got_mask = mask.get(region)
                if got_mask is None:
                    got_mask = sum(1 << i for i, p in enumerate(pts) if oracles.inside(region, p))
                if got_mask != both:
                    raise AssertionError(f"intersect({a}, {b}) covers the wrong points")
            if (not count_nonzero(containment_residual(A, B))) != (ma & ~mb == 0):
                raise AssertionError(f"containment of {a} in {b} misjudged")
            pairs += 1
    return pairs


# -- ranking instances -----------------------------------------------------


def random_instance(rng):
    """A ranking problem with many exact ties (coarse centers, zero offsets)."""
    n = int(rng.integers(1, 51))
    dim = 2
    centers = rng.integers(-2, 3, size=(n + 1, dim)).astype(float)
    offsets = np.where(rng.random((n + 1, dim)) < 0.5, 0.0, rng.integers(0, 2, size=(n + 1, dim)).astype(float))
    p = ModelParams(centers, offsets, rng.integers(-1, 2, size=(1, dim)).astype(float))
    candidates = list(rng.permutation(n + 1)[:n])
    head = int(rng.choice(candidates))
    tail = int(rng.integers(0, n + 1))
    known = {(int(c), 0, tail) for c in candidates if rng.random() < 0.3}
    return p, candidates, SubsumptionQuery(head, 0, tail), known


def brute_query(p, candidates, q, known):
    scores = []
    for h in candidates:
        gap = [abs(p.concept_centers[h][i] + p.relation_vecs[0][i] - p.concept_centers[q.tail][i]) - p.concept_offsets[h][i] - p.concept_offsets[q.tail][i] for i in range(p.dim)]
        scores.append(-sum(max(0.0, g) ** 2 for g in gap) ** 0.5)
    t = candidates.index(q.head)
    removed = {i for i, h in enumerate(candidates) if (h, q.relation, q.tail) in known and i != t}
    return oracles.brute_rank(scores, t), oracles.brute_rank(scores, t, removed)
