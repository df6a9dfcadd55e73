"""Normalized EL++ axiom sets: parsing, vocabulary, ABox rewrite, splits and
synthetic corpora.

Axiom files hold one axiom per line with whitespace-separated fields::

    nf1 C D        # C ⊑ D
    nf2 C D E      # C ⊓ D ⊑ E
    nf3 C R D      # C ⊑ ∃R.D
    nf4 R C D      # ∃R.C ⊑ D
    nf5 C D        # C ⊓ D ⊑ ⊥
    nf6 R C        # ∃R.C ⊑ ⊥
    nf7 C          # C ⊑ ⊥
    inst a C       # C(a), rewritten to {a} ⊑ C
    role r a b     # r(a, b), rewritten to {a} ⊑ ∃r.{b}

``#`` starts a comment. Individuals become singleton concepts named ``{a}``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# tag -> role of each field: "c" concept, "r" relation, "i" individual
FORMS = {
    "nf1": "cc",
    "nf2": "ccc",
    "nf3": "crc",
    "nf4": "rcc",
    "nf5": "cc",
    "nf6": "rc",
    "nf7": "c",
}
ABOX_FORMS = {"inst": "ic", "role": "rii"}


class AxiomFormatError(ValueError):
    """Raised for malformed axiom lines; carries the offending line number."""

    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno
        self.path = path


class VocabularyError(KeyError):
    """A symbol is not present in a frozen vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown symbol"


def individual_concept(name: str) -> str:
    return "{" + name + "}"


@dataclass(frozen=True)
class Axiom:
    """A normalized axiom. ``args`` holds dense ids in the order of the file
    fields, so ``Axiom("nf4", (r, c, d))`` is ∃r.c ⊑ d."""

    form: str
    args: tuple[int, ...]

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown normal form {self.form!r}")
        if len(self.args) != len(FORMS[self.form]):
            raise ValueError(f"{self.form} expects {len(FORMS[self.form])} ids, got {len(self.args)}")

    def concepts(self) -> tuple[int, ...]:
        return tuple(a for a, role in zip(self.args, FORMS[self.form]) if role == "c")

    def relations(self) -> tuple[int, ...]:
        return tuple(a for a, role in zip(self.args, FORMS[self.form]) if role == "r")


def NF1(c, d):
    return Axiom("nf1", (c, d))


def NF2(c, d, e):
    return Axiom("nf2", (c, d, e))


def NF3(c, r, d):
    return Axiom("nf3", (c, r, d))


def NF4(r, c, d):
    return Axiom("nf4", (r, c, d))


def NF5(c, d):
    return Axiom("nf5", (c, d))


def NF6(r, c):
    return Axiom("nf6", (r, c))


def NF7(c):
    return Axiom("nf7", (c,))


@dataclass(frozen=True)
class Instantiation:
    individual: str
    concept: str


@dataclass(frozen=True)
class RoleAssertion:
    relation: str
    individual_a: str
    individual_b: str


@dataclass(frozen=True)
class Vocabulary:
    concepts: tuple[str, ...] = ()
    relations: tuple[str, ...] = ()
    _concept_index: dict = field(init=False, repr=False, compare=False)
    _relation_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ci = {n: i for i, n in enumerate(self.concepts)}
        ri = {n: i for i, n in enumerate(self.relations)}
        if len(ci) != len(self.concepts):
            raise ValueError("duplicate concept names")
        if len(ri) != len(self.relations):
            raise ValueError("duplicate relation names")
        object.__setattr__(self, "_concept_index", ci)
        object.__setattr__(self, "_relation_index", ri)

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def concept(self, name: str) -> int:
        try:
            return self._concept_index[name]
        except KeyError:
            raise VocabularyError(f"unknown concept {name!r}") from None

    def relation(self, name: str) -> int:
        try:
            return self._relation_index[name]
        except KeyError:
            raise VocabularyError(f"unknown relation {name!r}") from None

    def has_concept(self, name: str) -> bool:
        return name in self._concept_index

    def has_relation(self, name: str) -> bool:
        return name in self._relation_index


class _VocabBuilder:
    """Assigns dense ids in first-appearance order; optionally frozen to a base."""

    def __init__(self, base: Vocabulary | None = None, frozen: bool = False):
        self.concepts: dict[str, int] = {}
        self.relations: dict[str, int] = {}
        self.frozen = frozen
        if base is not None:
            for n in base.concepts:
                self.concepts[n] = len(self.concepts)
            for n in base.relations:
                self.relations[n] = len(self.relations)

    def concept(self, name):
        if name not in self.concepts:
            if self.frozen:
                raise VocabularyError(f"unknown concept {name!r}")
            self.concepts[name] = len(self.concepts)
        return self.concepts[name]

    def relation(self, name):
        if name not in self.relations:
            if self.frozen:
                raise VocabularyError(f"unknown relation {name!r}")
            self.relations[name] = len(self.relations)
        return self.relations[name]

    def build(self) -> Vocabulary:
        return Vocabulary(tuple(self.concepts), tuple(self.relations))


@dataclass(frozen=True)
class AxiomSet:
    axioms: tuple[Axiom, ...]
    vocab: Vocabulary

    def __post_init__(self):
        object.__setattr__(self, "axioms", tuple(self.axioms))
        if len(set(self.axioms)) != len(self.axioms):
            raise ValueError("duplicate axioms in AxiomSet")
        nc, nr = self.vocab.num_concepts, self.vocab.num_relations
        for ax in self.axioms:
            if any(not 0 <= c < nc for c in ax.concepts()) or any(not 0 <= r < nr for r in ax.relations()):
                raise VocabularyError(f"axiom {ax} references ids outside the vocabulary")

    def __len__(self):
        return len(self.axioms)

    def __iter__(self):
        return iter(self.axioms)

    def of_form(self, form: str) -> list[Axiom]:
        return [a for a in self.axioms if a.form == form]

    def with_axioms(self, axioms: Iterable[Axiom]) -> "AxiomSet":
        return AxiomSet(tuple(axioms), self.vocab)

    def render(self, ax: Axiom) -> str:
        names = [
            self.vocab.concepts[a] if role == "c" else self.vocab.relations[a]
            for a, role in zip(ax.args, FORMS[ax.form])
        ]
        return " ".join([ax.form, *names])


def _dedupe(axioms: Iterable[Axiom], warn=True) -> list[Axiom]:
    seen = set()
    out = []
    for ax in axioms:
        if ax in seen:
            if warn:
                log.warning("duplicate axiom %s dropped", ax)
            continue
        seen.add(ax)
        out.append(ax)
    return out


def parse_axiom_lines(lines: Iterable[str], vocab: Vocabulary | None = None, frozen: bool = False, path=None) -> AxiomSet:
    """Parse axiom lines. With ``vocab`` the ids of that vocabulary are kept
    and new symbols appended, unless ``frozen`` is set, in which case unknown
    symbols raise :class:`VocabularyError`."""
    builder = _VocabBuilder(vocab, frozen=frozen)
    axioms: list[Axiom] = []
    seen: dict[Axiom, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        tag = tag.lower()
        if tag in FORMS:
            roles = FORMS[tag]
        elif tag in ABOX_FORMS:
            roles = ABOX_FORMS[tag]
        else:
            raise AxiomFormatError(f"unknown normal-form tag {tag!r}", lineno, path)
        if len(fields) != len(roles):
            raise AxiomFormatError(f"{tag} expects {len(roles)} fields, got {len(fields)}", lineno, path)
        try:
            if tag == "inst":
                ind, concept = fields
                ax = rewrite_abox([Instantiation(ind, concept)], builder)[0]
            elif tag == "role":
                rel, a, b = fields
                ax = rewrite_abox([RoleAssertion(rel, a, b)], builder)[0]
            else:
                ids = tuple(builder.concept(f) if role == "c" else builder.relation(f) for f, role in zip(fields, roles))
                ax = Axiom(tag, ids)
        except VocabularyError as exc:
            raise VocabularyError(f"{path or '<input>'}:{lineno}: {exc}") from None
        if ax in seen:
            log.warning("%s:%d: duplicate of line %d dropped", path or "<input>", lineno, seen[ax])
            continue
        seen[ax] = lineno
        axioms.append(ax)
    return AxiomSet(tuple(axioms), builder.build())


def parse_axiom_file(path, vocab: Vocabulary | None = None, frozen: bool = False) -> AxiomSet:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_axiom_lines(fh, vocab=vocab, frozen=frozen, path=path)


def serialize_axioms(axset: AxiomSet, axioms: Iterable[Axiom] | None = None) -> str:
    rows = axset.axioms if axioms is None else axioms
    return "".join(axset.render(ax) + "\n" for ax in rows)


def write_axiom_file(path, axset: AxiomSet, axioms: Iterable[Axiom] | None = None) -> None:
    Path(path).write_text(serialize_axioms(axset, axioms), encoding="utf-8")


def rewrite_abox(assertions: Sequence, vocab) -> list[Axiom]:
    """Eliminate ABox assertions: C(a) becomes {a} ⊑ C and r(a, b) becomes
    {a} ⊑ ∃r.{b}.

    ``vocab`` is either a frozen :class:`Vocabulary` in which the singleton
    concepts are already registered, or the parser's builder.
    """
    out = []
    for a in assertions:
        if isinstance(a, Instantiation):
            out.append(NF1(vocab.concept(individual_concept(a.individual)), vocab.concept(a.concept)))
        elif isinstance(a, RoleAssertion):
            out.append(
                NF3(
                    vocab.concept(individual_concept(a.individual_a)),
                    vocab.relation(a.relation),
                    vocab.concept(individual_concept(a.individual_b)),
                )
            )
        else:
            raise TypeError(f"not an ABox assertion: {a!r}")
    return out


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0
    # axioms to partition; None means every axiom
    split_target: frozenset | None = None

    def __post_init__(self):
        fr = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(not (0.0 <= f <= 1.0) for f in fr):
            raise ValueError(f"split fractions must lie in [0, 1], got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")


def split_axioms(axset: AxiomSet, spec: SplitSpec) -> tuple[AxiomSet, AxiomSet, AxiomSet]:
    """Partition the target axioms into train/valid/test. Valid and test sizes
    are floored; the remainder and every non-target axiom go to train."""
    if spec.split_target is None:
        target = list(axset.axioms)
    else:
        present = set(axset.axioms)
        missing = [a for a in spec.split_target if a not in present]
        if missing:
            raise ValueError(f"{len(missing)} split-target axioms are not in the set")
        target = [a for a in axset.axioms if a in spec.split_target]
    target_set = set(target)
    rest = [a for a in axset.axioms if a not in target_set]

    n = len(target)
    n_valid = math.floor(n * spec.valid_fraction + 1e-9)
    n_test = math.floor(n * spec.test_fraction + 1e-9)
    order = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [target[i] for i in order]
    valid = shuffled[:n_valid]
    test = shuffled[n_valid : n_valid + n_test]
    train = rest + shuffled[n_valid + n_test :]
    return axset.with_axioms(train), axset.with_axioms(valid), axset.with_axioms(test)


def generate_family_domain() -> AxiomSet:
    """The twelve-axiom family knowledge base."""
    lines = """
    nf1 Male Person
    nf1 Female Person
    nf1 Father Male
    nf1 Mother Female
    nf1 Father Parent
    nf1 Mother Parent
    nf5 Female Male
    nf2 Female Parent Mother
    nf2 Male Parent Father
    nf4 hasChild Person Parent
    nf1 Parent Person
    nf3 Parent hasChild Top
    """
    return parse_axiom_lines(lines.splitlines())


def generate_equivalence_corpus(
    base: AxiomSet,
    n_triples: int = 2131,
    n_heldout: int = 1000,
    seed: int = 0,
    direction: str = "sub",
) -> tuple[AxiomSet, list[tuple[int, int, int]]]:
    """Build the equivalence-entailment corpus from the NF2 axioms of ``base``.

    ``n_triples`` NF2 axioms C ⊓ D ⊑ E are drawn without replacement and two
    inclusions are added for each. With ``direction="sub"`` these are E ⊑ C
    and E ⊑ D, which together with the NF2 axiom entail C ⊓ D ≡ E. With
    ``direction="super"`` they are C ⊑ E and D ⊑ E instead.
    ``n_heldout`` of the triples lose their NF2 axiom from the training set
    and are returned as (C, D, E) id triples.
    """
    if direction not in ("sub", "super"):
        raise ValueError(f"direction must be 'sub' or 'super', got {direction!r}")
    nf2 = base.of_form("nf2")
    if n_triples > len(nf2):
        raise ValueError(f"base has {len(nf2)} NF2 axioms, {n_triples} requested")
    if not 0 <= n_heldout <= n_triples:
        raise ValueError("n_heldout must lie in [0, n_triples]")
    rng = np.random.default_rng(seed)
    chosen = [nf2[i] for i in rng.choice(len(nf2), size=n_triples, replace=False)]
    heldout = chosen[:n_heldout]
    heldout_set = set(heldout)

    train = [a for a in base.axioms if a not in heldout_set]
    for ax in chosen:
        c, d, e = ax.args
        if direction == "sub":
            train += [NF1(e, c), NF1(e, d)]
        else:
            train += [NF1(c, e), NF1(d, e)]
    return base.with_axioms(_dedupe(train, warn=False)), [ax.args for ax in heldout]


def generate_synthetic_base(
    n_concepts: int = 500,
    n_nf2: int = 200,
    seed: int = 0,
    n_internal: int | None = None,
) -> AxiomSet:
    """A random taxonomy with intersection-defined concepts.

    The first ``n_concepts - n_nf2`` concepts form a shallow random tree
    (NF1 child ⊑ parent) whose first ``n_internal`` nodes are the only ones
    allowed to have children. Each remaining concept E gets one axiom
    C ⊓ D ⊑ E over two distinct leaves C, D. Leaves are dealt out in shuffled
    rounds so operand reuse is spread evenly, and no (C, D) pair repeats.
    """
    n_tree = n_concepts - n_nf2
    if n_internal is None:
        n_internal = max(1, n_tree // 10)
    if n_tree - n_internal < 2 or n_nf2 < 0 or n_internal < 1:
        raise ValueError("need at least two taxonomy leaves")
    rng = np.random.default_rng(seed)
    builder = _VocabBuilder()
    for i in range(n_tree):
        builder.concept(f"T{i:04d}")
    for i in range(n_nf2):
        builder.concept(f"X{i:04d}")

    parent = [-1] + [int(rng.integers(0, min(i, n_internal))) for i in range(1, n_tree)]
    axioms = [NF1(i, parent[i]) for i in range(1, n_tree)]
    has_child = set(parent[1:])
    leaves = [i for i in range(n_tree) if i not in has_child]
    max_pairs = len(leaves) * (len(leaves) - 1) // 2
    if n_nf2 > max_pairs:
        raise ValueError(f"only {max_pairs} leaf pairs for {n_nf2} NF2 axioms")

    used: set[tuple[int, int]] = set()
    deck: list[int] = []
    while len(used) < n_nf2:
        if len(deck) < 2:
            deck += [leaves[i] for i in rng.permutation(len(leaves))]
        c, d = deck.pop(), deck.pop()
        key = (min(c, d), max(c, d))
        if c == d or key in used:
            deck.insert(0, c)
            continue
        used.add(key)
        axioms.append(NF2(c, d, n_tree + len(used) - 1))
    return AxiomSet(tuple(axioms), builder.build())


def generate_ppi_corpus(
    n_proteins: int = 50,
    n_functions: int = 30,
    functions_per_protein: int = 3,
    n_interactions: int = 200,
    seed: int = 0,
) -> tuple[AxiomSet, list[Axiom]]:
    """Synthetic protein-interaction corpus in the PPI encoding.

    Functions form a random taxonomy; every protein ``{Pi}`` gets
    ``{Pi} ⊑ ∃hasFunction.F`` axioms, and interactions ``{Pi} ⊑ ∃interacts.{Pj}``
    are drawn preferentially between proteins sharing a function. Returns the
    full set and the list of interaction axioms (the split target).
    """
    rng = np.random.default_rng(seed)
    builder = _VocabBuilder()
    funcs = [builder.concept(f"GO_{i:04d}") for i in range(n_functions)]
    prots = [builder.concept(individual_concept(f"P{i:03d}")) for i in range(n_proteins)]
    has_function = builder.relation("hasFunction")
    interacts = builder.relation("interacts")

    axioms = [NF1(funcs[i], funcs[int(rng.integers(0, i))]) for i in range(1, n_functions)]
    annot = []
    for p in prots:
        fs = rng.choice(n_functions, size=min(functions_per_protein, n_functions), replace=False)
        annot.append(set(int(f) for f in fs))
        axioms += [NF3(p, has_function, funcs[int(f)]) for f in sorted(fs)]

    pairs = set()
    limit = n_proteins * (n_proteins - 1)
    while len(pairs) < min(n_interactions, limit):
        a, b = (int(x) for x in rng.choice(n_proteins, size=2, replace=False))
        if not (annot[a] & annot[b]) and rng.random() < 0.8:
            continue
        pairs.add((a, b))
    ppi = [NF3(prots[a], interacts, prots[b]) for a, b in sorted(pairs)]
    return AxiomSet(tuple(axioms + ppi), builder.build()), ppi
