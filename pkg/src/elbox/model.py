from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .ontology import Vocabulary, VocabularyError

TABLES = ("center", "offset", "relation")


@dataclass(eq=False)
class ModelParams:
    """Dense embedding tables: one box per concept, one translation per relation."""

    concept_centers: np.ndarray
    concept_offsets: np.ndarray
    relation_vecs: np.ndarray
    vocab: Vocabulary | None = None

    def __post_init__(self):
        self.concept_centers = np.asarray(self.concept_centers, dtype=float)
        self.concept_offsets = np.asarray(self.concept_offsets, dtype=float)
        self.relation_vecs = np.asarray(self.relation_vecs, dtype=float)
        if self.concept_centers.ndim != 2 or self.concept_centers.shape != self.concept_offsets.shape:
            raise ValueError("center and offset tables must share a 2-D shape")
        if self.relation_vecs.ndim != 2 or self.relation_vecs.shape[1] != self.concept_centers.shape[1]:
            raise ValueError("relation table must have the embedding dimension as second axis")
        if self.vocab is not None and (
            self.vocab.num_concepts != self.num_concepts or self.vocab.num_relations != self.num_relations
        ):
            raise ValueError("vocabulary size does not match the parameter tables")

    @property
    def dim(self) -> int:
        return self.concept_centers.shape[1]

    @property
    def num_concepts(self) -> int:
        return self.concept_centers.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_vecs.shape[0]

    def tables(self) -> dict[str, np.ndarray]:
        """The parameter tables keyed by slot kind; arrays are live views."""
        return {"center": self.concept_centers, "offset": self.concept_offsets, "relation": self.relation_vecs}

    def box(self, c) -> Box:
        c = self._concept_id(c)
        return Box(self.concept_centers[c], np.maximum(self.concept_offsets[c], 0.0))

    def relation(self, r) -> np.ndarray:
        if isinstance(r, str):
            if self.vocab is None:
                raise VocabularyError(f"no vocabulary to resolve {r!r}")
            r = self.vocab.relation(r)
        if not 0 <= r < self.num_relations:
            raise VocabularyError(f"relation id {r} out of range")
        return self.relation_vecs[r]

    def _concept_id(self, c) -> int:
        if isinstance(c, str):
            if self.vocab is None:
                raise VocabularyError(f"no vocabulary to resolve {c!r}")
            return self.vocab.concept(c)
        if not 0 <= c < self.num_concepts:
            raise VocabularyError(f"concept id {c} out of range")
        return int(c)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.concept_centers.copy(), self.concept_offsets.copy(), self.relation_vecs.copy(), self.vocab
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tables().items()}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tables().values())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.tables().values(), other.tables().values()))
