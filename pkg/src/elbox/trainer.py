"""Training loop: initialization, negative sampling, Adam and checkpoints."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .losses import accumulate_gradients, group_axioms
from .model import ModelParams
from .ontology import Axiom, AxiomSet, Vocabulary

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "elbox-checkpoint"
CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    """A loss, gradient or parameter became non-finite."""


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 50
    margin: float = -0.05
    learning_rate: float = 5e-3
    epochs: int = 1000
    batch_size: int = 512
    negatives_per_positive: int = 1
    seed: int = 0
    init_scale: float = 1.0
    # offsets start uniform in [0, offset_scale]; None means init_scale
    offset_scale: float | None = None
    threads: int = 1
    # validation mean rank is computed every this many epochs (0 disables)
    valid_every: int = 10

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negatives_per_positive < 0:
            raise ValueError("negatives_per_positive must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not np.isfinite(self.margin) or not np.isfinite(self.learning_rate) or not self.init_scale >= 0:
            raise ValueError("margin, learning_rate and init_scale must be finite, init_scale >= 0")
        if self.offset_scale is not None and not self.offset_scale >= 0:
            raise ValueError("offset_scale must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def init_params(vocab: Vocabulary, config: TrainConfig) -> ModelParams:
    """Uniform init: centers and relations in [-s, s], offsets in [0, s]
    (or [0, offset_scale] when that is set)."""
    if config.dim < 1:
        raise ValueError("dim must be >= 1")
    if config.init_scale == 0:
        log.warning("init_scale=0 gives an all-zero model")
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    n, nc, nr = config.dim, vocab.num_concepts, vocab.num_relations
    centers = rng.uniform(-s, s, size=(nc, n))
    offsets = rng.uniform(0.0, s if config.offset_scale is None else config.offset_scale, size=(nc, n))
    relations = rng.uniform(-s, s, size=(nr, n))
    return ModelParams(centers, offsets, relations, vocab)


def sample_negatives(
    batch: Sequence[Axiom],
    num_concepts: int,
    k: int,
    rng: np.random.Generator,
    known: set | None = None,
    max_attempts: int = 100,
) -> list[tuple[int, int, int]]:
    """Corrupt the filler of every NF3 axiom (c, r, d) in ``batch`` ``k``
    times with a uniformly drawn concept, skipping known positives."""
    nf3 = [ax.args for ax in batch if ax.form == "nf3"]
    if k <= 0 or not nf3 or num_concepts == 0:
        return []
    if known is None:
        known = set(nf3)
    out = []
    for c, r, _ in nf3:
        for _ in range(k):
            for _ in range(max_attempts):
                d2 = int(rng.integers(num_concepts))
                if (c, r, d2) not in known:
                    out.append((c, r, d2))
                    break
    return out


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), **kw)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update in place, then clamp offsets to >= 0."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name} table at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    tables = params.tables()
    for name, p in tables.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} table {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
    np.maximum(params.concept_offsets, 0.0, out=params.concept_offsets)


@dataclass
class EpochRecord:
    epoch: int
    loss: float  # summed loss over the epoch divided by the number of axioms
    total: float
    valid_mean_rank: float | None = None


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def to_tsv(self) -> str:
        lines = ["epoch\tloss\ttotal\tvalid_mean_rank"]
        for r in self.records:
            mr = "" if r.valid_mean_rank is None else repr(r.valid_mean_rank)
            lines.append(f"{r.epoch}\t{r.loss!r}\t{r.total!r}\t{mr}")
        return "\n".join(lines) + "\n"


def check_invariants(params: ModelParams, epoch: int | None = None) -> None:
    where = "" if epoch is None else f" after epoch {epoch}"
    if not params.all_finite():
        raise NumericalError("non-finite parameter" + where)
    if np.any(params.concept_offsets < 0):
        raise NumericalError("negative box offset" + where)


def train(
    train_set: AxiomSet,
    valid_set: AxiomSet | None = None,
    config: TrainConfig = TrainConfig(),
    params: ModelParams | None = None,
    callback=None,
) -> tuple[ModelParams, History]:
    """Fit box embeddings to ``train_set``.

    Each epoch shuffles the axioms, and for every batch sums the axiom losses
    plus losses for sampled negatives and takes one Adam step. If
    ``valid_set`` has NF3 axioms, their mean rank is recorded every
    ``config.valid_every`` epochs and at the last epoch. ``callback(epoch,
    params)`` runs after each epoch.
    """
    from .evaluation import subsumption_mean_rank

    vocab = train_set.vocab
    if valid_set is not None and valid_set.vocab != vocab:
        raise ValueError("train and valid sets must share a vocabulary")
    if params is None:
        params = init_params(vocab, config)
    history = History()
    axioms = list(train_set.axioms)
    n = len(axioms)
    if config.epochs == 0 or n == 0:
        return params, history

    rng = np.random.default_rng([config.seed, 1])
    known = {ax.args for ax in axioms if ax.form == "nf3"}
    valid_nf3 = [] if valid_set is None else [ax.args for ax in valid_set.axioms if ax.form == "nf3"]
    state = AdamState.for_params(params)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [axioms[i] for i in order[start : start + config.batch_size]]
            groups = group_axioms(batch)
            negs = sample_negatives(batch, params.num_concepts, config.negatives_per_positive, rng, known)
            if negs:
                groups["neg"] = np.asarray(negs, dtype=np.int64)
            value, grads = accumulate_gradients(groups, params, config.margin, threads=config.threads)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            total += value
            adam_step(params, grads, state, config.learning_rate)
        check_invariants(params, epoch)

        valid_mr = None
        if valid_nf3 and config.valid_every and (epoch % config.valid_every == 0 or epoch == config.epochs):
            valid_mr = subsumption_mean_rank(valid_nf3, params)
        history.records.append(EpochRecord(epoch, total / n, total, valid_mr))
        if callback is not None:
            callback(epoch, params)
    return params, history


def _fmt(vec) -> str:
    return " ".join(repr(float(x)) for x in vec)


def save_checkpoint(params: ModelParams, path, config: TrainConfig | dict | None = None) -> None:
    """Write a text checkpoint; floats use the shortest round-trip repr."""
    vocab = params.vocab
    cnames = vocab.concepts if vocab else tuple(f"concept_{i}" for i in range(params.num_concepts))
    rnames = vocab.relations if vocab else tuple(f"relation_{i}" for i in range(params.num_relations))
    if isinstance(config, TrainConfig):
        config = asdict(config)
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} dim={params.dim} "
        f"concepts={params.num_concepts} relations={params.num_relations}",
        "config " + json.dumps(config or {}, sort_keys=True),
    ]
    for i, name in enumerate(cnames):
        lines.append(f"concept\t{name}\t{_fmt(params.concept_centers[i])}\t{_fmt(params.concept_offsets[i])}")
    for i, name in enumerate(rnames):
        lines.append(f"relation\t{name}\t{_fmt(params.relation_vecs[i])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_vec(text, dim, lineno):
    vals = text.split()
    if len(vals) != dim:
        raise CheckpointError(f"line {lineno}: expected {dim} values, got {len(vals)}")
    try:
        return [float(x) for x in vals]
    except ValueError as exc:
        raise CheckpointError(f"line {lineno}: {exc}") from None


def read_checkpoint(path, dim: int | None = None) -> tuple[ModelParams, dict]:
    """Load parameters and the config echo; ``dim`` asserts the dimension."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CheckpointError(f"{path}: empty checkpoint")
    head = lines[0].split()
    if len(head) != 5 or head[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an elbox checkpoint")
    if head[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"{path}: format version {head[1]}, expected {CHECKPOINT_VERSION}")
    try:
        meta = dict(kv.split("=", 1) for kv in head[2:])
        file_dim, nc, nr = int(meta["dim"]), int(meta["concepts"]), int(meta["relations"])
    except (KeyError, ValueError):
        raise CheckpointError(f"{path}: malformed header") from None
    if dim is not None and dim != file_dim:
        raise CheckpointError(f"{path}: checkpoint has dim {file_dim}, expected {dim}")
    if len(lines) < 2 or not lines[1].startswith("config "):
        raise CheckpointError(f"{path}: missing config line")
    try:
        config = json.loads(lines[1][len("config ") :])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: bad config echo ({exc})") from None

    cnames, centers, offsets, rnames, rels = [], [], [], [], []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        if parts[0] == "concept" and len(parts) == 4:
            cnames.append(parts[1])
            centers.append(_parse_vec(parts[2], file_dim, lineno))
            offsets.append(_parse_vec(parts[3], file_dim, lineno))
        elif parts[0] == "relation" and len(parts) == 3:
            rnames.append(parts[1])
            rels.append(_parse_vec(parts[2], file_dim, lineno))
        else:
            raise CheckpointError(f"{path}: line {lineno}: malformed record")
    if len(cnames) != nc or len(rnames) != nr:
        raise CheckpointError(f"{path}: header announces {nc}/{nr} symbols, found {len(cnames)}/{len(rnames)}")
    shape = (0, file_dim)
    params = ModelParams(
        np.array(centers, dtype=float).reshape(-1, file_dim) if centers else np.zeros(shape),
        np.array(offsets, dtype=float).reshape(-1, file_dim) if offsets else np.zeros(shape),
        np.array(rels, dtype=float).reshape(-1, file_dim) if rels else np.zeros(shape),
        Vocabulary(tuple(cnames), tuple(rnames)),
    )
    return params, config


def load_checkpoint(path, dim: int | None = None) -> ModelParams:
    return read_checkpoint(path, dim)[0]
