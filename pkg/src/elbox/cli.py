"""Command-line entry points.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 vocabulary
mismatch between a checkpoint and an axiom file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    SubsumptionQuery,
    equivalence_table,
    evaluate_equivalence,
    evaluate_subsumption,
    metric_records,
    ppi_table,
)
from .geometry import intersect, symmetric_difference_ratio
from .losses import evaluate_kernel
from .model import ModelParams
from .ontology import (
    FORMS,
    NF2,
    AxiomFormatError,
    AxiomSet,
    SplitSpec,
    VocabularyError,
    generate_equivalence_corpus,
    generate_family_domain,
    generate_ppi_corpus,
    generate_synthetic_base,
    parse_axiom_file,
    split_axioms,
    write_axiom_file,
)
from .svg import boxes_to_svg
from .trainer import CheckpointError, NumericalError, TrainConfig, read_checkpoint, save_checkpoint, train

log = logging.getLogger("elbox")

OUT_ENV = "ELBOX_OUT"
EXIT_INPUT, EXIT_NUMERIC, EXIT_VOCAB = 2, 3, 4
VERDICT_TOL = 1e-3


class CLIError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunManifest:
    """Run record written to ``manifest.json`` before work starts and
    rewritten with the final status and outputs on exit."""

    def __init__(self, out_dir: Path, command: str, config: dict, inputs=()):
        self.path = out_dir / "manifest.json"
        self.data = {
            "command": command,
            "version": __version__,
            "config": config,
            "seed": config.get("seed"),
            "inputs": {str(p): _digest(p) for p in inputs},
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": [],
        }
        self.write()

    def add_output(self, path):
        self.data["outputs"].append(str(path))

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.data["finished"] = _now()
        self.data["status"] = "ok" if exc_type is None else f"failed: {exc}"
        self.write()
        return False


def _out_dir(out) -> Path:
    path = Path(out or os.environ.get(OUT_ENV) or "elbox-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(manifest: RunManifest, path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    manifest.add_output(path)


def _fmt(x) -> str:
    return f"{x:.4f}" if isinstance(x, float) else str(x)


def _table_text(header, values) -> str:
    return "\t".join(header) + "\n" + "\t".join(_fmt(v) for v in values) + "\n"


def _records_text(records) -> str:
    lines = ["task\tmetric\tvariant\tvalue"]
    lines += [f"{t}\t{m}\t{v}\t{val!r}" for t, m, v, val in records]
    return "\n".join(lines) + "\n"


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(
        dim=args.dim,
        margin=args.margin,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        negatives_per_positive=args.negatives,
        seed=args.seed,
        init_scale=args.init_scale,
        offset_scale=args.offset_scale,
        threads=args.threads,
        valid_every=args.valid_every,
    )


def _train_and_save(train_set: AxiomSet, valid_set, config: TrainConfig, out: Path, manifest: RunManifest):
    params, history = train(train_set, valid_set, config)
    ckpt = out / "checkpoint.txt"
    save_checkpoint(params, ckpt, config)
    manifest.add_output(ckpt)
    _write(manifest, out / "history.tsv", history.to_tsv())
    return params, history


def cmd_train(axioms_path, config: TrainConfig, out_dir=None, valid_path=None) -> Path:
    """Train on an axiom file; writes checkpoint.txt, history.tsv, manifest.json."""
    out = _out_dir(out_dir)
    inputs = [axioms_path] + ([valid_path] if valid_path else [])
    with RunManifest(out, "train", asdict(config), inputs) as manifest:
        train_set = parse_axiom_file(axioms_path)
        valid_set = None
        if valid_path:
            # symbols first seen in the valid file extend the shared vocabulary
            valid_set = parse_axiom_file(valid_path, vocab=train_set.vocab)
            train_set = AxiomSet(train_set.axioms, valid_set.vocab)
        _train_and_save(train_set, valid_set, config, out, manifest)
    return out / "checkpoint.txt"


def _load_checkpoint(path):
    try:
        return read_checkpoint(path)[0]
    except FileNotFoundError:
        raise CLIError(f"checkpoint not found: {path}") from None


def _parse_against(path, params: ModelParams) -> AxiomSet:
    try:
        return parse_axiom_file(path, vocab=params.vocab, frozen=True)
    except VocabularyError as exc:
        raise CLIError(f"vocabulary mismatch with checkpoint: {exc}", EXIT_VOCAB) from None


def _read_names(path, params: ModelParams) -> list[int]:
    names = [t for line in Path(path).read_text(encoding="utf-8").splitlines() for t in line.split("#")[0].split()]
    try:
        return [params.vocab.concept(n) for n in names]
    except VocabularyError as exc:
        raise CLIError(f"vocabulary mismatch with checkpoint: {exc}", EXIT_VOCAB) from None


def cmd_eval_ppi(checkpoint, test_axioms, filter_axioms=(), ks=(10, 100), out_dir=None, relation=None, candidates=None):
    """Rank the head of every NF3 test axiom among the candidate concepts.

    The candidate pool defaults to every concept that occurs on either side
    of an NF3 axiom with the query relation in the test or filter files.
    """
    out = _out_dir(out_dir)
    config = {"ks": list(ks), "relation": relation, "checkpoint": str(checkpoint)}
    inputs = [checkpoint, test_axioms, *filter_axioms] + ([candidates] if candidates else [])
    with RunManifest(out, "eval-ppi", config, inputs) as manifest:
        params = _load_checkpoint(checkpoint)
        test = _parse_against(test_axioms, params)
        known = [_parse_against(p, params) for p in filter_axioms]
        rel_id = None
        if relation is not None:
            if not params.vocab.has_relation(relation):
                raise CLIError(f"relation {relation!r} not in checkpoint", EXIT_VOCAB)
            rel_id = params.vocab.relation(relation)
        queries = [
            SubsumptionQuery(*ax.args) for ax in test.of_form("nf3") if rel_id is None or ax.args[1] == rel_id
        ]
        if not queries:
            raise CLIError(f"{test_axioms}: no NF3 test axioms to evaluate")
        rels = {q.relation for q in queries}
        triples = [ax.args for s in [test, *known] for ax in s.of_form("nf3") if ax.args[1] in rels]
        if candidates:
            pool = _read_names(candidates, params)
        else:
            pool = sorted({c for c, _, _ in triples} | {d for _, _, d in triples})
        report = evaluate_subsumption(queries, pool, params, set(triples), ks)

        header, values = ppi_table(report)
        text = _table_text(header, values)
        _write(manifest, out / "ppi_report.tsv", text)
        _write(manifest, out / "ppi_metrics.tsv", _records_text(metric_records("ppi", report)))
        rank_lines = ["head\trelation\ttail\traw_rank\tfiltered_rank"]
        v = params.vocab
        for q, a, b in zip(queries, report.raw_ranks, report.filtered_ranks):
            rank_lines.append(f"{v.concepts[q.head]}\t{v.relations[q.relation]}\t{v.concepts[q.tail]}\t{a}\t{b}")
        _write(manifest, out / "ppi_ranks.tsv", "\n".join(rank_lines) + "\n")
        print(text, end="")
    return report


def cmd_eval_equiv(checkpoint, triples_file, out_dir=None, ks=(1, 3, 10), candidates=None):
    """Rank E for each ``nf2 C D E`` line of ``triples_file``."""
    out = _out_dir(out_dir)
    inputs = [checkpoint, triples_file] + ([candidates] if candidates else [])
    with RunManifest(out, "eval-equiv", {"ks": list(ks), "checkpoint": str(checkpoint)}, inputs) as manifest:
        params = _load_checkpoint(checkpoint)
        triples = [ax.args for ax in _parse_against(triples_file, params).of_form("nf2")]
        if not triples:
            raise CLIError(f"{triples_file}: no nf2 triples to evaluate")
        pool = _read_names(candidates, params) if candidates else None
        try:
            report = evaluate_equivalence(triples, params, pool, ks)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
        header, values = equivalence_table(report)
        text = _table_text(header, values)
        _write(manifest, out / "equiv_report.tsv", text)
        _write(manifest, out / "equiv_metrics.tsv", _records_text(metric_records("equivalence", report)))
        print(text, end="")
    return report


def cmd_gen_synthetic(base_axioms, n_triples=2131, n_heldout=1000, seed=0, out_dir=None, direction="sub"):
    """Write train.txt (base plus added inclusions) and heldout.txt (nf2 lines)."""
    out = _out_dir(out_dir)
    config = {"n_triples": n_triples, "n_heldout": n_heldout, "seed": seed, "direction": direction}
    with RunManifest(out, "gen-synthetic", config, [base_axioms]) as manifest:
        base = parse_axiom_file(base_axioms)
        train_set, heldout = generate_equivalence_corpus(base, n_triples, n_heldout, seed, direction)
        write_axiom_file(out / "train.txt", train_set)
        manifest.add_output(out / "train.txt")
        write_axiom_file(out / "heldout.txt", train_set, [NF2(*t) for t in heldout])
        manifest.add_output(out / "heldout.txt")
    return out / "train.txt", out / "heldout.txt"


def cmd_gen_base(n_concepts=500, n_nf2=200, seed=0, out_dir=None) -> Path:
    out = _out_dir(out_dir)
    with RunManifest(out, "gen-base", {"concepts": n_concepts, "nf2": n_nf2, "seed": seed}) as manifest:
        write_axiom_file(out / "base.txt", generate_synthetic_base(n_concepts, n_nf2, seed))
        manifest.add_output(out / "base.txt")
    return out / "base.txt"


def cmd_gen_ppi(n_proteins=50, seed=0, out_dir=None):
    """Write a synthetic PPI corpus split 80/10/10 over the interaction axioms."""
    out = _out_dir(out_dir)
    with RunManifest(out, "gen-ppi", {"proteins": n_proteins, "seed": seed}) as manifest:
        full, ppi = generate_ppi_corpus(n_proteins=n_proteins, seed=seed)
        parts = split_axioms(full, SplitSpec(0.8, 0.1, 0.1, seed=seed, split_target=frozenset(ppi)))
        paths = []
        for name, part in zip(("train", "valid", "test"), parts):
            path = out / f"{name}.txt"
            # train carries the whole vocabulary so every split parses against it
            write_axiom_file(path, part)
            manifest.add_output(path)
            paths.append(path)
    return tuple(paths)


def axiom_verdicts(axset: AxiomSet, params: ModelParams, tol: float = VERDICT_TOL) -> list[tuple[str, bool]]:
    """Readable satisfaction verdicts, one per axiom, judged at margin 0."""
    v = params.vocab
    out = []
    for ax in axset.axioms:
        names = [v.concepts[a] if r == "c" else v.relations[a] for a, r in zip(ax.args, FORMS[ax.form])]
        val = float(evaluate_kernel(ax.form, [ax.args], params, 0.0)[0][0])
        ok = val <= tol
        if ax.form == "nf1":
            text = f"{names[0]} ⊆ {names[1]}"
        elif ax.form == "nf2":
            text = f"{names[0]} ∩ {names[1]} ⊆ {names[2]}"
        elif ax.form == "nf3":
            text = f"{names[0]} + {names[1]} ⊆ {names[2]}"
        elif ax.form == "nf4":
            text = f"({names[1]} - {names[0]}) ∩ {names[2]} ≠ ∅"
        elif ax.form == "nf5":
            text = f"{names[0]} ∩ {names[1]} = ∅"
            ok = intersect(params.box(ax.args[0]), params.box(ax.args[1])) is None
        elif ax.form == "nf6":
            text = f"{names[1]} has zero extent (via {names[0]})"
        else:
            text = f"{names[0]} has zero extent"
        out.append((text, ok))
    return out


def equivalence_ratio(params: ModelParams, e, c, d) -> float:
    """Symmetric-difference volume ratio between box e and the box c ∩ d."""
    inter = intersect(params.box(c), params.box(d))
    if inter is None:
        return 1.0
    return symmetric_difference_ratio(params.box(e), inter)


FAMILY_CONFIG = TrainConfig(
    dim=2, margin=0.0, learning_rate=1e-3, epochs=5000, batch_size=64, negatives_per_positive=0, seed=0
)
FAMILY_EQUIVALENCES = [("Mother", "Female", "Parent"), ("Father", "Male", "Parent")]


def cmd_family_demo(out_dir=None, config: TrainConfig = FAMILY_CONFIG):
    """Train the family domain in 2-D and write axioms, checkpoint, SVG,
    coordinate CSV and verdicts."""
    out = _out_dir(out_dir)
    with RunManifest(out, "family-demo", asdict(config)) as manifest:
        fam = generate_family_domain()
        write_axiom_file(out / "family.txt", fam)
        manifest.add_output(out / "family.txt")
        params, _ = _train_and_save(fam, None, config, out, manifest)
        v = params.vocab

        boxes = {name: params.box(i) for i, name in enumerate(v.concepts)}
        _write(manifest, out / "family.svg", boxes_to_svg(boxes))
        rows = [["concept"] + [f"center_{i}" for i in range(params.dim)] + [f"offset_{i}" for i in range(params.dim)]]
        for name, b in boxes.items():
            rows.append([name] + [repr(float(x)) for x in b.center] + [repr(float(x)) for x in b.offset])
        with open(out / "boxes.csv", "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
        manifest.add_output(out / "boxes.csv")

        lines = [f"{text}: {'true' if ok else 'false'}" for text, ok in axiom_verdicts(fam, params)]
        ratios = {}
        for e, c, d in FAMILY_EQUIVALENCES:
            r = equivalence_ratio(params, v.concept(e), v.concept(c), v.concept(d))
            ratios[e] = r
            lines.append(f"{e} ≡ {c} ∩ {d}: {'true' if r < 0.05 else 'false'} (symmetric difference ratio {r:.4f})")
        _write(manifest, out / "verdicts.txt", "\n".join(lines) + "\n")
        print("\n".join(lines))
    return params, lines, ratios


def _add_train_flags(p, **defaults):
    d = dict(asdict(TrainConfig()), **defaults)
    p.add_argument("--dim", type=int, default=d["dim"])
    p.add_argument("--margin", type=float, default=d["margin"])
    p.add_argument("--lr", type=float, default=d["learning_rate"])
    p.add_argument("--epochs", type=int, default=d["epochs"])
    p.add_argument("--batch-size", type=int, default=d["batch_size"])
    p.add_argument("--negatives", type=int, default=d["negatives_per_positive"])
    p.add_argument("--seed", type=int, default=d["seed"])
    p.add_argument("--init-scale", type=float, default=d["init_scale"])
    p.add_argument("--offset-scale", type=float, default=d["offset_scale"])
    p.add_argument("--threads", type=int, default=d["threads"])
    p.add_argument("--valid-every", type=int, default=d["valid_every"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elbox", description="Box embeddings for normalized EL++ ontologies.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on an axiom file")
    p.add_argument("axioms")
    p.add_argument("--valid", help="validation axiom file")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./elbox-out)")
    _add_train_flags(p)

    p = sub.add_parser("eval-ppi", help="ranking evaluation of C ⊑ ∃R.D test axioms")
    p.add_argument("checkpoint")
    p.add_argument("test")
    p.add_argument("--filter", action="append", default=[], help="axiom file of known positives (repeatable)")
    p.add_argument("--ks", type=int, nargs="+", default=[10, 100])
    p.add_argument("--relation")
    p.add_argument("--candidates", help="file of candidate concept names")
    p.add_argument("--out")

    p = sub.add_parser("eval-equiv", help="equivalence-entailment evaluation of nf2 triples")
    p.add_argument("checkpoint")
    p.add_argument("triples")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 10])
    p.add_argument("--candidates")
    p.add_argument("--out")

    p = sub.add_parser("family-demo", help="2-D family-domain case study")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=FAMILY_CONFIG.seed)
    p.add_argument("--epochs", type=int, default=FAMILY_CONFIG.epochs)
    p.add_argument("--lr", type=float, default=FAMILY_CONFIG.learning_rate)

    p = sub.add_parser("gen-synthetic", help="equivalence corpus from the NF2 axioms of a base file")
    p.add_argument("base")
    p.add_argument("--n-triples", type=int, default=2131)
    p.add_argument("--n-heldout", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=["sub", "super"], default="sub")
    p.add_argument("--out")

    p = sub.add_parser("gen-base", help="random taxonomy with intersection-defined concepts")
    p.add_argument("--concepts", type=int, default=500)
    p.add_argument("--nf2", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("gen-ppi", help="synthetic protein-interaction corpus with an 80/10/10 split")
    p.add_argument("--proteins", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def _dispatch(args):
    if args.command == "train":
        cmd_train(args.axioms, _config_from_args(args), args.out, args.valid)
    elif args.command == "eval-ppi":
        cmd_eval_ppi(args.checkpoint, args.test, args.filter, args.ks, args.out, args.relation, args.candidates)
    elif args.command == "eval-equiv":
        cmd_eval_equiv(args.checkpoint, args.triples, args.out, args.ks, args.candidates)
    elif args.command == "family-demo":
        cfg = TrainConfig(**dict(asdict(FAMILY_CONFIG), seed=args.seed, epochs=args.epochs, learning_rate=args.lr))
        cmd_family_demo(args.out, cfg)
    elif args.command == "gen-synthetic":
        cmd_gen_synthetic(args.base, args.n_triples, args.n_heldout, args.seed, args.out, args.direction)
    elif args.command == "gen-base":
        print(cmd_gen_base(args.concepts, args.nf2, args.seed, args.out))
    elif args.command == "gen-ppi":
        for p in cmd_gen_ppi(args.proteins, args.seed, args.out):
            print(p)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except CLIError as exc:
        print(f"elbox: {exc}", file=sys.stderr)
        return exc.code
    except VocabularyError as exc:
        print(f"elbox: {exc}", file=sys.stderr)
        return EXIT_VOCAB
    except NumericalError as exc:
        print(f"elbox: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AxiomFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"elbox: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
