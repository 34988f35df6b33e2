"""Batch command-line front end: preprocess, train, evaluate, recommend.

Configuration is a flat "key = value" text file (diff-friendly for
experiment logs) with command-line flags taking precedence. All artifacts
live under a single output directory: split files from ``preprocess``,
model and embedding binaries from ``train``, report JSON from
``evaluate``, and ranked CSVs from ``recommend``.

Exit codes: 0 success, 1 generic error, 2 I/O error, 3 capacity error,
4 compatibility (vocabulary) error.
"""

from __future__ import annotations

import argparse
import json
import math
import struct
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import embedding as embedding_mod
from . import linalg
from .autoencoder import (
    RidgeConfig,
    SIMILARITY_KINDS,
    SimilarityMatrix,
    ease,
    ridge,
)
from .errors import (
    CapacityError,
    ConfigError,
    ParseError,
    VocabularyMismatchError,
    WhiterecError,
)
from .evalmetrics import evaluate, export_per_user_csv
from .ingest import (
    SplitSpec,
    load_interactions,
    load_split,
    preprocess,
    save_split,
    split_strong_generalization,
)
from .recommend import RankedList, export_ranked_csv, score_user, top_n
from .whitening import zca_similarity

MODEL_MAGIC = b"WREC-SIM"
MODEL_VERSION = 1

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_IO = 2
EXIT_CAPACITY = 3
EXIT_COMPAT = 4


@dataclass
class PipelineConfig:
    """Everything a pipeline run needs, resolvable from file plus flags."""

    data_path: str | None = None
    data_format: str = "csv"
    rating_threshold: float | None = 4.0
    min_user_interactions: int = 5
    min_item_interactions: int = 1
    heldout_user_fraction: float = 0.1
    foldin_fraction: float = 0.8
    rng_seed: int = 0
    kind: str = "ridge"
    lam: float = 200.0
    embedding_dim: int | None = None
    cutoffs: tuple[int, ...] = (20, 50, 100)
    output_dir: str = "out"
    threads: int = 1
    gram_byte_cap: int | None = None

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            heldout_user_fraction=self.heldout_user_fraction,
            foldin_fraction=self.foldin_fraction,
            rng_seed=self.rng_seed,
            min_user_interactions=self.min_user_interactions,
            min_item_interactions=self.min_item_interactions,
            rating_threshold=self.rating_threshold,
        )

    def validate(self) -> None:
        if self.kind not in SIMILARITY_KINDS:
            raise ConfigError(
                f"unknown kind {self.kind!r}; choose one of {', '.join(SIMILARITY_KINDS)}"
            )
        needs_lambda = self.kind != "embed_dot"
        if needs_lambda and self.lam <= 0.0:
            raise ConfigError(f"kind {self.kind!r} needs lambda > 0, got {self.lam}")
        is_embed = self.kind.startswith("embed_")
        if is_embed and self.embedding_dim is None:
            raise ConfigError(f"kind {self.kind!r} requires embedding_dim")
        if not is_embed and self.embedding_dim is not None:
            raise ConfigError(f"embedding_dim is only valid for embed_* kinds, not {self.kind!r}")
        if is_embed and self.embedding_dim is not None and self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if not 0.0 < self.heldout_user_fraction < 1.0:
            raise ConfigError("heldout_user_fraction must be in (0, 1)")
        if not 0.0 < self.foldin_fraction < 1.0:
            raise ConfigError("foldin_fraction must be in (0, 1)")
        if not self.cutoffs or any(r < 1 for r in self.cutoffs):
            raise ConfigError(f"cutoffs must be positive, got {list(self.cutoffs)}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.data_format not in ("csv", "tsv"):
            raise ConfigError(f"data_format must be csv or tsv, got {self.data_format!r}")


_INT_KEYS = {"min_user_interactions", "min_item_interactions", "rng_seed",
             "embedding_dim", "threads", "gram_byte_cap"}
_FLOAT_KEYS = {"rating_threshold", "heldout_user_fraction", "foldin_fraction", "lam"}
_KEY_ALIASES = {"lambda": "lam", "seed": "rng_seed", "output": "output_dir"}


def parse_config_file(path: str | Path) -> dict:
    """Parse flat 'key = value' lines; '#' starts a comment, blanks ignored.

    Returns canonical PipelineConfig field names (aliases like "lambda",
    "seed", and "output" are resolved here) with values already typed.
    """
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = _KEY_ALIASES.get(key.strip(), key.strip())
        values[key] = _parse_config_value(key, value.strip(), f"{path}: line {lineno}")
    return values


def _parse_config_value(key: str, value: str, where: str):
    try:
        if key == "cutoffs":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if key in _INT_KEYS:
            return None if value.lower() == "none" else int(value)
        if key in _FLOAT_KEYS:
            return None if value.lower() == "none" else float(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from exc
    return value


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then config file entries, then command-line overrides."""
    config = PipelineConfig()
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        known = {f.name for f in fields(PipelineConfig)}
        for key in file_values:
            if key not in known:
                raise ConfigError(f"{args.config}: unknown config key {key!r}")
        config = replace(config, **file_values)
    overrides = {}
    for flag, name in (("data", "data_path"), ("format", "data_format"),
                       ("kind", "kind"), ("lam", "lam"),
                       ("embedding_dim", "embedding_dim"), ("cutoffs", "cutoffs"),
                       ("seed", "rng_seed"), ("threads", "threads"),
                       ("output", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        config = replace(config, **overrides)
    if config.gram_byte_cap is not None:
        linalg.GRAM_BYTE_CAP = config.gram_byte_cap
    return config


# ---------------------------------------------------------------------------
# Model persistence (versioned little-endian binary).
# ---------------------------------------------------------------------------

def save_model(sim: SimilarityMatrix, item_ids: list[str], path: str | Path) -> None:
    """Write magic, version, kind, dim, lambda, embedding_dim, values, vocab."""
    if sim.kind not in SIMILARITY_KINDS:
        raise ValueError(f"cannot persist similarity of kind {sim.kind!r}")
    if len(item_ids) != sim.dim:
        raise ValueError(f"vocabulary has {len(item_ids)} entries for dim {sim.dim}")
    lam = sim.config.get("lambda", sim.config.get("eps"))
    embedding_dim = sim.config.get("embedding_dim", 0) or 0
    kind_raw = sim.kind.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", len(kind_raw)))
        fh.write(kind_raw)
        fh.write(struct.pack("<I", sim.dim))
        fh.write(struct.pack("<d", math.nan if lam is None else float(lam)))
        fh.write(struct.pack("<I", int(embedding_dim)))
        fh.write(np.ascontiguousarray(sim.values, dtype="<f8").tobytes())
        for item in item_ids:
            raw = item.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_model(path: str | Path) -> tuple[SimilarityMatrix, list[str]]:
    """Inverse of save_model; bit-exact on the matrix payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MODEL_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        (version,) = struct.unpack("<I", embedding_mod._read_exact(fh, 4, path))
        if version != MODEL_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        (kind_len,) = struct.unpack("<I", embedding_mod._read_exact(fh, 4, path))
        kind = embedding_mod._read_exact(fh, kind_len, path).decode("utf-8")
        if kind not in SIMILARITY_KINDS:
            raise ParseError(f"{path}: unknown model kind {kind!r}")
        (dim,) = struct.unpack("<I", embedding_mod._read_exact(fh, 4, path))
        (lam,) = struct.unpack("<d", embedding_mod._read_exact(fh, 8, path))
        (embedding_dim,) = struct.unpack("<I", embedding_mod._read_exact(fh, 4, path))
        payload = embedding_mod._read_exact(fh, dim * dim * 8, path)
        values = np.frombuffer(payload, dtype="<f8").reshape(dim, dim).copy()
        item_ids = []
        for _ in range(dim):
            (length,) = struct.unpack("<I", embedding_mod._read_exact(fh, 4, path))
            item_ids.append(embedding_mod._read_exact(fh, length, path).decode("utf-8"))
    config = {}
    if not math.isnan(lam):
        config["eps" if kind == "zca" else "lambda"] = lam
    if embedding_dim:
        config["embedding_dim"] = embedding_dim
    return SimilarityMatrix(values, kind, config), item_ids


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

def cmd_preprocess(config: PipelineConfig) -> int:
    if not config.data_path:
        raise ConfigError("preprocess needs a data path (config data_path or --data)")
    raw = load_interactions(config.data_path, config.data_format)
    X = preprocess(raw, config.split_spec())
    train, validation, test = split_strong_generalization(X, config.split_spec())
    outdir = Path(config.output_dir)
    save_split(outdir, train, validation, test)
    summary = {
        "n_items": train.n_items,
        "splits": {
            "train": {"n_users": train.n_users, "nnz": train.nnz},
            "validation": {
                "n_users": validation.n_users,
                "nnz_foldin": validation.foldin.nnz,
                "nnz_targets": validation.targets.nnz,
                "excluded_users": validation.n_excluded_users,
            },
            "test": {
                "n_users": test.n_users,
                "nnz_foldin": test.foldin.nnz,
                "nnz_targets": test.targets.nnz,
                "excluded_users": test.n_excluded_users,
            },
        },
        "rng_seed": config.rng_seed,
    }
    (outdir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote split to {outdir} "
          f"(train {train.n_users}x{train.n_items}, nnz {train.nnz})")
    return EXIT_OK


def train_similarity(config: PipelineConfig, train) -> SimilarityMatrix:
    """Build the configured similarity kind from a training matrix."""
    kind = config.kind
    if kind == "ridge":
        return ridge(train, RidgeConfig(config.lam, "auto"))
    if kind == "ease":
        return ease(train, config.lam).B
    if kind == "zca":
        return zca_similarity(train, config.lam)
    # Embedding kinds share the factorization step.
    d = min(train.n_items - 1, config.embedding_dim) if train.n_items > 1 else 1
    d = min(d, train.n_users)
    emb = embedding_mod.svd_embed(train, d)
    embedding_mod.save_embeddings(
        emb, train.item_ids, Path(config.output_dir) / "embeddings.bin"
    )
    if kind == "embed_dot":
        return embedding_mod.embed_dot(emb)
    if kind == "embed_ridge":
        return embedding_mod.embed_ridge(emb, config.lam)
    return embedding_mod.embed_ease(emb, config.lam)


def cmd_train(config: PipelineConfig) -> int:
    outdir = Path(config.output_dir)
    if not (outdir / "train.txt").exists():
        raise FileNotFoundError(f"{outdir / 'train.txt'}: run preprocess first")
    train, _, _ = load_split(outdir)
    started = time.perf_counter()
    sim = train_similarity(config, train)
    elapsed = time.perf_counter() - started
    model_path = outdir / f"model_{config.kind}.bin"
    save_model(sim, train.item_ids, model_path)
    print(f"trained kind={config.kind} dim={sim.dim} in {elapsed:.3f}s -> {model_path}")
    return EXIT_OK


def cmd_evaluate(config: PipelineConfig, model_path: str | Path,
                 split_name: str = "test") -> int:
    model_path = Path(model_path)
    if not model_path.exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    sim, model_items = load_model(model_path)
    outdir = Path(config.output_dir)
    _, validation, test = load_split(outdir)
    heldout = validation if split_name == "validation" else test
    if heldout.foldin.item_ids != model_items:
        raise VocabularyMismatchError(
            f"model vocabulary ({len(model_items)} items) does not match the "
            f"{split_name} split ({heldout.n_items} items)"
        )
    report = evaluate(heldout, sim, list(config.cutoffs), threads=config.threads)
    report_path = outdir / f"eval_{split_name}_{sim.kind}.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    export_per_user_csv(report, heldout.foldin.user_ids,
                        outdir / f"eval_{split_name}_{sim.kind}_per_user.csv")
    print(f"{'metric':<8}{'R':>6}{'mean':>12}")
    for (metric, r) in sorted(report.means):
        print(f"{metric:<8}{r:>6}{report.means[(metric, r)]:>12.5f}")
    print(f"evaluated {report.n_users_evaluated} users "
          f"({sum(report.excluded_users.values())} excluded) -> {report_path}")
    return EXIT_OK


def cmd_recommend(config: PipelineConfig, model_path: str | Path,
                  users_path: str | Path, n: int) -> int:
    if n < 1:
        raise ConfigError(f"top-N must be >= 1, got {n}")
    model_path = Path(model_path)
    if not model_path.exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    sim, item_ids = load_model(model_path)
    item_index = {item: j for j, item in enumerate(item_ids)}
    raw = load_interactions(users_path, config.data_format)

    foldins: dict[str, list[int]] = {}
    unknown = 0
    for record in raw:
        j = item_index.get(record.item_id)
        if j is None:
            unknown += 1
            continue
        foldins.setdefault(record.user_id, []).append(j)
    if unknown:
        print(f"warning: skipped {unknown} interactions with unknown item ids",
              file=sys.stderr)

    ranked = []
    user_order = list(foldins)
    for u, user in enumerate(user_order):
        seen = np.unique(np.array(foldins[user], dtype=np.int64))
        if seen.size == 0:
            ranked.append(RankedList(user=u, entries=[]))
            continue
        scores = score_user(seen, sim)
        ranked.append(RankedList(user=u, entries=top_n(scores, seen, n)))
    empty = sum(1 for rl in ranked if not rl.entries)
    if empty:
        print(f"warning: {empty} users have no recommendations", file=sys.stderr)

    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    out_path = outdir / "recommendations.csv"
    export_ranked_csv(ranked, user_order, item_ids, out_path)
    print(f"wrote {sum(len(rl.entries) for rl in ranked)} rows -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whiterec",
        description="Closed-form item-similarity models with whitening structure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--kind", choices=SIMILARITY_KINDS, help="similarity model kind")
        p.add_argument("--lambda", dest="lam", type=float,
                       help="regularization weight (also the whitening shift)")
        p.add_argument("--embedding-dim", dest="embedding_dim", type=int)
        p.add_argument("--cutoffs", type=_parse_cutoffs,
                       help="comma-separated ranking cutoffs, e.g. 20,50,100")
        p.add_argument("--seed", type=int, help="seed for every random choice")
        p.add_argument("--threads", type=int, help="worker thread cap")
        p.add_argument("--output", help="artifact directory")

    p = sub.add_parser("preprocess", help="filter raw data and write splits")
    p.add_argument("--data", help="raw interaction CSV/TSV path")
    p.add_argument("--format", choices=("csv", "tsv"))
    add_common(p)

    p = sub.add_parser("train", help="fit a similarity model on the train split")
    add_common(p)

    p = sub.add_parser("evaluate", help="score a model on a held-out split")
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--split", choices=("validation", "test"), default="test")
    add_common(p)

    p = sub.add_parser("recommend", help="rank items for users in a fold-in file")
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--users", required=True, help="fold-in interactions CSV/TSV")
    p.add_argument("-N", "--topn", type=int, default=10, help="list length")
    p.add_argument("--format", choices=("csv", "tsv"))
    add_common(p)
    return parser


def _parse_cutoffs(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        config.validate()
        if args.command == "preprocess":
            return cmd_preprocess(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.model, args.split)
        return cmd_recommend(config, args.model, args.users, args.topn)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except VocabularyMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (FileNotFoundError, OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WhiterecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERIC


if __name__ == "__main__":
    sys.exit(main())
