"""Assembly of the six dataset variants from converted glyph pools.

Starting from per-class pools of 28x28 glyphs, this module applies a class
merge map, redraws randomized train/test splits with a seeded generator,
arranges a class-balanced validation tail inside the training split where the
variant calls for one, and emits MNIST-layout IDX files plus a JSON manifest
with content digests.

All randomness is PCG64. The per-class shuffle for class ``c`` is seeded with
``seed ^ c``; the global train / validation-tail / test order shuffles are
seeded with ``seed ^ salt`` for the three fixed salts below. The whole forge
is therefore a deterministic function of (pool bytes, spec, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import idx
from .errors import PartitionError, QuotaError
from .ingest import CLASS_COUNT, code_to_char

# Test share of a full redraw, as drawn for the two all-data variants:
# 116,323 of 814,255. Per-class test counts follow by largest-remainder
# apportionment so the totals are met exactly.
TEST_SHARE = (116_323, 814_255)

TRAIN_ORDER_SALT = 0x5EED0001
VALIDATION_ORDER_SALT = 0x5EED0002
TEST_ORDER_SALT = 0x5EED0003

# Letters whose lowercase forms are folded into the uppercase class.
MERGED_CASE_LETTERS = "CIJKLMOPSUVWXYZ"


@dataclass(frozen=True)
class MergeMap:
    """A fold of the 62 source classes onto a smaller label space.

    ``fold`` maps each source class to a representative source class (folding
    is idempotent: representatives map to themselves) or -1 when the class is
    excluded from the variant. ``index`` maps each source class to its compact
    dataset label in [0, class_count), again -1 for excluded classes.
    """

    name: str
    fold: tuple[int, ...]
    index: tuple[int, ...]
    class_count: int
    class_chars: tuple[str, ...]


def _build_merge(name: str, fold: list[int]) -> MergeMap:
    reps = sorted({r for r in fold if r >= 0})
    position = {rep: i for i, rep in enumerate(reps)}
    index = tuple(position[r] if r >= 0 else -1 for r in fold)
    chars = tuple(code_to_char(rep) for rep in reps)
    return MergeMap(name=name, fold=tuple(fold), index=index, class_count=len(reps), class_chars=chars)


def _case_fold(code: int) -> int:
    """Fold a lowercase class onto its uppercase class when the pair is merged."""
    char = code_to_char(code)
    if char.islower() and char.upper() in MERGED_CASE_LETTERS:
        return 10 + (ord(char.upper()) - ord("A"))
    return code


def identity_map() -> MergeMap:
    """All 62 classes, unchanged."""
    return _build_merge("byclass", list(range(CLASS_COUNT)))


def case_merge_map() -> MergeMap:
    """The 62 -> 47 fold merging the 15 case-ambiguous letters across case."""
    return _build_merge("bymerge", [_case_fold(c) for c in range(CLASS_COUNT)])


def letters_map() -> MergeMap:
    """26 letter classes: uppercase and lowercase folded together, digits dropped."""
    fold = []
    for code in range(CLASS_COUNT):
        char = code_to_char(code)
        if char.isdigit():
            fold.append(-1)
        else:
            fold.append(10 + (ord(char.upper()) - ord("A")))
    return _build_merge("letters", fold)


def merged_letters_map() -> MergeMap:
    """The 37 letter classes of the case-merged fold, digits dropped."""
    fold = []
    for code in range(CLASS_COUNT):
        if code_to_char(code).isdigit():
            fold.append(-1)
        else:
            fold.append(_case_fold(code))
    return _build_merge("letters37", fold)


def digits_map() -> MergeMap:
    """The 10 digit classes, letters dropped."""
    fold = [c if c < 10 else -1 for c in range(CLASS_COUNT)]
    return _build_merge("digits", fold)


def apply_merge(label: int, merge: MergeMap) -> int:
    """Map a source class code to its compact dataset label (-1 if excluded)."""
    if not 0 <= label < CLASS_COUNT:
        raise ValueError(f"class code {label} outside [0, {CLASS_COUNT})")
    return merge.index[label]


@dataclass(frozen=True)
class DatasetSpec:
    """Declarative description of one dataset variant.

    ``quota_rule`` selects how per-class draw sizes are found:

    * ``fixed``: use ``per_class_train`` / ``per_class_test`` exactly;
    * ``ratio``: draw everything, splitting each class by largest-remainder
      apportionment so the global test share is TEST_SHARE exactly;
    * ``auto_6to1``: the largest equal per-class quota the scarcest class
      allows with a 6:1 train:test ratio.
    """

    name: str
    merge: MergeMap
    quota_rule: str
    per_class_train: int | None
    per_class_test: int | None
    has_validation: bool
    seed: int


@dataclass
class Partition:
    """An ordered list of glyphs with their labels."""

    images: np.ndarray  # (N, 784) uint8
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return int(self.images.shape[0])


@dataclass
class LabeledSet:
    """A dataset's train/validation/test partitions (disjoint by glyph)."""

    train: Partition
    validation: Partition | None
    test: Partition
    class_count: int


DATASET_NAMES = ("byclass", "bymerge", "balanced", "letters", "letters37", "digits", "mnist")


def canonical_spec(name: str, seed: int) -> DatasetSpec:
    """The standard spec for one of the six variants (plus the letters37 switch)."""
    if name == "byclass":
        return DatasetSpec(name, identity_map(), "ratio", None, None, False, seed)
    if name == "bymerge":
        return DatasetSpec(name, case_merge_map(), "ratio", None, None, False, seed)
    if name == "balanced":
        return DatasetSpec(name, case_merge_map(), "fixed", 2400, 400, True, seed)
    if name == "letters":
        return DatasetSpec(name, letters_map(), "auto_6to1", None, None, True, seed)
    if name == "letters37":
        return DatasetSpec(name, merged_letters_map(), "fixed", 2400, 400, True, seed)
    if name == "digits":
        return DatasetSpec(name, digits_map(), "fixed", 24_000, 4_000, True, seed)
    if name == "mnist":
        return DatasetSpec(name, digits_map(), "fixed", 6_000, 1_000, True, seed)
    raise ValueError(f"unknown dataset name {name!r}; expected one of {DATASET_NAMES}")


def merge_pools(pools: Mapping[int, np.ndarray], merge: MergeMap) -> list[np.ndarray]:
    """Combine per-source-class pools into per-target-class pools.

    Sources folding to the same target are concatenated in ascending source
    class order; partition hints play no further role once pooled.
    """
    grouped: list[list[np.ndarray]] = [[] for _ in range(merge.class_count)]
    for source in sorted(pools):
        target = apply_merge(source, merge)
        if target < 0:
            continue
        arr = np.asarray(pools[source], dtype=np.uint8).reshape(len(pools[source]), -1)
        grouped[target].append(arr)
    empty = np.zeros((0, 784), dtype=np.uint8)
    # single-source targets keep the pool array itself; no copy
    return [g[0] if len(g) == 1 else np.concatenate(g, axis=0) if g else empty for g in grouped]


def _round_half_up(num: int, den: int) -> int:
    return (num + den // 2) // den


def apportion_largest_remainder(counts: list[int], total: int) -> list[int]:
    """Split ``total`` across classes proportionally to ``counts`` (Hamilton method).

    Floors of the exact quotas are topped up in order of largest fractional
    remainder (ties broken by class index) until the total is met exactly.
    """
    grand = sum(counts)
    if total > grand:
        raise ValueError(f"cannot apportion {total} across {grand} items")
    floors = [total * n // grand for n in counts]
    remainders = [total * n % grand for n in counts]
    leftover = total - sum(floors)
    order = sorted(range(len(counts)), key=lambda c: (-remainders[c], c))
    shares = list(floors)
    for c in order[:leftover]:
        shares[c] += 1
    return shares


def _resolve_quotas(counts: list[int], spec: DatasetSpec) -> tuple[list[int], list[int]]:
    """Per-class (test, train) draw sizes for the spec's quota rule."""
    n_classes = len(counts)
    if spec.quota_rule == "fixed":
        test = [spec.per_class_test] * n_classes
        train = [spec.per_class_train] * n_classes
        for c, n in enumerate(counts):
            if n < test[c] + train[c]:
                raise QuotaError(
                    f"{spec.name}: class {c} has {n} glyphs, quota needs {test[c] + train[c]}"
                )
        return test, train
    if spec.quota_rule == "ratio":
        total = sum(counts)
        total_test = _round_half_up(total * TEST_SHARE[0], TEST_SHARE[1])
        test = apportion_largest_remainder(counts, total_test)
        train = [n - t for n, t in zip(counts, test)]
        return test, train
    if spec.quota_rule == "auto_6to1":
        scarcest = min(counts)
        per_test = scarcest // 7
        if per_test == 0:
            raise QuotaError(
                f"{spec.name}: scarcest class has {scarcest} glyphs, too few for a 6:1 split"
            )
        return [per_test] * n_classes, [6 * per_test] * n_classes
    raise ValueError(f"unknown quota rule {spec.quota_rule!r}")


def _global_shuffle(parts: list[np.ndarray], labels: list[np.ndarray], seed: int) -> Partition:
    images = np.concatenate(parts, axis=0) if parts else np.zeros((0, 784), dtype=np.uint8)
    labs = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(labs))
    return Partition(images=images[order], labels=labs[order])


def pool_and_redraw(pools: Mapping[int, np.ndarray], spec: DatasetSpec) -> LabeledSet:
    """Redraw train/test partitions from combined pools under ``spec``.

    Per class, the merged pool is shuffled with PCG64(seed ^ class) and the
    test quota is drawn first, then the train quota. For validation variants
    the training list is arranged so its final |test| entries hold an equal
    per-class count, ready for carve_validation.
    """
    target_pools = merge_pools(pools, spec.merge)
    counts = [len(p) for p in target_pools]
    test_quota, train_quota = _resolve_quotas(counts, spec)

    val_quota = [0] * spec.merge.class_count
    if spec.has_validation:
        total_test = sum(test_quota)
        if total_test % spec.merge.class_count != 0:
            raise PartitionError(
                f"{spec.name}: test size {total_test} not divisible by {spec.merge.class_count} classes"
            )
        per_class_val = total_test // spec.merge.class_count
        for c, t in enumerate(train_quota):
            if t < per_class_val:
                raise PartitionError(
                    f"{spec.name}: class {c} train quota {t} cannot hold a {per_class_val}-glyph validation share"
                )
            val_quota[c] = per_class_val

    head_imgs, head_labels = [], []
    tail_imgs, tail_labels = [], []
    test_imgs, test_labels = [], []
    for c, pool in enumerate(target_pools):
        rng = np.random.Generator(np.random.PCG64(spec.seed ^ c))
        perm = rng.permutation(len(pool))
        t_test, t_train = test_quota[c], train_quota[c]
        test_rows = pool[perm[:t_test]]
        train_rows = pool[perm[t_test : t_test + t_train]]
        split = t_train - val_quota[c]
        head_imgs.append(train_rows[:split])
        head_labels.append(np.full(split, c, dtype=np.int64))
        tail_imgs.append(train_rows[split:])
        tail_labels.append(np.full(t_train - split, c, dtype=np.int64))
        test_imgs.append(test_rows)
        test_labels.append(np.full(t_test, c, dtype=np.int64))

    head = _global_shuffle(head_imgs, head_labels, spec.seed ^ TRAIN_ORDER_SALT)
    test = _global_shuffle(test_imgs, test_labels, spec.seed ^ TEST_ORDER_SALT)
    if spec.has_validation:
        tail = _global_shuffle(tail_imgs, tail_labels, spec.seed ^ VALIDATION_ORDER_SALT)
        train = Partition(
            images=np.concatenate([head.images, tail.images], axis=0),
            labels=np.concatenate([head.labels, tail.labels]),
        )
    else:
        train = head
    return LabeledSet(train=train, validation=None, test=test, class_count=spec.merge.class_count)


def carve_validation(labeled: LabeledSet, spec: DatasetSpec) -> LabeledSet:
    """Split the final |test| training entries off as the validation partition.

    The tail must hold an equal count per class (pool_and_redraw arranges
    this); the remaining training entries keep their order, so concatenating
    train + validation recovers the contiguous training list.
    """
    if not spec.has_validation:
        return labeled
    n_test = len(labeled.test)
    n_train = len(labeled.train)
    if n_train < 2 * n_test:
        raise PartitionError(
            f"{spec.name}: training size {n_train} cannot spare a validation tail of {n_test}"
        )
    head = Partition(images=labeled.train.images[: n_train - n_test], labels=labeled.train.labels[: n_train - n_test])
    tail = Partition(images=labeled.train.images[n_train - n_test :], labels=labeled.train.labels[n_train - n_test :])
    tail_counts = np.bincount(tail.labels, minlength=labeled.class_count)
    if tail_counts.min() != tail_counts.max():
        raise PartitionError(f"{spec.name}: validation tail is not class-balanced: {tail_counts.tolist()}")
    return LabeledSet(train=head, validation=tail, test=labeled.test, class_count=labeled.class_count)


def build_dataset(pools: Mapping[int, np.ndarray], spec: DatasetSpec) -> LabeledSet:
    """pool_and_redraw followed by carve_validation."""
    return carve_validation(pool_and_redraw(pools, spec), spec)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def emit_dataset(labeled: LabeledSet, spec: DatasetSpec, out_dir, extra_manifest: dict | None = None) -> dict:
    """Write the four IDX files and the JSON manifest; returns the manifest.

    The emitted train file is the contiguous training list: the train
    partition followed by the validation tail (when present). Digests are
    sha-256 of the finished files, so identical (pools, spec, seed) builds
    are verifiable byte-for-byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if labeled.validation is not None:
        train_images = np.concatenate([labeled.train.images, labeled.validation.images], axis=0)
        train_labels = np.concatenate([labeled.train.labels, labeled.validation.labels])
    else:
        train_images = labeled.train.images
        train_labels = labeled.train.labels

    files = {
        f"{spec.name}-train-images.idx": ("images", train_images),
        f"{spec.name}-train-labels.idx": ("labels", train_labels),
        f"{spec.name}-test-images.idx": ("images", labeled.test.images),
        f"{spec.name}-test-labels.idx": ("labels", labeled.test.labels),
    }
    file_records = {}
    for fname, (kind, payload) in files.items():
        path = out_dir / fname
        if kind == "images":
            nbytes = idx.write_images(payload, path)
        else:
            nbytes = idx.write_labels(payload.astype(np.uint8), path)
        file_records[fname] = {"bytes": nbytes, "sha256": _sha256(path)}

    manifest = {
        "name": spec.name,
        "class_count": labeled.class_count,
        "class_chars": list(spec.merge.class_chars),
        "merge": spec.merge.name,
        "seed": spec.seed,
        "quota_rule": spec.quota_rule,
        "per_class_train": spec.per_class_train,
        "per_class_test": spec.per_class_test,
        "counts": {
            "train": int(len(train_labels)),
            "train_head": int(len(labeled.train)),
            "validation": int(len(labeled.validation)) if labeled.validation is not None else 0,
            "test": int(len(labeled.test)),
        },
        "files": file_records,
    }
    if extra_manifest:
        manifest["config"] = extra_manifest
    manifest_path = out_dir / f"{spec.name}-manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
