"""Rating-file parsing, dense reindexing, and deterministic data splits.

Rating files carry one observation per line: user id, item id, rating
value, separated by tabs, "::", or commas (extra fields such as
timestamps are ignored).  Original ids are compacted to dense 0-based
indices in first-appearance order; the original ids are kept so a
dataset can be written back out losslessly.

All shuffling goes through ``numpy.random.default_rng`` (PCG64) with an
explicit seed, so splits are reproducible across runs and platforms.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

SEPARATORS = {"tsv": "\t", "colons": "::", "csv": ","}


class DataError(ValueError):
    """Malformed or inconsistent rating data."""


@dataclass(frozen=True)
class RatingTriple:
    """One known rating: dense user index, dense item index, value."""

    user: int
    item: int
    value: float


@dataclass
class EntrySet:
    """Parallel-array view of rating triples (fast path for training)."""

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.users.size)

    def triple(self, i: int) -> RatingTriple:
        return RatingTriple(int(self.users[i]), int(self.items[i]), float(self.values[i]))


@dataclass
class HdiDataset:
    """A sparse set of known ratings over an n_users x n_items matrix."""

    n_users: int
    n_items: int
    users: np.ndarray   # dense user index per entry, int64
    items: np.ndarray   # dense item index per entry, int64
    values: np.ndarray  # rating per entry, float64
    user_ids: list[str]  # dense index -> original id
    item_ids: list[str]

    @property
    def n_entries(self) -> int:
        return int(self.users.size)

    @property
    def density(self) -> float:
        return self.n_entries / (self.n_users * self.n_items)

    def all_entries(self) -> EntrySet:
        return EntrySet(self.users, self.items, self.values)

    def take(self, indices: np.ndarray) -> EntrySet:
        idx = np.asarray(indices, dtype=np.int64)
        return EntrySet(self.users[idx], self.items[idx], self.values[idx])

    def triples(self) -> Iterator[RatingTriple]:
        for u, i, v in zip(self.users, self.items, self.values):
            yield RatingTriple(int(u), int(i), float(v))


@dataclass
class DataSplit:
    """Disjoint train/validation/test entry-index lists covering a dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


def _as_text_lines(source: IO[bytes] | bytes | str) -> Iterator[tuple[int, str]]:
    if isinstance(source, bytes):
        stream: IO[bytes] = io.BytesIO(source)
    elif isinstance(source, str):
        stream = io.BytesIO(source.encode("utf-8"))
    else:
        stream = source
    for lineno, raw in enumerate(stream, start=1):
        yield lineno, raw.decode("utf-8").rstrip("\r\n")


def parse_ratings(source: IO[bytes] | bytes | str, fmt: str = "tsv") -> HdiDataset:
    """Parse a rating stream into a dataset with dense indices.

    ``fmt`` selects the field separator: "tsv", "colons" ("::") or
    "csv".  The first three fields of every non-empty line must be
    user id, item id, and a finite rating; anything after is ignored.
    Duplicate (user, item) pairs and malformed lines raise DataError
    with the offending line number.
    """
    if fmt not in SEPARATORS:
        raise DataError(f"unknown format {fmt!r}; expected one of {sorted(SEPARATORS)}")
    sep = SEPARATORS[fmt]

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users: list[int] = []
    items: list[int] = []
    values: list[float] = []
    seen: set[tuple[int, int]] = set()

    for lineno, line in _as_text_lines(source):
        if not line.strip():
            continue
        fields = line.split(sep)
        if len(fields) < 3:
            raise DataError(f"line {lineno}: expected at least 3 fields, got {len(fields)}")
        uid, iid, raw_value = fields[0].strip(), fields[1].strip(), fields[2].strip()
        if not uid or not iid:
            raise DataError(f"line {lineno}: empty user or item id")
        try:
            value = float(raw_value)
        except ValueError:
            raise DataError(f"line {lineno}: bad rating value {raw_value!r}") from None
        if not np.isfinite(value):
            raise DataError(f"line {lineno}: non-finite rating value {raw_value!r}")

        u = user_index.setdefault(uid, len(user_index))
        i = item_index.setdefault(iid, len(item_index))
        if (u, i) in seen:
            raise DataError(f"line {lineno}: duplicate rating for user {uid!r}, item {iid!r}")
        seen.add((u, i))
        users.append(u)
        items.append(i)
        values.append(value)

    if not users:
        raise DataError("empty input")

    return HdiDataset(
        n_users=len(user_index),
        n_items=len(item_index),
        users=np.asarray(users, dtype=np.int64),
        items=np.asarray(items, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        user_ids=list(user_index),
        item_ids=list(item_index),
    )


def serialize_ratings(ds: HdiDataset, stream: IO[bytes]) -> None:
    """Write a dataset in canonical tab format with original ids.

    Ratings are printed with shortest round-trip precision, so
    parse -> serialize -> parse is lossless.
    """
    for u, i, v in zip(ds.users.tolist(), ds.items.tolist(), ds.values.tolist()):
        line = f"{ds.user_ids[u]}\t{ds.item_ids[i]}\t{v!r}\n"
        stream.write(line.encode("utf-8"))


def _subset_sizes(n: int, weights: tuple[int, ...]) -> list[int]:
    # Largest-remainder apportionment; deterministic tie-break by position.
    total = sum(weights)
    exact = [n * w / total for w in weights]
    sizes = [int(x) for x in exact]
    remainder = n - sum(sizes)
    by_frac = sorted(range(len(weights)), key=lambda k: (sizes[k] - exact[k], k))
    for k in by_frac[:remainder]:
        sizes[k] += 1
    return sizes


def split_dataset(ds: HdiDataset, ratio: tuple[int, int, int] = (7, 1, 2), seed: int = 0) -> DataSplit:
    """Shuffle entry indices with the seeded generator and cut by ratio.

    The three weights must be positive integers; subset sizes follow the
    requested proportions within one entry (integer apportionment).  The
    same (dataset, ratio, seed) always produces bit-identical index lists.
    """
    if len(ratio) != 3 or any(w <= 0 or int(w) != w for w in ratio):
        raise DataError(f"split ratio must be three positive integers, got {ratio}")
    total = int(sum(ratio))
    if ds.n_entries < total:
        raise DataError(f"dataset has {ds.n_entries} entries, fewer than the {total} requested subsets")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n_entries)
    a, b, _ = _subset_sizes(ds.n_entries, tuple(int(w) for w in ratio))
    return DataSplit(
        train=perm[:a],
        validation=perm[a:a + b],
        test=perm[a + b:],
        seed=seed,
    )


def k_fold_partitions(
    ds: HdiDataset,
    k: int = 10,
    repeats: int = 1,
    seed: int = 0,
    ratio: tuple[int, int, int] = (7, 1, 2),
) -> list[DataSplit]:
    """Repeated rotation cross-validation over k equal-size folds.

    Per repeat, entries are reshuffled and divided into k folds (sizes
    differ by at most one when k does not divide the entry count); the
    ratio assigns fold roles, e.g. (7, 1, 2) with k=10 gives 7 train
    folds, 1 validation fold, 2 test folds, rotated through all k
    starting offsets.  Returns k * repeats splits.
    """
    if k < 3:
        raise DataError(f"need k >= 3 folds for train/validation/test roles, got {k}")
    if repeats < 1:
        raise DataError(f"repeats must be >= 1, got {repeats}")
    if k > ds.n_entries:
        raise DataError(f"k={k} folds over {ds.n_entries} entries would leave empty folds")
    if any(w <= 0 for w in ratio):
        raise DataError(f"fold role ratio must be positive, got {ratio}")
    if sum(ratio) != k:
        raise DataError(f"fold role ratio {ratio} must sum to k={k}")

    w_train, w_valid, _ = ratio
    rng = np.random.default_rng(seed)
    splits: list[DataSplit] = []
    for _ in range(repeats):
        perm = rng.permutation(ds.n_entries)
        bounds = _subset_sizes(ds.n_entries, tuple([1] * k))
        folds: list[np.ndarray] = []
        start = 0
        for size in bounds:
            folds.append(perm[start:start + size])
            start += size
        for offset in range(k):
            role_of = [(j - offset) % k for j in range(k)]
            train = np.concatenate([folds[j] for j in range(k) if role_of[j] < w_train])
            valid = np.concatenate([folds[j] for j in range(k) if w_train <= role_of[j] < w_train + w_valid])
            test = np.concatenate([folds[j] for j in range(k) if role_of[j] >= w_train + w_valid])
            splits.append(DataSplit(train=train, validation=valid, test=test, seed=seed))
    return splits
