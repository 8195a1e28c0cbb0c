"""
Permutation algebra and candidate-set construction.

Conventions:
    apply(p, y)[k] = y[p.map[k]]
    apply(compose(p, q), y) = apply(q, apply(p, y))

so compose(p, q) reorders the output slots of p, which is how block-level
and intra-block moves are stacked on top of a current best order.
"""

import itertools
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from .models import (
    BlockPartition,
    BudgetExceededError,
    ConfigurationError,
    Permutation,
    PermutationError,
    PermutationSet,
    PermSetKind,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_FACTORIAL_CAP = 5040
DEFAULT_BLOCK_LEN = 5

# sample without replacement from a full enumeration below this universe size
_ENUMERATE_LIMIT = 40320


# ============================================================================
# Algebra
# ============================================================================

def identity(length: int) -> Permutation:
    return Permutation(tuple(range(length)))


def reverse(length: int) -> Permutation:
    return Permutation(tuple(reversed(range(length))))


def adjacent_swap(length: int, i: int) -> Permutation:
    """Forward order with slots i and i+1 exchanged."""
    if not (0 <= i < length - 1):
        raise PermutationError(f"adjacent swap index {i} out of range for L={length}")
    mapping = list(range(length))
    mapping[i], mapping[i + 1] = mapping[i + 1], mapping[i]
    return Permutation(tuple(mapping))


def apply(p: Permutation, y: Sequence[T]) -> List[T]:
    """
    Reorder y so that output slot k holds y[p.map[k]].

    Example:
        >>> apply(Permutation((2, 1, 0)), [7, -4, -6])
        [-6, -4, 7]
    """
    if len(y) != len(p):
        raise PermutationError(f"length mismatch: permutation {len(p)} vs sequence {len(y)}")
    return [y[src] for src in p.map]


def compose(p: Permutation, q: Permutation) -> Permutation:
    """Permutation equal to applying p first, then q."""
    if len(p) != len(q):
        raise PermutationError(f"length mismatch: {len(p)} vs {len(q)}")
    return Permutation(tuple(p.map[j] for j in q.map))


def inverse(p: Permutation) -> Permutation:
    inv = [0] * len(p)
    for slot, src in enumerate(p.map):
        inv[src] = slot
    return Permutation(tuple(inv))


def to_matrix(p: Permutation) -> np.ndarray:
    """0/1 matrix P with P[map[k], k] = 1, so y @ P == apply(p, y)."""
    length = len(p)
    matrix = np.zeros((length, length), dtype=np.int64)
    matrix[list(p.map), list(range(length))] = 1
    return matrix


def random_permutation(length: int, rng: np.random.Generator) -> Permutation:
    """Uniform permutation drawn with numpy's Fisher-Yates shuffle."""
    return Permutation(tuple(int(v) for v in rng.permutation(length)))


# ============================================================================
# Blocks
# ============================================================================

def split_blocks(length: int, k: int) -> BlockPartition:
    """
    Split 0..L-1 into k contiguous blocks; the first L mod k are one longer.

    Example:
        >>> split_blocks(13, 3).boundaries
        ((0, 5), (5, 9), (9, 13))
    """
    if not (1 <= k <= length):
        raise PermutationError(f"block count must satisfy 1 <= k <= {length}, got {k}")
    base, extra = divmod(length, k)
    boundaries = []
    start = 0
    for index in range(k):
        size = base + (1 if index < extra else 0)
        boundaries.append((start, start + size))
        start += size
    return BlockPartition(tuple(boundaries))


def fixed_size_blocks(length: int, block_len: int) -> BlockPartition:
    """Blocks of exactly block_len, plus one trailing block for L mod block_len."""
    if not (1 <= block_len <= length):
        raise PermutationError(f"block length must satisfy 1 <= l <= {length}, got {block_len}")
    boundaries = [(s, s + block_len) for s in range(0, length - block_len + 1, block_len)]
    if length % block_len:
        boundaries.append((boundaries[-1][1], length))
    return BlockPartition(tuple(boundaries))


def arrange_blocks(partition: BlockPartition, order: Sequence[int]) -> Permutation:
    """Token-level permutation that emits whole blocks in `order`."""
    if sorted(order) != list(range(partition.num_blocks)):
        raise PermutationError(f"block order {list(order)} is not a bijection")
    mapping: List[int] = []
    for block in order:
        start, end = partition.boundaries[block]
        mapping.extend(range(start, end))
    return Permutation(tuple(mapping))


def _check_factorial(n: int, cap: int) -> None:
    if n > 20 or math.factorial(n) > cap:
        raise BudgetExceededError(f"block factorial over budget: {n}! > {cap}")


def block_perms(
    partition: BlockPartition, cap: int = DEFAULT_FACTORIAL_CAP
) -> List[Permutation]:
    """All k! whole-block rearrangements, lexicographic in the block order."""
    _check_factorial(partition.num_blocks, cap)
    return [
        arrange_blocks(partition, order)
        for order in itertools.permutations(range(partition.num_blocks))
    ]


def intra_block_perms(
    partition: BlockPartition, block_index: int, cap: int = DEFAULT_FACTORIAL_CAP
) -> List[Permutation]:
    """All l! permutations of block `block_index` that fix every outside slot."""
    if not (0 <= block_index < partition.num_blocks):
        raise PermutationError(f"block index {block_index} out of range")
    start, end = partition.boundaries[block_index]
    _check_factorial(end - start, cap)

    base = list(range(partition.length))
    perms = []
    for inner in itertools.permutations(range(start, end)):
        mapping = base[:start] + list(inner) + base[end:]
        perms.append(Permutation(tuple(mapping)))
    return perms


def block_rotations(length: int, block_len: int) -> List[Permutation]:
    """
    The floor(L / l) cyclic rotations of the full length-l blocks.

    A trailing remainder block stays at the end. Rotation 0 is the identity.
    """
    partition = fixed_size_blocks(length, block_len)
    full = length // block_len
    tail = list(range(full, partition.num_blocks))
    return [
        arrange_blocks(partition, [(b + r) % full for b in range(full)] + tail)
        for r in range(full)
    ]


def unique(perms: Iterable[Permutation]) -> List[Permutation]:
    """Drop repeats, keeping first occurrences in order."""
    seen = set()
    out = []
    for p in perms:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


# ============================================================================
# Candidate Sets
# ============================================================================

def _sample_distinct(
    universe_size: int,
    count: int,
    draw,
    enumerate_all,
    rng: np.random.Generator,
    exclude: Sequence[Permutation] = (),
) -> List[Permutation]:
    """Draw `count` distinct permutations, never returning one in `exclude`."""
    available = universe_size - len(exclude)
    if count > available:
        raise BudgetExceededError(
            f"requested {count} permutations but only {available} are available"
        )
    excluded = set(exclude)

    if universe_size <= _ENUMERATE_LIMIT and count * 2 > available:
        pool = [p for p in unique(enumerate_all()) if p not in excluded]
        picks = rng.choice(len(pool), size=count, replace=False)
        return [pool[int(i)] for i in picks]

    chosen: List[Permutation] = []
    seen = set(excluded)
    while len(chosen) < count:
        candidate = draw()
        if candidate not in seen:
            seen.add(candidate)
            chosen.append(candidate)
    return chosen


def _random_set(length: int, size: int, rng: np.random.Generator,
                exclude: Sequence[Permutation] = ()) -> List[Permutation]:
    total = math.factorial(length) if length <= 20 else math.inf
    return _sample_distinct(
        total,
        size,
        draw=lambda: random_permutation(length, rng),
        enumerate_all=lambda: (Permutation(m) for m in itertools.permutations(range(length))),
        rng=rng,
        exclude=exclude,
    )


def b_set_universe(partition: BlockPartition) -> int:
    """
    Number of distinct block arrangements of the forward and reverse orders.

    Arrangements keep positions ascending inside each block and reversed
    ones keep them descending, so the two families meet only when every
    block holds a single position.
    """
    arrangements = math.factorial(partition.num_blocks)
    if all(size == 1 for size in partition.sizes):
        return arrangements
    return 2 * arrangements


def _swap_family(length: int) -> List[Permutation]:
    """
    Block swaps of the forward and reverse orders.

    Single-cut swaps come first (tail block moved in front of head block),
    then pairwise block swaps over finer column-wise splits.
    """
    bases = [identity(length), reverse(length)]
    members: List[Permutation] = []
    for base in bases:
        for cut in range(1, length):
            swap = arrange_blocks(BlockPartition(((0, cut), (cut, length))), [1, 0])
            members.append(compose(base, swap))
    for k in range(3, length + 1):
        partition = split_blocks(length, k)
        for base in bases:
            for i, j in itertools.combinations(range(k), 2):
                order = list(range(k))
                order[i], order[j] = order[j], order[i]
                members.append(compose(base, arrange_blocks(partition, order)))
    return unique(members)


def make_set(
    kind: PermSetKind,
    length: int,
    size: int,
    seed: Optional[int] = 0,
    block_len: int = DEFAULT_BLOCK_LEN,
) -> PermutationSet:
    """
    Build a candidate permutation set.

    Args:
        kind: R uniform random, G identity plus random, F forward/reverse block
            swaps, B forward/reverse with length-b blocks rearranged
        length: Target length L
        size: Number of members T
        seed: Seed for the random kinds
        block_len: b for kind B

    Raises:
        BudgetExceededError: If fewer than T distinct members exist
    """
    if size < 1:
        raise ConfigurationError("permutation set size must be >= 1")
    if length < 1:
        raise ConfigurationError("permutation length must be >= 1")
    rng = np.random.default_rng(seed if seed is not None else 0)

    if kind == PermSetKind.R:
        perms = _random_set(length, size, rng)
        result = PermutationSet(tuple(perms), kind, seed=seed)

    elif kind == PermSetKind.G:
        ident = identity(length)
        perms = [ident] + _random_set(length, size - 1, rng, exclude=[ident])
        result = PermutationSet(tuple(perms), kind, seed=seed)

    elif kind == PermSetKind.F:
        family = _swap_family(length)
        if size > len(family):
            raise BudgetExceededError(
                f"requested {size} permutations but only {len(family)} block swaps exist"
            )
        result = PermutationSet(tuple(family[:size]), kind)

    elif kind == PermSetKind.B:
        if block_len < 1:
            raise ConfigurationError("block_len must be >= 1")
        partition = fixed_size_blocks(length, min(block_len, length))
        n = partition.num_blocks
        bases = [identity(length), reverse(length)]

        def draw() -> Permutation:
            base = bases[int(rng.integers(0, 2))]
            order = [int(v) for v in rng.permutation(n)]
            return compose(base, arrange_blocks(partition, order))

        def enumerate_all():
            for base in bases:
                for order in itertools.permutations(range(n)):
                    yield compose(base, arrange_blocks(partition, order))

        universe = b_set_universe(partition)
        perms = _sample_distinct(universe, size, draw, enumerate_all, rng)
        result = PermutationSet(tuple(perms), kind, block_len=block_len, seed=seed)

    else:
        raise ConfigurationError(f"cannot build a set of kind {kind}")

    logger.info(f"Built {kind.value.upper()} permutation set: T={len(result)}, L={length}")
    return result


# ============================================================================
# Serialization
# ============================================================================

def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_permutation_set(perm_set: PermutationSet, path: str) -> Path:
    """Write a JSON array of arrays plus a `.meta.json` sidecar."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps([p.to_list() for p in perm_set]), encoding="utf-8")
    meta = {
        "kind": perm_set.kind.value,
        "seed": perm_set.seed,
        "block_len": perm_set.block_len,
        "size": len(perm_set),
    }
    _meta_path(out).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return out


def load_permutation_set(path: str) -> PermutationSet:
    """
    Read a permutation file; a missing sidecar means an explicit set.

    Raises:
        PermutationError: If an entry is not a bijection or sizes disagree
    """
    src = Path(path)
    try:
        raw = json.loads(src.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise PermutationError(f"cannot read permutation file {src}: {e}")
    if not isinstance(raw, list) or not raw:
        raise PermutationError(f"{src} must hold a non-empty JSON array of arrays")
    perms = tuple(Permutation(tuple(entry)) for entry in raw)

    meta_file = _meta_path(src)
    if not meta_file.exists():
        return PermutationSet(perms, PermSetKind.EXPLICIT)

    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    if meta.get("size", len(perms)) != len(perms):
        raise PermutationError(f"{src}: sidecar size {meta['size']} != {len(perms)} entries")
    return PermutationSet(
        perms,
        PermSetKind(meta.get("kind", PermSetKind.EXPLICIT.value)),
        block_len=meta.get("block_len"),
        seed=meta.get("seed"),
    )
