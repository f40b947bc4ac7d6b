"""Set partitions of {1..n}: enumeration, refinement order, Mobius weights,
perfect pairings, and the block embedding.

Partitions are kept in a canonical form — blocks sorted by smallest element,
elements ascending inside each block — so equality and dict keys are cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

MAX_N = 12  # Bell(12) = 4_213_597; enumeration beyond this is a usage error


@dataclass(frozen=True)
class SetPartition:
    """A decomposition of {1..n} into disjoint nonempty blocks."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    @staticmethod
    def from_blocks(n, blocks) -> "SetPartition":
        """Build from any iterable of iterables, normalizing to canonical form."""
        norm = tuple(sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0]))
        p = SetPartition(n, norm)
        p.validate()
        return p

    def validate(self):
        seen = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block")
            if tuple(sorted(b)) != b:
                raise ValueError("block elements not ascending")
            seen.update(b)
        if len(seen) != sum(len(b) for b in self.blocks):
            raise ValueError("blocks overlap")
        if seen != set(range(1, self.n + 1)):
            raise ValueError(f"blocks do not cover 1..{self.n}")
        if list(self.blocks) != sorted(self.blocks, key=lambda b: b[0]):
            raise ValueError("blocks not sorted by smallest element")

    @property
    def nu(self) -> int:
        """Number of blocks."""
        return len(self.blocks)

    def block_of(self) -> dict[int, int]:
        """Map element -> index of its block."""
        out = {}
        for j, b in enumerate(self.blocks):
            for i in b:
                out[i] = j
        return out


def enumerate_partitions(n: int) -> list[SetPartition]:
    """All set partitions of {1..n}, canonical order, via restricted-growth
    strings (rgs[0]=0, rgs[i] <= 1 + max(rgs[:i]))."""
    if not 1 <= n <= MAX_N:
        raise ValueError(f"n must be in 1..{MAX_N}, got {n}")
    out = []
    rgs = [0] * n

    def rec(i, maxval):
        if i == n:
            nblocks = maxval + 1
            blocks = [[] for _ in range(nblocks)]
            for idx, b in enumerate(rgs):
                blocks[b].append(idx + 1)
            out.append(SetPartition(n, tuple(tuple(b) for b in blocks)))
            return
        for v in range(maxval + 2):
            rgs[i] = v
            rec(i + 1, max(maxval, v))

    rec(1, 0)
    return out


def mobius_from_bottom(F: SetPartition) -> int:
    """Mobius weight of F against the all-singletons partition:
    the product over blocks of (-1)^(size-1) * (size-1)!."""
    w = 1
    for b in F.blocks:
        k = len(b) - 1
        w *= (-1) ** k * factorial(k)
    return w


def refines(F: SetPartition, G: SetPartition) -> bool:
    """True iff every block of G is a union of blocks of F."""
    if F.n != G.n:
        raise ValueError(f"ground sets differ: {F.n} vs {G.n}")
    fidx = F.block_of()
    for g in G.blocks:
        used = {fidx[i] for i in g}
        covered = sorted(i for j in used for i in F.blocks[j])
        if covered != list(g):
            return False
    return True


def enumerate_pairings(S) -> list[tuple[tuple[int, int], ...]]:
    """All perfect pairings of the index set S.

    Even |S| gives (|S|-1)!! pairings (fix the smallest element, pair it with
    each remaining element, recurse).  Odd |S| gives an empty list.  Empty S
    gives the single empty pairing, so that sums over pairings contribute the
    empty product.
    """
    items = sorted(S)
    if len(items) % 2 == 1:
        return []
    out = []

    def rec(rest, acc):
        if not rest:
            out.append(tuple(acc))
            return
        a = rest[0]
        for k in range(1, len(rest)):
            b = rest[k]
            rec(rest[1:k] + rest[k + 1:], acc + [(a, b)])

    rec(items, [])
    return out


def embed(F: SetPartition, x):
    """Expand a per-block vector to a per-element vector: element i of block j
    receives x[j]."""
    x = tuple(x)
    if len(x) != F.nu:
        raise ValueError(f"need {F.nu} values, got {len(x)}")
    y = [None] * F.n
    for j, b in enumerate(F.blocks):
        for i in b:
            y[i - 1] = x[j]
    return tuple(y)
