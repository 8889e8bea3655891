"""Partitions, labelled partitions, and plane partitions with asymptotic legs."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence


class CutoffBelowMinimum(ValueError):
    code = "CutoffBelowMinimum"


@dataclass(frozen=True, order=True)
class Partition:
    parts: tuple[int, ...] = ()

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if any(p < 1 for p in parts) or any(a < b for a, b in zip(parts, parts[1:])):
            raise ValueError(f"not a partition: {parts}")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def of(cls, *parts: int) -> "Partition":
        return cls(tuple(parts))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        body = text.strip().strip("[]()").strip()
        if not body or body in ("∅", "empty"):
            return cls(())
        return cls(tuple(int(x) for x in body.split(",") if x.strip()))

    @property
    def size(self) -> int:
        return sum(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    @property
    def length(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __bool__(self):
        return bool(self.parts)

    def part(self, j: int) -> int:
        """lambda_{j+1} for 0-based j, zero past the end."""
        return self.parts[j] if j < len(self.parts) else 0

    def cells(self) -> list[tuple[int, int]]:
        """Boxes (i, j) with i < lambda_{j+1}."""
        return [(i, j) for j, p in enumerate(self.parts) for i in range(p)]

    def contains(self, other: "Partition") -> bool:
        return all(self.part(j) >= p for j, p in enumerate(other.parts))

    def multiplicities(self) -> Counter:
        return Counter(self.parts)

    def __str__(self):
        return "[" + ",".join(map(str, self.parts)) + "]"

    def __repr__(self):
        return f"Partition{self.parts}"


EMPTY = Partition(())


def centralizer_order(lam: Partition) -> int:
    z = 1
    for part, m in lam.multiplicities().items():
        z *= part**m * math.factorial(m)
    return z


def transpose(lam: Partition) -> Partition:
    if not lam.parts:
        return EMPTY
    return Partition(tuple(sum(1 for p in lam.parts if p > i) for i in range(lam.parts[0])))


@lru_cache(maxsize=None)
def partitions_of(n: int) -> tuple[Partition, ...]:
    """All partitions of n, reverse-lexicographic ((n) first, 1^n last)."""
    out: list[Partition] = []

    def rec(rem, cap, acc):
        if rem == 0:
            out.append(Partition(tuple(acc)))
            return
        for p in range(min(rem, cap), 0, -1):
            acc.append(p)
            rec(rem - p, p, acc)
            acc.pop()

    rec(n, n, [])
    return tuple(out)


def partitions_upto(n: int) -> list[Partition]:
    return [lam for k in range(n + 1) for lam in partitions_of(k)]


# ---------------------------------------------------------------------------
# cohomology-labelled partitions


@dataclass(frozen=True)
class LabelBasis:
    """A finite basis of labels with an involutive duality."""

    labels: tuple[str, ...]
    dual: tuple[tuple[str, str], ...]

    def dual_of(self, label: str) -> str:
        table = dict(self.dual)
        return table[label]


TRIVIAL_LABELS = LabelBasis(labels=("1",), dual=(("1", "1"),))


@dataclass(frozen=True)
class WeightedPartition:
    parts: tuple[tuple[int, str], ...]

    def __post_init__(self):
        parts = tuple(sorted(((int(s), str(l)) for s, l in self.parts), key=lambda x: (-x[0], x[1])))
        if any(s < 1 for s, _ in parts):
            raise ValueError("parts must be positive")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def trivial(cls, lam: Partition, label: str = "1") -> "WeightedPartition":
        return cls(tuple((p, label) for p in lam.parts))

    def underlying(self) -> Partition:
        return Partition(tuple(s for s, _ in self.parts))

    def dual(self, basis: LabelBasis) -> "WeightedPartition":
        return WeightedPartition(tuple((s, basis.dual_of(l)) for s, l in self.parts))

    def automorphisms(self) -> int:
        """Centralizer order of the labelled partition: prod k^m m! over (k, label) blocks."""
        z = 1
        for (size, _), m in Counter(self.parts).items():
            z *= size**m * math.factorial(m)
        return z

    def __str__(self):
        return "[" + ",".join(f"{s}:{l}" for s, l in self.parts) + "]"


def weighted_partitions_of(d: int, basis: LabelBasis = TRIVIAL_LABELS) -> list[WeightedPartition]:
    out = []
    for lam in partitions_of(d):
        blocks = list(lam.multiplicities().items())

        def rec(i, acc):
            if i == len(blocks):
                out.append(WeightedPartition(tuple(acc)))
                return
            size, m = blocks[i]
            # multisets of m labels
            def ms(k, start, cur):
                if k == 0:
                    rec(i + 1, acc + [(size, l) for l in cur])
                    return
                for li in range(start, len(basis.labels)):
                    ms(k - 1, li, cur + [basis.labels[li]])
            ms(m, 0, [])

        rec(0, [])
    return out


# ---------------------------------------------------------------------------
# legged plane partitions

Box = tuple[int, int, int]

# transverse coordinates of each leg axis: (i-direction, j-direction)
LEG_FRAME = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


def in_leg(p: Box, axis: int, lam: Partition) -> bool:
    a, b = LEG_FRAME[axis]
    return p[a] < lam.part(p[b])


def leg_extent(lam: Partition) -> int:
    return max(len(lam.parts), lam.part(0))


@dataclass(frozen=True)
class LeggedBoxConfig:
    """Legs along axes 1, 2, 3 plus a finite set of extra boxes outside the legs."""

    legs: tuple[Partition, Partition, Partition]
    boxes: frozenset = field(default_factory=frozenset)
    renormalized_volume: int = 0

    def in_legs(self, p: Box) -> bool:
        return any(in_leg(p, ax, lam) for ax, lam in enumerate(self.legs))

    def __contains__(self, p: Box) -> bool:
        return p in self.boxes or self.in_legs(p)

    def support(self) -> int:
        """Every box outside [0, support)^3 lies in exactly one leg."""
        ext = [0]
        for ax, lam in enumerate(self.legs):
            ext.append(leg_extent(lam))
        for b in self.boxes:
            ext.append(max(b) + 1)
        return max(ext)

    def points_in_cube(self, N: int) -> list[Box]:
        pts = []
        for x in range(N):
            for y in range(N):
                for z in range(N):
                    if (x, y, z) in self:
                        pts.append((x, y, z))
        return pts

    def volume_at(self, N: int) -> int:
        return len(self.points_in_cube(N)) - N * sum(l.size for l in self.legs)

    def is_valid(self) -> bool:
        N = self.support() + 1
        for p in self.points_in_cube(N):
            for i in range(3):
                if p[i] > 0:
                    q = list(p)
                    q[i] -= 1
                    if tuple(q) not in self:
                        return False
        return all(not self.in_legs(b) for b in self.boxes)

    def serialize(self) -> str:
        legs = ";".join(str(l) for l in self.legs)
        boxes = ",".join(f"({x},{y},{z})" for x, y, z in sorted(self.boxes))
        return f"legs={legs} boxes={boxes}"


def minimal_volume(legs: Sequence[Partition]) -> int:
    cfg = LeggedBoxConfig(tuple(legs))
    return cfg.volume_at(cfg.support() + 1)


def _key(p: Box):
    return (p[0] + p[1] + p[2], p)


def enumerate_legged(legs: Sequence[Partition], max_renorm_volume: int,
                     counts: dict[int, int] | None = None) -> Iterator[LeggedBoxConfig]:
    """All configurations with the given legs and renormalized volume <= cutoff.

    Reverse search: the parent of a configuration removes its largest
    removable extra box (ordered by (|p|, p)), so each configuration is reached
    once.  If `counts` is given it is filled with the number of configurations
    per renormalized volume.
    """
    legs = tuple(legs)
    base = LeggedBoxConfig(legs)
    v0 = minimal_volume(legs)
    if max_renorm_volume < v0:
        raise CutoffBelowMinimum(f"cutoff {max_renorm_volume} below minimal volume {v0} for legs {legs}")
    depth = max_renorm_volume - v0

    def filled(p):
        return p in extra or base.in_legs(p)

    def is_addable(p):
        if filled(p):
            return False
        for i in range(3):
            if p[i] > 0:
                q = (p[0] - (i == 0), p[1] - (i == 1), p[2] - (i == 2))
                if not filled(q):
                    return False
        return True

    extra: set[Box] = set()
    R = base.support() + 1
    addable = {(x, y, z) for x in range(R + 1) for y in range(R + 1) for z in range(R + 1)}
    addable = {p for p in addable if is_addable(p)}
    removable: set[Box] = set()

    if counts is not None:
        counts.clear()

    def rec(level):
        vol = v0 + level
        if counts is not None:
            counts[vol] = counts.get(vol, 0) + 1
        yield LeggedBoxConfig(legs, frozenset(extra), vol)
        if level == depth:
            return
        for p in sorted(addable, key=_key):
            # p must become the largest removable box of the child
            below = [(p[0] - (i == 0), p[1] - (i == 1), p[2] - (i == 2)) for i in range(3) if p[i] > 0]
            if any(_key(r) > _key(p) for r in removable if r not in below):
                continue
            # apply
            extra.add(p)
            addable.discard(p)
            new_add = []
            for i in range(3):
                nb = (p[0] + (i == 0), p[1] + (i == 1), p[2] + (i == 2))
                if nb not in addable and is_addable(nb):
                    addable.add(nb)
                    new_add.append(nb)
            lost = [r for r in below if r in removable]
            for r in lost:
                removable.discard(r)
            removable.add(p)
            yield from rec(level + 1)
            removable.discard(p)
            removable.update(lost)
            for nb in new_add:
                addable.discard(nb)
            addable.add(p)
            extra.discard(p)

    yield from rec(0)


def enumerate_legged_bfs(legs: Sequence[Partition], max_renorm_volume: int) -> dict[int, set[frozenset]]:
    """Independent level-by-level generator (dedupe by set); used as a test oracle."""
    legs = tuple(legs)
    base = LeggedBoxConfig(legs)
    v0 = minimal_volume(legs)
    levels = {v0: {frozenset()}}
    R = base.support() + max_renorm_volume - v0 + 2
    for vol in range(v0, max_renorm_volume):
        nxt = set()
        for s in levels[vol]:
            cfg = LeggedBoxConfig(legs, s)
            for x in range(R):
                for y in range(R):
                    for z in range(R):
                        p = (x, y, z)
                        if p in cfg:
                            continue
                        ok = all(
                            (x - (i == 0), y - (i == 1), z - (i == 2)) in cfg
                            for i in range(3) if p[i] > 0
                        )
                        if ok:
                            nxt.add(s | {p})
        levels[vol + 1] = nxt
    return levels
