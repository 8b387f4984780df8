"""Polyhedra as sets of oriented faces, and gluing two solids along a face.

A face is a cycle of vertex labels listed counter-clockwise when seen from
outside.  Two faces are the same face when one cycle is a rotation of the
other; a face glued to another must list the same vertices in the opposite
direction.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable


class FaceError(ValueError):
    pass


class InterfaceError(ValueError):
    """Interface face missing from its solid or not reversed-equal to its partner."""


def _rotate_min(cycle: tuple) -> tuple:
    i = min(range(len(cycle)), key=lambda k: cycle[k])
    return cycle[i:] + cycle[:i]


@dataclass(frozen=True, init=False)
class Face:
    vertices: tuple

    def __init__(self, vertices: Iterable):
        vs = tuple(vertices)
        if len(vs) < 3:
            raise FaceError(f"a face needs at least 3 vertices, got {len(vs)}")
        if len(set(vs)) != len(vs):
            raise FaceError(f"repeated vertex in face {vs}")
        object.__setattr__(self, "vertices", vs)

    @property
    def key(self) -> tuple:
        return _rotate_min(self.vertices)

    def __eq__(self, other) -> bool:
        return isinstance(other, Face) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def reversed(self) -> Face:
        return Face(self.vertices[::-1])

    def is_reverse_of(self, other: Face) -> bool:
        return self == other.reversed()

    def edges(self) -> list[tuple]:
        vs = self.vertices
        return [(vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))]

    def __str__(self) -> str:
        sep = "" if all(len(str(v)) == 1 for v in self.vertices) else " "
        return sep.join(str(v) for v in self.vertices)

    def __repr__(self) -> str:
        return f"Face({str(self)!r})"


class FaceSet(frozenset):
    """A polyhedron as a set of faces; rotation-equal faces collapse."""

    def __new__(cls, faces: Iterable = ()):
        return super().__new__(cls, (f if isinstance(f, Face) else Face(f) for f in faces))

    def directed_edges(self) -> Counter:
        return Counter(e for f in self for e in f.edges())

    def vertices(self) -> set:
        return {v for f in self for v in f.vertices}

    def to_text(self) -> str:
        return "\n".join(sorted(str(f) for f in self))

    @classmethod
    def from_text(cls, text: str) -> FaceSet:
        """One face per line; single-letter labels may be written run together
        ("ABCD"), longer labels separated by spaces.  ``#`` starts a comment."""
        faces = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            faces.append(Face(line.split() if " " in line else list(line)))
        return cls(faces)

    def __repr__(self) -> str:
        return f"FaceSet({sorted(str(f) for f in self)})"


def compose(ra: FaceSet, sa: Face, rb: FaceSet, sb: Face) -> FaceSet:
    """Glue ``rb`` onto ``ra`` along the shared face: both interface faces vanish."""
    if sa not in ra:
        raise InterfaceError(f"interface {sa} is not a face of the first solid")
    if sb not in rb:
        raise InterfaceError(f"interface {sb} is not a face of the second solid")
    if not sa.is_reverse_of(sb):
        raise InterfaceError(f"interfaces {sa} and {sb} are not oppositely oriented")
    return FaceSet((ra - {sa}) | (rb - {sb}))


def is_closed_surface(r: FaceSet) -> bool:
    """Every directed edge is used once and its opposite exactly once."""
    edges = r.directed_edges()
    return bool(edges) and all(n == 1 and edges.get((v, u)) == 1 for (u, v), n in edges.items())


# --------------------------------------------------------------------------
# boxes and random gluing chains, used by the tests

def box(labels: Iterable) -> FaceSet:
    """Hexahedron over 8 labels: bottom a,b,c,d (counter-clockwise from above),
    top e,f,g,h with e above a."""
    a, b, c, d, e, f, g, h = labels
    return FaceSet([
        (a, d, c, b),            # bottom, normal pointing down
        (e, f, g, h),            # top
        (a, b, f, e), (b, c, g, f), (c, d, h, g), (d, a, e, h),
    ])


def unit_cube() -> FaceSet:
    return box("ABCDEFGH")


def triangular_prism(labels: Iterable) -> FaceSet:
    """Prism over bottom triangle a,b,c and top d,e,f (d above a)."""
    a, b, c, d, e, f = labels
    return FaceSet([(a, c, b), (d, e, f), (a, b, e, d), (b, c, f, e), (c, a, d, f)])


class LabelSource:
    def __init__(self, prefix: str = "v"):
        self.prefix = prefix
        self.n = 0

    def take(self, k: int) -> list[str]:
        out = [f"{self.prefix}{self.n + i}" for i in range(k)]
        self.n += k
        return out


def glue_block_onto(face: Face, labels: LabelSource, rng: random.Random) -> tuple[FaceSet, Face]:
    """A fresh prism whose base is ``face`` reversed, so it can be glued on.

    The block's base uses the same vertex labels as ``face``; every other
    vertex is new.  Returns the block and its interface face.
    """
    base = face.reversed()
    k = len(base.vertices)
    top = labels.take(k)
    bv = base.vertices
    faces = [base, Face(list(reversed(top)))]
    for i in range(k):
        j = (i + 1) % k
        faces.append(Face([bv[j], bv[i], top[i], top[j]]))
    return FaceSet(faces), base


def random_solid(rng: random.Random, labels: LabelSource, blocks: int = 1) -> FaceSet:
    """A closed solid built by stacking ``blocks`` prisms with fresh labels."""
    k = rng.choice([3, 4, 5])
    base = labels.take(k)
    top = labels.take(k)
    faces = [Face(list(reversed(base))), Face(top)]
    for i in range(k):
        j = (i + 1) % k
        faces.append(Face([base[i], base[j], top[j], top[i]]))
    solid = FaceSet(faces)
    for _ in range(blocks - 1):
        face = rng.choice(sorted(solid, key=str))
        block, interface = glue_block_onto(face, labels, rng)
        solid = compose(solid, face, block, interface)
    return solid


def random_glue_pair(rng: random.Random, labels: LabelSource | None = None):
    """(A, S_A, B, S_B): a random closed solid and a fresh block glued on one of its faces."""
    labels = labels or LabelSource()
    a = random_solid(rng, labels, rng.randint(1, 3))
    sa = rng.choice(sorted(a, key=str))
    b, sb = glue_block_onto(sa, labels, rng)
    return a, sa, b, sb


def random_chain(rng: random.Random, labels: LabelSource | None = None):
    """(A, S_A, B, S_B, B2, S_B2, C, S_C) with B glued to A on one face and C
    glued to B on a different face (``S_B2`` is the face of B used for C)."""
    labels = labels or LabelSource()
    a, sa, b, sb = random_glue_pair(rng, labels)
    others = sorted((f for f in b if f != sb), key=str)
    sb2 = rng.choice(others)
    c, sc = glue_block_onto(sb2, labels, rng)
    return a, sa, b, sb, sb2, c, sc
