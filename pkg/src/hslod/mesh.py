"""Nested Cartesian meshes on the unit cube, element/node indexing and patches.

Indices are lexicographic with the x coordinate running fastest.  Arrays that
hold per-element or per-node data are stored with their axes in reversed
coordinate order (``(..., y, x)``) so that a C-order ravel reproduces the
lexicographic numbering.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent mesh or run configuration."""


@dataclass(frozen=True)
class Box:
    """Half-open axis-aligned index box ``[lo, hi)`` in coordinate order."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        """Numpy array shape (reversed coordinate order)."""
        return tuple(reversed(self.counts))

    def is_empty(self) -> bool:
        return any(b <= a for a, b in zip(self.lo, self.hi))

    def contains(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersect(self, other: "Box") -> "Box":
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        return Box(lo, tuple(max(l, h) for l, h in zip(lo, hi)))

    def refine(self, factor: int) -> "Box":
        return Box(tuple(a * factor for a in self.lo), tuple(b * factor for b in self.hi))

    def slices(self, origin: tuple[int, ...] | None = None) -> tuple[slice, ...]:
        """Numpy slices selecting this box inside an array anchored at ``origin``."""
        origin = origin or (0,) * self.dim
        return tuple(slice(a - o, b - o) for a, b, o in reversed(list(zip(self.lo, self.hi, origin))))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def _ravel(multi: np.ndarray, counts: tuple[int, ...]) -> np.ndarray:
    """Lexicographic (x fastest) flat index of multi-indices given as (..., d)."""
    multi = np.asarray(multi)
    idx = np.zeros(multi.shape[:-1], dtype=np.int64)
    stride = 1
    for k, n in enumerate(counts):
        idx += multi[..., k] * stride
        stride *= n
    return idx


def _unravel(idx, counts: tuple[int, ...]) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    out = []
    for n in counts:
        out.append(idx % n)
        idx = idx // n
    return np.stack(out, axis=-1)


def box_multi_indices(box: Box) -> np.ndarray:
    """All multi-indices of ``box`` in lexicographic order, shape (size, d)."""
    axes = [np.arange(a, b) for a, b in zip(box.lo, box.hi)]
    grids = np.meshgrid(*reversed(axes), indexing="ij")
    return np.stack([g.ravel() for g in reversed(grids)], axis=-1)


@dataclass(frozen=True)
class MeshHierarchy:
    """Meshes of size ``H_l = 2**-(coarse_exponent + l)``, l = 0..L, and ``h = 2**-fine_exponent``."""

    dim: int
    coarse_exponent: int
    num_levels: int
    fine_exponent: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.coarse_exponent < 0 or self.num_levels < 0:
            raise ConfigurationError("coarse exponent and number of levels must be non-negative")
        if self.fine_exponent < self.coarse_exponent + self.num_levels:
            raise ConfigurationError(
                f"fine exponent {self.fine_exponent} must be >= coarse exponent + L "
                f"= {self.coarse_exponent + self.num_levels}"
            )

    @property
    def L(self) -> int:
        return self.num_levels

    @property
    def levels(self) -> range:
        return range(self.num_levels + 1)

    def exponent(self, level: int) -> int:
        self._check_level(level)
        return self.coarse_exponent + level

    def n_per_dim(self, level: int) -> int:
        return 2 ** self.exponent(level)

    def mesh_size(self, level: int) -> float:
        return 2.0 ** -self.exponent(level)

    def num_elements(self, level: int) -> int:
        return self.n_per_dim(level) ** self.dim

    def num_basis(self, level: int) -> int:
        """Number of hierarchical basis functions carried by ``level``."""
        if level == 0:
            return self.num_elements(0)
        return (2**self.dim - 1) * self.num_elements(level - 1)

    def level_offset(self, level: int) -> int:
        """Global index of the first basis function of ``level``."""
        return 0 if level == 0 else self.num_elements(level - 1)

    @property
    def n_fine(self) -> int:
        return 2**self.fine_exponent

    @property
    def h(self) -> float:
        return 2.0 ** -self.fine_exponent

    @property
    def num_fine_elements(self) -> int:
        return self.n_fine**self.dim

    @property
    def num_fine_nodes(self) -> int:
        return (self.n_fine + 1) ** self.dim

    @property
    def diameter(self) -> float:
        return float(np.sqrt(self.dim))

    def ratio(self, level: int) -> int:
        """Fine elements per level-``level`` element along one axis."""
        return self.n_fine // self.n_per_dim(level)

    def _check_level(self, level: int):
        if not 0 <= level <= self.num_levels:
            raise IndexError(f"level {level} outside 0..{self.num_levels}")

    # -- elements ---------------------------------------------------------
    def element_multi_index(self, level: int, index) -> np.ndarray:
        return _unravel(index, (self.n_per_dim(level),) * self.dim)

    def element_index(self, level: int, multi) -> np.ndarray:
        return _ravel(np.asarray(multi), (self.n_per_dim(level),) * self.dim)

    def element_box(self, level: int, index: int) -> Box:
        mi = tuple(int(v) for v in self.element_multi_index(level, index))
        return Box(mi, tuple(v + 1 for v in mi))

    def element_center(self, level: int, index) -> np.ndarray:
        return (self.element_multi_index(level, index) + 0.5) * self.mesh_size(level)

    def domain_box(self, level: int) -> Box:
        n = self.n_per_dim(level)
        return Box((0,) * self.dim, (n,) * self.dim)

    def box_elements(self, level: int, box: Box) -> np.ndarray:
        """Global ids of level-``level`` elements inside ``box`` (lexicographic)."""
        return self.element_index(level, box_multi_indices(box))

    def refinement_children(self, level: int, index: int) -> np.ndarray:
        """Ids (at ``level + 1``) of the 2**d children of element ``index``."""
        if level >= self.num_levels:
            raise IndexError(f"level {level} has no refinement inside the hierarchy")
        mi = self.element_multi_index(level, index)
        box = Box(tuple(int(2 * v) for v in mi), tuple(int(2 * v + 2) for v in mi))
        return self.box_elements(level + 1, box)

    def parent(self, level: int, index) -> np.ndarray:
        if level == 0:
            raise IndexError("level 0 elements have no parent")
        return self.element_index(level - 1, self.element_multi_index(level, index) // 2)

    # -- fine nodes -------------------------------------------------------
    def node_multi_index(self, index) -> np.ndarray:
        return _unravel(index, (self.n_fine + 1,) * self.dim)

    def node_index(self, multi) -> np.ndarray:
        return _ravel(np.asarray(multi), (self.n_fine + 1,) * self.dim)

    def node_coordinates(self, index) -> np.ndarray:
        return self.node_multi_index(index) * self.h

    def box_node_ids(self, fine_box: Box) -> np.ndarray:
        """Global fine node ids of the closed fine-element box, lexicographic over the box nodes."""
        node_box = Box(fine_box.lo, tuple(b + 1 for b in fine_box.hi))
        return self.node_index(box_multi_indices(node_box))

    def box_node_masks(self, fine_box: Box) -> tuple[np.ndarray, np.ndarray]:
        """Boolean masks (over box nodes) of interior nodes and of nodes on the inner boundary."""
        node_box = Box(fine_box.lo, tuple(b + 1 for b in fine_box.hi))
        multi = box_multi_indices(node_box)
        lo = np.asarray(fine_box.lo)
        hi = np.asarray(fine_box.hi)
        inside = np.all((multi > lo) & (multi < hi), axis=1)
        on_domain_boundary = np.any((multi == 0) | (multi == self.n_fine), axis=1)
        sigma = ~inside & ~on_domain_boundary
        return inside, sigma

    def interior_node_mask(self) -> np.ndarray:
        inside, _ = self.box_node_masks(self.domain_box_fine())
        return inside

    def domain_box_fine(self) -> Box:
        return Box((0,) * self.dim, (self.n_fine,) * self.dim)


class PatchKind(str, Enum):
    HIERARCHICAL = "hierarchical"
    LOD = "lod"


@dataclass(frozen=True)
class Patch:
    """Order-``m`` patch around a center element; stored as an index box.

    ``mesh_level`` is the level whose elements compose the layers: ``level - 1``
    for hierarchical patches with ``level > 0`` and ``level`` otherwise.
    """

    hierarchy: MeshHierarchy = field(repr=False)
    level: int
    kind: PatchKind
    center: int
    order: int
    mesh_level: int
    box: Box

    @property
    def fine_box(self) -> Box:
        return self.box.refine(self.hierarchy.ratio(self.mesh_level))

    def level_box(self, level: int) -> Box:
        """The patch box in units of level-``level`` elements (``level >= mesh_level``)."""
        if level < self.mesh_level:
            raise ValueError("patch is not aligned with coarser levels")
        return self.box.refine(2 ** (level - self.mesh_level))

    def coarse_elements(self, level: int) -> np.ndarray:
        return self.hierarchy.box_elements(level, self.level_box(level))

    @property
    def elements(self) -> np.ndarray:
        """Fine element ids covered by the patch."""
        fb = self.fine_box
        return _ravel(box_multi_indices(fb), (self.hierarchy.n_fine,) * self.hierarchy.dim)

    @property
    def interior_nodes(self) -> np.ndarray:
        inside, _ = self.hierarchy.box_node_masks(self.fine_box)
        return self.hierarchy.box_node_ids(self.fine_box)[inside]

    @property
    def sigma_nodes(self) -> np.ndarray:
        _, sigma = self.hierarchy.box_node_masks(self.fine_box)
        return self.hierarchy.box_node_ids(self.fine_box)[sigma]

    def is_domain(self) -> bool:
        return self.box == self.hierarchy.domain_box(self.mesh_level)

    def to_json(self) -> str:
        inside, sigma = self.hierarchy.box_node_masks(self.fine_box)
        return json.dumps(
            {
                "level": self.level,
                "kind": self.kind.value,
                "center": self.center,
                "order": self.order,
                "mesh_level": self.mesh_level,
                "box": self.box.to_dict(),
                "fine_box": self.fine_box.to_dict(),
                "interior_nodes": int(inside.sum()),
                "sigma_nodes": int(sigma.sum()),
            },
            sort_keys=True,
        )


def build_hierarchy(dim: int, coarse_exponent: int, num_levels: int, fine_exponent: int) -> MeshHierarchy:
    return MeshHierarchy(dim, coarse_exponent, num_levels, fine_exponent)


def build_patch(hierarchy: MeshHierarchy, kind, level: int, center: int, order: int) -> Patch:
    """Grow ``order`` layers of vertex neighbours around ``center``, clipped to the domain."""
    kind = PatchKind(kind)
    if order < 0:
        raise ValueError("patch order must be non-negative")
    mesh_level = level - min(level, 1) if kind is PatchKind.HIERARCHICAL else level
    n = hierarchy.n_per_dim(mesh_level)
    if not 0 <= center < n**hierarchy.dim:
        raise IndexError(f"element {center} outside level-{mesh_level} mesh")
    mi = hierarchy.element_multi_index(mesh_level, center)
    lo = tuple(int(max(v - order, 0)) for v in mi)
    hi = tuple(int(min(v + order + 1, n)) for v in mi)
    return Patch(hierarchy, level, kind, int(center), order, mesh_level, Box(lo, hi))


def refinement_children(hierarchy: MeshHierarchy, level: int, element: int) -> np.ndarray:
    return hierarchy.refinement_children(level, element)


def local_vertex_offsets(dim: int) -> np.ndarray:
    """Corners of the reference cube in lexicographic order, shape (2**d, d)."""
    return np.array([tuple(reversed(c)) for c in itertools.product((0, 1), repeat=dim)], dtype=np.int64)
