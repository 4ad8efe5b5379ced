"""Fixed quadrilateral meshes (2D with uniform out-of-plane thickness).

Meshes are immutable once built. All lengths are in metres; mesh
densities for the graded generator are given in elements per millimetre.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, SingularElementError

MM = 1e-3

# Bilinear reference element, counter-clockwise nodes.
_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
GAUSS_POINTS = np.array([[a, b] for b in _GAUSS for a in _GAUSS])
GAUSS_WEIGHTS = np.ones(4)


def shape_functions(xi: np.ndarray) -> np.ndarray:
    """Bilinear shape functions at reference points ``xi`` (..., 2) -> (..., 4)."""
    xi = np.asarray(xi, dtype=float)
    return 0.25 * (1 + xi[..., None, 0] * _XI[:, 0]) * (1 + xi[..., None, 1] * _XI[:, 1])


def shape_derivatives(xi: np.ndarray) -> np.ndarray:
    """Reference derivatives dN/dxi at points (..., 2) -> (..., 2, 4)."""
    xi = np.asarray(xi, dtype=float)
    dxi = 0.25 * _XI[:, 0] * (1 + xi[..., None, 1] * _XI[:, 1])
    deta = 0.25 * _XI[:, 1] * (1 + xi[..., None, 0] * _XI[:, 0])
    return np.stack([dxi, deta], axis=-2)


def physical_gradients(coords: np.ndarray, xi: np.ndarray):
    """Shape-function gradients and Jacobian determinants.

    ``coords`` is (ne, 4, 2), ``xi`` is (nq, 2). Returns ``(B, detJ)`` with
    B of shape (ne, nq, 2, 4) and detJ of shape (ne, nq).
    """
    dN = shape_derivatives(xi)                       # (nq, 2, 4)
    J = np.einsum("qak,ekb->eqab", dN, coords)       # (ne, nq, 2, 2)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0.0):
        bad = np.unique(np.nonzero(det <= 0.0)[0])
        raise SingularElementError(f"non-positive Jacobian in element(s) {bad[:10].tolist()}")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    B = np.einsum("eqab,qbk->eqak", inv, dN)
    return B, det


def shoelace(poly: np.ndarray) -> np.ndarray:
    """Signed area of polygons given as (..., n, 2) vertex arrays."""
    x, y = poly[..., 0], poly[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


@dataclass(frozen=True)
class MaterialSet:
    """Conductivities, permittivities and the dissolution coefficient.

    Defaults are the standard parameter table (SI units).
    """

    k_metal: float = 4.625e6
    k_electrolyte: float = 16.0
    k_cathode: float = 1.0e12
    eps_metal: float = 1.0
    eps_electrolyte: float = 80.0
    eps_cathode: float = 1.0
    eps0: float = 8.854e-12
    nu_dis: float = 1.0e-11

    def __post_init__(self):
        for name in ("k_metal", "k_electrolyte", "k_cathode"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        for name in ("eps_metal", "eps_electrolyte", "eps_cathode"):
            if not getattr(self, name) >= 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if not self.nu_dis > 0:
            raise InvalidArgument("nu_dis must be positive")
        if not self.eps0 >= 0:
            raise InvalidArgument("eps0 must be non-negative")


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray                 # (nn, 2)
    elements: np.ndarray              # (ne, 4), counter-clockwise
    thickness: float
    boundary_tags: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        if not self.thickness > 0:
            raise InvalidArgument("thickness must be positive")
        if elements.ndim != 2 or elements.shape[1] != 4:
            raise InvalidArgument("elements must be an (ne, 4) array")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise InvalidArgument("element connectivity references unknown nodes")
        if np.any(self.areas <= 0):
            raise SingularElementError("mesh contains inverted or degenerate quads")
        for name, ids in self.boundary_tags.items():
            ids = np.asarray(ids, dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= len(nodes)):
                raise InvalidArgument(f"boundary tag {name!r} references unknown nodes")
            self.boundary_tags[name] = ids

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def coords(self) -> np.ndarray:
        """Element vertex coordinates, (ne, 4, 2)."""
        return self.nodes[self.elements]

    @cached_property
    def areas(self) -> np.ndarray:
        return shoelace(self.nodes[self.elements])

    @cached_property
    def volumes(self) -> np.ndarray:
        return self.areas * self.thickness

    @cached_property
    def centroids(self) -> np.ndarray:
        # bilinear map of the reference centre
        return self.coords.mean(axis=1)

    @cached_property
    def gradient_matrices(self) -> np.ndarray:
        """Per-element integral of grad N grad N^T over the volume, (ne, 4, 4)."""
        B, det = physical_gradients(self.coords, GAUSS_POINTS)
        w = det * GAUSS_WEIGHTS * self.thickness
        return np.einsum("eqak,eqal,eq->ekl", B, B, w)

    @cached_property
    def centroid_gradients(self) -> np.ndarray:
        """Shape-function gradients at the element centre, (ne, 2, 4)."""
        B, _ = physical_gradients(self.coords, np.zeros((1, 2)))
        return B[:, 0]

    @cached_property
    def face_adjacency(self) -> np.ndarray:
        """Neighbour across local edge k (nodes k -> k+1), -1 on the boundary."""
        ne = self.n_elements
        a = self.elements
        b = np.roll(self.elements, -1, axis=1)
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        key = lo * self.n_nodes + hi
        order = np.argsort(key, kind="stable")
        ks = key[order]
        adj = np.full(ne * 4, -1, dtype=np.int64)
        same = np.nonzero(ks[1:] == ks[:-1])[0]
        if np.any(same[1:] == same[:-1] + 1):
            raise InvalidArgument("edge shared by more than two elements")
        first, second = order[same], order[same + 1]
        adj[first] = second // 4
        adj[second] = first // 4
        return adj.reshape(ne, 4)

    @cached_property
    def node_elements(self):
        """CSR-style (indptr, element ids) map from node to incident elements."""
        flat = self.elements.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, order // 4

    @cached_property
    def min_edge_length(self) -> float:
        c = self.coords
        return float(np.min(np.linalg.norm(c - np.roll(c, -1, axis=1), axis=-1)))

    def element_volume(self, e: int) -> float:
        return element_volume(self, e)

    def permuted(self, perm: Sequence[int]) -> "Mesh":
        """Same mesh with node ``i`` renamed ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        nodes = np.empty_like(self.nodes)
        nodes[perm] = self.nodes
        tags = {k: np.sort(perm[v]) for k, v in self.boundary_tags.items()}
        return Mesh(nodes, perm[self.elements], self.thickness, tags)

    def write_listing(self, path) -> None:
        """Plain-text dump: ``id x y`` per node then ``id n0 n1 n2 n3`` per element."""
        with open(Path(path), "w", newline="\n") as fh:
            for i, (x, y) in enumerate(self.nodes):
                fh.write(f"{i} {x:.9e} {y:.9e}\n")
            for i, el in enumerate(self.elements):
                fh.write(f"{i} {el[0]} {el[1]} {el[2]} {el[3]}\n")


def element_volume(mesh: Mesh, e: int) -> float:
    """Quad area (shoelace over the four vertices) times thickness."""
    if not 0 <= e < mesh.n_elements:
        raise InvalidArgument(f"element id {e} out of range")
    return float(shoelace(mesh.nodes[mesh.elements[e]]) * mesh.thickness)


def from_coordinates(xs, ys, thickness: float, origin=(0.0, 0.0)) -> Mesh:
    """Tensor-product mesh on the grid lines ``xs`` x ``ys`` (relative to origin)."""
    xs = np.asarray(xs, dtype=float) + origin[0]
    ys = np.asarray(ys, dtype=float) + origin[1]
    if xs.ndim != 1 or ys.ndim != 1 or len(xs) < 2 or len(ys) < 2:
        raise InvalidArgument("need at least two grid lines per axis")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise InvalidArgument("grid lines must be strictly increasing")
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    ids = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    tags = {
        "left": ids[:, 0].copy(),
        "right": ids[:, -1].copy(),
        "bottom": ids[0, :].copy(),
        "top": ids[-1, :].copy(),
    }
    return Mesh(nodes, elements, thickness, tags)


def _check_dims(*vals):
    for v in vals:
        if not (np.isfinite(v) and v > 0):
            raise InvalidArgument("mesh dimensions must be positive")


def generate_structured(nx: int, ny: int, width: float, height: float,
                        thickness: float, origin=(0.0, 0.0)) -> Mesh:
    """Uniform ``nx`` x ``ny`` grid of axis-aligned quads."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgument("nx and ny must be integers >= 1")
    _check_dims(width, height, thickness)
    return from_coordinates(np.linspace(0.0, width, int(nx) + 1),
                            np.linspace(0.0, height, int(ny) + 1), thickness, origin)


def graded_sizes(length: float, h_start: float, h_end: float) -> np.ndarray:
    """Element sizes growing geometrically from ``h_start`` to ``h_end``.

    The ratio between consecutive sizes is the one for which an exact
    geometric series starting at ``h_start`` and ending at ``h_end`` fills
    ``length``; the element count is rounded and the sizes rescaled to fit.
    """
    _check_dims(length, h_start, h_end)
    if np.isclose(h_start, h_end, rtol=1e-12):
        n = max(1, int(round(length / h_start)))
        return np.full(n, length / n)
    if length <= max(h_start, h_end):
        return np.array([length])
    n = max(2, int(round(graded_count(length, h_start, h_end))))
    sizes = h_start * (h_end / h_start) ** (np.arange(n) / (n - 1))
    return sizes * (length / sizes.sum())


def graded_count(length: float, h_start: float, h_end: float) -> float:
    """Continuous element count of the geometric grading (before rounding)."""
    if np.isclose(h_start, h_end, rtol=1e-12):
        return length / h_start
    ratio = (length - h_start) / (length - h_end)
    return 1.0 + np.log(h_end / h_start) / np.log(ratio)


def _lines(sizes: np.ndarray, length: float) -> np.ndarray:
    lines = np.concatenate([[0.0], np.cumsum(sizes)])
    lines[-1] = length
    return lines


def generate_graded(n_coarse: float, n_fine: float, axis: str, width: float,
                    height: float, thickness: float, coarse_first: bool = True,
                    origin=(0.0, 0.0)) -> Mesh:
    """Mesh graded from ``n_coarse`` to ``n_fine`` elements per mm along ``axis``.

    With ``coarse_first`` the coarse elements sit at the low-coordinate side
    (bottom for ``axis='y'``, left for ``axis='x'``). The other axis is
    uniform at ``n_fine`` elements per mm.
    """
    if axis not in ("x", "y"):
        raise InvalidArgument("axis must be 'x' or 'y'")
    if not (n_coarse >= 1 and n_fine >= 1):
        raise InvalidArgument("densities must be >= 1 element per mm")
    _check_dims(width, height, thickness)
    h_c, h_f = MM / n_coarse, MM / n_fine
    graded_len, other_len = (width, height) if axis == "x" else (height, width)
    if np.isclose(h_c, h_f, rtol=1e-12):
        g = np.linspace(0.0, graded_len, max(1, int(round(graded_len / h_c))) + 1)
    else:
        sizes = graded_sizes(graded_len, h_c, h_f)
        if not coarse_first:
            sizes = sizes[::-1]
        g = _lines(sizes, graded_len)
    u = np.linspace(0.0, other_len, max(1, int(round(other_len / h_f))) + 1)
    xs, ys = (g, u) if axis == "x" else (u, g)
    return from_coordinates(xs, ys, thickness, origin)


def segment_lines(segments) -> np.ndarray:
    """Grid lines from ``(length, n, ratio)`` segments laid end to end.

    ``ratio`` is last/first element size within the segment (1 = uniform).
    """
    out = [0.0]
    for length, n, ratio in segments:
        n = int(n)
        if n < 1:
            raise InvalidArgument("segment needs at least one element")
        _check_dims(length, ratio)
        if n == 1 or np.isclose(ratio, 1.0):
            sizes = np.full(n, length / n)
        else:
            sizes = ratio ** (np.arange(n) / (n - 1))
            sizes *= length / sizes.sum()
        start = out[-1]
        lines = start + np.cumsum(sizes)
        lines[-1] = start + length
        out.extend(lines.tolist())
    return np.asarray(out)


def generate_tensor(x_segments, y_segments, thickness: float,
                    origin=(0.0, 0.0)) -> Mesh:
    """Tensor-product mesh with per-axis piecewise (graded) spacing."""
    return from_coordinates(segment_lines(x_segments), segment_lines(y_segments),
                            thickness, origin)
