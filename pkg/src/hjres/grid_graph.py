"""
Geometrical graphs on which the monotone schemes are posed.

Every graph is a Cartesian lattice (or a subset of one) with axis stencils.
Neighbour slots are ordered by axis, negative offset first::

    slot 2*i   -> x - h e_i
    slot 2*i+1 -> x + h e_i

so the finite difference stored in slot ``2*i`` is the backward difference
``(u_j - u(x - h e_i)) / h`` and slot ``2*i+1`` holds ``-(forward difference)``.
Hamiltonian evaluators and Jacobian assembly rely on this ordering.

Missing neighbours (only possible for boundary nodes) are marked with ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GridError",
    "GridGraph",
    "Stencil",
    "build_interval_grid",
    "build_box_grid",
    "build_annulus_grid",
    "collocation_stencil",
    "stencil_points",
    "graph_gradient",
    "graph_differences",
    "validate_graph",
    "write_field",
    "read_field",
]


class GridError(ValueError):
    """Raised for invalid grid parameters or indexing errors on a graph."""


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Discrete domain: nodes, interior/boundary split and neighbour lists.

    Attributes:
        coords: (n, d) node coordinates.
        interior: sorted indices of interior nodes.
        boundary: sorted indices of boundary nodes.
        neighbors: (n, K) neighbour indices in slot order, -1 if absent.
        edge_len: (n, K) edge lengths, NaN where the neighbour is absent.
        h: nominal spacing.
        lo: lattice origin.
        shape: lattice shape (points per axis).
        lattice_index: (n,) row-major index of each node in the full lattice.
    """

    coords: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    neighbors: np.ndarray
    edge_len: np.ndarray
    h: float
    lo: np.ndarray
    shape: tuple[int, ...]
    lattice_index: np.ndarray
    c1: float = field(init=False)
    c2: float = field(init=False)

    def __post_init__(self):
        for name in ("coords", "interior", "boundary", "neighbors", "edge_len",
                     "lo", "lattice_index"):
            getattr(self, name).setflags(write=False)
        lengths = self.edge_len[self.neighbors >= 0]
        object.__setattr__(self, "c1", float(lengths.min() / self.h))
        object.__setattr__(self, "c2", float(lengths.max() / self.h))

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def K(self) -> int:
        return self.neighbors.shape[1]

    @property
    def M(self) -> int:
        return self.interior.size

    @property
    def N(self) -> int:
        return self.boundary.size

    def is_interior(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.interior] = True
        return mask


@dataclass(frozen=True)
class Stencil:
    """Axis stencil attached to a single point (grid-free collocation)."""

    center: np.ndarray
    offsets: np.ndarray
    h: float

    @property
    def points(self) -> np.ndarray:
        return self.center[None, :] + self.offsets


def _axis_offsets(d: int, h: float) -> np.ndarray:
    offsets = np.zeros((2 * d, d))
    for i in range(d):
        offsets[2 * i, i] = -h
        offsets[2 * i + 1, i] = h
    return offsets


def _lattice(lo, hi, h):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or lo.ndim != 1:
        raise GridError("lo and hi must be vectors of equal length")
    if not h > 0:
        raise GridError(f"spacing must be positive, got {h}")
    span = (hi - lo) / h
    counts = np.rint(span).astype(int)
    if np.any(span < 2 - 1e-9):
        raise GridError("box must span at least two cells in every axis")
    if np.any(np.abs(span - counts) > 1e-6 * np.maximum(1.0, span)):
        raise GridError("box extents must be integer multiples of h")
    return lo, tuple(int(c) + 1 for c in counts)


def _lattice_neighbors(shape):
    """Neighbour table of the full lattice, slot ordering as documented."""
    n = int(np.prod(shape))
    d = len(shape)
    multi = np.array(np.unravel_index(np.arange(n), shape)).T
    nbrs = np.full((n, 2 * d), -1, dtype=np.int64)
    for i in range(d):
        for s, step in enumerate((-1, 1)):
            moved = multi.copy()
            moved[:, i] += step
            ok = (moved[:, i] >= 0) & (moved[:, i] < shape[i])
            nbrs[ok, 2 * i + s] = np.ravel_multi_index(moved[ok].T, shape)
    return multi, nbrs


def build_box_grid(lo, hi, h: float) -> GridGraph:
    """Cartesian lattice on ``[lo, hi]`` with spacing ``h``.

    Nodes with a full axis stencil are interior, all others are boundary.
    Nodes are indexed row-major over the lattice.
    """
    lo, shape = _lattice(lo, hi, h)
    multi, nbrs = _lattice_neighbors(shape)
    coords = lo[None, :] + multi * h
    full = np.all(nbrs >= 0, axis=1)
    edge_len = np.where(nbrs >= 0, h, np.nan)
    return GridGraph(
        coords=coords,
        interior=np.flatnonzero(full),
        boundary=np.flatnonzero(~full),
        neighbors=nbrs,
        edge_len=edge_len,
        h=float(h),
        lo=lo,
        shape=shape,
        lattice_index=np.arange(coords.shape[0]),
    )


def build_interval_grid(n: int) -> GridGraph:
    """Uniform grid ``{j/n : j = 0..n}`` on the unit interval."""
    if int(n) != n or n < 2:
        raise GridError(f"interval grid needs n >= 2, got {n}")
    n = int(n)
    g = build_box_grid([0.0], [1.0], 1.0 / n)
    # exact j/n coordinates rather than accumulated lo + j*h
    coords = (np.arange(n + 1) / n)[:, None]
    return GridGraph(
        coords=coords,
        interior=g.interior.copy(),
        boundary=g.boundary.copy(),
        neighbors=g.neighbors.copy(),
        edge_len=g.edge_len.copy(),
        h=g.h,
        lo=g.lo.copy(),
        shape=g.shape,
        lattice_index=g.lattice_index.copy(),
    )


def build_annulus_grid(r: float, R: float, h: float, box: float = 2.0, cut_cells: bool = False,
                       min_frac: float = 1e-2):
    """Annulus ``r < |x| < R`` embedded in the lattice on ``[-box, box]^2``.

    Interior nodes are the lattice nodes strictly inside the annulus; every
    other lattice node is a boundary node, tagged 0 if it lies in the closed
    inner disk and 1 otherwise. Lattice indices are kept (row-major).

    With ``cut_cells`` an edge from an interior node to a boundary node gets
    the length of the axis segment up to the circle it crosses (clipped below
    at ``min_frac * h``), so the Dirichlet value is imposed on the circle
    rather than on the lattice node.

    Returns:
        (graph, tags) where ``tags[i]`` is the Dirichlet value of
        ``graph.boundary[i]``.
    """
    if not 0 < r < R:
        raise GridError(f"need 0 < r < R, got r={r}, R={R}")
    if not 0 < h < (R - r) / 4:
        raise GridError(f"spacing h={h} too coarse to separate the circles")
    if R + h >= box:
        raise GridError("outer circle must fit inside the embedding box")
    g = build_box_grid([-box, -box], [box, box], h)
    rr = np.sum(g.coords**2, axis=1)
    # nodes on a circle (up to rounding) belong to the boundary
    tol = 1e-12
    inside = (rr > r * r * (1 + tol)) & (rr < R * R * (1 - tol))
    boundary = np.flatnonzero(~inside)
    tags = np.where(rr[boundary] <= r * r * (1 + tol), 0.0, 1.0)
    edge_len = g.edge_len.copy()
    if cut_cells:
        for j in np.flatnonzero(inside):
            for slot in range(4):
                k = g.neighbors[j, slot]
                if inside[k]:
                    continue
                axis, sgn = divmod(slot, 2)
                sgn = 2 * sgn - 1
                rho = r if rr[k] <= r * r * (1 + tol) else R
                xi, rest = g.coords[j, axis], g.coords[j, 1 - axis] ** 2
                root = np.sqrt(max(rho * rho - rest, 0.0))
                cands = [(c - xi) * sgn for c in (root, -root)]
                t = min(c for c in cands if c > 0) if any(c > 0 for c in cands) else h
                t = float(np.clip(t, min_frac * h, h))
                edge_len[j, slot] = t
                edge_len[k, slot ^ 1] = t
    ann = GridGraph(
        coords=g.coords.copy(),
        interior=np.flatnonzero(inside),
        boundary=boundary,
        neighbors=g.neighbors.copy(),
        edge_len=edge_len,
        h=g.h,
        lo=g.lo.copy(),
        shape=g.shape,
        lattice_index=g.lattice_index.copy(),
    )
    return ann, tags


def collocation_stencil(p, h: float, d: int | None = None) -> Stencil:
    """Axis stencil ``{p +- h e_i}`` around an arbitrary point."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = p.size if d is None else d
    if p.size != d:
        raise GridError(f"point has dimension {p.size}, expected {d}")
    if not h > 0:
        raise GridError("stencil spacing must be positive")
    return Stencil(center=p, offsets=_axis_offsets(d, h), h=float(h))


def stencil_points(X: np.ndarray, h: float) -> np.ndarray:
    """Batched axis stencils: (m, d) centres -> (m, 2d, d) neighbour points."""
    X = np.asarray(X, dtype=float)
    return X[:, None, :] + _axis_offsets(X.shape[1], h)[None, :, :]


def graph_differences(u: np.ndarray, g: GridGraph, nodes=None) -> np.ndarray:
    """Finite differences ``(u_j - u_k) / dx_kj`` for the given nodes.

    ``nodes`` defaults to all interior nodes; result has shape (m, K).
    """
    nodes = g.interior if nodes is None else np.asarray(nodes)
    nb = g.neighbors[nodes]
    if np.any(nb < 0):
        raise GridError("difference requested at a node without full stencil")
    return (u[nodes, None] - u[nb]) / g.edge_len[nodes]


def graph_gradient(u, j: int, g: GridGraph) -> np.ndarray:
    """``grad_G u_j``: one difference per neighbour, in slot order."""
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_nodes,):
        raise GridError(f"u has shape {u.shape}, graph has {g.n_nodes} nodes")
    if not (0 <= j < g.n_nodes) or not g.is_interior()[j]:
        raise GridError(f"node {j} is not interior")
    return graph_differences(u, g, np.array([j]))[0]


def validate_graph(g: GridGraph) -> None:
    """Check partition, symmetry, uniform interior degree and quasi-uniformity.

    Raises GridError on the first violated invariant.
    """
    n = g.n_nodes
    if np.intersect1d(g.interior, g.boundary).size:
        raise GridError("interior and boundary overlap")
    if np.union1d(g.interior, g.boundary).size != n:
        raise GridError("interior and boundary do not cover all nodes")
    nb = g.neighbors
    if np.any(nb[g.interior] < 0):
        raise GridError("interior node with missing neighbour")
    rows, slots = np.nonzero(nb >= 0)
    cols = nb[rows, slots]
    if np.any(cols == rows):
        raise GridError("node listed as its own neighbour")
    if np.any(~(g.edge_len[rows, slots] > 0)):
        raise GridError("non-positive edge length")
    # every edge (j -> k) must have a reverse (k -> j) with the same length
    fwd = dict(zip(zip(rows.tolist(), cols.tolist()), g.edge_len[rows, slots]))
    for (j, k), length in fwd.items():
        back = fwd.get((k, j))
        if back is None or not np.isclose(back, length, rtol=0, atol=1e-14):
            raise GridError(f"asymmetric edge {j}->{k}")
    lengths = g.edge_len[rows, slots]
    if not (g.c1 * g.h <= lengths.min() + 1e-14 and lengths.max() <= g.c2 * g.h + 1e-14):
        raise GridError("quasi-uniformity constants inconsistent")


def write_field(path, g: GridGraph, u) -> None:
    """Write ``index x1 .. xd tag value`` lines, tag in {I, B}."""
    u = np.asarray(u, dtype=float)
    interior = g.is_interior()
    with open(path, "w") as fh:
        for j in range(g.n_nodes):
            xs = " ".join(repr(float(c)) for c in g.coords[j])
            fh.write(f"{j} {xs} {'I' if interior[j] else 'B'} {float(u[j])!r}\n")


def read_field(path):
    """Inverse of write_field: returns (indices, coords, is_interior, values)."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    idx = np.array([int(r[0]) for r in rows])
    coords = np.array([[float(c) for c in r[1:-2]] for r in rows])
    interior = np.array([r[-2] == "I" for r in rows])
    values = np.array([float(r[-1]) for r in rows])
    return idx, coords, interior, values


# used by prolongation and the obstacle one-sided stencil
def lattice_multi_index(g: GridGraph) -> np.ndarray:
    return np.array(np.unravel_index(g.lattice_index, g.shape)).T


def second_neighbors(g: GridGraph, slot: int) -> np.ndarray:
    """Neighbour of the neighbour in the same slot direction (-1 if absent)."""
    first = g.neighbors[:, slot]
    out = np.full(g.n_nodes, -1, dtype=np.int64)
    ok = first >= 0
    out[ok] = g.neighbors[first[ok], slot]
    return out

