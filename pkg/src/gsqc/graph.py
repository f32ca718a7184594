"""Graphs, the symmetric normalized Laplacian and the graph Fourier transform."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "SpectralGraph",
    "GraphError",
    "normalized_laplacian",
    "eigendecompose",
    "gft",
    "igft",
    "random_geometric_graph",
    "load_graph",
    "save_graph",
]

_SYM_TOL = 1e-12
_RECON_TOL = 1e-9
_ORTHO_TOL = 1e-10


class GraphError(ValueError):
    """Invalid graph topology (asymmetric, negative, isolated nodes, ...)."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph given by its adjacency matrix.

    Parameters
    ----------
    weights : (n, n) array
        Symmetric nonnegative adjacency with zero diagonal.
    coords : (n, 2) array, optional
        Node positions, used by the geometric generator and for export.
    """

    weights: np.ndarray
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.iscomplexobj(self.weights):
            raise GraphError("adjacency must be real")
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise GraphError("graph needs at least one node")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency has non-finite entries")
        if np.max(np.abs(w - w.T)) > _SYM_TOL:
            raise GraphError("adjacency is not symmetric")
        if np.any(w < 0):
            raise GraphError("adjacency has negative weights")
        if np.any(np.diag(w) != 0):
            raise GraphError("adjacency diagonal must be exactly zero")
        deg = w.sum(axis=1)
        if np.any(deg <= 0):
            bad = np.flatnonzero(deg <= 0)
            raise GraphError(f"isolated nodes (zero degree): {bad.tolist()}")
        w = 0.5 * (w + w.T)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.coords is not None:
            c = np.array(self.coords, dtype=float)
            if c.ndim != 2 or c.shape[0] != w.shape[0]:
                raise GraphError("coords must have one row per node")
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def is_connected(self) -> bool:
        ncomp, _ = connected_components(self.weights > 0, directed=False)
        return ncomp == 1


@dataclass(frozen=True, eq=False)
class SpectralGraph:
    """A graph together with the eigendecomposition of its normalized Laplacian.

    ``eigvecs[:, k]`` is the k-th GFT basis vector, ``eigvals`` ascend.
    """

    graph: Graph
    eigvecs: np.ndarray
    eigvals: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n

    def laplacian(self) -> np.ndarray:
        return normalized_laplacian(self.graph)

    def basis(self, k: int) -> np.ndarray:
        """First ``k`` eigenvectors (the bandlimited subspace)."""
        return self.eigvecs[:, :k]


def normalized_laplacian(g: Graph) -> np.ndarray:
    """Return ``I - D^{-1/2} W D^{-1/2}``."""
    deg = g.degrees
    if np.any(deg <= 0):
        raise GraphError("degenerate degree: isolated node")
    dis = 1.0 / np.sqrt(deg)
    lap = -(dis[:, None] * g.weights * dis[None, :])
    lap[np.diag_indices_from(lap)] = 1.0
    return 0.5 * (lap + lap.T)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive; argmax takes the lowest index on ties
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigendecompose(g: Graph) -> SpectralGraph:
    """Eigendecomposition ``L = U diag(lam) U^T`` with a deterministic sign rule.

    Eigenvalues are ascending. Each eigenvector is flipped so that its entry of
    largest magnitude is positive. Repeated eigenvalues keep whatever orthonormal
    basis the solver returns for the shared eigenspace.
    """
    lap = normalized_laplacian(g)
    try:
        lam, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver did not converge: {exc}") from exc
    vecs = _fix_signs(vecs)
    resid = np.linalg.norm(vecs @ np.diag(lam) @ vecs.T - lap)
    ortho = np.max(np.abs(vecs.T @ vecs - np.eye(g.n)))
    if resid > _RECON_TOL * max(1.0, np.sqrt(g.n)) or ortho > _ORTHO_TOL * max(1.0, g.n / 10):
        raise np.linalg.LinAlgError(
            f"eigendecomposition inaccurate: reconstruction residual {resid:.3e}, "
            f"orthogonality residual {ortho:.3e}"
        )
    # round-off can push the null eigenvalue slightly negative
    lam = np.clip(lam, 0.0, 2.0)
    vecs.setflags(write=False)
    lam.setflags(write=False)
    return SpectralGraph(graph=g, eigvecs=vecs, eigvals=lam)


def _check_dim(sg: SpectralGraph, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != sg.n:
        raise ValueError(f"signal length {v.shape[0]} does not match graph size {sg.n}")
    return v


def gft(sg: SpectralGraph, x) -> np.ndarray:
    """Graph Fourier transform ``U^T x`` (also accepts an (n, T) matrix of signals)."""
    return sg.eigvecs.T @ _check_dim(sg, x)


def igft(sg: SpectralGraph, xhat) -> np.ndarray:
    """Inverse graph Fourier transform ``U xhat``."""
    return sg.eigvecs @ _check_dim(sg, xhat)


def random_geometric_graph(
    n: int,
    radius: float,
    seed: int,
    *,
    kernel: str = "unit",
    sigma: Optional[float] = None,
    max_attempts: int = 100,
) -> Graph:
    """Random geometric (sensor network) graph on the unit square.

    Nodes are drawn uniformly; nodes closer than ``radius`` are joined. With
    ``kernel="unit"`` every edge has weight 1, with ``kernel="gaussian"`` the
    weight is ``exp(-d^2 / (2 sigma^2))`` (``sigma`` defaults to ``radius / 2``).
    Disconnected draws are discarded and redrawn from a fresh sub-seed.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if kernel not in ("unit", "gaussian"):
        raise ValueError(f"unknown kernel {kernel!r}")
    sigma = radius / 2 if sigma is None else sigma
    children = np.random.SeedSequence(seed).spawn(max_attempts)
    for child in children:
        rng = np.random.default_rng(child)
        pts = rng.uniform(0.0, 1.0, size=(n, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        adj = dist <= radius
        np.fill_diagonal(adj, False)
        if kernel == "unit":
            w = adj.astype(float)
        else:
            w = np.where(adj, np.exp(-(dist**2) / (2 * sigma**2)), 0.0)
        if np.any(w.sum(axis=1) == 0):
            continue
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp == 1:
            return Graph(w, coords=pts)
    raise GraphError(
        f"no connected geometric graph with n={n}, radius={radius} in {max_attempts} attempts"
    )


# --------------------------------------------------------------------------- io


def save_graph(g: Graph, manifest: str | Path) -> Path:
    """Write ``<stem>_edges.csv`` (+ ``<stem>_coords.csv``) and a JSON manifest."""
    manifest = Path(manifest)
    stem = manifest.with_suffix("")
    edges_path = stem.parent / f"{stem.name}_edges.csv"
    iu, ju = np.nonzero(np.triu(g.weights, k=1))
    with open(edges_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["i", "j", "weight"])
        for i, j in zip(iu, ju):
            wr.writerow([int(i), int(j), repr(float(g.weights[i, j]))])
    doc = {"n": g.n, "edges": edges_path.name}
    if g.coords is not None:
        coords_path = stem.parent / f"{stem.name}_coords.csv"
        with open(coords_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["i", "x", "y"])
            for i, (x, y) in enumerate(g.coords[:, :2]):
                wr.writerow([i, repr(float(x)), repr(float(y))])
        doc["coords"] = coords_path.name
    manifest.write_text(json.dumps(doc, indent=2))
    return manifest


def _read_rows(path: Path, ncols: int):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    for lineno, r in enumerate(rows, start=1):
        if len(r) < ncols:
            raise ValueError(f"{path}: row {lineno} has {len(r)} columns, expected {ncols}")
    return rows


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_graph(manifest: str | Path) -> Graph:
    """Load a graph from a JSON manifest ``{"n", "edges", "coords"?}``.

    The edge list is a CSV of ``i,j,weight`` (0-based, each undirected edge once).
    A bare edge-list CSV path is also accepted; ``n`` is then inferred.
    """
    manifest = Path(manifest)
    if manifest.suffix.lower() == ".csv":
        doc = {"edges": manifest.name}
        base = manifest.parent
    else:
        doc = json.loads(manifest.read_text())
        base = manifest.parent
    try:
        rows = _read_rows(base / doc["edges"], 3)
        edges = [(int(r[0]), int(r[1]), float(r[2])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed edge list: {exc}") from exc
    n = doc.get("n")
    if n is None:
        n = 1 + max(max(i, j) for i, j, _ in edges)
    w = np.zeros((n, n))
    for i, j, wt in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"bad edge ({i}, {j})")
        w[i, j] = w[j, i] = wt
    coords = None
    if doc.get("coords"):
        crow = _read_rows(base / doc["coords"], 3)
        coords = np.zeros((n, 2))
        for r in crow:
            coords[int(r[0])] = float(r[1]), float(r[2])
    return Graph(w, coords=coords)
