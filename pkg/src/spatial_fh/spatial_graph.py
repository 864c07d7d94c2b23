"""Neighbourhood graphs, the ICAR precision structure, and constrained GMRF draws."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GraphError, InputError, NumericalError


@dataclass(frozen=True)
class AreaGraph:
    n: int
    edges: tuple  # sorted (i, j) pairs with i < j
    area_ids: tuple = ()

    @property
    def W(self) -> np.ndarray:
        w = np.zeros((self.n, self.n), dtype=np.int64)
        if self.edges:
            i, j = np.array(self.edges).T
            w[i, j] = 1
            w[j, i] = 1
        return w

    @property
    def w_plus(self) -> np.ndarray:
        return self.W.sum(axis=1)

    @property
    def D_w(self) -> np.ndarray:
        return np.diag(self.w_plus)

    @property
    def structure(self) -> np.ndarray:
        """``D_w - W`` (integer)."""
        return self.D_w - self.W

    def neighbors(self, i) -> list[int]:
        return sorted({b for a, b in self.edges if a == i} | {a for a, b in self.edges if b == i})


def build_graph(n: int, edge_list: Iterable, area_ids: Sequence[str] = ()) -> AreaGraph:
    """Validate an undirected edge list; the result must be connected with no isolated node."""
    if n < 2:
        raise GraphError(f"graph needs at least 2 nodes, got {n}")
    edges = set()
    for a, b in edge_list:
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a}, {b}) out of range for n={n}")
        if a == b:
            raise GraphError(f"self-loop at node {a}")
        edges.add((min(a, b), max(a, b)))
    edges = tuple(sorted(edges))
    label = (lambda i: area_ids[i]) if area_ids else str
    deg = np.zeros(n, dtype=int)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise GraphError("isolated areas (no neighbours): " + ", ".join(label(i) for i in isolated))
    i, j = (np.array(edges).T if edges else (np.zeros(0, int), np.zeros(0, int)))
    adj = coo_matrix((np.ones(len(edges)), (i, j)), shape=(n, n))
    ncomp, comp = connected_components(adj, directed=False)
    if ncomp > 1:
        groups = ["{" + ", ".join(label(k) for k in np.flatnonzero(comp == c)) + "}"
                  for c in range(ncomp)]
        raise GraphError(f"graph is disconnected ({ncomp} components): " + " ".join(groups))
    return AreaGraph(n, edges, tuple(area_ids))


def load_adjacency_csv(path, area_ids: Sequence[str]) -> AreaGraph:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    if [h.strip() for h in rows[0]] != ["area_a", "area_b"]:
        raise InputError(f"{path}: header must be area_a,area_b")
    index = {a: k for k, a in enumerate(area_ids)}
    edges = []
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise InputError(f"{path}:{line}: expected 2 fields")
        a, b = r[0].strip(), r[1].strip()
        for x in (a, b):
            if x not in index:
                raise InputError(f"{path}:{line}: unknown area id {x!r}")
        edges.append((index[a], index[b]))
    return build_graph(len(area_ids), edges, tuple(area_ids))


def save_adjacency_csv(graph: AreaGraph, path):
    from .data_model import atomic_write_rows
    ids = graph.area_ids or tuple(str(k) for k in range(graph.n))
    atomic_write_rows(path, ["area_a", "area_b"], [[ids[a], ids[b]] for a, b in graph.edges])


def shipped_data_path(name: str) -> Path:
    return Path(str(resources.files("spatial_fh") / "data" / name))


def eastern_us_graph(area_ids: Sequence[str] | None = None) -> AreaGraph:
    """21-area eastern-US adjacency (20 states + DC) shipped with the package."""
    if area_ids is None:
        with shipped_data_path("eastern_us/states.csv").open(newline="") as fh:
            area_ids = [r[0] for r in list(csv.reader(fh))[1:]]
    return load_adjacency_csv(shipped_data_path("eastern_us/adjacency.csv"), area_ids)


def icar_quadform(graph: AreaGraph, u) -> float:
    """``u'(D_w - W)u``, evaluated as the sum of squared differences over edges."""
    u = np.asarray(u, dtype=float)
    if u.shape != (graph.n,):
        raise InputError(f"u must have length {graph.n}")
    if not graph.edges:
        return 0.0
    i, j = _edge_index(graph)
    d = u[i] - u[j]
    return float(d @ d)


_EDGE_CACHE: dict = {}


def _edge_index(graph):
    key = (graph.n, graph.edges)
    if key not in _EDGE_CACHE:
        _EDGE_CACHE[key] = tuple(np.array(graph.edges).T)
    return _EDGE_CACHE[key]


# --- Gaussian factors --------------------------------------------------------

class CholeskyFactor:
    """Factor of a dense SPD precision matrix ``Q``."""

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        c, info = lapack.dpotrf(q, lower=1, clean=1)
        if info != 0:
            raise NumericalError(f"precision matrix is not positive definite (potrf info={info})")
        self.L = c

    def solve(self, v):
        """``Q^-1 v``."""
        x, info = lapack.dpotrs(self.L, v, lower=1)
        return x

    def draw(self, z):
        """Map iid N(0, 1) draws to N(0, Q^-1)."""
        x, info = lapack.dtrtrs(self.L, z, lower=1, trans=1)
        return x


class PencilFactor:
    """Simultaneous diagonalization of ``diag(w)`` and a PSD structure ``R``.

    For precisions of the form ``diag(w) + s R`` (s > 0) this avoids a new
    factorization per value of ``s``: with ``V' (diag(w) + R) V = I`` and
    ``V' diag(w) V = diag(g)``, ``(diag(w) + s R)^-1 = V diag(1/(g + s(1-g))) V'``.
    Zero weights are allowed as long as ``diag(w) + R`` is positive definite.
    """

    def __init__(self, weights, structure):
        w = np.asarray(weights, dtype=float)
        r = np.asarray(structure, dtype=float)
        m = np.diag(w) + r
        c, info = lapack.dpotrf(m, lower=1, clean=1)
        if info != 0:
            raise NumericalError("diag(w) + R is not positive definite; graph or weights invalid")
        linv = lapack.dtrtri(c, lower=1)[0]
        a = linv @ (w[:, None] * linv.T)
        g, u = np.linalg.eigh((a + a.T) / 2)
        self.g = np.clip(g, 0.0, 1.0)
        self.V = linv.T @ u
        self.Vt = self.V.T.copy()
        self.Vt_one = self.Vt.sum(axis=1)

    def at(self, s: float) -> "ScaledPencil":
        if not s > 0:
            raise NumericalError(f"scale of structure matrix must be positive, got {s}")
        return ScaledPencil(self, s)


class ScaledPencil:
    def __init__(self, pencil: PencilFactor, s: float):
        self.p = pencil
        self.d = 1.0 / (pencil.g + s * (1.0 - pencil.g))

    def solve(self, v):
        return self.p.V @ (self.d * (self.p.Vt @ v))

    def draw(self, z):
        sd = np.sqrt(self.d)
        return self.p.V @ (sd * z if z.ndim == 1 else sd[:, None] * z)

    def solve_ones(self):
        return self.p.V @ (self.d * self.p.Vt_one)


def sample_constrained_gmrf(precision, b, rng, *, mean=None, size=None):
    """Draw ``u ~ N(Q^-1 b, Q^-1)`` conditioned on ``sum(u) = 0``.

    ``precision`` is either an SPD matrix ``Q`` or a factor object exposing
    ``solve`` and ``draw``. The unconstrained draw ``x`` is corrected by
    conditioning by kriging, ``u = x - Q^-1 1 (1'Q^-1 1)^-1 1'x``. With
    ``size`` the result has shape ``(size, n)``.
    """
    f = precision if hasattr(precision, "draw") else CholeskyFactor(precision)
    if mean is None:
        mean = f.solve(np.asarray(b, dtype=float))
    n = mean.shape[0]
    z = rng.standard_normal(n if size is None else (n, size))
    x = f.draw(z)
    x = (x + mean) if size is None else (x + mean[:, None])
    omega_one = f.solve_ones() if hasattr(f, "solve_ones") else f.solve(np.ones(n))
    denom = omega_one.sum()
    if not denom > 0:
        raise NumericalError("1' Q^-1 1 is not positive")
    if size is None:
        return x - omega_one * (x.sum() / denom)
    return (x - np.outer(omega_one, x.sum(axis=0) / denom)).T
