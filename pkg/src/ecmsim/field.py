"""Quasi-static potential problem with a backward-Euler displacement term.

Per element the weak form reads

    int (k + f*eps0*eps_r/dt) grad(N) grad(N)^T dV  v
        = int (f*eps0*eps_r/dt) grad(N) grad(N)^T dV  v_prev

with ``f`` the transient factor (2 by default). Current density follows
the constitutive law j = k E + eps0 eps_r (E - E_prev)/dt with E = -grad v.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, SetupError, SolverError
from .mesh import GAUSS_POINTS, GAUSS_WEIGHTS, Mesh, physical_gradients

try:  # sparse LDL^T with symbolic reuse
    import qdldl
except ImportError:  # pragma: no cover - exercised only without qdldl
    qdldl = None

log = logging.getLogger(__name__)

EPS0 = 8.854e-12
RESIDUAL_TOL = 1e-10


@dataclass
class FieldState:
    v: np.ndarray
    v_prev: np.ndarray
    dt: float

    @classmethod
    def zeros(cls, n_nodes: int, dt: float) -> "FieldState":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes), dt)


@dataclass
class EffectiveParams:
    k_eff: np.ndarray
    eps_r_eff: np.ndarray

    @classmethod
    def uniform(cls, n_elements: int, k: float, eps_r: float = 1.0) -> "EffectiveParams":
        return cls(np.full(n_elements, float(k)), np.full(n_elements, float(eps_r)))

    def copy(self) -> "EffectiveParams":
        return EffectiveParams(self.k_eff.copy(), self.eps_r_eff.copy())


@dataclass
class ConstraintSet:
    """Dirichlet nodes and the equation numbering of the remaining nodes."""

    nodes: np.ndarray
    values: np.ndarray
    equation: Optional[np.ndarray] = None   # node -> equation index, -1 if fixed
    n_equations: int = 0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64).ravel()
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float),
                                      self.nodes.shape).copy()
        if len(np.unique(self.nodes)) != len(self.nodes):
            raise InvalidArgument("a node appears twice in the constraint set")
        order = np.argsort(self.nodes, kind="stable")
        self.nodes, self.values = self.nodes[order], self.values[order]

    @classmethod
    def from_pairs(cls, pairs) -> "ConstraintSet":
        pairs = list(pairs)
        if not pairs:
            return cls(np.empty(0, np.int64), np.empty(0))
        n, v = zip(*pairs)
        return cls(np.array(n), np.array(v, dtype=float))

    def merged(self, nodes, value) -> "ConstraintSet":
        """Union with ``nodes`` fixed at ``value``; overlapping nodes must agree."""
        nodes = np.asarray(nodes, dtype=np.int64).ravel()
        values = np.broadcast_to(np.asarray(value, dtype=float), nodes.shape)
        common, ia, ib = np.intersect1d(self.nodes, nodes, return_indices=True)
        if len(common) and not np.array_equal(self.values[ia], values[ib]):
            raise InvalidArgument(f"conflicting prescribed values at nodes {common[:5].tolist()}")
        keep = np.ones(len(nodes), bool)
        keep[ib] = False
        return ConstraintSet(np.concatenate([self.nodes, nodes[keep]]),
                             np.concatenate([self.values, values[keep]]))

    def __len__(self):
        return len(self.nodes)


def renumber(constraints: ConstraintSet, n_nodes: int) -> ConstraintSet:
    """Contiguous, order-preserving equation numbers for the unfixed nodes."""
    if len(constraints) and (constraints.nodes.min() < 0 or constraints.nodes.max() >= n_nodes):
        raise InvalidArgument("constraint references a node outside the mesh")
    free = np.ones(n_nodes, dtype=bool)
    free[constraints.nodes] = False
    eq = np.full(n_nodes, -1, dtype=np.int64)
    eq[free] = np.arange(int(free.sum()))
    return ConstraintSet(constraints.nodes, constraints.values, eq, int(free.sum()))


def _coefficients(params: EffectiveParams, eps0: float, dt: float, factor: float):
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    cap = factor * eps0 * np.asarray(params.eps_r_eff, dtype=float) / dt
    return np.asarray(params.k_eff, dtype=float) + cap, cap


def element_system(coords, k_eff: float, eps_r_eff: float, eps0: float, dt: float,
                   v_prev_elem, thickness: float = 1.0,
                   transient_factor: float = 2.0) -> Tuple[np.ndarray, np.ndarray]:
    """Element matrix and previous-field load vector of a single quad."""
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    coords = np.asarray(coords, dtype=float).reshape(1, 4, 2)
    B, det = physical_gradients(coords, GAUSS_POINTS)
    G = np.einsum("qak,qal,q->kl", B[0], B[0], det[0] * GAUSS_WEIGHTS) * thickness
    cap = transient_factor * eps0 * eps_r_eff / dt
    return (k_eff + cap) * G, cap * G @ np.asarray(v_prev_elem, dtype=float)


class _Pattern:
    """Index maps of the reduced system for one set of fixed nodes."""

    def __init__(self, rows, cols, equation, n_eq):
        both = (equation[rows] >= 0) & (equation[cols] >= 0)
        self.full = np.nonzero(both)[0]
        fr = equation[rows[self.full]]
        fc = equation[cols[self.full]]
        self.full_indices = fc.astype(np.int32)
        self.full_indptr = np.concatenate([[0], np.cumsum(np.bincount(fr, minlength=n_eq))]).astype(np.int32)
        low = fc <= fr
        self.ff = self.full[low]                  # lower triangle, row-major
        self.indices = self.full_indices[low]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(fr[low], minlength=n_eq))]).astype(np.int32)
        fd = np.nonzero((equation[rows] >= 0) & (equation[cols] < 0))[0]
        self.fd, self.fd_row, self.fd_col = fd, equation[rows[fd]], cols[fd]
        self.n_eq = n_eq
        self.factor = None
        self.K = sp.csr_matrix((np.zeros(len(self.full)), self.full_indices, self.full_indptr),
                               shape=(n_eq, n_eq))


class FieldSolver:
    """Assembles and solves the potential problem on a fixed mesh.

    The sparsity pattern of the full matrix is computed once. Index maps and
    the symbolic factorisation are cached per set of fixed nodes, so a step
    that keeps the same constraints only refactors numerically.
    """

    def __init__(self, mesh: Mesh, eps0: float = EPS0, transient_factor: float = 2.0,
                 backend: str = "auto", cache_size: int = 4, reuse_iterations: int = 10):
        if transient_factor not in (1, 2, 1.0, 2.0):
            raise InvalidArgument("transient_factor must be 1 or 2")
        self.mesh = mesh
        self.eps0 = float(eps0)
        self.factor = float(transient_factor)
        if backend == "auto":
            backend = "qdldl" if qdldl is not None else "splu"
        if backend not in ("qdldl", "splu"):
            raise InvalidArgument(f"unknown solver backend {backend!r}")
        self.backend = backend
        self.cache_size = cache_size
        self.reuse_iterations = int(reuse_iterations)
        self.stats = {"factorizations": 0, "reused": 0}
        self._G = mesh.gradient_matrices.reshape(mesh.n_elements, 16)
        el = mesh.elements
        n = mesh.n_nodes
        r = np.repeat(el, 4, axis=1).ravel()
        c = np.tile(el, (1, 4)).ravel()
        keys, self._inv = np.unique(r * n + c, return_inverse=True)
        self._inv = self._inv.ravel()
        self._nnz = len(keys)
        self.rows, self.cols = keys // n, keys % n
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.rows, minlength=n))])
        self._patterns: Dict[bytes, _Pattern] = {}

    # -- assembly ---------------------------------------------------------
    def assemble(self, params: EffectiveParams, dt: float, v_prev=None):
        """Global matrix data (CSR order) and load vector before constraints."""
        coef, cap = _coefficients(params, self.eps0, dt, self.factor)
        data = np.bincount(self._inv, weights=(self._G * coef[:, None]).ravel(),
                           minlength=self._nnz)
        n = self.mesh.n_nodes
        rhs = np.zeros(n)
        if v_prev is not None and np.any(cap):
            ve = np.asarray(v_prev, dtype=float)[self.mesh.elements]
            fe = np.einsum("ekl,el->ek", self._G.reshape(-1, 4, 4), ve) * cap[:, None]
            rhs = np.bincount(self.mesh.elements.ravel(), weights=fe.ravel(), minlength=n)
        return data, rhs

    def global_matrix(self, params: EffectiveParams, dt: float) -> sp.csr_matrix:
        data, _ = self.assemble(params, dt)
        n = self.mesh.n_nodes
        return sp.csr_matrix((data, self.cols, self.indptr), shape=(n, n))

    def _pattern(self, cons: ConstraintSet) -> _Pattern:
        key = cons.nodes.tobytes()
        pat = self._patterns.get(key)
        if pat is None:
            if len(self._patterns) >= self.cache_size:
                self._patterns.pop(next(iter(self._patterns)))
            pat = _Pattern(self.rows, self.cols, cons.equation, cons.n_equations)
            self._patterns[key] = pat
        return pat

    # -- solve --------------------------------------------------------------
    def solve(self, params: EffectiveParams, constraints: ConstraintSet,
              state: FieldState) -> FieldState:
        n = self.mesh.n_nodes
        if len(constraints) == 0:
            raise SetupError("no Dirichlet constraints: the system is singular")
        if constraints.equation is None or len(constraints.equation) != n:
            constraints = renumber(constraints, n)
        data, rhs = self.assemble(params, state.dt, state.v_prev)
        pat = self._pattern(constraints)
        v = np.empty(n)
        v[constraints.nodes] = constraints.values
        if pat.n_eq == 0:
            return FieldState(v, state.v_prev, state.dt)
        eq = constraints.equation
        free = eq >= 0
        b = rhs[free] - np.bincount(pat.fd_row, weights=data[pat.fd] * v[pat.fd_col],
                                    minlength=pat.n_eq)
        x = self._factor_solve(pat, data, b)
        v[free] = x
        return FieldState(v, state.v_prev, state.dt)

    def _factor_solve(self, pat: _Pattern, data: np.ndarray, b: np.ndarray) -> np.ndarray:
        m = pat.n_eq
        pat.K.data = data[pat.full]
        if self.backend == "qdldl" and pat.factor is not None and self.reuse_iterations > 0:
            x = self._reuse_solve(pat, b)
            if x is not None:
                self.stats["reused"] += 1
                return x
        self.stats["factorizations"] += 1
        if self.backend == "qdldl":
            # lower-triangle CSR arrays are the upper-triangle CSC of the same matrix
            A = sp.csc_matrix((data[pat.ff], pat.indices, pat.indptr), shape=(m, m))
            if pat.factor is None:
                pat.factor = qdldl.Solver(A, upper=True)
            else:
                pat.factor.update(A, upper=True)
            solve = pat.factor.solve
        else:
            solve = spla.splu(pat.K.tocsc(), permc_spec="MMD_AT_PLUS_A").solve
        x = solve(b)
        bnorm = np.linalg.norm(b)
        res = np.inf
        for _ in range(4):
            r = b - pat.K @ x
            res = np.linalg.norm(r) / bnorm if bnorm > 0 else np.linalg.norm(r)
            if res <= RESIDUAL_TOL:
                break
            x = x + solve(r)
        if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
            raise SolverError(f"linear solve stalled at relative residual {res:.3e}", res)
        return x

    def _reuse_solve(self, pat: _Pattern, b: np.ndarray) -> Optional[np.ndarray]:
        """CG preconditioned by the factor of an earlier matrix on this pattern.

        Between steps only the elements at the front and under the tool change,
        so the old factor is a near-exact inverse and CG needs a few iterations.
        Returns None when it does not converge, which triggers a refactorisation.
        """
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        m = pat.n_eq
        M = spla.LinearOperator((m, m), matvec=pat.factor.solve, dtype=float)
        with np.errstate(all="ignore"):
            x, info = spla.cg(pat.K, b, x0=pat.factor.solve(b), rtol=0.5 * RESIDUAL_TOL,
                              atol=0.0, maxiter=self.reuse_iterations, M=M)
        if info != 0 or not np.all(np.isfinite(x)):
            return None
        res = np.linalg.norm(b - pat.K @ x) / bnorm
        return x if res <= RESIDUAL_TOL else None

    # -- post-processing ------------------------------------------------------
    def current_densities(self, params: EffectiveParams, state: FieldState) -> np.ndarray:
        """Centroid current density of every element, (ne, 2)."""
        return current_densities(self.mesh, params, state, self.eps0)


def assemble_and_solve(mesh: Mesh, params: EffectiveParams, constraints: ConstraintSet,
                       state: FieldState, eps0: float = EPS0, transient_factor: float = 2.0,
                       solver: Optional[FieldSolver] = None) -> FieldState:
    if solver is None:
        solver = FieldSolver(mesh, eps0, transient_factor)
    return solver.solve(params, constraints, state)


def current_densities(mesh: Mesh, params: EffectiveParams, state: FieldState,
                      eps0: float = EPS0) -> np.ndarray:
    B = mesh.centroid_gradients
    E = -np.einsum("eak,ek->ea", B, state.v[mesh.elements])
    E_prev = -np.einsum("eak,ek->ea", B, state.v_prev[mesh.elements])
    k = np.asarray(params.k_eff)[:, None]
    eps = np.asarray(params.eps_r_eff)[:, None]
    return k * E + eps0 * eps * (E - E_prev) / state.dt


def current_density(mesh: Mesh, params: EffectiveParams, state: FieldState, e: int,
                    eps0: float = EPS0) -> np.ndarray:
    B = mesh.centroid_gradients[e]
    el = mesh.elements[e]
    E = -B @ state.v[el]
    E_prev = -B @ state.v_prev[el]
    return params.k_eff[e] * E + eps0 * params.eps_r_eff[e] * (E - E_prev) / state.dt
