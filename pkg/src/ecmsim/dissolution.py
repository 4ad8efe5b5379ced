"""Dissolution level, activation front and cut-off volume bookkeeping.

``d`` is the dissolved fraction of an element (0 metal, 1 electrolyte).
An active element recedes at the Faraday velocity nu*|j|, which for an
element of thickness h_j along j means dd = nu*|j|*dt/h_j.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .field import EffectiveParams
from .mesh import MaterialSet, Mesh

RULES = ("parallel", "series")


def _check_mix(w, a, b):
    w = np.asarray(w, dtype=float)
    if np.any((w < 0) | (w > 1)) or np.any(np.isnan(w)):
        raise InvalidArgument("mixture fraction must lie in [0, 1]")
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise InvalidArgument("mixture components must be positive")
    return w


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def mix_parallel(w, a, b):
    """Arithmetic mixture (1-w)*a + w*b."""
    w = _check_mix(w, a, b)
    return _scalar(np.where(w == 1, b, (1 - w) * a + w * b))


def mix_series(w, a, b):
    """Harmonic mixture [(1-w)/a + w/b]^-1 with the pure limits returned exactly."""
    w = _check_mix(w, a, b)
    with np.errstate(divide="ignore"):
        mixed = 1.0 / ((1 - w) / a + w / b)
    return _scalar(np.where(w == 0, a, np.where(w == 1, b, mixed)))


def mix(rule: str, w, a, b):
    if rule == "parallel":
        return mix_parallel(w, a, b)
    if rule == "series":
        return mix_series(w, a, b)
    raise InvalidArgument(f"unknown mixture rule {rule!r}")


@dataclass
class DissolutionState:
    d: np.ndarray
    active: np.ndarray
    v_co_ledger: np.ndarray
    initially_metal: np.ndarray
    d_initial: np.ndarray
    complete: np.ndarray            # metal elements whose d=1 has been processed
    lost_volume: float = 0.0
    faraday_volume: float = 0.0     # running sum of raw Faraday increments (m^3)

    def copy(self) -> "DissolutionState":
        return replace(self, d=self.d.copy(), active=self.active.copy(),
                       v_co_ledger=self.v_co_ledger.copy(),
                       complete=self.complete.copy())


def initial_state(mesh: Mesh, metal_fraction) -> DissolutionState:
    """State from the metal volume fraction of every element.

    Elements with any metal are anode elements with d = 1 - fraction; the
    rest are electrolyte (d = 1). Metal elements start active when already
    partly dissolved or when they share a face with electrolyte.
    """
    frac = np.clip(np.asarray(metal_fraction, dtype=float), 0.0, 1.0)
    if frac.shape != (mesh.n_elements,):
        raise InvalidArgument("metal_fraction needs one value per element")
    metal = frac > 0
    d = np.where(metal, 1.0 - frac, 1.0)
    adj = mesh.face_adjacency
    nb_nonmetal = np.any((adj >= 0) & ~metal[np.maximum(adj, 0)], axis=1)
    active = metal & ((d > 0) | nb_nonmetal)
    return DissolutionState(d=d, active=active, v_co_ledger=np.zeros(mesh.n_elements),
                            initially_metal=metal, d_initial=d.copy(),
                            complete=metal & (d >= 1))


def projected_thickness(mesh: Mesh, j: np.ndarray, elements=None) -> np.ndarray:
    """Element extent along j, h_j = V_el / A_proj(j), for every element.

    A_proj is the element's cross-section perpendicular to j, taken as the
    vertex extent perpendicular to j times the thickness. ``j`` holds one row
    per entry of ``elements`` (all elements by default).
    """
    ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    norm = np.linalg.norm(j, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    t = np.column_stack([-j[:, 1], j[:, 0]]) / safe[:, None]
    s = np.einsum("eka,ea->ek", mesh.coords[ids], t)
    width = s.max(axis=1) - s.min(axis=1)
    return np.where(norm > 0, mesh.areas[ids] / np.maximum(width, 1e-300), np.inf)


def update_dissolution(state: DissolutionState, mesh: Mesh, materials: MaterialSet,
                       j_field: np.ndarray, dt: float):
    """Faraday update of all active, not fully dissolved elements.

    Returns the new state and the per-element overshoot volume clipped at d=1.
    """
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    j_field = np.asarray(j_field, dtype=float)
    st = state.copy()
    vol = mesh.volumes
    live = st.active & st.initially_metal & (st.d < 1)
    jn = np.linalg.norm(j_field, axis=1)
    dd = np.zeros(mesh.n_elements)
    h = projected_thickness(mesh, j_field[live], np.nonzero(live)[0])
    dd[live] = materials.nu_dis * jn[live] * dt / h
    st.faraday_volume += float(np.sum(dd * vol))
    dd[live] += st.v_co_ledger[live] / vol[live]
    st.v_co_ledger[live] = 0.0
    raw = st.d + dd
    overshoot = np.where(live, np.maximum(raw - 1.0, 0.0) * vol, 0.0)
    st.d = np.where(live, np.minimum(raw, 1.0), st.d)
    return st, overshoot


def propagate_activation(state: DissolutionState, mesh: Mesh, overshoot,
                         settle: bool = True) -> DissolutionState:
    """Activate neighbours of elements that reached d=1 and hand on their overshoot.

    Overshoot goes in equal shares to the metal neighbours activated by this
    element, or, if there are none, to its already active metal neighbours
    with d<1; otherwise it is tallied as lost. With ``settle`` the shares are
    applied to d at once, so a share that completes a neighbour cascades
    further within the same step. Without it they wait in ``v_co_ledger``
    for the next update.
    """
    st = state.copy()
    over = np.asarray(overshoot, dtype=float).copy()
    adj = mesh.face_adjacency
    vol = mesh.volumes
    metal = st.initially_metal
    queue = [int(e) for e in np.nonzero(metal & (st.d >= 1) & ~st.complete)[0]]
    heapq.heapify(queue)
    while queue:
        e = heapq.heappop(queue)
        if st.complete[e]:
            continue
        st.complete[e] = True
        nbs = [int(n) for n in adj[e] if n >= 0 and metal[n] and st.d[n] < 1]
        fresh = [n for n in nbs if not st.active[n]]
        for n in fresh:
            st.active[n] = True
        if over[e] <= 0:
            continue
        targets = fresh or nbs
        if not targets:
            st.lost_volume += over[e]
            over[e] = 0.0
            continue
        share = over[e] / len(targets)
        over[e] = 0.0
        for n in targets:
            if not settle:
                st.v_co_ledger[n] += share
                continue
            d_new = st.d[n] + share / vol[n]
            if d_new >= 1:
                over[n] += (d_new - 1.0) * vol[n]
                st.d[n] = 1.0
                heapq.heappush(queue, n)
            else:
                st.d[n] = d_new
    return st


def total_dissolved_volume(state: DissolutionState, mesh: Mesh) -> float:
    """Dissolved anode volume since the initial state (m^3)."""
    m = state.initially_metal
    return float(np.sum((state.d[m] - state.d_initial[m]) * mesh.volumes[m]))


def effective_anode_params(state: DissolutionState, materials: MaterialSet,
                           rule: str = "series") -> EffectiveParams:
    """Mixture parameters on anode elements, electrolyte values elsewhere."""
    if rule not in RULES:
        raise InvalidArgument(f"unknown mixture rule {rule!r}")
    m = state.initially_metal
    k = np.full(len(state.d), materials.k_electrolyte)
    eps = np.full(len(state.d), float(materials.eps_electrolyte))
    w = state.d[m]
    k[m] = mix(rule, w, materials.k_metal, materials.k_electrolyte)
    eps[m] = mix(rule, w, materials.eps_metal, materials.eps_electrolyte)
    return EffectiveParams(k, eps)
