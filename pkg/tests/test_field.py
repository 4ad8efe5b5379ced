import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecmsim.errors import InvalidArgument, SetupError
from ecmsim.field import (EPS0, ConstraintSet, EffectiveParams, FieldSolver, FieldState,
                          assemble_and_solve, current_densities, current_density,
                          element_system, renumber)
from ecmsim.mesh import generate_structured


def _square():
    return np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def _random_quad(data):
    # convex quad: perturb the unit square corners inwards/outwards a little
    jit = np.array([[data.draw(st.floats(-0.3, 0.3)) for _ in range(2)] for _ in range(4)])
    scale = data.draw(st.floats(1e-4, 10.0))
    return (_square() + jit) * scale


def test_unit_square_laplace_stiffness():
    K, f = element_system(_square(), 1.0, 1.0, 0.0, 1.0, np.zeros(4))
    assert np.allclose(np.diag(K), 2 / 3)
    assert K[0, 2] == pytest.approx(-1 / 3) and K[1, 3] == pytest.approx(-1 / 3)
    assert K[0, 1] == pytest.approx(-1 / 6)
    assert np.all(f == 0)


def test_no_conduction_no_capacitance_gives_zero():
    K, f = element_system(_square(), 0.0, 5.0, 0.0, 1.0, np.ones(4))
    assert np.all(K == 0) and np.all(f == 0)


def test_element_system_transient_load():
    vp = np.array([0.0, 1.0, 1.0, 0.0])
    K, f = element_system(_square(), 0.0, 2.0, 1.0, 0.5, vp, transient_factor=2.0)
    cap = 2.0 * 1.0 * 2.0 / 0.5
    assert np.allclose(f, K @ vp)
    K1, _ = element_system(_square(), 1.0, 1.0, 0.0, 1.0, np.zeros(4))
    assert np.allclose(K, cap * K1)


def test_element_system_rejects_bad_dt():
    with pytest.raises(InvalidArgument):
        element_system(_square(), 1.0, 1.0, 0.0, 0.0, np.zeros(4))


@given(st.data())
def test_element_matrix_symmetric_zero_rows(data):
    c = _random_quad(data)
    k = data.draw(st.floats(1e-3, 1e12))
    K, _ = element_system(c, k, 80.0, EPS0, 0.1, np.zeros(4))
    scale = np.abs(K).max()
    assert np.allclose(K, K.T, rtol=0, atol=1e-13 * scale)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-12 * scale)
    assert np.all(np.linalg.eigvalsh(K)[1:] > 0)


def _lr_constraints(m, vl, vr):
    left, right = m.boundary_tags["left"], m.boundary_tags["right"]
    return ConstraintSet(np.r_[left, right], np.r_[np.full(len(left), vl), np.full(len(right), vr)])


def test_single_element_linear_field():
    m = generate_structured(1, 1, 2e-3, 1e-3, 1.0)
    p = EffectiveParams.uniform(1, 16.0)
    s = assemble_and_solve(m, p, _lr_constraints(m, 0.0, 20.0), FieldState.zeros(4, 1.0), eps0=0.0)
    j = current_density(m, p, s, 0, eps0=0.0)
    assert j[0] == pytest.approx(-16.0 * 20.0 / 2e-3, rel=1e-12)
    assert abs(j[1]) < 1e-9


def test_resistor_divider():
    m = generate_structured(2, 1, 2.0, 1.0, 1.0)
    k1, k2 = 16.0, 4.625e6
    p = EffectiveParams(np.array([k1, k2]), np.ones(2))
    s = assemble_and_solve(m, p, _lr_constraints(m, 0.0, 20.0), FieldState.zeros(6, 1.0), eps0=0.0)
    want = 20.0 * (1 / k1) / (1 / k1 + 1 / k2)
    mid = np.isclose(m.nodes[:, 0], 1.0)
    assert np.allclose(s.v[mid], want, rtol=1e-10)
    assert want == pytest.approx(19.99993, abs=1e-5)


def test_constant_boundary_gives_constant_field():
    m = generate_structured(5, 4, 1.0, 1.0, 1.0)
    bnd = np.unique(np.concatenate(list(m.boundary_tags.values())))
    p = EffectiveParams.uniform(m.n_elements, 3.0)
    s = assemble_and_solve(m, p, ConstraintSet(bnd, 7.0), FieldState.zeros(m.n_nodes, 1.0))
    assert np.allclose(s.v, 7.0, rtol=1e-12)
    assert np.allclose(current_densities(m, p, s), 0.0, atol=1e-9)


def test_uniform_field_current_density():
    m = generate_structured(4, 4, 1e-3, 1e-3, 1e-4)
    p = EffectiveParams.uniform(m.n_elements, 16.0)
    s = assemble_and_solve(m, p, _lr_constraints(m, 20.0, 0.0), FieldState.zeros(m.n_nodes, 0.1))
    jn = np.linalg.norm(current_densities(m, p, s), axis=1)
    assert np.allclose(jn, 3.2e5, rtol=1e-9)


def test_stationary_field_has_no_transient_current():
    m = generate_structured(3, 3, 1e-3, 1e-3, 1e-4)
    p = EffectiveParams.uniform(m.n_elements, 16.0, 80.0)
    v = m.nodes[:, 0] * 1e4
    s = FieldState(v, v.copy(), 1e-3)
    j = current_densities(m, p, s)
    assert np.allclose(j[:, 0], -16.0 * 1e4)


def test_equilibrium_current_density():
    # nu * |j| = feed: 1e-11 * 16 * 20 / 0.32e-3 = 1e-5 m/s
    m = generate_structured(4, 1, 0.32e-3, 0.1e-3, 1e-4)
    p = EffectiveParams.uniform(m.n_elements, 16.0)
    s = assemble_and_solve(m, p, _lr_constraints(m, 20.0, 0.0), FieldState.zeros(m.n_nodes, 1.0))
    jn = np.linalg.norm(current_densities(m, p, s), axis=1)
    assert np.allclose(jn, 1e6, rtol=1e-9)


def test_no_constraints_is_setup_error():
    m = generate_structured(2, 2, 1.0, 1.0, 1.0)
    with pytest.raises(SetupError):
        assemble_and_solve(m, EffectiveParams.uniform(4, 1.0), ConstraintSet([], []),
                           FieldState.zeros(m.n_nodes, 1.0))


def test_renumber_examples():
    c = renumber(ConstraintSet([], []), 5)
    assert c.equation.tolist() == [0, 1, 2, 3, 4] and c.n_equations == 5
    c = renumber(ConstraintSet([3, 1], [0.0, 0.0]), 5)
    assert c.equation.tolist() == [0, -1, 1, -1, 2]
    assert c.n_equations == 3


def test_duplicate_constraint_rejected():
    with pytest.raises(InvalidArgument):
        ConstraintSet([1, 1], [0.0, 0.0])


def test_merged_conflict_rejected():
    c = ConstraintSet([0, 1], [1.0, 1.0])
    assert len(c.merged([1, 2], 1.0)) == 3
    with pytest.raises(InvalidArgument):
        c.merged([1], 2.0)


@given(st.integers(1, 50), st.data())
def test_renumber_dimension(n, data):
    fixed = data.draw(st.lists(st.integers(0, n - 1), unique=True))
    c = renumber(ConstraintSet(fixed, 0.0), n)
    assert c.n_equations == n - len(fixed)
    free = c.equation[c.equation >= 0]
    assert free.tolist() == list(range(n - len(fixed)))


def test_global_matrix_nullspace_is_constant():
    m = generate_structured(4, 3, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(1)
    p = EffectiveParams(rng.uniform(1, 100, m.n_elements), np.ones(m.n_elements))
    K = FieldSolver(m, eps0=0.0).global_matrix(p, 1.0).toarray()
    assert np.allclose(K, K.T)
    w = np.linalg.eigvalsh(K)
    assert abs(w[0]) < 1e-10 * w[-1] and w[1] > 1e-8 * w[-1]


@given(st.integers(2, 8), st.integers(2, 8), st.floats(2 ** -0.5, 2 ** 0.5),
       st.integers(0, 2**31 - 1))
def test_dirichlet_exact_and_maximum_principle(nx, ny, aspect, seed):
    # bilinear quads keep the discrete maximum principle for aspect ratios within sqrt(2)
    m = generate_structured(nx, ny, float(nx), ny * aspect, 1.0)
    rng = np.random.default_rng(seed)
    bnd = np.unique(np.concatenate(list(m.boundary_tags.values())))
    vals = rng.uniform(-5, 5, len(bnd))
    p = EffectiveParams.uniform(m.n_elements, 2.0)
    s = assemble_and_solve(m, p, ConstraintSet(bnd, vals), FieldState.zeros(m.n_nodes, 1.0))
    assert np.array_equal(s.v[bnd], vals)
    assert s.v.min() >= vals.min() - 1e-9 and s.v.max() <= vals.max() + 1e-9


@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_solution_invariant_under_node_permutation(nx, ny, seed):
    m = generate_structured(nx, ny, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m.n_nodes)
    mp = m.permuted(perm)
    p = EffectiveParams(rng.uniform(1, 10, m.n_elements), np.ones(m.n_elements))
    left, right = m.boundary_tags["left"], m.boundary_tags["right"]
    cons = ConstraintSet(np.r_[left, right], np.r_[np.zeros(len(left)), np.ones(len(right))])
    s = assemble_and_solve(m, p, cons, FieldState.zeros(m.n_nodes, 1.0))
    sp_ = assemble_and_solve(mp, p, ConstraintSet(perm[cons.nodes], cons.values),
                             FieldState.zeros(m.n_nodes, 1.0))
    assert np.allclose(sp_.v[perm], s.v, atol=1e-12)


def test_current_conservation_interior_region():
    m = generate_structured(8, 8, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(3)
    p = EffectiveParams(rng.uniform(1, 10, m.n_elements), np.ones(m.n_elements))
    s = assemble_and_solve(m, p, _lr_constraints(m, 0.0, 1.0), FieldState.zeros(m.n_nodes, 1.0),
                           eps0=0.0)
    # nodal flux balance: residual of the assembled system at interior nodes
    K = FieldSolver(m, eps0=0.0).global_matrix(p, 1.0)
    r = K @ s.v
    bnd = np.unique(np.concatenate([m.boundary_tags["left"], m.boundary_tags["right"]]))
    free = np.setdiff1d(np.arange(m.n_nodes), bnd)
    assert np.abs(r[free].sum()) <= 1e-8 * np.abs(r[bnd]).max()
    assert np.abs(r[m.boundary_tags["left"]].sum() + r[m.boundary_tags["right"]].sum()) \
        <= 1e-8 * np.abs(r[bnd]).max()


def test_transient_factor_is_negligible():
    m = generate_structured(4, 4, 1e-3, 1e-3, 1e-4)
    p = EffectiveParams.uniform(m.n_elements, 16.0, 80.0)
    cons = _lr_constraints(m, 20.0, 0.0)
    prev = FieldState.zeros(m.n_nodes, 0.1)
    v1 = FieldSolver(m, transient_factor=1.0).solve(p, cons, prev).v
    v2 = FieldSolver(m, transient_factor=2.0).solve(p, cons, prev).v
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-12)


def test_factor_reuse_matches_fresh_solve():
    m = generate_structured(10, 10, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(5)
    cons = _lr_constraints(m, 0.0, 1.0)
    solver = FieldSolver(m, eps0=0.0)
    prev = FieldState.zeros(m.n_nodes, 1.0)
    k = rng.uniform(1, 10, m.n_elements)
    solver.solve(EffectiveParams(k, np.ones(m.n_elements)), cons, prev)
    k[:5] *= 1.5
    p = EffectiveParams(k, np.ones(m.n_elements))
    v = solver.solve(p, cons, prev).v
    fresh = FieldSolver(m, eps0=0.0).solve(p, cons, prev).v
    assert solver.stats["reused"] == 1
    assert np.allclose(v, fresh, rtol=1e-9, atol=1e-12)
