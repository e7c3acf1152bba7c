import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapsed_sbp.errors import ConfigurationError, DomainError
from collapsed_sbp.exact import reference_volume_integral
from collapsed_sbp.jacobi import JacobiWeight, RuleKind
from collapsed_sbp.refelem import (
    JG10,
    LG,
    ElementShape,
    OperatorConfig,
    RuleSpec,
    build_operators,
    check_theorem_conditions,
    collapsed_to_ref,
    default_config,
    facet_quadrature,
    ref_to_collapsed,
    triangle_jacobi_config,
    verify_sbp,
)

TRI, TET = ElementShape.TRIANGLE, ElementShape.TETRAHEDRON


def test_shape_normals():
    s2, s3 = 1 / np.sqrt(2), 1 / np.sqrt(3)
    assert TRI.normals == pytest.approx(np.array([[0, -1], [s2, s2], [-1, 0]]))
    assert TET.normals == pytest.approx(np.array([[0, -1, 0], [s3, s3, s3], [-1, 0, 0], [0, 0, -1]]))
    assert (TRI.dim, TRI.num_facets, TET.dim, TET.num_facets) == (2, 3, 3, 4)


def test_collapsed_to_ref_examples():
    assert collapsed_to_ref(TRI, [-1, 0.4]) == pytest.approx([-1, 0.4])
    assert collapsed_to_ref(TRI, [0, 0]) == pytest.approx([-0.5, 0])


def test_collapsed_face_maps_to_oblique_facet():
    g = np.linspace(-1, 1, 5)
    e2, e3 = np.meshgrid(g, g)
    eta = np.stack([np.ones(e2.size), e2.ravel(), e3.ravel()], 1)
    xi = collapsed_to_ref(TET, eta)
    assert np.max(np.abs(xi.sum(axis=1) + 1)) < 1e-15


def test_ref_to_collapsed_examples():
    assert ref_to_collapsed(TRI, [-0.5, 0]) == pytest.approx([0, 0])
    with pytest.raises(DomainError):
        ref_to_collapsed(TRI, [-1, 1])
    with pytest.raises(DomainError):
        ref_to_collapsed(TET, [-1, 0.2, -0.2])
    with pytest.raises(DomainError):
        ref_to_collapsed(TET, [-1, -1, 1])


def random_simplex_points(d, n, rng):
    lam = rng.dirichlet(np.ones(d + 1), size=n)
    return -1 + 2 * lam[:, 1:]


def test_tet_round_trip():
    xi = random_simplex_points(3, 20, np.random.default_rng(0))
    assert np.max(np.abs(collapsed_to_ref(TET, ref_to_collapsed(TET, xi)) - xi)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.999, 0.999), min_size=3, max_size=3))
def test_round_trip_property(eta):
    for shape in (TRI, TET):
        e = np.array(eta[: shape.dim])
        assert ref_to_collapsed(shape, collapsed_to_ref(shape, e)) == pytest.approx(e, abs=1e-12)


def test_degree_zero_triangle():
    ops = build_operators(default_config(TRI, 0))
    assert ops.w == pytest.approx([2.0])
    assert ops.D[0] == pytest.approx(np.zeros((1, 1))) and ops.D[1] == pytest.approx(np.zeros((1, 1)))
    rep = verify_sbp(ops)
    assert all(v < 1e-14 for _, v in rep.rows())


def test_triangle_q4_sbp():
    ops = build_operators(default_config(TRI, 4))
    for Q, E in zip(ops.Q, ops.E):
        assert np.max(np.abs(Q + Q.T - E)) <= 1e-12


def test_tetrahedron_q3_volume_and_sbp():
    ops = build_operators(default_config(TET, 3))
    assert np.sum(ops.w) == pytest.approx(4 / 3, abs=1e-13)
    for Q, E in zip(ops.Q, ops.E):
        assert np.max(np.abs(Q + Q.T - E)) <= 1e-12
    assert ops.routes == {"eta3": "tau_3^(1,0) >= 2 q_3", "eta_f2": "tau_f2^(1,0) >= 2 max(q_2, q_3)"}


def test_triangle_q5_volume_quadrature_against_exact():
    ops = build_operators(default_config(TRI, 5))
    for i in range(10):
        for j in range(10 - i):
            exact = float(reference_volume_integral((i, j)))
            assert ops.w @ (ops.xi[:, 0] ** i * ops.xi[:, 1] ** j) == pytest.approx(exact, abs=1e-13)


def test_tetrahedron_q2_facet_condition():
    rep = verify_sbp(build_operators(default_config(TET, 2)))
    assert rep.facet_condition_residual <= 1e-11


@pytest.mark.parametrize("shape,q", [(TRI, q) for q in range(1, 9)] + [(TET, q) for q in range(1, 7)])
def test_default_operators_pass(shape, q):
    ops = build_operators(default_config(shape, q))
    rep = verify_sbp(ops)
    assert rep.passed(), rep.rows()
    assert rep.decomposition_residual == 0.0
    for D in ops.D:
        # zero up to rounding in the row sums
        scale = np.abs(D).sum(axis=1)
        assert np.all(np.abs(D @ np.ones(ops.n_nodes)) <= 1e-14 * np.maximum(scale, 1.0))


@pytest.mark.parametrize("shape,q", [(TRI, 3), (TET, 2)])
def test_tensor_factors_reproduce_dense(shape, q):
    ops = build_operators(default_config(shape, q))
    from functools import reduce

    for z, facs in enumerate(ops.R_factors):
        assert np.max(np.abs(reduce(np.kron, facs[::-1]) - ops.R[z])) < 1e-13
    rebuilt = [sum(ops.G[:, l, n][:, None] * reduce(
        np.kron, [ops.D1d[m] if m == l else np.eye(ops.rules[m].n)
                  for m in range(ops.dim)][::-1]) for l in range(ops.dim)) for n in range(ops.dim)]
    for A, B in zip(rebuilt, ops.D):
        assert np.max(np.abs(A - B)) < 1e-13


@pytest.mark.parametrize("q", [2, 3, 5])
def test_remark_negative_control(q):
    with pytest.raises(ConfigurationError):
        build_operators(OperatorConfig(TRI, (q, q), (q,), (LG, JG10), (LG,)))
    ops = build_operators(triangle_jacobi_config(q))
    rep = verify_sbp(ops)
    assert not ops.sbp_guaranteed and ops.violations
    assert rep.sbp_residual > 1e-6
    assert not rep.passed()
    assert rep.differentiation_residual < 1e-9


def test_node_at_collapsed_vertex_rejected():
    radau_right = RuleSpec(JacobiWeight(0.0, 0.0), RuleKind.GAUSS_LOBATTO)
    cfg = OperatorConfig(TRI, (3, 3), (3,), (LG, radau_right), (LG,), strict=False)
    with pytest.raises(ConfigurationError):
        build_operators(cfg)


def test_theorem_condition_reporting():
    cfg = OperatorConfig(TET, (3, 3, 3), (3, 3), (LG, LG, LG), (LG, LG))
    violations, routes = check_theorem_conditions(cfg)
    assert violations == []
    assert routes["eta3"].startswith("tau_3^(0,0)")
    bad = OperatorConfig(TET, (3, 3, 3), (3, 3), (LG, LG, RuleSpec(kind=RuleKind.GAUSS_RADAU)),
                         (LG, JG10))
    assert check_theorem_conditions(bad)[0]


def test_facet_quadrature_examples():
    _, w = facet_quadrature(TRI, 2, default_config(TRI, 3))
    assert np.sum(w) == pytest.approx(2 * np.sqrt(2), abs=1e-14)
    _, w = facet_quadrature(TET, 2, default_config(TET, 2))
    assert np.sum(w) == pytest.approx(2 * np.sqrt(3), abs=1e-14)
    x, w = facet_quadrature(TRI, 1, default_config(TRI, 1))
    s = 1 / np.sqrt(3)
    assert x == pytest.approx(np.array([[-s, -1], [s, -1]]))
    assert w == pytest.approx([1, 1])


@pytest.mark.parametrize("shape,q", [(TRI, 4), (TET, 3)])
def test_facet_measures(shape, q):
    cfg = default_config(shape, q)
    for z, measure in enumerate(shape.facet_measures, start=1):
        _, w = facet_quadrature(shape, z, cfg)
        assert np.all(w > 0)
        assert np.sum(w) == pytest.approx(measure, abs=1e-13)


def test_json_export_round_trip(tmp_path):
    ops = build_operators(default_config(TRI, 2))
    path = tmp_path / "ops.json"
    ops.to_json(path)
    data = json.loads(path.read_text())
    assert data["format"] == "collapsed-sbp-operators/1"
    assert OperatorConfig.from_dict(data["config"]) == ops.config
    assert np.array(data["volume_weights"]) == pytest.approx(ops.w, abs=0)
