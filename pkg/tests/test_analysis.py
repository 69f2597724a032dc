import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxwell_cfem import analysis as an
from maxwell_cfem import mesh, spaces

PI2 = math.pi ** 2


def test_cube_spectrum_examples():
    assert np.allclose(an.cube_exact_spectrum(3), [2 * PI2] * 3)
    assert np.allclose(an.cube_exact_spectrum(5), [2 * PI2] * 3 + [3 * PI2] * 2)
    assert np.allclose(an.cube_exact_spectrum(11), np.array([2, 2, 2, 3, 3, 5, 5, 5, 5, 5, 5]) * PI2)
    with pytest.raises(ValueError):
        an.cube_exact_spectrum(0)


def test_cube_spectrum_brute_force():
    # independent enumeration: each triple with >= 2 nonzero indices gives
    # 3 - (#zeros) - 1 independent coefficient vectors
    vals = []
    for m in range(6):
        for n in range(6):
            for l in range(6):
                zeros = (m, n, l).count(0)
                if zeros <= 1:
                    vals += [m * m + n * n + l * l] * (2 - zeros)
    vals.sort()
    assert np.allclose(an.cube_exact_spectrum(40), np.array(vals[:40]) * PI2)


@given(st.permutations([0, 1, 2]))
def test_eigenspace_basis_symmetric_under_relabelling(perm):
    for k in (2, 3, 5, 6):
        basis = an.cube_eigenspace_basis(k * PI2)
        triples = sorted(tuple(sorted(f.triple)) for f in basis)
        permuted = sorted(tuple(sorted(tuple(f.triple[i] for i in perm))) for f in basis)
        assert triples == permuted
        assert len(basis) == int(np.sum(np.isclose(an.cube_exact_spectrum(40), k * PI2)))


def test_coefficient_constraint_enforced():
    with pytest.raises(ValueError):
        an.ExactCubeEigenfunction((1, 1, 1), (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        an.cube_eigenspace_basis(2.5 * PI2)


@pytest.mark.parametrize("f", an.cube_eigenspace_basis(6 * PI2) + an.canonical_2pi2_basis())
def test_curl_and_divergence(f):
    rng = np.random.default_rng(0)
    x = rng.random((5, 3))
    eps = 1e-6
    J = np.stack([(f(x + eps * e) - f(x - eps * e)) / (2 * eps) for e in np.eye(3)], axis=-1)  # d_b f_a
    curl = np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], -1)
    assert np.allclose(curl, f.curl(x), atol=1e-7)
    assert np.abs(np.trace(J, axis1=1, axis2=2)).max() < 1e-7
    # curl curl f = lambda f
    Jc = np.stack([(f.curl(x + eps * e) - f.curl(x - eps * e)) / (2 * eps) for e in np.eye(3)], axis=-1)
    cc = np.stack([Jc[:, 2, 1] - Jc[:, 1, 2], Jc[:, 0, 2] - Jc[:, 2, 0], Jc[:, 1, 0] - Jc[:, 0, 1]], -1)
    assert np.allclose(cc, f.eigenvalue * f(x), atol=1e-5 * f.eigenvalue)


def test_2pi2_gram():
    m = mesh.generate("cube", 2)
    basis = an.canonical_2pi2_basis()
    assert np.abs(an.exact_gram(basis, m) - np.eye(3) / 4).max() <= 1e-9
    hc = an.exact_gram(basis, m) + an.exact_gram(basis, m, curl=True)
    assert np.abs(np.diag(hc) - (1 + 2 * PI2) / 4).max() <= 1e-8


def test_projection_of_in_span_field():
    m = mesh.generate("cube", 2)
    layout = spaces.build_layout(m, 1)
    basis = an.canonical_2pi2_basis()
    sampler = an.FieldSampler(m, layout, 8)
    s = sampler(np.zeros(layout.n_u), np.zeros(layout.n_p))
    s.xi = 0.3 * basis[0](s.points) - 1.2 * basis[2](s.points)
    s.curl = 0.3 * basis[0].curl(s.points) - 1.2 * basis[2].curl(s.points)
    res = an.project_samples(s, basis)
    assert np.allclose(res.coefficients, [0.3, 0.0, -1.2], atol=1e-9)
    assert res.l2_error <= 1e-9 and res.hcurl_error <= 1e-9


def test_dependent_basis_rejected():
    m = mesh.generate("cube", 2)
    fs = an.FieldSampler(m, spaces.build_layout(m, 1), 6)
    f = an.canonical_2pi2_basis()[0]
    with pytest.raises(np.linalg.LinAlgError):
        an.EigenspaceProjector(fs.points, fs.weights, [f, f])


def interpolant_errors(n, r=2):
    m = mesh.generate("cube", n)
    layout = spaces.build_layout(m, r)
    f = an.canonical_2pi2_basis()[0]
    u = spaces.interpolate_vector(layout, m, f)
    return an.project_to_exact_eigenspace(m, layout, u, np.zeros(layout.n_p), an.canonical_2pi2_basis())


def test_interpolant_error_decreases():
    e4, e8 = interpolant_errors(4), interpolant_errors(8)
    assert e4.l2_error <= 1e-2
    assert e8.l2_error < e4.l2_error / 6  # order 3 for P2 interpolation
    assert e8.hcurl_error < e4.hcurl_error


def test_gradient_part_enters_xi():
    from maxwell_cfem import assembly

    m = mesh.generate("cube", 3)
    layout = spaces.build_layout(m, 1)
    block = assembly.assemble(m, layout)
    p = np.random.default_rng(2).standard_normal(layout.n_p)
    s = an.sample_discrete_field(m, layout, np.zeros(layout.n_u), p)
    assert np.abs(s.curl).max() == 0
    assert np.einsum("eq,eqc,eqc->", s.weights, s.xi, s.xi) == pytest.approx(p @ block.K @ p, rel=1e-12)


def test_observed_order_examples():
    assert an.observed_order([4e-3, 1e-3], [0.5, 0.25]).h_order == pytest.approx([2.0])
    o = an.observed_order([16e-3, 1e-3, 1e-3 / 16], [0.25, 0.125, 0.0625])
    assert o.h_order == pytest.approx([4.0, 4.0])
    assert o.n_slope == pytest.approx([-4 / 3, -4 / 3])
    for bad in (([1.0], [1.0]), ([1.0, 0.0], [1.0, 0.5]), ([1.0, 2.0], [1.0])):
        with pytest.raises(ValueError):
            an.observed_order(*bad)


def test_expected_orders():
    assert an.expected_orders("cube", 2) == {"eigenvalue": 4.0, "eigenfunction": 2.0}
    assert an.expected_orders("thick-l", 2)["eigenvalue"] == pytest.approx(4 / 3)
    # h-order 4/3 corresponds to the N-slope of about -0.45
    assert -an.expected_orders("thick-l", 2)["eigenvalue"] / 3 == pytest.approx(-0.44, abs=0.01)
    assert an.expected_orders("fichera", 1)["eigenvalue"] == pytest.approx(1.41)


def test_catalog():
    assert an.CATALOG.smallest("fichera") == 3.21987401386
    assert an.CATALOG.smallest("thick-l") == 9.63972384
    assert an.CATALOG.smallest("cube") == pytest.approx(2 * PI2)
    assert len(an.CATALOG.reference("thick-l")) == 9
    assert an.CATALOG.fichera_published[(2, 4)][0] == 3.21452284


def test_match_benchmark():
    ref = an.CATALOG.reference("fichera")
    m1 = an.match_benchmark([3.85659662], ref, 0.2)
    assert m1.modes[0].rel_dev == pytest.approx(3.85659662 / 3.21987401386 - 1)
    assert m1.passed
    assert not an.match_benchmark([3.85659662], ref, 0.02).passed
    with pytest.raises(ValueError):
        an.match_benchmark([2.0, 1.0], ref, 0.1)


def test_cube_clusters_after_splitting():
    # Kuhn meshes split the 2 pi^2 triple 2 + 1
    lam = [20.49, 20.49, 20.4915, 30.861, 30.861]
    match = an.match_benchmark(lam, an.CATALOG.cube(5), 0.05)
    assert match.reference_clusters == [3, 2]
    assert match.computed_clusters == [2, 1, 2]
    assert match.assigned_clusters == [3, 2] and match.clusters_agree


def level(i, lam, ref, h):
    return an.LevelResult(level=i, n=int(1 / h), h=h, num_tets=6 * int(1 / h) ** 3, dof_u=1, dof_p=1, dof_total=2,
                          lam=list(lam), rel_err=an.relative_errors(lam, ref))


def test_report_orders_roundtrip_and_warnings():
    ref = [1.0, 2.0]
    rep = an.ConvergenceReport("cube", 1, "tangential", ref,
                               [level(0, [1.04, 2.16], ref, 0.25), level(1, [1.01, 2.04], ref, 0.125)])
    assert rep.eigenvalue_orders(0) == pytest.approx([2.0])
    assert rep.l2_orders(0) == [None]
    assert rep.monotone_violations() == []
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert rep.warn_if_below_reference() == []
    rep.levels[1].lam[0] = 0.99
    with pytest.warns(UserWarning):
        assert rep.warn_if_below_reference() == [(0, 1)]
    back = an.ConvergenceReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back == rep


def test_monotone_violation_detected():
    ref = [1.0]
    rep = an.ConvergenceReport("cube", 1, "tangential", ref,
                               [level(0, [1.01], ref, 0.25), level(1, [1.02], ref, 0.125)])
    assert rep.monotone_violations() == [(0, 1)]
