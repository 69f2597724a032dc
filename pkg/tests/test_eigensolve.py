import numpy as np
import pytest
import scipy.sparse as sps
from _oracle import oracle_gap
from hypothesis import given, settings
from hypothesis import strategies as st

from maxwell_cfem import assembly, mesh, spaces
from maxwell_cfem import eigensolve as es

BACKENDS = es.available_backends()


def block(domain="cube", n=3, r=1, mode="tangential"):
    m = mesh.generate(domain, n)
    return assembly.assemble(m, spaces.build_layout(m, r, mode))


def random_spd(rng, n):
    Q = rng.standard_normal((n, n))
    return sps.csr_matrix(Q @ Q.T + n * np.eye(n))


@pytest.mark.parametrize("backend", BACKENDS)
def test_spd_solve_diagonal(backend):
    d = np.array([1.0, 2.0, 4.0, 8.0])
    b = np.array([3.0, -1.0, 2.0, 5.0])
    fac = es.SPDFactor(sps.diags(d), backend=backend)
    assert np.allclose(fac.solve(b), b / d, rtol=1e-12, atol=0)
    assert np.allclose(es.spd_solve(sps.diags(d), b), b / d, rtol=1e-12, atol=0)


@given(st.integers(0, 10 ** 6), st.integers(2, 30))
@settings(max_examples=20, deadline=None)
def test_spd_solve_random(seed, n):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n)
    b = rng.standard_normal(n)
    x = es.spd_solve(S, b)
    assert np.linalg.norm(S @ x - b) <= 1e-12 * np.linalg.norm(b) * n


@pytest.mark.parametrize("backend", BACKENDS)
def test_not_spd(backend):
    with pytest.raises(es.NotSPDError):
        es.SPDFactor(sps.diags([1.0, -1.0, 2.0]), backend=backend)
    with pytest.raises(es.NotSPDError):
        es.SPDFactor(sps.csr_matrix(np.ones((3, 3))), backend=backend)


def test_nested_dissection_is_permutation():
    layout = spaces.build_layout(mesh.generate("fichera", 3), 2)
    perm = es.nested_dissection(spaces.dof_coordinates(layout), 1 / 3, leaf_size=16)
    assert np.array_equal(np.sort(perm), np.arange(layout.n_u + layout.n_p))


def test_nested_dissection_reduces_fill():
    b = block("cube", 4, 2)
    coords = spaces.dof_coordinates(spaces.build_layout(mesh.generate("cube", 4), 2))
    perm = es.nested_dissection(coords, 1 / 4)
    nd = es.SPDFactor(b.Mv, perm=perm[perm < b.n_u], backend="superlu")
    natural = es.SPDFactor(b.Mv, perm=np.arange(b.n_u), backend="superlu")
    assert nd.nnz < natural.nnz


def test_dense_oracle_examples():
    w, _ = es.dense_oracle(np.array([[2.0]]), np.array([[1.0]]))
    assert w == pytest.approx([0.5], rel=1e-15)
    w, X = es.dense_oracle(np.eye(2), np.diag([0.3, 0.9]))
    assert np.allclose(w, [0.9, 0.3])
    assert np.allclose(np.abs(X), np.eye(2)[::-1])
    with pytest.raises(ValueError):
        es.dense_oracle(sps.eye(2001), sps.eye(2001))


def test_identity_pencil_gives_mu_one():
    rng = np.random.default_rng(4)
    S = random_spd(rng, 40)
    sol = es.largest_pencil_modes(S, S, es.SolverConfig(nev=3))
    assert np.allclose(sol.mu, 1.0, atol=1e-12)
    gram = sol.vectors.T @ (S @ sol.vectors)
    assert np.allclose(gram, np.eye(3), atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("domain,n,r", [("cube", 2, 1), ("cube", 3, 2), ("thick-l", 2, 1), ("fichera", 2, 1)])
def test_matches_dense_oracle(backend, domain, n, r):
    b = block(domain, n, r)
    gap, sol = oracle_gap(b.S, b.T, b.G, b.K, nev=4, backend=backend)
    assert gap <= 1e-8
    assert np.all(sol.residuals <= 1e-10)
    assert sol.info["backend"] == backend


def test_regularized_kernel_case():
    # r = 2 Kuhn meshes with n >= 3 share a kernel between S and T
    b = block("cube", 4, 2)
    gap, sol = oracle_gap(b.S, b.T, b.G, b.K, nev=5, max_dim=3000)
    assert sol.regularized and sol.kernel_pivots >= 1
    assert gap <= 1e-8
    for i in range(5):
        assert assembly.residual_constraint(b, sol.u[:, i], sol.p[:, i]) <= 1e-8


def test_constraint_and_orthonormality():
    b = block("thick-l", 2, 2)
    sol = es.largest_pencil_modes(b.S, b.T, es.SolverConfig(nev=5), G=b.G, K=b.K)
    gram = sol.vectors.T @ (b.S @ sol.vectors)
    assert np.abs(gram - np.eye(5)).max() <= 1e-8
    assert np.all(sol.mu < 1) and np.all(sol.lam > 0)
    assert np.all(np.diff(sol.mu) <= 0)
    for i in range(5):
        assert assembly.residual_constraint(b, sol.u[:, i], sol.p[:, i]) <= 1e-8


def test_deterministic():
    b = block("cube", 3, 1)
    cfg = es.SolverConfig(nev=5)
    ordering = es.nested_dissection(
        spaces.dof_coordinates(spaces.build_layout(mesh.generate("cube", 3), 1)), 1 / 3)
    a = es.largest_pencil_modes(b.S, b.T, cfg, G=b.G, K=b.K, ordering=ordering)
    c = es.largest_pencil_modes(b.S, b.T, cfg, G=b.G, K=b.K, ordering=ordering)
    assert np.array_equal(a.mu, c.mu) and np.array_equal(a.vectors, c.vectors)


def test_ordering_does_not_change_spectrum():
    m = mesh.generate("fichera", 2)
    layout = spaces.build_layout(m, 1)
    b = assembly.assemble(m, layout)
    cfg = es.SolverConfig(nev=4)
    plain = es.largest_pencil_modes(b.S, b.T, cfg, G=b.G, K=b.K)
    nd = es.largest_pencil_modes(b.S, b.T, cfg, G=b.G, K=b.K,
                                 ordering=es.nested_dissection(spaces.dof_coordinates(layout), 0.5))
    assert np.allclose(plain.mu, nd.mu, rtol=0, atol=1e-12)


def test_partial_result_on_failure():
    b = block("cube", 3, 1)
    with pytest.raises(es.ConvergenceError) as info:
        es.largest_pencil_modes(b.S, b.T, es.SolverConfig(nev=5, max_iterations=1), G=b.G, K=b.K)
    partial = info.value.partial
    assert partial is not None and not partial.all_converged
    assert partial.iterations == 1


def test_config_validation():
    for bad in ({"nev": 0}, {"tol": 0.0}, {"tol": 0.1}, {"block_size": 0}):
        with pytest.raises(ValueError):
            es.SolverConfig(**bad)
    b = block("cube", 2, 1)
    with pytest.raises(ValueError):
        es.largest_pencil_modes(b.S, b.T, es.SolverConfig(nev=b.dim))


def test_clusters():
    assert es.clusters(np.array([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0])) == [[0, 1], [2], [3, 4]]
