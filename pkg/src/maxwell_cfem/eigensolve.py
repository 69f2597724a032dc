"""Symmetric pencil eigensolver for T x = mu S x (largest mu).

The pencil built by :mod:`assembly` has three kinds of eigenvectors:

* pure gradient pairs ``(0, q)`` with mu = 1 exactly (lambda = 0); they
  violate the constraint row and are not Maxwell modes;
* representation-redundant pairs ``(grad r, -r)`` with xi_h = 0, a common
  kernel of S and T (present for r = 2 on Kuhn meshes);
* the Maxwell modes, mu = 1 / (lambda + 1) in (0, 1).

:func:`largest_pencil_modes` runs block Lanczos on ``x -> S^{-1} T x`` in
the S inner product, restricted to the constraint subspace ``G^T u + K p = 0``
which removes the first kind.  A common kernel makes S singular; the solve
then adds ``delta diag(S)`` on the vector rows, which maps the redundant
pairs to mu ~ 0 and leaves the constraint rows untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

MU_FLOOR = 1e-8


class NotSPDError(np.linalg.LinAlgError):
    """Factorization met a non-positive pivot."""

    def __init__(self, msg, n_bad: int = 0):
        super().__init__(msg)
        self.n_bad = n_bad


class ConvergenceError(RuntimeError):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


def nested_dissection(coords: np.ndarray, plane_spacing: float, leaf_size: int = 64) -> np.ndarray:
    """Geometric nested-dissection permutation for structured meshes.

    Unknowns strictly on opposite sides of a mesh plane ``x_a = k * spacing``
    never share an element, so the unknowns on the plane form an exact
    separator.  Returns a permutation (separators ordered last).
    """
    coords = np.asarray(coords, dtype=float)
    scaled = coords / plane_spacing
    out: list[np.ndarray] = []
    stack: list[tuple[np.ndarray, bool]] = [(np.arange(len(coords)), False)]
    # iterative post-order: emit a node's separator after both halves
    while stack:
        idx, emit = stack.pop()
        if emit:
            out.append(idx)
            continue
        if len(idx) <= leaf_size:
            out.append(idx)
            continue
        pts = scaled[idx]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        for axis in np.argsort(hi - lo)[::-1]:
            first, last = np.floor(lo[axis]) + 1, np.ceil(hi[axis]) - 1
            if first > last:
                continue
            cut = np.clip(np.round(np.median(pts[:, axis])), first, last)
            left = idx[pts[:, axis] < cut - 1e-9]
            right = idx[pts[:, axis] > cut + 1e-9]
            sep = idx[np.abs(pts[:, axis] - cut) <= 1e-9]
            if len(left) and len(right):
                break
        else:
            out.append(idx)
            continue
        stack.append((sep, True))
        stack.append((right, False))
        stack.append((left, False))
    perm = np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
    return perm.astype(np.int64)


class _SuperLUBackend:
    """LDL^T-type factorization through SuperLU with diagonal pivots only.

    With no off-diagonal pivoting the U diagonal carries the pivots of a
    symmetric elimination.
    """

    name = "superlu"

    def __init__(self, holder: list, own_ordering: bool = False):
        try:
            self._lu = spla.splu(
                holder.pop(),
                permc_spec="MMD_AT_PLUS_A" if own_ordering else "NATURAL",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(str(exc), n_bad=1) from exc
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotSPDError("off-diagonal pivoting occurred; matrix is not SPD")
        self.pivots = self._lu.U.diagonal()[np.argsort(self._lu.perm_c)]
        self.nnz = int(self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b):
        return self._lu.solve(b)


class _CholmodBackend:
    """Supernodal Cholesky (CHOLMOD via cvxopt); stores only L."""

    name = "cholmod"

    def __init__(self, holder: list, own_ordering: bool = False):
        from cvxopt import cholmod, matrix, spmatrix

        self._cholmod, self._matrix = cholmod, matrix
        S = holder.pop()  # sole owner from here on, so it can be freed early
        n = S.shape[0]
        coo = sps.tril(S).tocoo()
        del S
        A = spmatrix(
            matrix(coo.data.astype(float)),
            matrix(coo.row.astype(np.int64)),
            matrix(coo.col.astype(np.int64)),
            (n, n),
        )
        del coo
        cholmod.options["supernodal"] = 2
        if own_ordering:
            self._F = cholmod.symbolic(A)  # AMD
        else:
            # the caller already permuted S; keep CHOLMOD from reordering
            self._F = cholmod.symbolic(A, p=matrix(np.arange(n, dtype=np.int64)))
        try:
            cholmod.numeric(A, self._F)
        except ArithmeticError as exc:
            raise NotSPDError(f"Cholesky broke down at column {exc}", n_bad=1) from exc
        diag = np.array(cholmod.diag(self._F)).ravel()
        self.pivots = diag * diag  # postordering may permute these; only the set matters
        self.nnz = None

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        X = self._matrix(np.asfortranarray(b.reshape(len(b), -1)))
        self._cholmod.solve(self._F, X)
        return np.array(X).reshape(b.shape)


def available_backends() -> tuple[str, ...]:
    try:
        import cvxopt.cholmod  # noqa: F401
    except ImportError:
        return ("superlu",)
    return ("cholmod", "superlu")


class SPDFactor:
    """Symmetric positive definite factorization with a pivot check.

    A pivot below ``pivot_tol`` times the largest one, or a breakdown,
    raises :class:`NotSPDError`.  ``perm`` is an optional symmetric
    fill-reducing ordering; without it the backend orders by minimum degree.  ``backend``
    is ``"cholmod"``, ``"superlu"`` or ``None`` for the first available.
    """

    def __init__(self, S: sps.spmatrix, pivot_tol: float = 1e-10, perm: np.ndarray | None = None,
                 backend: str | None = None):
        if isinstance(S, list):  # caller hands over ownership
            S = S.pop()
        S = sps.csr_matrix(S)
        self.shape = S.shape
        self.perm = None if perm is None else np.asarray(perm, dtype=np.int64)
        backend = backend or available_backends()[0]
        if backend not in available_backends():
            raise ValueError(f"backend {backend!r} unavailable; have {available_backends()}")
        holder = [sps.csc_matrix(S if self.perm is None else S[self.perm][:, self.perm])]
        del S
        impl = _CholmodBackend if backend == "cholmod" else _SuperLUBackend
        self._impl = impl(holder, own_ordering=self.perm is None)
        self.backend = impl.name
        self.nnz = self._impl.nnz
        piv = self._impl.pivots
        bad = piv <= pivot_tol * max(float(np.max(piv, initial=0.0)), np.finfo(float).tiny)
        if bad.any():
            raise NotSPDError(
                f"{int(bad.sum())} non-positive or vanishing pivots (min {piv.min():.3e})",
                n_bad=int(bad.sum()),
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.perm is None:
            return self._impl.solve(b)
        x = np.empty_like(b)
        x[self.perm] = self._impl.solve(b[self.perm])
        return x


def spd_solve(S: sps.spmatrix, b: np.ndarray, refine: int = 2) -> np.ndarray:
    """Solve S x = b for SPD S; raises :class:`NotSPDError` otherwise."""
    S = sps.csr_matrix(S)
    fac = SPDFactor(S)
    x = fac.solve(b)
    for _ in range(refine):
        x = x + fac.solve(b - S @ x)
    return x


@dataclass
class SolverConfig:
    nev: int = 5
    tol: float = 1e-10
    max_iterations: int = 400
    block_size: int = 4
    seed: int = 20240611
    regularization: float = 1e-12
    max_basis: int | None = None
    backend: str | None = None  # "cholmod", "superlu" or first available

    def __post_init__(self):
        if self.nev < 1:
            raise ValueError("nev must be >= 1")
        if not 0 < self.tol < 1e-2:
            raise ValueError("tol must lie in (0, 1e-2)")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass
class EigenSolution:
    mu: np.ndarray
    vectors: np.ndarray  # (dim, nev), S-orthonormal columns
    n_u: int
    residuals: np.ndarray  # ||T x - mu S x||_2 with ||x||_S = 1
    iterations: int
    converged: np.ndarray
    regularized: bool = False
    kernel_pivots: int = 0
    info: dict = field(default_factory=dict)

    @property
    def lam(self) -> np.ndarray:
        return 1.0 / self.mu - 1.0

    @property
    def u(self) -> np.ndarray:
        return self.vectors[: self.n_u]

    @property
    def p(self) -> np.ndarray:
        return self.vectors[self.n_u:]

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _s_orthonormalize(X: np.ndarray, SX: np.ndarray, ref_norms=None, drop_tol: float = 1e-10):
    """S-orthonormalize columns through the Gram matrix eigen-decomposition.

    Directions whose S-norm fell below ``drop_tol`` times the reference norm
    (the norm before reorthogonalization) are dropped as dependent.
    """
    gram = X.T @ SX
    gram = 0.5 * (gram + gram.T)
    w, V = np.linalg.eigh(gram)
    ref = np.max(ref_norms) ** 2 if ref_norms is not None and len(ref_norms) else max(w.max(initial=0.0), 0.0)
    keep = w > drop_tol * ref
    if not keep.any():
        return X[:, :0], SX[:, :0]
    C = V[:, keep] / np.sqrt(w[keep])
    return X @ C, SX @ C


class _ConstraintProjector:
    """S-orthogonal projection onto {G^T u + K p = 0}: (u, p) -> (u, -K^{-1} G^T u)."""

    def __init__(self, G: sps.spmatrix, K: sps.spmatrix, perm=None, backend=None):
        self.GT = sps.csr_matrix(G.T)
        self.n_u = G.shape[0]
        try:
            self._fac = SPDFactor(K, perm=perm, backend=backend)
        except NotSPDError as exc:
            raise NotSPDError(f"scalar stiffness K is not SPD: {exc}") from exc
        self._K = sps.csr_matrix(K)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        rhs = -(self.GT @ X[: self.n_u])
        p = self._fac.solve(rhs)
        p += self._fac.solve(rhs - self._K @ p)
        X[self.n_u:] = p
        return X


def regularized(S: sps.spmatrix, delta: float, n_u: int | None = None) -> sps.csr_matrix:
    """``S + delta diag(S)``, shifted on the first ``n_u`` rows only.

    Leaving the constraint rows unshifted keeps ``(S_reg x)_p = (S x)_p``,
    so the constraint subspace is the same for both matrices.
    """
    d = S.diagonal().copy()
    if n_u is not None:
        d[n_u:] = 0.0
    return (S + delta * sps.diags(d)).tocsr()


def _factor_pencil_side(S: sps.csr_matrix, regularization: float, perm=None, backend=None, n_u=None):
    """Factor S, or S plus a diagonal shift if S is singular.

    Returns ``(factor, shift, n_bad)`` where ``shift`` is the added diagonal
    (``None`` when S was factored as is).
    """
    try:
        return SPDFactor(S, perm=perm, backend=backend), None, 0
    except NotSPDError as exc:
        n_bad = exc.n_bad
        log.warning("S is singular (%s); factoring with a %.1e diagonal shift", exc, regularization)
    S_reg = [regularized(S, regularization, n_u)]
    shift = S_reg[0].diagonal() - S.diagonal()
    # shifted kernel pivots sit near delta; only positivity is required
    fac = SPDFactor(S_reg, pivot_tol=0.1 * regularization, perm=perm, backend=backend)
    return fac, shift, n_bad


class _Basis:
    """Preallocated columns V, S_op V and T V of the Lanczos basis."""

    def __init__(self, dim: int, capacity: int):
        self.V = np.empty((dim, capacity))
        self.SV = np.empty((dim, capacity))
        self.TV = np.empty((dim, capacity))
        self.m = 0

    def views(self):
        m = self.m
        return self.V[:, :m], self.SV[:, :m], self.TV[:, :m]

    def append(self, X, SX, TX):
        k = X.shape[1]
        sl = slice(self.m, self.m + k)
        self.V[:, sl], self.SV[:, sl], self.TV[:, sl] = X, SX, TX
        self.m += k

    def reorthogonalize(self, X):
        V, SV, _ = self.views()
        for _ in range(2):  # full reorthogonalization, two passes
            X = X - V @ (SV.T @ X)
        return X


def largest_pencil_modes(
    S: sps.spmatrix,
    T: sps.spmatrix,
    cfg: SolverConfig,
    n_u: int | None = None,
    G: sps.spmatrix | None = None,
    K: sps.spmatrix | None = None,
    ordering: np.ndarray | None = None,
) -> EigenSolution:
    """The ``cfg.nev`` largest mu < 1 of T x = mu S x.

    With ``G`` and ``K`` given, iterates are projected onto the constraint
    subspace after every solve, which removes the mu = 1 gradient pairs;
    otherwise the plain largest mu of the full pencil are returned.
    ``ordering`` is a fill-reducing permutation of the pencil unknowns
    (see :func:`nested_dissection`).
    """
    S = sps.csr_matrix(S)
    T = sps.csr_matrix(T)
    dim = S.shape[0]
    if cfg.nev >= dim:
        raise ValueError(f"nev={cfg.nev} must be below the pencil dimension {dim}")
    constrained = G is not None and K is not None
    n_u = G.shape[0] if constrained else (dim if n_u is None else n_u)
    fac, shift, n_bad = _factor_pencil_side(
        S, cfg.regularization, ordering, cfg.backend, n_u if constrained else None
    )
    project = None
    if constrained:
        k_perm = None
        if ordering is not None:
            ordering = np.asarray(ordering)
            k_perm = ordering[ordering >= n_u] - n_u
        project = _ConstraintProjector(G, K, k_perm, cfg.backend)

    def s_op(X):
        SX = S @ X
        return SX if shift is None else SX + shift[:, None] * X

    def apply_op(X):
        Y = fac.solve(T @ X)
        return project(Y) if project else Y

    def s_norms(X, SX):
        return np.sqrt(np.maximum(np.einsum("ij,ij->j", X, SX), 0.0))

    bs = cfg.block_size
    reachable = n_u if constrained else dim
    max_basis = min(cfg.max_basis or max(6 * cfg.nev + 10 * bs, 100), reachable)
    basis = _Basis(dim, max_basis + bs)
    rng = np.random.default_rng(cfg.seed)

    def fresh_block():
        X = rng.standard_normal((dim, bs))
        if project:
            X = project(X)
        ref = s_norms(X, s_op(X))
        X = basis.reorthogonalize(X)
        return _s_orthonormalize(X, s_op(X), ref_norms=ref)

    def ritz(m):
        V, TV = basis.V[:, :m], basis.TV[:, :m]
        H = V.T @ TV
        theta, Y = np.linalg.eigh(0.5 * (H + H.T))
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]
        good = theta > MU_FLOOR
        return theta[good], Y[:, good]

    block, sblock = fresh_block()
    basis.append(block, sblock, T @ block)
    iterations = 0
    mu = vecs = res = None
    converged = np.zeros(cfg.nev, bool)
    while True:
        iterations += 1
        W = apply_op(block)
        ref = s_norms(W, s_op(W))
        W = basis.reorthogonalize(W)
        W, SW = _s_orthonormalize(W, s_op(W), ref_norms=ref)
        if W.shape[1] == 0 and basis.m < reachable:
            W, SW = fresh_block()  # invariant subspace found early
        m_old = basis.m
        TW = T @ W
        basis.append(W, SW, TW)
        block = W

        theta, Y = ritz(basis.m)
        k = min(cfg.nev, len(theta))
        if k:
            V, _, TV = basis.views()
            X = V @ Y[:, :k]
            SX = S @ X
            snorm = np.sqrt(np.einsum("ij,ij->j", X, SX))
            snorm = np.where(snorm > 0, snorm, 1.0)
            R = TV @ Y[:, :k] - SX * theta[:k]
            res = np.linalg.norm(R, axis=0) / snorm
            mu, vecs = theta[:k], X / snorm
            converged = np.zeros(cfg.nev, bool)
            converged[:k] = res <= cfg.tol
        if k == cfg.nev and converged.all():
            break
        if iterations >= cfg.max_iterations or W.shape[1] == 0 or basis.m >= reachable:
            break
        if basis.m + bs > max_basis:
            # thick restart: Ritz vectors of the basis without the newest
            # block; their residuals lie in span(newest block), which is
            # S-orthogonal to them, so the Krylov structure is kept
            theta_o, Y_o = ritz(m_old)
            nkeep = min(len(theta_o), max(cfg.nev + 2 * bs, max_basis // 2))
            Y_o = Y_o[:, :nkeep]
            kept = [getattr(basis, name)[:, :m_old] @ Y_o for name in ("V", "SV", "TV")]
            basis.m = 0
            basis.append(*kept)
            del kept
            basis.append(W, SW, TW)

    sol = EigenSolution(
        mu=np.asarray(mu if mu is not None else []),
        vectors=np.asarray(vecs if vecs is not None else np.zeros((dim, 0))),
        n_u=n_u,
        residuals=np.asarray(res if res is not None else []),
        iterations=iterations,
        converged=converged,
        regularized=shift is not None,
        kernel_pivots=n_bad,
        info={
            "basis_size": int(basis.m),
            "factor_nnz": fac.nnz,
            "backend": fac.backend,
            "seed": cfg.seed,
        },
    )
    if not sol.all_converged:
        raise ConvergenceError(
            f"{int(converged.sum())}/{cfg.nev} modes converged after {iterations} iterations "
            f"(residuals {np.array2string(sol.residuals, precision=2)})",
            partial=sol,
        )
    return sol


def dense_oracle(S, T, kernel_tol: float = 1e-12, max_dim: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of T x = mu S x, mu descending.

    Works on range(S): eigenvectors of S with eigenvalue below
    ``kernel_tol * max`` are discarded (they are also in the kernel of T for
    our pencils).  For SPD S this equals the Cholesky reduction.
    """
    S = S.toarray() if sps.issparse(S) else np.asarray(S, dtype=float)
    T = T.toarray() if sps.issparse(T) else np.asarray(T, dtype=float)
    if S.shape[0] > max_dim:
        raise ValueError(f"dense oracle limited to dim <= {max_dim}, got {S.shape[0]}")
    try:
        L = sla.cholesky(S, lower=True)
        Linv_T = sla.solve_triangular(L, T, lower=True)
        C = sla.solve_triangular(L, Linv_T.T, lower=True)
        w, Y = np.linalg.eigh(0.5 * (C + C.T))
        X = sla.solve_triangular(L.T, Y, lower=False)
    except np.linalg.LinAlgError:
        s, V = np.linalg.eigh(S)
        if s.min() < -1e-10 * s.max():
            raise NotSPDError("S is indefinite")
        keep = s > kernel_tol * s.max()
        Z = V[:, keep] / np.sqrt(s[keep])  # Z^T S Z = I
        C = Z.T @ T @ Z
        w, Y = np.linalg.eigh(0.5 * (C + C.T))
        X = Z @ Y
    order = np.argsort(w)[::-1]
    return w[order], X[:, order]


def clusters(lam: np.ndarray, cluster_tol: float = 1e-6) -> list[list[int]]:
    """Group consecutive indices whose values differ by at most
    ``cluster_tol * max(1, value)``."""
    groups: list[list[int]] = []
    for i, value in enumerate(lam):
        if groups and abs(value - lam[groups[-1][-1]]) <= cluster_tol * max(1.0, abs(value)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups
