"""Solver-agnostic conic layer for the SCA subproblems.

A :class:`ConicProblem` holds a real decision vector (Hermitian matrix
variables embedded via :func:`embed_hermitian`), a linear objective with
optional concave-log terms (hypographs of log of affine expressions), PSD
constraints given as Hermitian-valued affine maps, and linear rows/bounds.

Complex PSD blocks are realified with the [Re -Im; Im Re] embedding before
reaching the backend, which only ever sees real symmetric cones plus
three-dimensional exponential cones for the log terms. The default backend is
the Clarabel interior-point solver; solutions are re-verified here (PSD and
linear residuals are measured, not trusted).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

import clarabel
import numpy as np
from scipy import sparse

from .config import SolverOptions

LN2 = float(np.log(2.0))


# -- Hermitian <-> real embeddings -------------------------------------------

@lru_cache(maxsize=None)
def embed_hermitian(n: int):
    """Real-coordinate layout of an n x n Hermitian matrix (n^2 reals).

    Order: n diagonal entries, then for each upper off-diagonal (i < j,
    row-major) the pair (Re, Im). The companion helpers below realize the
    bijection and the induced 2n x 2n real-symmetric embedding whose
    eigenvalues are the doubled multiset of the complex ones.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return _HermLayout(n=n, pairs=tuple(pairs))


@dataclass(frozen=True)
class _HermLayout:
    n: int
    pairs: tuple

    @property
    def size(self) -> int:
        return self.n * self.n

    def to_reals(self, a: np.ndarray) -> np.ndarray:
        x = np.empty(self.size)
        x[: self.n] = np.real(np.diag(a))
        for t, (i, j) in enumerate(self.pairs):
            x[self.n + 2 * t] = a[i, j].real
            x[self.n + 2 * t + 1] = a[i, j].imag
        return x

    def from_reals(self, x: np.ndarray) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=complex)
        a[np.diag_indices(self.n)] = x[: self.n]
        for t, (i, j) in enumerate(self.pairs):
            a[i, j] = x[self.n + 2 * t] + 1j * x[self.n + 2 * t + 1]
            a[j, i] = a[i, j].conjugate()
        return a

    def functional(self, c: np.ndarray) -> np.ndarray:
        """Coefficients f with f @ x = Tr(C^H A(x)) = Tr(C A(x)) for Hermitian C."""
        f = np.empty(self.size)
        f[: self.n] = np.real(np.diag(c))
        for t, (i, j) in enumerate(self.pairs):
            f[self.n + 2 * t] = 2.0 * c[i, j].real
            f[self.n + 2 * t + 1] = 2.0 * c[i, j].imag
        return f

    def basis(self) -> np.ndarray:
        """Stack of Hermitian basis matrices matching the coordinate order."""
        mats = np.zeros((self.size, self.n, self.n), dtype=complex)
        for i in range(self.n):
            mats[i, i, i] = 1.0
        for t, (i, j) in enumerate(self.pairs):
            mats[self.n + 2 * t, i, j] = 1.0
            mats[self.n + 2 * t, j, i] = 1.0
            mats[self.n + 2 * t + 1, i, j] = 1j
            mats[self.n + 2 * t + 1, j, i] = -1j
        return mats


def real_embedding(a: np.ndarray) -> np.ndarray:
    """[Re A, -Im A; Im A, Re A]; symmetric iff A Hermitian, PSD iff A PSD."""
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


@lru_cache(maxsize=None)
def _svec_index(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangular column-major svec indices and sqrt-2 scaling for m x m."""
    rows, cols, scale = [], [], []
    for j in range(m):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
            scale.append(1.0 if i == j else np.sqrt(2.0))
    return np.array(rows), np.array(cols), np.array(scale)


def svec_embed(mats: np.ndarray, dim: int) -> np.ndarray:
    """Scaled-triangle vectorization of the real embedding of Hermitian mats.

    ``mats`` has shape (..., dim, dim); the result (...,(2 dim)(2 dim + 1)/2)
    is inner-product preserving: svec(X) @ svec(Y) = Tr(R(X) R(Y)).
    """
    mats = np.asarray(mats, dtype=complex)
    single = mats.ndim == 2
    if single:
        mats = mats[None]
    k = mats.shape[0]
    two = 2 * dim
    emb = np.empty((k, two, two))
    emb[:, :dim, :dim] = mats.real
    emb[:, :dim, dim:] = -mats.imag
    emb[:, dim:, :dim] = mats.imag
    emb[:, dim:, dim:] = mats.real
    rows, cols, scale = _svec_index(two)
    out = emb[:, rows, cols] * scale
    return out[0] if single else out


# -- problem description ------------------------------------------------------

@dataclass
class PsdBlock:
    """Affine Hermitian-valued map required to be PSD.

    value(x) = const + sum_t x[var_idx[t]] * coeffs[t]; all coefficient
    matrices are Hermitian so the map is Hermitian for every real x.
    """

    dim: int
    const: np.ndarray
    var_idx: np.ndarray
    coeffs: np.ndarray
    label: str = ""

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.astype(complex).copy()
        if len(self.var_idx):
            out += np.einsum("t,tij->ij", x[self.var_idx], self.coeffs)
        return out


@dataclass
class LogTerm:
    """Objective contribution -weight * ln(lin @ x + offset), weight > 0."""

    weight: float
    lin: np.ndarray
    offset: float


@dataclass
class ConicProblem:
    n_vars: int
    c: np.ndarray
    c0: float = 0.0
    psd_blocks: list[PsdBlock] = field(default_factory=list)
    log_terms: list[LogTerm] = field(default_factory=list)
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.c @ x) + self.c0
        for term in self.log_terms:
            arg = float(term.lin @ x) + term.offset
            if arg <= 0:
                return np.inf
            val -= term.weight * np.log(arg)
        return val

    def max_psd_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for block in self.psd_blocks:
            w = np.linalg.eigvalsh(block.value(x))[0]
            worst = max(worst, -float(w))
        return worst

    def max_linear_residual(self, x: np.ndarray) -> float:
        worst = 0.0
        if self.a_eq is not None and len(self.a_eq):
            worst = max(worst, float(np.max(np.abs(self.a_eq @ x - self.b_eq))))
        if self.a_ub is not None and len(self.a_ub):
            worst = max(worst, float(np.max(self.a_ub @ x - self.b_ub, initial=0.0)))
        if self.lb is not None:
            worst = max(worst, float(np.max(self.lb - x, initial=0.0)))
        if self.ub is not None:
            worst = max(worst, float(np.max(x - self.ub, initial=0.0)))
        return worst


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | max_iter | numerical
    x: np.ndarray | None
    objective: float
    psd_violation: float
    lin_residual: float
    iterations: int
    solve_time: float
    raw_status: str

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",  # downgraded below if measured residuals exceed spec
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "numerical",
    "AlmostDualInfeasible": "numerical",
    "MaxIterations": "max_iter",
    "MaxTime": "max_iter",
}

RESIDUAL_CAP = 1e-7  # status 'optimal' promises residuals at or below this


def solve(problem: ConicProblem, options: SolverOptions | None = None) -> ConicSolution:
    """Solve via Clarabel; measure residuals and report an honest status."""
    options = options or SolverOptions()
    n = problem.n_vars
    n_logs = len(problem.log_terms)
    n_ext = n + n_logs

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    cones: list = []

    def add_row(vec_ext: np.ndarray, b: float) -> None:
        rows.append(vec_ext)
        rhs.append(b)

    n_eq = 0
    if problem.a_eq is not None and len(problem.a_eq):
        for row, b in zip(problem.a_eq, problem.b_eq):
            add_row(np.concatenate([row, np.zeros(n_logs)]), float(b))
            n_eq += 1
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))

    n_ineq = 0
    if problem.a_ub is not None and len(problem.a_ub):
        for row, b in zip(problem.a_ub, problem.b_ub):
            add_row(np.concatenate([row, np.zeros(n_logs)]), float(b))
            n_ineq += 1
    for bound, sign in ((problem.lb, -1.0), (problem.ub, 1.0)):
        if bound is None:
            continue
        for i, val in enumerate(bound):
            if np.isfinite(val):
                row = np.zeros(n_ext)
                row[i] = sign
                add_row(row, sign * float(val))
                n_ineq += 1
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))

    for block in problem.psd_blocks:
        two = 2 * block.dim
        svec_len = two * (two + 1) // 2
        const_svec = svec_embed(block.const, block.dim)
        coeff_svec = (
            svec_embed(block.coeffs, block.dim)
            if len(block.var_idx)
            else np.zeros((0, svec_len))
        )
        block_rows = np.zeros((svec_len, n_ext))
        for t, idx in enumerate(block.var_idx):
            block_rows[:, idx] -= coeff_svec[t]
        rows.extend(block_rows)
        rhs.extend(const_svec)
        cones.append(clarabel.PSDTriangleConeT(two))

    for t, term in enumerate(problem.log_terms):
        row_r = np.zeros(n_ext)
        row_r[n + t] = -1.0
        add_row(row_r, 0.0)
        add_row(np.zeros(n_ext), 1.0)
        row_u = np.concatenate([-term.lin, np.zeros(n_logs)])
        add_row(row_u, term.offset)
        cones.append(clarabel.ExponentialConeT())

    a_mat = sparse.csc_matrix(np.vstack(rows)) if rows else sparse.csc_matrix((0, n_ext))
    b_vec = np.array(rhs)
    c_ext = np.concatenate([problem.c, [-term.weight for term in problem.log_terms]])
    p_mat = sparse.csc_matrix((n_ext, n_ext))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = options.feas_tol
    settings.tol_gap_abs = options.gap_tol
    settings.tol_gap_rel = options.gap_tol
    settings.max_iter = options.max_iter

    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(p_mat, c_ext, a_mat, b_vec, cones, settings)
    sol = solver.solve()
    elapsed = time.perf_counter() - t0

    raw = str(sol.status)
    status = _STATUS_MAP.get(raw, "numerical")
    x = np.asarray(sol.x)[:n] if sol.x is not None else None

    if x is None or status == "infeasible":
        return ConicSolution(
            status="infeasible" if status == "infeasible" else "numerical",
            x=None,
            objective=np.nan,
            psd_violation=np.nan,
            lin_residual=np.nan,
            iterations=int(sol.iterations),
            solve_time=elapsed,
            raw_status=raw,
        )

    psd_viol = problem.max_psd_violation(x)
    lin_res = problem.max_linear_residual(x)
    if status == "optimal" and max(psd_viol, lin_res) > RESIDUAL_CAP:
        status = "numerical"
    return ConicSolution(
        status=status,
        x=x,
        objective=problem.objective_value(x),
        psd_violation=psd_viol,
        lin_residual=lin_res,
        iterations=int(sol.iterations),
        solve_time=elapsed,
        raw_status=raw,
    )


def dump_problem(problem: ConicProblem, path: str) -> None:
    """Text dump of a problem for external-solver debugging (documented schema)."""

    def c2l(a: np.ndarray):
        a = np.asarray(a)
        return {"re": a.real.tolist(), "im": a.imag.tolist()}

    payload = {
        "n_vars": problem.n_vars,
        "objective": {"linear": problem.c.tolist(), "constant": problem.c0},
        "log_terms": [
            {"weight": t.weight, "lin": t.lin.tolist(), "offset": t.offset}
            for t in problem.log_terms
        ],
        "psd_blocks": [
            {
                "label": b.label,
                "dim": b.dim,
                "const": c2l(b.const),
                "var_idx": np.asarray(b.var_idx).tolist(),
                "coeffs": [c2l(m) for m in b.coeffs],
            }
            for b in problem.psd_blocks
        ],
        "a_eq": None if problem.a_eq is None else problem.a_eq.tolist(),
        "b_eq": None if problem.b_eq is None else np.asarray(problem.b_eq).tolist(),
        "a_ub": None if problem.a_ub is None else problem.a_ub.tolist(),
        "b_ub": None if problem.b_ub is None else np.asarray(problem.b_ub).tolist(),
        "lb": None if problem.lb is None else np.asarray(problem.lb).tolist(),
        "ub": None if problem.ub is None else np.asarray(problem.ub).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
