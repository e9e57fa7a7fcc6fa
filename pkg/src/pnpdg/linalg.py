"""Linear-solve contracts for the split subsystems.

All five subsystems of a time step are solved here: the (possibly
singular) potential and pressure-increment systems are augmented with a
scalar mean constraint, the two concentration systems optionally carry
the same constraint (which realizes the zero-mean trial space and hence
exact mass bookkeeping), and the velocity systems are plain square
solves.  Sparse direct factorization is the default; CG/GMRES-type
iterations with diagonal preconditioning are available behind config.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverFailure(Exception):
    """Linear solver breakdown or non-convergence; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class LinearSolveReport:
    method: str              # "direct", "cg", "gmres", "minres"
    iterations: object       # int or "direct"
    residual: float
    wall_time: float
    size: int


@dataclass
class SolverOptions:
    method: str = "direct"   # "direct" | "iterative"
    tol: float = 1e-10
    maxiter: int = 5000
    verify: bool = True      # recompute the residual by multiplication


def _residual(A, x, b):
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return float(np.linalg.norm(A @ x))
    return float(np.linalg.norm(A @ x - b) / nb)


def _finish(A, x, b, method, iterations, t0, opts):
    res = _residual(A, x, b) if opts.verify else np.nan
    report = LinearSolveReport(method, iterations, res,
                               time.perf_counter() - t0, A.shape[0])
    if opts.verify and (not np.isfinite(res) or res > max(opts.tol, 1e-9)):
        raise SolverFailure(
            f"solver residual {res:.3e} exceeds tolerance {opts.tol:.1e}", report)
    return x, report


def solve_spd(A, b, opts=None):
    """Solve a symmetric system (possibly with a trailing multiplier row)."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    A = A.tocsc()
    if opts.method == "direct":
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverFailure(f"sparse factorization failed: {exc}") from exc
        return _finish(A, x, b, "direct", "direct", t0, opts)
    diag = A.diagonal()
    diag = np.where(np.abs(diag) > 0, diag, 1.0)
    precond = spla.LinearOperator(A.shape, lambda v: v / diag)
    x, info = spla.minres(A, b, rtol=opts.tol, maxiter=opts.maxiter, M=precond)
    if info != 0:
        raise SolverFailure(f"minres did not converge (info={info})")
    return _finish(A, x, b, "minres", info if info else opts.maxiter, t0, opts)


def solve_general(A, b, opts=None):
    """Solve a square nonsymmetric system."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    A = A.tocsc()
    if opts.method == "direct":
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverFailure(f"sparse factorization failed: {exc}") from exc
        return _finish(A, x, b, "direct", "direct", t0, opts)
    diag = A.diagonal()
    diag = np.where(np.abs(diag) > 0, diag, 1.0)
    precond = spla.LinearOperator(A.shape, lambda v: v / diag)
    x, info = spla.gmres(A, b, rtol=opts.tol, atol=0.0, maxiter=opts.maxiter,
                         M=precond, restart=100)
    if info != 0:
        raise SolverFailure(f"gmres did not converge (info={info})")
    return _finish(A, x, b, "gmres", info if info else opts.maxiter, t0, opts)


def augment_zero_mean(A, mass_vec):
    """Border A with a mean-value constraint row and multiplier column."""
    m = sp.csr_matrix(mass_vec.reshape(1, -1))
    return sp.bmat([[A, m.T], [m, None]], format="csc")


class PrefactoredSolver:
    """Reusable LU of a constant (optionally mean-constrained) system."""

    def __init__(self, A, mass_vec=None, opts=None):
        self.opts = opts or SolverOptions()
        self.constrained = mass_vec is not None
        self.n = A.shape[0]
        self.A = augment_zero_mean(A, mass_vec) if self.constrained else A.tocsc()
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverFailure(f"sparse factorization failed: {exc}") from exc

    def solve(self, b):
        t0 = time.perf_counter()
        rhs = np.concatenate([b, [0.0]]) if self.constrained else b
        x = self.lu.solve(rhs)
        _, report = _finish(self.A, x, rhs, "direct", "direct", t0, self.opts)
        return (x[:-1] if self.constrained else x), report


def solve_constrained(A, b, mass_vec, symmetric, opts=None):
    """One-shot solve with the zero-mean multiplier; returns the field part."""
    opts = opts or SolverOptions()
    aug = augment_zero_mean(A, mass_vec)
    rhs = np.concatenate([b, [0.0]])
    solver = solve_spd if symmetric else solve_general
    if opts.method == "iterative" and symmetric:
        # the bordered system is indefinite; minres still applies
        x, report = solve_spd(aug, rhs, opts)
    else:
        x, report = solver(aug, rhs, opts)
    return x[:-1], report


def export_matrix_market(path, A, b=None):
    """Debug export of an assembled system in 17-digit text."""
    from scipy.io import mmwrite

    mmwrite(str(path), A.tocoo(), precision=17)
    if b is not None:
        np.savetxt(str(path) + ".rhs.txt", b, fmt="%.17g")
