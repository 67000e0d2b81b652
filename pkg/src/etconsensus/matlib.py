"""Dense linear-algebra kernel.

Eigenvalues, matrix exponentials, Kronecker products, and the Lyapunov /
continuous algebraic Riccati solvers used by the gain design.  Everything
works on plain float64 ``numpy`` arrays validated at the boundary; matrices
are small (dimension well under 100) so direct methods are used throughout.

Eigenvalues and matrix exponentials are delegated to LAPACK (Hessenberg
reduction + shifted QR) and SciPy (scaling-and-squaring Pade) respectively;
the Lyapunov and Riccati solvers are implemented here on top of them.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError, PreconditionError

# Default tolerances; every solver accepts per-call overrides.
LYAPUNOV_RESIDUAL_RTOL = 1e-9
CARE_ITERATION_TOL = 1e-10
CARE_RESIDUAL_TOL = 1e-8
CARE_MAX_ITER = 50
STABILIZABLE_RTOL = 1e-9


def as_matrix(values, rows=None, cols=None, name="matrix") -> np.ndarray:
    """Validate and return a 2-D float64 array.

    Rejects non-finite entries and, when ``rows``/``cols`` are given,
    mismatched shapes.  Always returns a fresh array.
    """
    m = np.array(values, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {m.shape[1]}")
    if not np.isfinite(m).all():
        raise DimensionError(f"{name} contains non-finite entries")
    return m


def require_square(m: np.ndarray, name="matrix") -> np.ndarray:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def eigenvalues(m, name="matrix") -> np.ndarray:
    """All eigenvalues of a square matrix, with algebraic multiplicity.

    Returns a 1-D complex array in no particular order.
    """
    m = np.asarray(m, dtype=complex if np.iscomplexobj(m) else float)
    require_square(m, name)
    if m.shape[0] < 1:
        raise DimensionError(f"{name} must have dimension >= 1")
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed for {name}: {exc}") from exc


def spectral_abscissa(m) -> float:
    """Maximum real part over the spectrum of ``m``."""
    return float(eigenvalues(m).real.max())


def mat_exp(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(m * t)``."""
    m = np.asarray(m, dtype=float)
    require_square(m, "matrix exponential input")
    if not np.isfinite(t):
        raise DimensionError("scale t must be finite")
    return scipy.linalg.expm(m * t)


def kron(a, b) -> np.ndarray:
    """Kronecker product with the standard block layout."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("kron expects 2-D operands")
    return np.kron(a, b)


def is_symmetric(m: np.ndarray, rtol: float = 1e-10) -> bool:
    scale = max(1.0, float(np.abs(m).max()))
    return bool(np.abs(m - m.T).max() <= rtol * scale)


def solve_lyapunov(a, q, *, residual_rtol: float = LYAPUNOV_RESIDUAL_RTOL) -> np.ndarray:
    """Solve ``a.T X + X a + q = 0`` for symmetric ``X``.

    ``a`` must be Hurwitz and ``q`` symmetric.  The equation is vectorized
    through a Kronecker product and solved directly, which is exact at the
    dimensions used here (n**2 unknowns).
    """
    a = as_matrix(a, name="a")
    require_square(a, "a")
    q = as_matrix(q, rows=a.shape[0], cols=a.shape[0], name="q")
    if not is_symmetric(q):
        raise PreconditionError("q must be symmetric")
    if spectral_abscissa(a) >= 0.0:
        raise PreconditionError("a must be Hurwitz for a unique Lyapunov solution")
    n = a.shape[0]
    coeff = np.kron(np.eye(n), a.T) + np.kron(a.T, np.eye(n))
    try:
        vec = np.linalg.solve(coeff, -q.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Lyapunov system: {exc}") from exc
    x = vec.reshape((n, n), order="F")
    x = 0.5 * (x + x.T)
    residual = np.linalg.norm(a.T @ x + x @ a + q)
    if residual > residual_rtol * max(np.linalg.norm(q), 1e-30):
        raise NumericalError(f"Lyapunov residual {residual:.3e} exceeds tolerance")
    return x


def stabilizable(a, b, *, rtol: float = STABILIZABLE_RTOL) -> bool:
    """PBH test: every closed-right-half-plane mode must be controllable.

    ``True`` iff for each eigenvalue ``lam`` of ``a`` with ``Re(lam) >= 0``
    the matrix ``[a - lam I, b]`` has full row rank.
    """
    a = as_matrix(a, name="a")
    require_square(a, "a")
    b = as_matrix(b, rows=a.shape[0], name="b")
    n = a.shape[0]
    for lam in eigenvalues(a):
        if lam.real < 0.0:
            continue
        pencil = np.hstack([a - lam * np.eye(n), b]).astype(complex)
        svals = np.linalg.svd(pencil, compute_uv=False)
        if svals[-1] <= rtol * svals[0]:
            return False
    return True


def care_residual(a, b, p) -> np.ndarray:
    """Residual of ``a.T P + P a - P b b.T P + I``."""
    n = a.shape[0]
    return a.T @ p + p @ a - p @ b @ b.T @ p + np.eye(n)


def _stabilizing_seed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Initial gain K0 with ``a - b K0`` Hurwitz.

    For unstable ``a`` a spectral shift is applied: with beta exceeding the
    spectral radius, the shifted Gramian-like solution of
    ``(a + beta I) Z + Z (a + beta I).T = 2 b b.T`` yields the stabilizing
    gain ``K0 = b.T pinv(Z)``.
    """
    n, m = a.shape[0], b.shape[1]
    if spectral_abscissa(a) < 0.0:
        return np.zeros((m, n))
    beta = float(np.linalg.norm(a, 2)) + 1.0
    z = solve_lyapunov(-(a + beta * np.eye(n)).T, 2.0 * b @ b.T)
    k0 = b.T @ np.linalg.pinv(z, rcond=1e-12)
    if spectral_abscissa(a - b @ k0) >= 0.0:
        raise NumericalError("failed to construct a stabilizing initial gain")
    return k0


def solve_care(
    a,
    b,
    *,
    iteration_tol: float = CARE_ITERATION_TOL,
    residual_tol: float = CARE_RESIDUAL_TOL,
    max_iter: int = CARE_MAX_ITER,
) -> np.ndarray:
    """Stabilizing solution of ``a.T P + P a - P b b.T P + I = 0``.

    Newton iteration: starting from a stabilizing gain, each step solves one
    Lyapunov equation and updates the gain, converging quadratically to the
    nonnegative-definite solution with ``a - b b.T P`` Hurwitz.

    Raises ``PreconditionError`` if ``(a, b)`` is not stabilizable and
    ``NumericalError`` (with the iteration count) on stalled convergence.
    """
    a = as_matrix(a, name="a")
    require_square(a, "a")
    b = as_matrix(b, rows=a.shape[0], name="b")
    if not stabilizable(a, b):
        raise PreconditionError("(a, b) is not stabilizable")
    n = a.shape[0]
    gain = _stabilizing_seed(a, b)
    p = np.zeros((n, n))
    for iteration in range(1, max_iter + 1):
        a_cl = a - b @ gain
        p = solve_lyapunov(a_cl, np.eye(n) + gain.T @ gain)
        gain = b.T @ p
        if np.linalg.norm(care_residual(a, b, p)) <= iteration_tol:
            break
    residual = float(np.linalg.norm(care_residual(a, b, p)))
    if residual > residual_tol:
        raise NumericalError(
            f"Riccati iteration stalled after {iteration} steps "
            f"(residual {residual:.3e} > {residual_tol:.1e})"
        )
    if spectral_abscissa(a - b @ b.T @ p) >= 0.0:
        raise NumericalError("Riccati solution is not stabilizing")
    return 0.5 * (p + p.T)
