"""
Eigenvalues and singular values by Jacobi rotations.

Both routines sweep over all index pairs in round-robin order: each round
holds n/2 disjoint pairs, so the rotations of one round commute and are
applied together as vectorized row/column updates.
"""
import numpy as np
from scipy.linalg import qr

from ..errors import ContractError, DimensionError, NumericError

MAX_SWEEPS = 100
TOL = 1e-12


def _as_array(m):
    return np.array(getattr(m, "data", m), dtype=np.float64)


def _round_robin(n):
    """Rounds of disjoint index pairs covering every pair exactly once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _rotation(app, aqq, apq):
    """Cosine and sine that zero the (p, q) entry; identity where it is already 0."""
    c = np.ones_like(apq)
    s = np.zeros_like(apq)
    nz = apq != 0
    theta = (aqq[nz] - app[nz]) / (2.0 * apq[nz])
    t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    c[nz] = 1.0 / np.sqrt(t * t + 1.0)
    s[nz] = t * c[nz]
    return c, s


def spectrum(m, tol=TOL, max_sweeps=MAX_SWEEPS):
    """
    Eigenvalues of a symmetric matrix, in descending order.

    Parameters
    ----------
    m : array-like or Tensor, shape (n, n)
        Symmetric to within 1e-9 (absolute, scaled by the largest entry).
    tol : float
        Convergence threshold on the off-diagonal Frobenius norm relative to
        the full Frobenius norm.
    max_sweeps : int
        Iteration cap; exceeding it raises :class:`NumericError`.
    """
    a = _as_array(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"spectrum needs a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("spectrum input contains non-finite values")
    scale = max(1.0, np.abs(a).max(initial=0.0))
    if np.abs(a - a.T).max(initial=0.0) > 1e-9 * scale:
        raise ContractError("spectrum input is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a[0].copy()
    rounds = _round_robin(n)
    total = np.sqrt(np.sum(a * a))
    for _ in range(max_sweeps):
        # summed directly: total - diagonal would cancel down to ~1e-8 relative
        off = np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2))
        if off <= tol * total:
            return np.sort(np.diag(a))[::-1]
        for p, q in rounds:
            c, s = _rotation(a[p, p], a[q, q], a[p, q])
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
    raise NumericError(f"Jacobi eigenvalue iteration did not converge in {max_sweeps} sweeps")


def singular_values(m, tol=TOL, max_sweeps=MAX_SWEEPS):
    """
    Singular values in descending order via one-sided (Hestenes) Jacobi.

    A column-pivoted Householder QR first shrinks the long side, and the
    rotations then act on the rows of the square triangular factor, which
    share the singular values of ``m`` and need fewer, shorter sweeps.
    """
    u = _as_array(m)
    if u.ndim != 2:
        raise DimensionError(f"singular_values needs a matrix, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise NumericError("singular_values input contains non-finite values")
    if u.shape[0] < u.shape[1]:
        u = u.T
    n = u.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(u[:, 0])])
    # rows of R are orthogonalized; kept contiguous for the gathers below
    v = np.ascontiguousarray(qr(u, mode="r", pivoting=True)[0][:n])
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            vp, vq = v[p], v[q]
            alpha = np.einsum("ij,ij->i", vp, vp)
            beta = np.einsum("ij,ij->i", vq, vq)
            gamma = np.einsum("ij,ij->i", vp, vq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            v[p] = c[:, None] * vp - s[:, None] * vq
            v[q] = s[:, None] * vp + c[:, None] * vq
        if not rotated:
            return np.sort(np.sqrt(np.einsum("ij,ij->i", v, v)))[::-1]
    raise NumericError(f"one-sided Jacobi SVD did not converge in {max_sweeps} sweeps")


def nuclear_norm(m):
    """Sum of singular values."""
    return float(np.sum(singular_values(m)))
