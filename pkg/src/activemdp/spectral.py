"""Spectral quantities of finite Markov chains.

The SLEM (second-largest eigenvalue modulus) of an ergodic chain ``P`` with
stationary distribution ``eta`` equals the spectral norm

    || D^{1/2} P D^{-1/2} - sqrt(eta) sqrt(eta)^T ||_2,     D = diag(eta).

For reversible chains the matrix inside the norm is symmetric and its
eigenvalues are those of ``P`` with the unit eigenvalue deflated, so the two
routes below (symmetric eigensolver vs. spectral norm) must agree.
"""

import numpy as np

from .errors import ZeroStationaryMass

__all__ = [
    "jacobi_eigenvalues",
    "symmetrize",
    "affine_norm_matrix",
    "slem_of",
    "slem_reversible",
    "is_reversible",
    "time_reversal",
    "pseudo_spectral_gap",
]

_JACOBI_MAX_DIM = 64


def jacobi_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix. Only the symmetric part is used.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol * ||a||_F``.
    max_sweeps : int
        Hard cap on the number of cyclic sweeps.

    Returns
    -------
    ndarray
        Eigenvalues in ascending order.
    """
    a = np.array(a, dtype=float)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(a[iu] ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    return np.sort(a.diagonal())


def _symmetric_eigenvalues(a):
    if a.shape[0] <= _JACOBI_MAX_DIM:
        return jacobi_eigenvalues(a)
    return np.linalg.eigvalsh(0.5 * (a + a.T))


def _check_mass(eta):
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0.0):
        raise ZeroStationaryMass(f"stationary distribution has zero mass: min eta = {eta.min():.3g}")
    return eta


def symmetrize(P, eta):
    """Return ``D^{1/2} P D^{-1/2}``."""
    eta = _check_mass(eta)
    r = np.sqrt(eta)
    return (r[:, None] * np.asarray(P, dtype=float)) / r[None, :]


def affine_norm_matrix(P, eta):
    """The matrix ``D^{1/2} P D^{-1/2} - sqrt(eta) sqrt(eta)^T`` whose 2-norm is the SLEM."""
    r = np.sqrt(_check_mass(eta))
    return symmetrize(P, eta) - np.outer(r, r)


def slem_of(P, eta):
    """Spectral-norm form of the SLEM, valid for any irreducible ``P``.

    For non-reversible chains this is an upper bound on the eigenvalue SLEM
    and is used as the mixing proxy throughout the package.
    """
    m = affine_norm_matrix(P, eta)
    if m.shape[0] == 1:
        return 0.0
    return float(np.linalg.norm(m, 2))


def slem_reversible(P, eta):
    """Eigenvalue SLEM of a reversible chain via the symmetric eigensolver.

    The symmetrized kernel has a unit eigenvalue with eigenvector
    ``sqrt(eta)``; that single eigenvalue is removed and the largest modulus
    among the rest is returned.
    """
    A = symmetrize(P, eta)
    if A.shape[0] == 1:
        return 0.0
    ev = _symmetric_eigenvalues(A)
    drop = int(np.argmin(np.abs(ev - 1.0)))
    rest = np.delete(ev, drop)
    return float(np.max(np.abs(rest)))


def is_reversible(P, eta, tol=1e-8):
    """Detailed balance ``eta(s) P(s'|s) == eta(s') P(s|s')`` within ``tol``."""
    flow = np.asarray(eta, dtype=float)[:, None] * np.asarray(P, dtype=float)
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def time_reversal(P, eta):
    """Time-reversed kernel ``D^{-1} P^T D``."""
    eta = _check_mass(eta)
    return (np.asarray(P, dtype=float).T * eta[None, :]) / eta[:, None]


def pseudo_spectral_gap(P, eta, k_max=10):
    """Pseudo-spectral gap ``max_{1<=k<=k_max} gap(Phat^k P^k) / k``.

    ``Phat^k P^k`` is self-adjoint in L2(eta) with nonnegative spectrum, so
    its gap is one minus its second-largest eigenvalue modulus.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    P = np.asarray(P, dtype=float)
    eta = _check_mass(eta)
    if P.shape[0] == 1:
        return 1.0
    Phat = time_reversal(P, eta)
    best = 0.0
    Pk = np.eye(P.shape[0])
    Phk = np.eye(P.shape[0])
    for k in range(1, k_max + 1):
        Pk = Pk @ P
        Phk = Phk @ Phat
        prod = Phk @ Pk
        gap = 1.0 - slem_reversible(prod, eta)
        best = max(best, gap / k)
    return float(best)
