"""Dense revised simplex for small standard-form LPs.

Solves ``min c^T x  s.t.  A x = b, x >= 0`` with Bland's anti-cycling rule.
Phase I runs once per constraint set; afterwards any number of objectives
can be minimized, each starting from the last optimal basis (the feasible
region does not change, so the basis stays primal feasible).
"""

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible

__all__ = ["LpSolution", "SimplexLP", "vertex_enumeration_min"]


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    y: np.ndarray
    basis: np.ndarray
    iterations: int
    duality_gap: float
    dual_infeasibility: float


class SimplexLP:
    """Feasible region ``{x >= 0 : A x = b}`` prepared for repeated solves.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    tol : float
        Pivot and reduced-cost tolerance.

    Raises
    ------
    Infeasible
        If phase I cannot drive the artificial variables to zero.
    """

    def __init__(self, A, b, tol=1e-11, max_iters=50000):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        neg = b < 0
        A[neg] *= -1.0
        b[neg] *= -1.0
        self.tol = tol
        self.max_iters = max_iters
        self.n = A.shape[1]
        m = A.shape[0]
        # phase I on [A I]
        Aa = np.hstack([A, np.eye(m)])
        ca = np.r_[np.zeros(self.n), np.ones(m)]
        basis = np.arange(self.n, self.n + m)
        basis, _ = self._iterate(Aa, b, ca, basis)
        xb = np.linalg.solve(Aa[:, basis], b)
        infeas = float(np.sum(xb[basis >= self.n]))
        if infeas > 1e-9 * max(1.0, np.abs(b).max()):
            raise Infeasible(f"constraint set is empty (phase I residual {infeas:.3g})")
        A, b, basis = self._purge_artificials(A, b, Aa, basis)
        self.A = A
        self.b = b
        self.basis = basis

    def _purge_artificials(self, A, b, Aa, basis):
        n = self.n
        while np.any(basis >= n):
            r = int(np.flatnonzero(basis >= n)[0])
            B = Aa[:, basis]
            row = np.linalg.solve(B.T, np.eye(len(basis))[r]) @ A
            cand = [j for j in np.flatnonzero(np.abs(row) > 1e-9) if j not in set(basis)]
            if cand:
                basis = basis.copy()
                basis[r] = cand[0]
            else:
                # redundant equality; drop its row and the artificial
                art = basis[r] - n
                keep = np.ones(A.shape[0], dtype=bool)
                keep[art] = False
                A, b = A[keep], b[keep]
                m = A.shape[0]
                old_to_new = np.cumsum(keep) - 1
                basis = np.delete(basis, r)
                basis = np.array([j if j < n else n + old_to_new[j - n] for j in basis], dtype=int)
                Aa = np.hstack([A, np.eye(m)])
                continue
        return A, b, np.array(basis, dtype=int)

    def _iterate(self, A, b, c, basis):
        tol = self.tol
        basis = np.array(basis, dtype=int)
        it = 0
        for it in range(self.max_iters):
            B = A[:, basis]
            xb = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
            d = c - A.T @ y
            d[basis] = 0.0
            enter = np.flatnonzero(d < -tol)
            if enter.size == 0:
                return basis, it
            j = int(enter[0])
            u = np.linalg.solve(B, A[:, j])
            pos = u > tol
            if not np.any(pos):
                raise RuntimeError("LP is unbounded")
            ratios = np.full(u.shape, np.inf)
            ratios[pos] = np.maximum(xb[pos], 0.0) / u[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-14)
            leave = int(ties[np.argmin(basis[ties])])
            basis[leave] = j
        raise RuntimeError(f"simplex did not terminate in {self.max_iters} iterations")

    def minimize(self, c, basis=None) -> LpSolution:
        """Minimize ``c^T x`` over the prepared region.

        ``basis`` defaults to the last optimal basis (or the phase-I basis).
        """
        c = np.asarray(c, dtype=float)
        start = self.basis if basis is None else np.asarray(basis, dtype=int)
        # pivot on a unit-scale cost so the absolute tolerances stay meaningful
        scale = float(np.abs(c).max())
        basis, its = self._iterate(self.A, self.b, c / scale if scale > 0 else c, start)
        B = self.A[:, basis]
        xb = np.linalg.solve(B, self.b)
        x = np.zeros(self.n)
        x[basis] = np.maximum(xb, 0.0)
        y = np.linalg.solve(B.T, c[basis])
        d = c - self.A.T @ y
        self.basis = basis
        obj = float(c @ x)
        return LpSolution(
            x=x,
            objective=obj,
            y=y,
            basis=basis.copy(),
            iterations=its,
            duality_gap=abs(obj - float(self.b @ y)),
            dual_infeasibility=float(max(0.0, -d.min())),
        )


def vertex_enumeration_min(c, A, b, tol=1e-9):
    """Brute-force LP minimum by enumerating every basic feasible solution.

    Redundant rows are removed with a rank-revealing QR first. Intended for
    tiny problems only (it visits all ``C(n, m)`` column subsets).

    Returns
    -------
    value : float
    x : ndarray
    """
    from itertools import combinations

    from scipy.linalg import qr

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    _, R, piv = qr(A.T, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag.max()))
    rows = np.sort(piv[:rank])
    A, b = A[rows], b[rows]
    m, n = A.shape
    subsets = np.array(list(combinations(range(n), m)), dtype=int)
    Bs = A[:, subsets].transpose(1, 0, 2)
    det = np.abs(np.linalg.det(Bs))
    ok = det > 1e-12
    Bs, subsets = Bs[ok], subsets[ok]
    xb = np.linalg.solve(Bs, np.broadcast_to(b, (len(Bs), m))[..., None])[..., 0]
    feas = np.all(xb >= -tol, axis=1)
    if not np.any(feas):
        raise Infeasible("no basic feasible solution")
    xb, subsets = xb[feas], subsets[feas]
    vals = np.einsum("km,km->k", c[subsets], xb)
    k = int(np.argmin(vals))
    x = np.zeros(n)
    x[subsets[k]] = xb[k]
    return float(vals[k]), x
