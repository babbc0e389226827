"""Small dense linear-algebra helpers shared across the package."""

import numpy as np


def skew(m):
    """Antisymmetric part (m - m^T)/2."""
    return 0.5 * (m - m.T)


def symplectic_form(n):
    """Block-diagonal direct sum of n/2 copies of [[0, 1], [-1, 0]].

    ``n`` must be even.  This is the covariance matrix of a product of
    empty fermionic modes in the Majorana basis and the reference point of
    the special-orthogonal parametrization of pure Gaussian states.
    """
    if n % 2:
        raise ValueError(f"symplectic form needs even dimension, got {n}")
    j = np.zeros((n, n))
    for i in range(0, n, 2):
        j[i, i + 1] = 1.0
        j[i + 1, i] = -1.0
    return j


def random_special_orthogonal(n, rng):
    """Haar-like random element of SO(n), deterministic in ``rng``.

    QR of a Gaussian matrix with the usual R-diagonal sign fix gives a Haar
    orthogonal matrix; a final column-sign flip forces det = +1.
    """
    if n == 0:
        return np.zeros((0, 0))
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def cayley(x):
    """Cayley transform (I - x/2)^{-1} (I + x/2).

    For antisymmetric x the result is special orthogonal to machine
    precision, which makes it an exact retraction for descent on SO(n).
    """
    n = x.shape[0]
    eye = np.eye(n)
    return np.linalg.solve(eye - 0.5 * x, eye + 0.5 * x)


def project_orthogonal(q):
    """Closest orthogonal matrix (polar factor); used to undo roundoff drift."""
    u, _, vt = np.linalg.svd(q)
    return u @ vt


def orthogonality_error(q):
    """max |Q^T Q - I|; zero for an exactly orthogonal Q."""
    n = q.shape[0]
    if n == 0:
        return 0.0
    return float(np.abs(q.T @ q - np.eye(n)).max())
