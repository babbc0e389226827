"""Covariance matrices, virtual Bell pairs and the momentum-space contraction.

A translation-invariant Gaussian fermionic TNS is specified by one local
tensor covariance per cell site.  Each local tensor carries n_p = 2
physical Majorana modes and n_v Majorana modes on each of its four legs,
ordered p, l, d, r, u.  Bell pairs placed on every lattice bond make up
the virtual state; in momentum space their covariance carries one phase
per bond, and the physical covariance of the network is

    Gamma(k) = A + B (D + Gamma_virtual(k))^{-1} B^T

with A, B, D the cell-level blocks of the local covariances (block
diagonal over cell sites).  Bond phases, with cell vectors (cx, 0), (0, cy)
and site offsets (i, j):

* x-bond from site (i, j), leg r, to site (i+1, j), leg l: phase
  exp(+i kx cx) if the bond leaves the cell, else 1 (entry order (r, l);
  the transposed (l, r) entry is -exp(-i kx cx), matching the single-site
  form Gamma_1(k) = -(exp(-i kx) I ⊕ exp(-i ky) I) on legs (l, d) x (r, u));
* y-bond from (i, j), leg u, to (i, j+1), leg d: likewise with ky, cy.

Virtual modes are ordered site-major, legs l, d, r, u with n_v modes each.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LEG_ORDER",
    "LocalTensorCovariance",
    "VirtualCovariance",
    "ContractionResult",
    "virtual_covariance",
    "virtual_covariances",
    "contract_physical",
    "contract_all",
    "reorder_legs",
    "bond_dimension",
    "mode_labels",
    "cell_blocks",
]

LEG_ORDER = ("l", "d", "r", "u")
N_P = 2  # physical Majorana modes per site

# condition-number threshold and Tikhonov shift for near-singular contractions
COND_LIMIT = 1e12
TIKHONOV_EPS = 1e-12


def bond_dimension(n_v):
    """Equivalent tensor-network bond dimension chi = sqrt(2)^n_v.

    Integer-valued for even n_v (n_v = 8 gives exactly 16.0); odd n_v is
    the usual continuation.
    """
    return 2.0 ** (n_v / 2)


def mode_labels(n_v):
    """Canonical per-site mode labels: p0, p1, then l/d/r/u with n_v each."""
    labels = [("p", i) for i in range(N_P)]
    for leg in LEG_ORDER:
        labels.extend((leg, j) for j in range(n_v))
    return labels


@dataclass(frozen=True, eq=False)
class LocalTensorCovariance:
    """Pure local tensor covariance in the canonical p, l, d, r, u order.

    a: (2, 2) physical block; b: (2, 4 n_v) physical-virtual block;
    d: (4 n_v, 4 n_v) virtual block.  The assembled matrix
    [[a, b], [-b^T, d]] is real antisymmetric, and pure when the tensor is.
    """

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    n_v: int

    def __post_init__(self):
        nv4 = 4 * self.n_v
        if self.a.shape != (N_P, N_P) or self.b.shape != (N_P, nv4) \
                or self.d.shape != (nv4, nv4):
            raise ValueError("inconsistent block shapes for n_v="
                             f"{self.n_v}: {self.a.shape}, {self.b.shape}, {self.d.shape}")

    @property
    def matrix(self):
        return np.block([[self.a, self.b], [-self.b.T, self.d]])

    @staticmethod
    def from_matrix(gamma, n_v):
        gamma = np.asarray(gamma, dtype=float)
        if np.abs(gamma + gamma.T).max() > 1e-12:
            raise ValueError("local covariance must be antisymmetric")
        return LocalTensorCovariance(
            a=gamma[:N_P, :N_P].copy(), b=gamma[:N_P, N_P:].copy(),
            d=gamma[N_P:, N_P:].copy(), n_v=n_v)

    def purity_error(self):
        g = self.matrix
        return float(np.abs(g @ g.T - np.eye(g.shape[0])).max())


@dataclass(frozen=True, eq=False)
class VirtualCovariance:
    """Momentum-space covariance of the Bell-pair virtual state at one k."""

    k: tuple
    matrix: np.ndarray


def _bonds(cell):
    """Bell-pair bonds of the cell graph.

    Yields (site_from, out_leg, site_to, in_leg, dcell): the bond starts on
    ``out_leg`` of ``site_from`` and ends on ``in_leg`` of the site in the
    cell displaced by ``dcell``.
    """
    cx, cy = cell
    sites = [(i, j) for i in range(cx) for j in range(cy)]
    index = {pos: s for s, pos in enumerate(sites)}
    for s, (i, j) in enumerate(sites):
        qx, rx = divmod(i + 1, cx)
        yield s, "r", index[(rx, j)], "l", (qx, 0)
        qy, ry = divmod(j + 1, cy)
        yield s, "u", index[(i, ry)], "d", (0, qy)


def _leg_offsets(n_v, cell):
    """Start index of each (site, leg) block in the cell virtual ordering."""
    ns = cell[0] * cell[1]
    offs = {}
    for s in range(ns):
        base = 4 * n_v * s
        for li, leg in enumerate(LEG_ORDER):
            offs[(s, leg)] = base + li * n_v
    return offs


def virtual_covariances(grid, n_v):
    """Stack of virtual covariances over a grid, shape (n_points, 4 n_v ns, ...).

    All eigenvalues have unit modulus (the Bell pairs are maximally
    entangled) and the matrix has the off-diagonal two-block structure in
    the (incoming, outgoing) leg split.
    """
    cx, cy = grid.cell
    ns = grid.cell_size
    dim = 4 * n_v * ns
    out = np.zeros((grid.n_points, dim, dim), dtype=complex)
    if n_v == 0:
        return out
    offs = _leg_offsets(n_v, grid.cell)
    eye = np.eye(n_v)
    for s, out_leg, s2, in_leg, (dx, dy) in _bonds(grid.cell):
        phase = np.exp(1j * (grid.kx * cx * dx + grid.ky * cy * dy))
        r_s, r_e = offs[(s, out_leg)], offs[(s, out_leg)] + n_v
        c_s, c_e = offs[(s2, in_leg)], offs[(s2, in_leg)] + n_v
        out[:, r_s:r_e, c_s:c_e] += phase[:, None, None] * eye
        out[:, c_s:c_e, r_s:r_e] -= phase.conj()[:, None, None] * eye
    return out


def virtual_covariance(k, n_v, cell=(1, 1)):
    """Virtual Bell-pair covariance at one formal momentum k.

    For the single-site cell this is [[0, G1], [-G1^dag, 0]] on the
    (l, d) x (r, u) split with G1(k) = -(exp(-i kx) I ⊕ exp(-i ky) I).
    """
    cx, cy = cell
    ns = cx * cy
    dim = 4 * n_v * ns
    mat = np.zeros((dim, dim), dtype=complex)
    if n_v:
        offs = _leg_offsets(n_v, cell)
        eye = np.eye(n_v)
        for s, out_leg, s2, in_leg, (dx, dy) in _bonds(cell):
            phase = np.exp(1j * (k[0] * cx * dx + k[1] * cy * dy))
            r, c = offs[(s, out_leg)], offs[(s2, in_leg)]
            mat[r:r + n_v, c:c + n_v] += phase * eye
            mat[c:c + n_v, r:r + n_v] -= np.conj(phase) * eye
    return VirtualCovariance(k=tuple(k), matrix=mat)


def cell_blocks(locals_):
    """Cell-level (A, B, D) from per-site local covariances (block diagonal)."""
    ns = len(locals_)
    n_v = locals_[0].n_v
    a = np.zeros((N_P * ns, N_P * ns))
    b = np.zeros((N_P * ns, 4 * n_v * ns))
    d = np.zeros((4 * n_v * ns, 4 * n_v * ns))
    for s, loc in enumerate(locals_):
        if loc.n_v != n_v:
            raise ValueError("all cell sites must share n_v")
        a[2 * s:2 * s + 2, 2 * s:2 * s + 2] = loc.a
        b[2 * s:2 * s + 2, 4 * n_v * s:4 * n_v * (s + 1)] = loc.b
        d[4 * n_v * s:4 * n_v * (s + 1), 4 * n_v * s:4 * n_v * (s + 1)] = loc.d
    return a, b, d


def _cond_estimate(m, lu_solve_identity=None):
    """Cheap 1-norm condition estimate ||M||_1 ||M^{-1}||_1."""
    norm = np.abs(m).sum(axis=-2).max(axis=-1)
    inv_norm = np.abs(lu_solve_identity).sum(axis=-2).max(axis=-1)
    return norm * inv_norm


def safe_inverse(m):
    """Batched inverse with Tikhonov regularization of ill-conditioned slices.

    Returns (inverse, flagged_indices); flagged slices had an estimated
    condition number above COND_LIMIT (or were exactly singular) and were
    inverted with the shift m + eps*I instead.
    """
    eye = np.eye(m.shape[-1])
    try:
        inv = np.linalg.inv(m)
        cond = _cond_estimate(m, inv)
        flagged = np.flatnonzero(~(cond < COND_LIMIT))
    except np.linalg.LinAlgError:
        # at least one slice is exactly singular; fall back per slice
        flat = m.reshape((-1,) + m.shape[-2:])
        inv = np.empty_like(flat)
        bad = []
        for i, slice_ in enumerate(flat):
            try:
                inv[i] = np.linalg.inv(slice_)
                if not (_cond_estimate(slice_[None], inv[i][None])[0] < COND_LIMIT):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                bad.append(i)
                inv[i] = np.linalg.inv(slice_ + TIKHONOV_EPS * eye)
        return inv.reshape(m.shape), np.array(bad, dtype=int)
    if flagged.size:
        inv[flagged] = np.linalg.inv(m[flagged] + TIKHONOV_EPS * eye)
    return inv, flagged


def contract_all(locals_, grid, virtuals=None):
    """Physical covariances Gamma(k) over the whole grid.

    Returns (gammas, flagged): ``gammas`` has shape (n_points, 2 ns, 2 ns);
    ``flagged`` lists indices of k-points where D + Gamma_virtual(k) had an
    estimated condition number above 1e12 and a Tikhonov shift of 1e-12 was
    applied instead of aborting (near-singular contractions occur at
    isolated parameter points during descent).
    """
    a, b, d = cell_blocks(locals_)
    if virtuals is None:
        virtuals = virtual_covariances(grid, locals_[0].n_v)
    if locals_[0].n_v == 0:
        return np.broadcast_to(a.astype(complex), (grid.n_points,) + a.shape).copy(), []
    m = d[None, :, :] + virtuals
    inv, flagged = safe_inverse(m)
    gammas = a[None, :, :] + np.einsum("ij,kjl,ml->kim", b, inv, b, optimize=True)
    return gammas, flagged.tolist()


@dataclass(frozen=True, eq=False)
class ContractionResult:
    """Physical covariance at one k plus the near-singularity flag."""

    gamma: np.ndarray
    flagged: bool


def contract_physical(locals_, k, cell=None):
    """Physical covariance of the network at one momentum.

    ``locals_`` is one LocalTensorCovariance per cell site (a bare instance
    is promoted to the single-site cell).  Pure local tensors give a pure
    Gamma(k); with n_v = 0 the result is just the physical block A.
    """
    if isinstance(locals_, LocalTensorCovariance):
        locals_ = [locals_]
    ns = len(locals_)
    if cell is None:
        cell = {1: (1, 1), 2: (2, 1), 4: (2, 2)}[ns]
    if cell[0] * cell[1] != ns:
        raise ValueError(f"{ns} local tensors do not fill cell {cell}")
    a, b, d = cell_blocks(locals_)
    n_v = locals_[0].n_v
    if n_v == 0:
        return ContractionResult(gamma=a.astype(complex), flagged=False)
    m = d + virtual_covariance(k, n_v, cell).matrix
    inv, flagged = safe_inverse(m[None])
    return ContractionResult(gamma=a + b @ inv[0] @ b.T,
                             flagged=bool(len(flagged)))


def reorder_legs(gamma, from_order, to_order):
    """Simultaneous row/column permutation between two mode orderings.

    ``from_order`` and ``to_order`` are sequences of hashable mode labels
    describing the same mode set; entry (i, j) of the result corresponds to
    labels (to_order[i], to_order[j]).  Involutive when applied twice with
    the arguments swapped.
    """
    if len(from_order) != len(set(from_order)) or len(to_order) != len(set(to_order)):
        raise ValueError("mode orderings must not contain duplicates")
    if set(from_order) != set(to_order):
        raise ValueError("orderings must be permutations of the same mode set")
    pos = {lab: i for i, lab in enumerate(from_order)}
    perm = np.array([pos[lab] for lab in to_order])
    return gamma[np.ix_(perm, perm)]
