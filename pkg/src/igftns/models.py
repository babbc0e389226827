"""Free-fermion benchmark models and exact single-particle oracles.

Conventions
-----------
Each lattice site hosts one complex fermion ``c`` with Majorana partners

    gamma^1 = c^dag + c,        gamma^2 = -i (c^dag - c),

so ``c = (gamma^1 - i gamma^2) / 2`` and the empty mode has on-site
covariance entry ``Gamma^{12} = +1``.  Momentum modes are

    gamma^mu(k) = (1/sqrt(N)) sum_x exp(-i k.x) gamma^mu_x ,

normalised so that {gamma^mu(k), gamma^nu(k')^dag} = 2 delta.  A quadratic
Hamiltonian is written as ``H = sum_k gamma(k)^dag h(k) gamma(k)`` with

    h(k) = (i/4) sum_D exp(-i k.D) K(D),

where ``K`` is the real antisymmetric coefficient matrix of the real-space
Majorana form ``H = (i/4) sum K_{ab} gamma_a gamma_b`` (scalar parts of the
complex-fermion Hamiltonian are dropped, i.e. all energies are reported for
the normal-ordered Majorana form).  Consequences used throughout:

* ``h(k)`` is Hermitian and ``h(-k) = -h(k)^T``;
* the eigenvalues of ``h(k)`` are one quarter of the Bogoliubov-de Gennes
  quasiparticle energies (`bdg_spectrum` rescales them);
* a filled eigenmode of ``h(k)`` contributes twice its eigenvalue, so the
  ground energy is ``sum_k sum_{lambda<0} 2 lambda``;
* ``<H> = sum_k [ i Tr(h(k) Gamma(k)) + Tr h(k) ]`` for any Gaussian state
  with momentum covariance ``Gamma(k)``.

Unit cells are rectangular, ``cell = (cx, cy)`` sites, repeating with
lattice vectors (cx, 0) and (0, cy).  Cell sites are ordered column-major:
site index ``s = i*cy + j`` for offset (i, j).  The staggered band
insulator lives on the (2, 2) cell because its checkerboard on-site
potential (+1 on sites with even x+y, -1 otherwise) is the only ±1
staggering with a finite band gap, and it is not periodic under a single
column shift.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MomentumGrid",
    "ModelSpec",
    "BlochHamiltonian",
    "DegenerateSpectrumError",
    "build_grid",
    "bloch_hamiltonian",
    "bloch_hamiltonians",
    "bdg_spectrum",
    "exact_ground_energy",
    "exact_covariance",
    "exact_covariances",
]

_BC_OFFSET = {"periodic": 0.0, "antiperiodic": 0.5}
_SUPPORTED_CELLS = ((1, 1), (2, 1), (2, 2))


class DegenerateSpectrumError(ValueError):
    """A single-particle eigenvalue sits at zero within tolerance.

    The prescribed boundary conditions avoid zero modes for the shipped
    models; hitting one signals an inconsistent grid or model, so it is a
    hard error rather than a silently resolved tie.
    """


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Set of cell momenta implied by lattice size, boundaries and cell.

    ``kx``/``ky`` hold the reduced-zone points (one per unit cell of the
    reciprocal mesh); grids keep the fine-mesh values 2*pi*(n + off)/L so
    that boundary twists are encoded in the allowed momenta.
    """

    Lx: int
    Ly: int
    bc_x: str
    bc_y: str
    cell: tuple
    kx: np.ndarray = field(repr=False)
    ky: np.ndarray = field(repr=False)
    _nx: np.ndarray = field(repr=False)
    _ny: np.ndarray = field(repr=False)

    @property
    def n_points(self):
        return self.kx.size

    @property
    def n_sites(self):
        return self.Lx * self.Ly

    @property
    def cell_size(self):
        return self.cell[0] * self.cell[1]

    @property
    def kpoints(self):
        return list(zip(self.kx.tolist(), self.ky.tolist()))

    @property
    def cell_sites(self):
        """Site offsets (i, j) within the cell, in storage order."""
        cx, cy = self.cell
        return [(i, j) for i in range(cx) for j in range(cy)]

    def minus_index(self):
        """Index array mapping each k-point to the point -k of the grid.

        Exact integer arithmetic on the mesh indices, so negation closure
        holds exactly (no floating-point matching).
        """
        cx, cy = self.cell
        mx, my = self.Lx // cx, self.Ly // cy
        # k(n) = 2 pi (n + off)/L; -k(n) = k(n') mod reduced zone with
        # n' = -n - 2*off mod (L/c), and 2*off is an integer for both bcs.
        # Stored indices are n - 1, hence the extra -2.
        tx = int(round(2 * _BC_OFFSET[self.bc_x]))
        ty = int(round(2 * _BC_OFFSET[self.bc_y]))
        nx = np.mod(-self._nx - tx - 2, mx)
        ny = np.mod(-self._ny - ty - 2, my)
        return nx * my + ny

    def index_of(self, k):
        """Index of a momentum (kx, ky) in the grid (match modulo 2*pi)."""
        dx = np.mod(self.kx - k[0], 2 * np.pi / self.cell[0])
        dy = np.mod(self.ky - k[1], 2 * np.pi / self.cell[1])
        dx = np.minimum(dx, 2 * np.pi / self.cell[0] - dx)
        dy = np.minimum(dy, 2 * np.pi / self.cell[1] - dy)
        i = int(np.argmin(dx + dy))
        if dx[i] + dy[i] > 1e-9:
            raise ValueError(f"momentum {k} is not on the grid")
        return i


def build_grid(Lx, Ly, bc_x="antiperiodic", bc_y="periodic", cell=(1, 1)):
    """Momentum grid for an Lx x Ly lattice with the given boundary twists.

    Antiperiodic directions use k = 2 pi (n + 1/2)/L, periodic ones
    k = 2 pi n/L, n = 1..L.  For a (cx, cy) unit cell the grid is folded:
    the reduced zone keeps the Lx/cx x Ly/cy mesh points with n <= L/c,
    a transversal of the folding classes.
    """
    if not (isinstance(Lx, (int, np.integer)) and isinstance(Ly, (int, np.integer))):
        raise TypeError("Lx, Ly must be integers")
    if Lx < 2 or Ly < 2:
        raise ValueError(f"need Lx, Ly >= 2, got {Lx} x {Ly}")
    if (Lx * Ly) % 2:
        raise ValueError(f"need an even number of sites, got {Lx}*{Ly}")
    if bc_x not in _BC_OFFSET or bc_y not in _BC_OFFSET:
        raise ValueError("boundary flags must be 'periodic' or 'antiperiodic'")
    cell = tuple(int(c) for c in cell)
    if cell not in _SUPPORTED_CELLS:
        raise ValueError(f"unsupported cell {cell}; expected one of {_SUPPORTED_CELLS}")
    cx, cy = cell
    if Lx % cx or Ly % cy:
        raise ValueError(f"cell {cell} does not divide the {Lx} x {Ly} lattice")

    nx = np.arange(1, Lx // cx + 1)
    ny = np.arange(1, Ly // cy + 1)
    kx = (2 * np.pi * (nx + _BC_OFFSET[bc_x]) / Lx) % (2 * np.pi)
    ky = (2 * np.pi * (ny + _BC_OFFSET[bc_y]) / Ly) % (2 * np.pi)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    NX, NY = np.meshgrid(nx - 1, ny - 1, indexing="ij")
    return MomentumGrid(
        Lx=int(Lx), Ly=int(Ly), bc_x=bc_x, bc_y=bc_y, cell=cell,
        kx=KX.ravel(), ky=KY.ravel(), _nx=NX.ravel(), _ny=NY.ravel(),
    )


@dataclass(frozen=True, eq=False)
class BlochHamiltonian:
    """Hermitian Majorana-basis h(k) with its momentum and mode ordering.

    Mode order is site-major within the cell: (site 0 gamma^1, site 0
    gamma^2, site 1 gamma^1, ...).
    """

    k: tuple
    h: np.ndarray


@dataclass(frozen=True)
class ModelSpec:
    """Declarative free-fermion Hamiltonian on a lattice grid.

    ``kind`` is one of ``FermiSurface``, ``BandInsulator``, ``PipSC``,
    ``DiagonalChains`` or ``custom``; ``direction`` (+1/-1) selects the
    chain orientation for ``DiagonalChains``.  Custom models carry their
    hopping/pairing/on-site terms explicitly (used for test hooks such as
    the hopping-free staggered model).
    """

    kind: str
    grid: MomentumGrid
    direction: int = 1
    hops: tuple = ()      # ((dx, dy), t) with t real
    pairs: tuple = ()     # ((dx, dy), D) with D complex
    onsite: tuple = ()    # (("stagger", amp) | ("uniform", mu), ...)

    def __post_init__(self):
        if self.kind not in ("FermiSurface", "BandInsulator", "PipSC",
                             "DiagonalChains", "custom"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "DiagonalChains" and self.direction not in (1, -1):
            raise ValueError("DiagonalChains direction must be +1 or -1")
        if self.kind == "BandInsulator" and self.grid.cell != (2, 2):
            # The checkerboard potential is invariant only under even
            # translations in both directions.
            raise ValueError("BandInsulator requires the (2, 2) unit cell")

    # -- factories ---------------------------------------------------------

    @staticmethod
    def fermi_surface(grid):
        return ModelSpec("FermiSurface", grid)

    @staticmethod
    def band_insulator(grid):
        return ModelSpec("BandInsulator", grid)

    @staticmethod
    def pip_sc(grid):
        return ModelSpec("PipSC", grid)

    @staticmethod
    def diagonal_chains(grid, direction):
        return ModelSpec("DiagonalChains", grid, direction=direction)

    @staticmethod
    def custom(grid, hops=(), pairs=(), onsite=()):
        return ModelSpec("custom", grid, hops=tuple(hops), pairs=tuple(pairs),
                         onsite=tuple(onsite))

    # -- real-space stencil --------------------------------------------------

    def terms(self):
        """(hops, pairs, onsite_fn): the real-space one-body stencil.

        hops: list of ((dx, dy), t) meaning t * (c_x^dag c_{x+d} + h.c.)
        per bond; pairs: ((dx, dy), D) meaning D c_x c_{x+d} + h.c.;
        onsite_fn(x, y) -> mu multiplying c^dag c.
        """
        if self.kind == "FermiSurface":
            return [((1, 0), -1.0), ((0, 1), -1.0)], [], lambda x, y: 0.0
        if self.kind == "DiagonalChains":
            return [((1, self.direction), -1.0)], [], lambda x, y: 0.0
        if self.kind == "BandInsulator":
            hops = [((1, 0), -1.0), ((0, 1), -1.0)]
            return hops, [], lambda x, y: 1.0 if (x + y) % 2 == 0 else -1.0
        if self.kind == "PipSC":
            hops = [((1, 0), -1.0), ((0, 1), -1.0)]
            pairs = [((1, 0), 1.0 + 0j), ((0, 1), 1j)]
            return hops, pairs, lambda x, y: 2.0
        # custom
        onsite = list(self.onsite)

        def mu(x, y):
            total = 0.0
            for tag, amp in onsite:
                if tag == "uniform":
                    total += amp
                elif tag == "stagger":
                    total += amp if (x + y) % 2 == 0 else -amp
                elif tag == "stagger_x":
                    total += amp if x % 2 == 0 else -amp
                else:
                    raise ValueError(f"unknown onsite term {tag!r}")
            return total

        return list(self.hops), list(self.pairs), mu


def _stagger_compatible(model):
    """Check that the on-site profile is periodic under the cell vectors."""
    cx, cy = model.grid.cell
    _, _, mu = model.terms()
    for i in range(cx):
        for j in range(cy):
            if abs(mu(i, j) - mu(i + cx, j)) > 1e-12 or abs(mu(i, j) - mu(i, j + cy)) > 1e-12:
                raise ValueError(
                    f"on-site profile is not periodic under the {model.grid.cell} cell")


def _kmatrices(model):
    """Real antisymmetric Majorana coefficient blocks K(Dcell).

    Returns a dict mapping cell displacements to (2 ns, 2 ns) real blocks
    in site-major mode order, such that
    h(k) = (i/4) sum_D exp(-i k . D_phys) K(D).
    """
    grid = model.grid
    cx, cy = grid.cell
    ns = grid.cell_size
    m = 2 * ns
    hops, pairs, mu = model.terms()
    _stagger_compatible(model)
    kmats = {}

    def add(s_a, mu_a, s_b, mu_b, dcell, val):
        # coupling between mode (s_a, mu_a) in the cell at the origin and
        # mode (s_b, mu_b) in the cell displaced by +dcell; the blocks are
        # indexed by row-cell minus column-cell, hence stored under -dcell
        # (with the antisymmetric partner under +dcell)
        if val == 0.0:
            return
        for (sa, ma, sb, mb, d, v) in (
            (s_a, mu_a, s_b, mu_b, (-dcell[0], -dcell[1]), val),
            (s_b, mu_b, s_a, mu_a, dcell, -val),
        ):
            block = kmats.setdefault(d, np.zeros((m, m)))
            block[2 * sa + ma, 2 * sb + mb] += v

    sites = grid.cell_sites
    index = {pos: s for s, pos in enumerate(sites)}
    for s, (i, j) in enumerate(sites):
        # on-site:  mu c^dag c  ->  K_{1,2} -= mu  (site-local)
        add(s, 0, s, 1, (0, 0), -mu(i, j))
        for (dx, dy), t in hops:
            qx, rx = divmod(i + dx, cx)
            qy, ry = divmod(j + dy, cy)
            s2 = index[(rx, ry)]
            # t (c_x^dag c_y + h.c.) = (i t / 2)(g2_x g1_y - g1_x g2_y)
            add(s, 1, s2, 0, (qx, qy), t)
            add(s, 0, s2, 1, (qx, qy), -t)
        for (dx, dy), D in pairs:
            qx, rx = divmod(i + dx, cx)
            qy, ry = divmod(j + dy, cy)
            s2 = index[(rx, ry)]
            re, im = float(np.real(D)), float(np.imag(D))
            # Re D (c_x c_y + h.c.) = -(i Re D/2)(g1_x g2_y + g2_x g1_y)
            add(s, 0, s2, 1, (qx, qy), -re)
            add(s, 1, s2, 0, (qx, qy), -re)
            # i Im D c_x c_y + h.c. = (i Im D/2)(g1_x g1_y - g2_x g2_y)
            add(s, 0, s2, 0, (qx, qy), im)
            add(s, 1, s2, 1, (qx, qy), -im)
    return kmats


def bloch_hamiltonians(model):
    """Stack of h(k) over the whole grid, shape (n_points, 2 ns, 2 ns)."""
    grid = model.grid
    cx, cy = grid.cell
    kmats = _kmatrices(model)
    m = 2 * grid.cell_size
    hs = np.zeros((grid.n_points, m, m), dtype=complex)
    for (dx, dy), block in kmats.items():
        phase = np.exp(-1j * (grid.kx * cx * dx + grid.ky * cy * dy))
        hs += 0.25j * phase[:, None, None] * block[None, :, :]
    return hs


def bloch_hamiltonian(model, k):
    """Majorana-basis Bloch matrix h(k) for one grid momentum."""
    i = model.grid.index_of(k)
    return BlochHamiltonian(k=(model.grid.kx[i], model.grid.ky[i]),
                            h=bloch_hamiltonians(model)[i])


def bdg_spectrum(model, k):
    """Bogoliubov-de Gennes quasiparticle energies at k (ascending).

    These are 4x the eigenvalues of h(k); for a single hopping band they
    read (-|eps(k)|, +|eps(k)|) with eps the complex-fermion dispersion.
    """
    bh = bloch_hamiltonian(model, k)
    return 4.0 * np.linalg.eigvalsh(bh.h)


def exact_ground_energy(model):
    """Ground-state energy: sum over k of twice the negative eigenvalues.

    Equals the minimum of the Gaussian expectation value
    sum_k [i Tr(h Gamma) + Tr h] over all Gaussian states, so variational
    energy errors are directly comparable.
    """
    evals = np.linalg.eigvalsh(bloch_hamiltonians(model))
    return float(2.0 * evals[evals < 0].sum())


def _fill_covariance(h, tol=1e-12):
    evals, vecs = np.linalg.eigh(h)
    if np.abs(evals).min() < tol:
        raise DegenerateSpectrumError(
            f"single-particle eigenvalue within {tol} of zero; "
            "choose boundary conditions without zero modes")
    return 1j * (vecs * np.sign(evals)) @ vecs.conj().T


def exact_covariance(model, k):
    """Pure momentum covariance of the exact ground state at one k.

    Gamma(k) = i U sign(L) U^dag for h(k) = U L U^dag; satisfies
    Gamma Gamma^dag = I and i Tr(h Gamma) + Tr h = 2 sum_{lambda<0} lambda.
    """
    i = model.grid.index_of(k)
    return _fill_covariance(bloch_hamiltonians(model)[i])


def exact_covariances(model, tol=1e-12):
    """Stack of exact ground-state covariances over the grid."""
    hs = bloch_hamiltonians(model)
    evals, vecs = np.linalg.eigh(hs)
    if np.abs(evals).min() < tol:
        raise DegenerateSpectrumError(
            f"single-particle eigenvalue within {tol} of zero; "
            "choose boundary conditions without zero modes")
    return 1j * np.einsum("kia,ka,kja->kij", vecs, np.sign(evals), vecs.conj())
