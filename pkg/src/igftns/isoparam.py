"""Special-orthogonal parametrization of (isometric) local tensors.

A local tensor is isometric from its incoming legs (physical plus any leg
whose arrow points in) to its outgoing legs exactly when the covariance
block on the outgoing modes vanishes.  Grouping modes as (incoming,
outgoing), a pure real antisymmetric covariance with zero outgoing block is

    Gamma = [[A, B], [-B^T, 0]],   B^T B = I,  A = R J R^T,

where Q = [B | R] is orthogonal (n_in x n_in), B its first n_out columns,
and J the direct sum of (n_in - n_out)/2 blocks [[0, 1], [-1, 0]].  With an
even number of lattice sites Q can always be taken special orthogonal, so
the variational manifold is a product of SO(n_in) factors, one per cell
site.  The unconstrained (no outgoing legs) case degenerates to
Gamma = O J O^T with O in SO(n_p + 4 n_v).

Arrow layouts: ``uniform`` points all arrows right/up ({r, u} outgoing on
every site); ``alternating`` keeps {r, u} on even columns and flips the
vertical arrow to {r, d} on odd columns; ``unconstrained`` has no outgoing
legs; ``custom`` takes arbitrary per-site outgoing sets, subject only to
n_in - n_out being even and nonnegative.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .gaussian import LEG_ORDER, N_P, LocalTensorCovariance, mode_labels, reorder_legs
from .linalg import orthogonality_error, random_special_orthogonal, symplectic_form

__all__ = [
    "ArrowPattern",
    "IsoParams",
    "UnconstrainedParams",
    "uniform_pattern",
    "alternating_pattern",
    "unconstrained_pattern",
    "custom_pattern",
    "pattern_by_name",
    "default_cell",
    "build_local_covariance",
    "build_local_covariance_unconstrained",
    "random_init",
    "manifold_dimensions",
    "bond_dimension_ratio",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

_PATTERN_IDS = {"unconstrained": 0, "uniform": 1, "alternating": 2, "custom": 3}
_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class ArrowPattern:
    """Per-site outgoing-leg assignment on a unit cell.

    ``outgoing[s]`` is the frozen set of outgoing legs of cell site s
    (sites ordered column-major, site s = i*cy + j at offset (i, j)).
    """

    name: str
    cell: tuple
    outgoing: tuple

    def __post_init__(self):
        ns = self.cell[0] * self.cell[1]
        if len(self.outgoing) != ns:
            raise ValueError(f"pattern needs {ns} outgoing sets, got {len(self.outgoing)}")
        for out in self.outgoing:
            bad = set(out) - set(LEG_ORDER)
            if bad:
                raise ValueError(f"unknown legs {sorted(bad)}")

    @property
    def n_sublattices(self):
        return len(self.outgoing)

    def n_in(self, n_v, site):
        return N_P + (4 - len(self.outgoing[site])) * n_v

    def n_out(self, n_v, site):
        return len(self.outgoing[site]) * n_v

    def validate(self, n_v):
        for s in range(self.n_sublattices):
            diff = self.n_in(n_v, s) - self.n_out(n_v, s)
            if diff < 0 or diff % 2:
                raise ValueError(
                    f"site {s}: n_in - n_out = {diff} must be even and >= 0 "
                    f"(outgoing {sorted(self.outgoing[s])}, n_v = {n_v})")


def uniform_pattern(cell=(1, 1)):
    ns = cell[0] * cell[1]
    return ArrowPattern("uniform", tuple(cell), (frozenset("ru"),) * ns)


def alternating_pattern(cell=(2, 1)):
    cx, cy = cell
    if cx != 2:
        raise ValueError("alternating layout needs a two-column cell")
    outgoing = tuple(frozenset("ru") if i % 2 == 0 else frozenset("rd")
                     for i in range(cx) for _ in range(cy))
    return ArrowPattern("alternating", tuple(cell), outgoing)


def unconstrained_pattern(cell=(1, 1)):
    ns = cell[0] * cell[1]
    return ArrowPattern("unconstrained", tuple(cell), (frozenset(),) * ns)


def custom_pattern(cell, outgoing):
    return ArrowPattern("custom", tuple(cell),
                        tuple(frozenset(o) for o in outgoing))


def default_cell(name):
    return (2, 1) if name == "alternating" else (1, 1)


def pattern_by_name(name, cell=None):
    if isinstance(name, ArrowPattern):
        return name
    if cell is None:
        cell = default_cell(name)
    if name == "uniform":
        return uniform_pattern(cell)
    if name == "alternating":
        return alternating_pattern(cell)
    if name == "unconstrained":
        return unconstrained_pattern(cell)
    raise ValueError(f"unknown pattern {name!r}")


def _check_special_orthogonal(q, what):
    if orthogonality_error(q) > _ORTHO_TOL:
        raise ValueError(f"{what} is not orthogonal to {_ORTHO_TOL}")
    if q.shape[0] and np.linalg.det(q) < 0:
        raise ValueError(f"{what} must have determinant +1")


@dataclass(frozen=True, eq=False)
class IsoParams:
    """Variational point: one special orthogonal Q per cell site."""

    qs: tuple
    pattern: ArrowPattern
    n_v: int

    def __post_init__(self):
        self.pattern.validate(self.n_v)
        if len(self.qs) != self.pattern.n_sublattices:
            raise ValueError("one Q per cell site required")
        for s, q in enumerate(self.qs):
            n_in = self.pattern.n_in(self.n_v, s)
            if q.shape != (n_in, n_in):
                raise ValueError(f"Q for site {s} must be {n_in} x {n_in}, got {q.shape}")
            _check_special_orthogonal(q, f"Q for site {s}")

    @property
    def cell(self):
        return self.pattern.cell

    def replace_qs(self, qs):
        return IsoParams(qs=tuple(qs), pattern=self.pattern, n_v=self.n_v)


@dataclass(frozen=True, eq=False)
class UnconstrainedParams:
    """Variational point without isometric constraints: one O per cell site."""

    os_: tuple
    n_v: int
    cell: tuple = (1, 1)

    def __post_init__(self):
        ns = self.cell[0] * self.cell[1]
        if len(self.os_) != ns:
            raise ValueError("one O per cell site required")
        dim = N_P + 4 * self.n_v
        for s, o in enumerate(self.os_):
            if o.shape != (dim, dim):
                raise ValueError(f"O for site {s} must be {dim} x {dim}, got {o.shape}")
            _check_special_orthogonal(o, f"O for site {s}")

    @property
    def pattern(self):
        return unconstrained_pattern(self.cell)

    @property
    def qs(self):
        return self.os_

    def replace_qs(self, qs):
        return UnconstrainedParams(os_=tuple(qs), n_v=self.n_v, cell=self.cell)


def _inout_labels(pattern, n_v, site):
    """Mode labels grouped (incoming, outgoing); legs keep l, d, r, u order."""
    out_legs = pattern.outgoing[site]
    incoming = [("p", i) for i in range(N_P)]
    outgoing = []
    for leg in LEG_ORDER:
        dest = outgoing if leg in out_legs else incoming
        dest.extend((leg, j) for j in range(n_v))
    return incoming, outgoing


def local_covariance_from_q(q, pattern, n_v, site):
    """Assemble the local covariance of one site from its Q matrix.

    Split Q = [B | R], set A = R J R^T with J over (n_in - n_out)/2 blocks,
    place [[A, B], [-B^T, 0]] on the (incoming, outgoing) grouping and
    reorder to the canonical p, l, d, r, u mode order.
    """
    n_out = pattern.n_out(n_v, site)
    b = q[:, :n_out]
    r = q[:, n_out:]
    a = r @ symplectic_form(r.shape[1]) @ r.T
    n_in = q.shape[0]
    gamma_inout = np.zeros((n_in + n_out, n_in + n_out))
    gamma_inout[:n_in, :n_in] = a
    gamma_inout[:n_in, n_in:] = b
    gamma_inout[n_in:, :n_in] = -b.T
    incoming, outgoing = _inout_labels(pattern, n_v, site)
    gamma = reorder_legs(gamma_inout, incoming + outgoing, mode_labels(n_v))
    return LocalTensorCovariance.from_matrix(gamma, n_v)


def build_local_covariance(params, sublattice):
    """Local tensor covariance of one cell site from isometric parameters."""
    return local_covariance_from_q(params.qs[sublattice], params.pattern,
                                   params.n_v, sublattice)


def build_local_covariance_unconstrained(params, sublattice):
    """Local tensor covariance Gamma = O J O^T (no isometry constraint)."""
    o = params.os_[sublattice]
    gamma = o @ symplectic_form(o.shape[0]) @ o.T
    return LocalTensorCovariance.from_matrix(gamma, params.n_v)


def local_covariances(params):
    """All cell-site covariances of a parameter point, in site order."""
    if isinstance(params, UnconstrainedParams):
        return [build_local_covariance_unconstrained(params, s)
                for s in range(len(params.os_))]
    return [build_local_covariance(params, s) for s in range(len(params.qs))]


def random_init(pattern, n_v, seed, cell=None):
    """Haar-like random parameters, deterministic in ``seed``.

    ``pattern`` is an ArrowPattern or one of the names ``unconstrained``,
    ``uniform``, ``alternating``; ``seed`` may be an int or a numpy
    SeedSequence.
    """
    pattern = pattern_by_name(pattern, cell)
    pattern.validate(n_v)
    rng = np.random.default_rng(seed)
    if pattern.name == "unconstrained":
        dim = N_P + 4 * n_v
        os_ = tuple(random_special_orthogonal(dim, rng)
                    for _ in range(pattern.n_sublattices))
        return UnconstrainedParams(os_=os_, n_v=n_v, cell=pattern.cell)
    qs = tuple(random_special_orthogonal(pattern.n_in(n_v, s), rng)
               for s in range(pattern.n_sublattices))
    return IsoParams(qs=qs, pattern=pattern, n_v=n_v)


# ---------------------------------------------------------------------------
# variational manifold dimensions

def manifold_dimensions(kind, d=None, n=None, chi=None):
    """Dimension of the variational manifold of a TNS family.

    Complex dimensions for the tensor families (may be half-integer for
    isoTNS, the Stiefel factor counts half a complex parameter per
    orthogonality constraint), real dimensions for the Gaussian families:

    * MPS / isoMPS:        (d - 1) chi^2
    * TNS:                 d chi^4 - 2 chi^2
    * isoTNS:              (d - 1/2) chi^4 - chi^2
    * GaussianTNS:         dim SO(4n + 2) = (4n + 2)(4n + 1)/2
    * GaussianIsoTNS:      dim SO(2n + 2) = (2n + 2)(2n + 1)/2
    """
    if kind in ("MPS", "isoMPS"):
        return (d - 1) * chi ** 2
    if kind == "TNS":
        return d * chi ** 4 - 2 * chi ** 2
    if kind == "isoTNS":
        return (d - 0.5) * chi ** 4 - chi ** 2
    if kind == "GaussianTNS":
        return (4 * n + 2) * (4 * n + 1) // 2
    if kind == "GaussianIsoTNS":
        return (2 * n + 2) * (2 * n + 1) // 2
    raise ValueError(f"unknown manifold kind {kind!r}")


def bond_dimension_ratio(d):
    """chi_iso / chi needed for equal variational dimension at large chi.

    (d / (d - 1/2))^{1/4}; about 1.07 for d = 2.
    """
    return (d / (d - 0.5)) ** 0.25


# ---------------------------------------------------------------------------
# checkpoint format
#
# Little-endian binary:
#   magic "IGFT" | version u32 | n_v u32 | pattern id u32 | cell size u32 |
#   n_in u32 per sublattice | row-major float64 Q (or O) matrices.
# Pattern ids: 0 unconstrained, 1 uniform, 2 alternating, 3 custom.  For
# custom patterns the arrow sets are supplied by the experiment config; the
# header is used for compatibility checks.

CHECKPOINT_MAGIC = b"IGFT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params):
    pattern = params.pattern
    qs = params.qs
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, params.n_v,
                             _PATTERN_IDS[pattern.name]))
        fh.write(struct.pack("<I", pattern.n_sublattices))
        for q in qs:
            fh.write(struct.pack("<I", q.shape[0]))
        for q in qs:
            fh.write(np.ascontiguousarray(q, dtype="<f8").tobytes())


def load_checkpoint(path, pattern=None, cell=None):
    """Load parameters; ``pattern`` must be given for custom layouts."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
    version, n_v, pid = struct.unpack_from("<III", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (n_sub,) = struct.unpack_from("<I", blob, 16)
    n_ins = struct.unpack_from(f"<{n_sub}I", blob, 20)
    offset = 20 + 4 * n_sub
    names = {v: k for k, v in _PATTERN_IDS.items()}
    name = names[pid]
    if pattern is None:
        if name == "custom":
            raise ValueError("custom checkpoints need the pattern from the config")
        cells = {1: (1, 1) if name != "alternating" else (2, 1),
                 2: (2, 1), 4: (2, 2)}
        pattern = pattern_by_name(name, cell or cells[n_sub])
    pattern = pattern_by_name(pattern, cell)
    if pattern.name != name or pattern.n_sublattices != n_sub:
        raise ValueError(
            f"{path}: checkpoint is {name} with {n_sub} sublattice(s), "
            f"config requests {pattern.name} with {pattern.n_sublattices}")
    qs = []
    for n_in in n_ins:
        count = n_in * n_in
        q = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        qs.append(q.reshape(n_in, n_in).copy())
    if name == "unconstrained":
        return UnconstrainedParams(os_=tuple(qs), n_v=n_v, cell=pattern.cell)
    params = IsoParams(qs=tuple(qs), pattern=pattern, n_v=n_v)
    for s, q in enumerate(qs):
        if q.shape[0] != pattern.n_in(n_v, s):
            raise ValueError(f"{path}: Q size mismatch on sublattice {s}")
    return params
