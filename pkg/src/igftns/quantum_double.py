"""Quantum-double ground-state tensors and exact isometry checks.

The five-leg tensor of the quantum double of a finite group G,

    A_{lrdu}^{p1 p2 p3 p4} = sum_{g in G} g_{l p1} g_{u p4}
                             (g^{-1})_{p2 r} (g^{-1})_{p3 d},

with g acting in the left regular (permutation) representation, is an
isometry from any two of its virtual legs plus the grouped physical leg to
the remaining two virtual legs: contracting those input legs against the
conjugate tensor yields |G|^3 times the identity.  The tensor therefore
satisfies every column-arrow layout at once.
"""

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroupTable",
    "cyclic_group",
    "symmetric_group",
    "quantum_double_tensor",
    "isometry_check",
]

_VIRTUAL_AXES = {"l": 0, "r": 1, "d": 2, "u": 3}


@dataclass(frozen=True, eq=False)
class GroupTable:
    """Finite group as a multiplication table over elements 0..|G|-1.

    ``table[a, b]`` is the product a*b; element 0 is the identity.
    Associativity, identity, and inverses are verified on construction,
    as are the permutation property and the trace identity
    Tr phi(g) = |G| delta_{g,e} of the left regular representation.
    """

    name: str
    table: np.ndarray

    def __post_init__(self):
        t = self.table
        n = t.shape[0]
        if t.shape != (n, n):
            raise ValueError("multiplication table must be square")
        if not (np.all(t[0] == np.arange(n)) and np.all(t[:, 0] == np.arange(n))):
            raise ValueError("element 0 must be the identity")
        for a in range(n):
            if sorted(t[a]) != list(range(n)) or sorted(t[:, a]) != list(range(n)):
                raise ValueError("table rows/columns must be permutations")
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    if t[t[a, b], c] != t[a, t[b, c]]:
                        raise ValueError(f"associativity fails at ({a},{b},{c})")
        if not all((t[a] == 0).any() for a in range(n)):
            raise ValueError("missing inverses")
        reps = self.regular_representation()
        for g in range(n):
            tr = np.trace(reps[g])
            if tr != (n if g == 0 else 0):
                raise ValueError("regular representation trace identity fails")

    @property
    def order(self):
        return self.table.shape[0]

    def inverse(self, a):
        return int(np.nonzero(self.table[a] == 0)[0][0])

    def regular_representation(self):
        """Permutation matrices phi(g) with phi(g)|g'> = |g g'>."""
        n = self.order
        reps = np.zeros((n, n, n))
        for g in range(n):
            reps[g, self.table[g, np.arange(n)], np.arange(n)] = 1.0
        return reps


def cyclic_group(n):
    """Z_n with addition mod n."""
    a = np.arange(n)
    return GroupTable(name=f"Z{n}", table=(a[:, None] + a[None, :]) % n)


def symmetric_group(n):
    """S_n as permutations of n letters; identity first."""
    perms = sorted(itertools.permutations(range(n)))
    index = {p: i for i, p in enumerate(perms)}
    size = len(perms)
    table = np.zeros((size, size), dtype=int)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            table[i, j] = index[tuple(p[q[k]] for k in range(n))]
    return GroupTable(name=f"S{n}", table=table)


def quantum_double_tensor(group):
    """Five-leg ground-state tensor, axes (l, r, d, u, p1, p2, p3, p4)."""
    reps = group.regular_representation()
    inv = np.stack([reps[group.inverse(g)] for g in range(group.order)])
    # A[l,r,d,u,p1,p2,p3,p4] = sum_g reps[g,l,p1] reps[g,u,p4] inv[g,p2,r] inv[g,p3,d]
    return np.einsum("gla,gub,gcr,ged->lrduaceb", reps, reps, inv, inv,
                     optimize=True)


def isometry_check(tensor, in_legs, tol=1e-12):
    """Check isometry from the given input legs to the remaining ones.

    ``in_legs`` names two virtual legs (subset of l, r, d, u); the grouped
    physical legs are always inputs.  Returns (passes, c) where c is the
    proportionality constant of the contraction with the conjugate tensor;
    ``passes`` is True when that contraction equals c * identity on the
    remaining legs within tolerance.
    """
    virtual = [leg for leg in in_legs if leg != "p"]
    if len(virtual) != 2 or any(leg not in _VIRTUAL_AXES for leg in virtual):
        raise ValueError("in_legs must name exactly two of l, r, d, u")
    axes = sorted(_VIRTUAL_AXES[leg] for leg in virtual) + [4, 5, 6, 7]
    out = np.tensordot(np.conj(tensor), tensor, axes=(axes, axes))
    k1, k2 = out.shape[0], out.shape[1]
    mat = out.reshape(k1 * k2, k1 * k2)
    c = np.trace(mat).real / mat.shape[0]
    passes = bool(np.abs(mat - c * np.eye(mat.shape[0])).max() <= tol * max(1.0, abs(c)))
    return passes, float(c)
