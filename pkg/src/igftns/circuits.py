"""Sequential-circuit schedule implied by an isometric arrow layout.

Every tensor of an Lx x Ly network is one gate.  A gate consumes the wires
on its outgoing legs (plus fresh ancillas) and produces the wires on its
incoming legs, so a bond wire is produced by the tensor whose leg points in
and consumed by the tensor whose leg points out; gates fire as early as
wire availability allows.  Physical legs are always incoming (dimension 2).

Bond dimensions start at chi on internal bonds and 1 on open-boundary legs,
then are reduced to feasibility: an isometry from outgoing to incoming legs
needs prod(outgoing dims) <= prod(incoming dims).  The reduction shrinks
the vertical leg before the horizontal one (the horizontal wires carry the
sequential flow), which reproduces the trivial vertical bonds of the
column furthest from the orthogonality center without special-casing.

The uniform layout (all arrows right/up) fires whole anti-diagonals in
parallel, depth Lx + Ly - 1; the alternating layout (vertical arrows
down on odd columns) snakes through the columns, depth tending to
Lx * Ly.  Holographic qubit counts assume measure-and-reset of the
physical qubit after each gate: the count is the maximum over timesteps of
sum(log2 dim) over live bond wires plus one physical qubit per gate firing
in that step (an implementation-defined constant inside the O(.) scaling:
O((Lx + Ly) log2 chi) uniform, O(Ly log2 chi) alternating with the snake
running along columns).
"""

import math
from dataclasses import dataclass

__all__ = ["CircuitSchedule", "schedule_circuit"]

_LAYOUTS = ("uniform", "alternating")


def _outgoing(layout, x):
    if layout == "uniform" or x % 2 == 0:
        return {"r", "u"}
    return {"r", "d"}


def _neighbor(x, y, leg, Lx, Ly):
    dx, dy = {"l": (-1, 0), "r": (1, 0), "d": (0, -1), "u": (0, 1)}[leg]
    nx, ny = x + dx, y + dy
    if 0 <= nx < Lx and 0 <= ny < Ly:
        return nx, ny
    return None


_OPPOSITE = {"l": "r", "r": "l", "u": "d", "d": "u"}


@dataclass(frozen=True, eq=False)
class CircuitSchedule:
    """Timestep assignment for the gates of one layout.

    ``timestep[(x, y)]`` is the 1-based step at which the gate fires; the
    wire on a bond is produced by the gate at the arrow head and consumed
    by the gate at the arrow tail, and every gate fires strictly after all
    producers of its input wires.
    """

    layout: str
    Lx: int
    Ly: int
    chi: int
    timestep: dict
    depth: int
    holographic_qubits: int
    bond_dims: dict

    def wire_edges(self):
        """(producer, consumer) gate pairs, one per nontrivial bond wire."""
        edges = []
        for (site, leg), dim in self.bond_dims.items():
            if dim <= 1 or leg not in ("r", "u"):
                continue
            other = _neighbor(*site, leg, self.Lx, self.Ly)
            if other is None:
                continue
            if leg in _outgoing(self.layout, site[0]):
                consumer, producer = site, other
            else:
                consumer, producer = other, site
            edges.append((producer, consumer))
        return edges

    def validate(self):
        """Check the firing constraint on every nontrivial wire."""
        for producer, consumer in self.wire_edges():
            if self.timestep[consumer] <= self.timestep[producer]:
                raise AssertionError(
                    f"gate {consumer} fires at {self.timestep[consumer]} but its "
                    f"input wire is produced at {self.timestep[producer]}")
        return True

    def to_dict(self):
        return {
            "layout": self.layout, "Lx": self.Lx, "Ly": self.Ly, "chi": self.chi,
            "gates": [{"position": list(pos), "timestep": t}
                      for pos, t in sorted(self.timestep.items())],
            "summary": {"depth": self.depth, "qubits": self.holographic_qubits},
        }


def _feasible_bond_dims(layout, Lx, Ly, chi):
    """Largest feasible bond dimensions below chi, reduced vertical-first."""
    dims = {}
    for x in range(Lx):
        for y in range(Ly):
            for leg in ("l", "d", "r", "u"):
                inside = _neighbor(x, y, leg, Lx, Ly) is not None
                dims[((x, y), leg)] = chi if inside else 1

    def set_dim(site, leg, value):
        dims[(site, leg)] = value
        other = _neighbor(*site, leg, Lx, Ly)
        if other is not None:
            dims[(other, _OPPOSITE[leg])] = value

    changed = True
    while changed:
        changed = False
        for x in range(Lx):
            for y in range(Ly):
                out = _outgoing(layout, x)
                prod_in = 2  # physical qubit
                for leg in "ldru":
                    if leg not in out:
                        prod_in *= dims[((x, y), leg)]
                for vert_first in sorted(out, key=lambda s: s in "rl"):
                    prod_out = 1
                    for leg in out:
                        prod_out *= dims[((x, y), leg)]
                    if prod_out <= prod_in:
                        break
                    other = [dims[((x, y), g)] for g in out if g != vert_first]
                    cap = max(1, prod_in // max(1, math.prod(other)))
                    if cap < dims[((x, y), vert_first)]:
                        set_dim((x, y), vert_first, cap)
                        changed = True
    return dims


def schedule_circuit(layout, Lx, Ly, chi):
    """Greedy earliest-fire schedule for the given layout.

    Returns a CircuitSchedule with 1-based timesteps, total depth, and the
    holographic qubit count for measure-and-reuse evaluation.
    """
    if layout not in _LAYOUTS:
        raise ValueError(f"layout must be one of {_LAYOUTS}")
    if Lx < 2 or Ly < 2:
        raise ValueError("need Lx, Ly >= 2")
    if chi < 2:
        raise ValueError("need chi >= 2")
    dims = _feasible_bond_dims(layout, Lx, Ly, chi)

    producers = {}
    for x in range(Lx):
        for y in range(Ly):
            inputs = []
            for leg in _outgoing(layout, x):
                other = _neighbor(x, y, leg, Lx, Ly)
                if other is not None and dims[((x, y), leg)] > 1:
                    inputs.append(other)
            producers[(x, y)] = inputs

    timestep = {}
    remaining = dict(producers)
    step_of = timestep
    while remaining:
        ready = [g for g, ins in remaining.items()
                 if all(p in step_of for p in ins)]
        if not ready:
            raise RuntimeError("cyclic wire dependencies; invalid layout")
        for g in ready:
            t = 1 + max((step_of[p] for p in remaining[g]), default=0)
            step_of[g] = t
            del remaining[g]
    # earliest-fire: relax until fixpoint (ready order above may assign
    # conservative steps when producers resolve later in the same sweep)
    changed = True
    while changed:
        changed = False
        for g, ins in producers.items():
            t = 1 + max((step_of[p] for p in ins), default=0)
            if t != step_of[g]:
                step_of[g] = t
                changed = True
    depth = max(step_of.values())

    # live bond wires: produced at step t_p, consumed at step t_c, alive in
    # [t_p, t_c); add one physical qubit per gate firing per step
    load = [0.0] * (depth + 2)
    for x in range(Lx):
        for y in range(Ly):
            for leg in ("r", "u"):
                other = _neighbor(x, y, leg, Lx, Ly)
                if other is None or dims[((x, y), leg)] <= 1:
                    continue
                if leg in _outgoing(layout, x):
                    t_prod, t_cons = step_of[other], step_of[(x, y)]
                else:
                    t_prod, t_cons = step_of[(x, y)], step_of[other]
                for t in range(t_prod, t_cons):
                    load[t] += math.log2(dims[((x, y), leg)])
    firing = [0] * (depth + 2)
    for g, t in step_of.items():
        firing[t] += 1
    qubits = max(math.ceil(load[t]) + firing[t] for t in range(1, depth + 1))

    return CircuitSchedule(layout=layout, Lx=Lx, Ly=Ly, chi=chi,
                           timestep=dict(step_of), depth=depth,
                           holographic_qubits=int(qubits), bond_dims=dims)
