"""Honeycomb lattices with zig-zag site ordering.

Sites live on a brick-wall grid ``(row, col)``: horizontal bonds join
neighbouring columns of a row, vertical bonds join neighbouring rows in every
other column.  Sites are numbered in Jordan-Wigner order.  Each site owns two
consecutive qubits ``2i`` and ``2i + 1``; on rows traversed right-to-left the
spin order on the pair is reversed (spin down takes ``2i``), which is what
makes the 1x1 measurement pairs come out as ``(4, 7), (5, 6), (0, 11), (1, 10)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

UP, DOWN = 0, 1
HORIZONTAL, VERTICAL = "H", "V"


class ConfigurationError(ValueError):
    """Unsupported or inconsistent lattice geometry."""


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    orientation: str

    def __post_init__(self) -> None:
        if self.orientation not in (HORIZONTAL, VERTICAL):
            raise ConfigurationError(f"bad orientation {self.orientation!r}")


@dataclass(frozen=True)
class HoneycombLattice:
    nx: int
    ny: int
    coords: tuple[tuple[int, int], ...]
    spin_reversed: tuple[bool, ...]
    edges: tuple[Edge, ...]
    row_direction: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.coords)
        if len(self.spin_reversed) != n:
            raise ConfigurationError("spin_reversed length mismatch")
        seen = set()
        degree = [0] * n
        for e in self.edges:
            if not (0 <= e.a < n and 0 <= e.b < n) or e.a == e.b:
                raise ConfigurationError(f"edge {e} references invalid sites")
            key = frozenset((e.a, e.b))
            if key in seen:
                raise ConfigurationError(f"duplicate edge {e}")
            seen.add(key)
            degree[e.a] += 1
            degree[e.b] += 1
        if max(degree, default=0) > 3:
            raise ConfigurationError("honeycomb sites have degree <= 3")

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    @property
    def sites(self) -> list[int]:
        return list(range(self.n_sites))

    def qubit_of(self, site: int, spin: int) -> int:
        if not 0 <= site < self.n_sites:
            raise IndexError(f"site {site} out of range")
        if spin not in (UP, DOWN):
            raise ValueError("spin must be UP (0) or DOWN (1)")
        flip = 1 if self.spin_reversed[site] else 0
        return 2 * site + (spin ^ flip)

    def site_of(self, qubit: int) -> tuple[int, int]:
        site = qubit // 2
        flip = 1 if self.spin_reversed[site] else 0
        return site, (qubit % 2) ^ flip

    def spin_qubits(self, spin: int) -> list[int]:
        """Qubits of one spin species, in site (= JW) order."""
        return [self.qubit_of(i, spin) for i in range(self.n_sites)]

    def spin_mask(self, spin: int) -> int:
        m = 0
        for q in self.spin_qubits(spin):
            m |= 1 << q
        return m

    def hopping_pairs(self, spin: int | None = None) -> list[tuple[int, int]]:
        """Sorted qubit pairs of every same-spin hopping term."""
        spins = (UP, DOWN) if spin is None else (spin,)
        pairs = []
        for e in self.edges:
            for s in spins:
                qa, qb = self.qubit_of(e.a, s), self.qubit_of(e.b, s)
                pairs.append((min(qa, qb), max(qa, qb)))
        return pairs

    def adjacency_matrix(self):
        import numpy as np

        a = np.zeros((self.n_sites, self.n_sites))
        for e in self.edges:
            a[e.a, e.b] = a[e.b, e.a] = 1.0
        return a

    def to_text(self) -> str:
        """Adjacency listing, one edge per line: ``a b H|V``."""
        return "\n".join(f"{e.a} {e.b} {e.orientation}" for e in self.edges)

    @property
    def label(self) -> str:
        return f"{self.nx}x{self.ny}"


def _strip(n_hex: int) -> HoneycombLattice:
    """Single row of ``n_hex`` hexagons as two snaked rows of ``2 n_hex + 1`` sites."""
    width = 2 * n_hex + 1
    coords = [(0, c) for c in range(width)] + [(1, c) for c in reversed(range(width))]
    index = {rc: i for i, rc in enumerate(coords)}
    spin_reversed = tuple(r == 1 for r, _ in coords)
    edges = []
    for r in (0, 1):
        cols = range(width) if r == 0 else reversed(range(width))
        path = [index[(r, c)] for c in cols]
        edges += [Edge(min(a, b), max(a, b), HORIZONTAL) for a, b in zip(path, path[1:])]
    for c in range(0, width, 2):
        a, b = index[(0, c)], index[(1, c)]
        edges.append(Edge(min(a, b), max(a, b), VERTICAL))
    return HoneycombLattice(
        1, n_hex, tuple(coords), spin_reversed, tuple(edges), {0: +1, 1: -1}
    )


def _load_table(name: str, nx: int, ny: int) -> HoneycombLattice:
    text = resources.files("hubbard_cd.data").joinpath(name).read_text()
    sites: dict[int, tuple[int, int, bool]] = {}
    edges = []
    directions: dict[int, int] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        if kind == "site":
            i, r, c, rev = (int(v) for v in rest)
            sites[i] = (r, c, bool(rev))
        elif kind == "edge":
            edges.append(Edge(int(rest[0]), int(rest[1]), rest[2]))
        elif kind == "direction":
            directions[int(rest[0])] = int(rest[1])
        else:
            raise ConfigurationError(f"unknown record {kind!r} in {name}")
    order = sorted(sites)
    if order != list(range(len(order))):
        raise ConfigurationError(f"{name}: site indices must be 0..N-1")
    return HoneycombLattice(
        nx,
        ny,
        tuple((sites[i][0], sites[i][1]) for i in order),
        tuple(sites[i][2] for i in order),
        tuple(edges),
        directions,
    )


def build(nx: int, ny: int) -> HoneycombLattice:
    """Build the ``nx x ny`` honeycomb patch.

    ``(1, m)`` is a strip of ``m`` hexagons (6, 10, 14, ... sites); ``(2, 1)`` is
    the 13-site three-hexagon patch shipped in ``data/lattice_2x1.txt``.
    """
    if nx < 1 or ny < 1:
        raise ConfigurationError("lattice dimensions must be positive")
    if nx == 1:
        return _strip(ny)
    if (nx, ny) == (2, 1):
        return _load_table("lattice_2x1.txt", 2, 1)
    raise ConfigurationError(f"unsupported honeycomb geometry {nx}x{ny}")


def single_bond() -> HoneycombLattice:
    """Two sites joined by one horizontal bond (the 4-qubit test system)."""
    return HoneycombLattice(0, 0, ((0, 0), (0, 1)), (False, False), (Edge(0, 1, HORIZONTAL),), {0: 1})


def single_site() -> HoneycombLattice:
    return HoneycombLattice(0, 0, ((0, 0),), (False,), (), {0: 1})


def edge_groups(lat: HoneycombLattice) -> list[list[tuple[int, int]]]:
    """Four disjoint groups of qubit pairs: on-site, two horizontal colours, vertical.

    Horizontal bonds are coloured by their position along the row in the
    row's traversal direction, so each group is a set of disjoint pairs.
    """
    coulomb = sorted(
        (min(lat.qubit_of(i, UP), lat.qubit_of(i, DOWN)), max(lat.qubit_of(i, UP), lat.qubit_of(i, DOWN)))
        for i in lat.sites
    )
    row_cols: dict[int, list[int]] = {}
    for r, c in lat.coords:
        row_cols.setdefault(r, []).append(c)
    groups: list[list[tuple[int, int]]] = [coulomb, [], [], []]
    for e in lat.edges:
        if e.orientation == HORIZONTAL:
            (ra, ca), (_, cb) = lat.coords[e.a], lat.coords[e.b]
            left = min(ca, cb)
            if lat.row_direction.get(ra, 1) > 0:
                pos = left - min(row_cols[ra])
            else:
                pos = max(row_cols[ra]) - (left + 1)
            g = 1 if pos % 2 == 0 else 2
        else:
            g = 3
        for s in (UP, DOWN):
            qa, qb = lat.qubit_of(e.a, s), lat.qubit_of(e.b, s)
            groups[g].append((min(qa, qb), max(qa, qb)))
    for g in groups:
        used: set[int] = set()
        for a, b in g:
            if a in used or b in used:
                raise ConfigurationError("edge colouring produced overlapping pairs")
            used.update((a, b))
    return groups
