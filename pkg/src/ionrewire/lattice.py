"""Shelving masks, interaction-graph rewiring, and target lattice patterns.

A ShelveMask marks each ion as an active qubit ('Q') or shelved out of the
qubit subspace ('S'). Applying a mask to a coupling matrix deletes the
shelved rows/columns and leaves the surviving couplings untouched.

Target patterns (honeycomb, kagome) live on an idealized triangular array in
lattice units, decoupled from any physical crystal: removing one sublattice
of the sqrt(3) x sqrt(3) superstructure from a triangular array leaves a
honeycomb lattice (interior degree 3); removing one site per 2 x 2 cell
leaves a kagome lattice (interior degree 4).
"""

from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingMatrix

QUBIT = "Q"
SHELVED = "S"

_PATTERN_DEGREE = {"triangular": 6, "honeycomb": 3, "kagome": 4}


@dataclass(frozen=True)
class ShelveMask:
    """Per-ion qubit/shelved flags; serialized as a Q/S string."""

    shelved: tuple

    def __post_init__(self):
        object.__setattr__(self, "shelved", tuple(bool(s) for s in self.shelved))

    @classmethod
    def from_string(cls, text: str) -> "ShelveMask":
        if any(ch not in (QUBIT, SHELVED) for ch in text):
            raise ValueError(f"mask string must contain only Q/S: {text!r}")
        return cls(tuple(ch == SHELVED for ch in text))

    @classmethod
    def all_qubits(cls, n: int) -> "ShelveMask":
        return cls((False,) * n)

    @classmethod
    def shelve(cls, n: int, indices) -> "ShelveMask":
        chosen = set(indices)
        return cls(tuple(i in chosen for i in range(n)))

    def to_string(self) -> str:
        return "".join(SHELVED if s else QUBIT for s in self.shelved)

    def __len__(self) -> int:
        return len(self.shelved)

    @property
    def survivors(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.shelved) if not s], dtype=int)

    @property
    def shelved_indices(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.shelved) if s], dtype=int)

    def union(self, other: "ShelveMask") -> "ShelveMask":
        if len(other) != len(self):
            raise ValueError("mask lengths differ")
        return ShelveMask(tuple(a or b for a, b in zip(self.shelved, other.shelved)))


@dataclass(frozen=True)
class InteractionGraph:
    """Reduced coupling graph over the surviving ions.

    survivors holds the original ion labels; couplings is the reduced matrix
    in rad/s with entries copied bitwise from the source matrix.
    """

    survivors: np.ndarray
    couplings: np.ndarray
    adjacency_threshold: float | None = None

    def __post_init__(self):
        survivors = np.asarray(self.survivors, dtype=int)
        couplings = np.asarray(self.couplings, dtype=float)
        if len(set(survivors.tolist())) != survivors.size:
            raise ValueError("survivor labels must be unique")
        if couplings.shape != (survivors.size, survivors.size):
            raise ValueError("coupling block shape mismatch")
        object.__setattr__(self, "survivors", survivors)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_spins(self) -> int:
        return int(self.survivors.size)


@dataclass(frozen=True)
class TriangularArray:
    """Patch of a triangular lattice in lattice units.

    sites are (row, col) axial indices; coordinates are the 2D positions
    col + row/2, row*sqrt(3)/2; adjacency lists nearest-neighbor site pairs.
    """

    sites: tuple
    coordinates: np.ndarray
    adjacency: tuple


def triangular_array(rows: int, cols: int) -> TriangularArray:
    """Rhombic rows x cols patch; every bulk site has six nearest neighbors."""
    if rows < 0 or cols < 0:
        raise ValueError("rows and cols must be nonnegative")
    sites = [(i, j) for i in range(rows) for j in range(cols)]
    index = {s: n for n, s in enumerate(sites)}
    coords = np.array([(j + 0.5 * i, 0.5 * np.sqrt(3.0) * i) for i, j in sites],
                      dtype=float).reshape(len(sites), 2)
    neighbor_steps = ((0, 1), (1, 0), (1, -1))
    edges = []
    for i, j in sites:
        for di, dj in neighbor_steps:
            other = (i + di, j + dj)
            if other in index:
                edges.append((index[(i, j)], index[other]))
    return TriangularArray(sites=tuple(sites), coordinates=coords,
                           adjacency=tuple(sorted(edges)))


def interior_sites(array: TriangularArray) -> np.ndarray:
    """Sites with a full six-neighbor coordination shell."""
    degree = np.zeros(len(array.sites), dtype=int)
    for a, b in array.adjacency:
        degree[a] += 1
        degree[b] += 1
    return np.where(degree == 6)[0]


def apply_mask(coupling: CouplingMatrix, mask: ShelveMask) -> InteractionGraph:
    """Delete shelved rows/columns; surviving couplings are unchanged."""
    if len(mask) != coupling.n_ions:
        raise ValueError(
            f"mask length {len(mask)} does not match {coupling.n_ions} ions")
    keep = mask.survivors
    return InteractionGraph(survivors=keep,
                            couplings=coupling.j[np.ix_(keep, keep)])


def honeycomb_mask(array: TriangularArray) -> ShelveMask:
    """Shelve one three-coloring class: survivors form a honeycomb lattice."""
    return ShelveMask(tuple((i - j) % 3 == 0 for i, j in array.sites))


def kagome_mask(array: TriangularArray) -> ShelveMask:
    """Shelve one site per 2x2 cell: survivors form a kagome lattice."""
    return ShelveMask(tuple(i % 2 == 0 and j % 2 == 0 for i, j in array.sites))


def power_law_coupling(array: TriangularArray, strength: float,
                       exponent: float = 3.0) -> CouplingMatrix:
    """Synthetic distance-decaying couplings on the array, rad/s at spacing 1."""
    coords = array.coordinates
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    np.fill_diagonal(dist, np.inf)
    j = strength / dist**exponent
    np.fill_diagonal(j, 0.0)
    return CouplingMatrix(n_ions=n, j=0.5 * (j + j.T))


@dataclass(frozen=True)
class GeometryReport:
    """Outcome of checking a rewired graph against a target pattern."""

    pattern: str
    passed: bool
    expected_degree: int
    interior_degrees: dict
    boundary_degrees: dict
    violations: tuple
    degree_histogram: dict = field(default_factory=dict)


def default_adjacency_threshold(graph: InteractionGraph,
                                array: TriangularArray) -> float:
    """Half the median |J| over surviving nearest-neighbor pairs."""
    keep = set(graph.survivors.tolist())
    values = []
    pos = {label: k for k, label in enumerate(graph.survivors.tolist())}
    for a, b in array.adjacency:
        if a in keep and b in keep:
            values.append(abs(graph.couplings[pos[a], pos[b]]))
    if not values:
        return 0.0
    return 0.5 * float(np.median(values))


def verify_geometry(graph: InteractionGraph, array: TriangularArray,
                    pattern: str, threshold: float | None = None) -> GeometryReport:
    """Check interior survivor degrees against a target pattern.

    Graph edges are surviving nearest-neighbor array pairs with |J| at or
    above the threshold (default: half the median nearest-neighbor |J|).
    Boundary sites are reported but excluded from pass/fail.
    """
    if pattern not in _PATTERN_DEGREE:
        raise ValueError(f"unknown pattern {pattern!r}; "
                         f"expected one of {sorted(_PATTERN_DEGREE)}")
    if threshold is None:
        threshold = default_adjacency_threshold(graph, array)

    keep = set(graph.survivors.tolist())
    pos = {label: k for k, label in enumerate(graph.survivors.tolist())}
    degree = {label: 0 for label in graph.survivors.tolist()}
    for a, b in array.adjacency:
        if a in keep and b in keep and abs(graph.couplings[pos[a], pos[b]]) >= threshold:
            degree[a] += 1
            degree[b] += 1

    interior = set(interior_sites(array).tolist())
    expected = _PATTERN_DEGREE[pattern]
    interior_degrees = {s: d for s, d in degree.items() if s in interior}
    boundary_degrees = {s: d for s, d in degree.items() if s not in interior}
    violations = tuple(sorted(s for s, d in interior_degrees.items() if d != expected))

    histogram: dict = {}
    for d in degree.values():
        histogram[d] = histogram.get(d, 0) + 1

    return GeometryReport(
        pattern=pattern,
        passed=not violations,
        expected_degree=expected,
        interior_degrees=interior_degrees,
        boundary_degrees=boundary_degrees,
        violations=violations,
        degree_histogram=histogram,
    )
