"""Consistent families of POVMs indexed by finite coordinate subsets.

The extension ``G`` on the infinite product space is never built as an
object of its own.  It is represented by a :class:`PovmFamily` together with
:func:`cylinder_operator`, which evaluates ``G`` on any cylinder set whose base
is a finite coordinate subset.  Consistency of the family is exactly what
makes that evaluation independent of the chosen base.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .config import DEFAULT_TOL, Tolerances
from .errors import (
    ConsistencyError,
    DimensionMismatchError,
    NotSesquilinearError,
    OutcomeError,
    SubsetError,
)
from .polarization import polarize, reconstruct_operator
from .povm import (
    EventSet,
    LabeledPOVM,
    OutcomeSpace,
    ProductSpace,
    born_probability,
    event_operator,
    marginal,
    verify_povm,
)


@dataclass(frozen=True)
class IndexSet:
    """Finite window into the index set: ordered coordinate names and their outcome spaces."""

    coordinates: tuple
    spaces: dict = field(compare=False)

    def __post_init__(self):
        coords = tuple(self.coordinates)
        if len(set(coords)) != len(coords):
            raise ValueError(f"coordinate names must be distinct: {coords}")
        missing = [c for c in coords if c not in self.spaces]
        if missing:
            raise ValueError(f"no outcome space for coordinates {missing}")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "_pos", {c: i for i, c in enumerate(coords)})

    def key(self, K: Iterable[str]) -> tuple:
        """Canonical form of a coordinate subset: index order, no repeats."""
        K = set(K)
        unknown = K - set(self.coordinates)
        if unknown:
            raise SubsetError(f"unknown coordinates {sorted(unknown)}")
        return tuple(sorted(K, key=self._pos.__getitem__))

    def product_space(self, K: Iterable[str]) -> ProductSpace:
        return ProductSpace(tuple(self.spaces[c].relabel(c) for c in self.key(K)))


class PovmFamily:
    """Map from finite coordinate subsets ``K`` to POVMs on ``prod_{t in K} M_t``.

    Members not stored explicitly are derived by marginalizing a stored
    superset (the smallest one, ties broken by index order).  Construction
    checks structure only; run :func:`verify_members` for the POVM axioms.
    """

    def __init__(self, index: IndexSet, members: dict):
        self.index = index
        stored = {}
        dims = set()
        for K, P in members.items():
            key = index.key(K)
            if not key:
                raise SubsetError("members must have a non-empty coordinate set")
            if P.space.labels != key:
                raise SubsetError(f"member for {key} has factors labelled {P.space.labels}")
            for f in P.space.factors:
                if f.atoms != index.spaces[f.label].atoms:
                    raise OutcomeError(f"member {key}: factor {f.label!r} atoms differ from the index")
            stored[key] = P
            dims.add(P.dim)
        if len(dims) > 1:
            raise DimensionMismatchError(f"members act on different Hilbert dimensions {sorted(dims)}")
        if not stored:
            raise ValueError("family has no members")
        self.members = stored
        self.dim = dims.pop()
        self._derived = {}

    @classmethod
    def from_members(cls, members: Sequence[LabeledPOVM], coordinates: Sequence[str] | None = None) -> "PovmFamily":
        """Build the index set from member factor labels."""
        spaces = {}
        for P in members:
            for f in P.space.factors:
                if f.label in spaces and spaces[f.label].atoms != f.atoms:
                    raise OutcomeError(f"coordinate {f.label!r} has inconsistent atoms across members")
                spaces.setdefault(f.label, f)
        if coordinates is None:
            coordinates = list(spaces)
        index = IndexSet(tuple(coordinates), spaces)
        return cls(index, {P.space.labels: P for P in members})

    def derivable(self, K: Iterable[str]) -> bool:
        key = self.index.key(K)
        return bool(key) and any(set(key) <= set(S) for S in self.members)

    def member(self, K: Iterable[str]) -> LabeledPOVM:
        key = self.index.key(K)
        if key in self.members:
            return self.members[key]
        if key in self._derived:
            return self._derived[key]
        supersets = [S for S in self.members if set(key) <= set(S)]
        if not key or not supersets:
            raise SubsetError(f"member {key} is not derivable from stored members {list(self.members)}")
        source = min(supersets, key=len)
        P = marginal(self.members[source], key)
        self._derived[key] = P
        return P

    @property
    def covered_coordinates(self) -> tuple:
        covered = set().union(*self.members)
        return tuple(c for c in self.index.coordinates if c in covered)

    def to_dict(self) -> dict:
        return {
            "coordinates": list(self.index.coordinates),
            "members": [{"K": list(K), "povm": P.to_dict()} for K, P in self.members.items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PovmFamily":
        members = [LabeledPOVM.from_dict(m["povm"]) for m in data["members"]]
        for m, P in zip(data["members"], members):
            if list(P.space.labels) != list(m["K"]):
                raise SubsetError(f"member K={m['K']} has factors labelled {list(P.space.labels)}")
        coords = [str(c) for c in data["coordinates"]]
        known = {f.label for P in members for f in P.space.factors}
        if set(coords) != known:
            raise SubsetError(f"coordinates {coords} do not match member factors {sorted(known)}")
        return cls.from_members(members, coords)

    def __repr__(self):
        return f"PovmFamily(coordinates={self.index.coordinates}, members={list(self.members)}, dim={self.dim})"


def verify_members(F: PovmFamily, tol: Tolerances = DEFAULT_TOL) -> dict:
    """``verify_povm`` report for each stored member."""
    return {K: verify_povm(P, tol) for K, P in F.members.items()}


class PrefixFamily:
    """POVMs ``G_1, ..., G_N`` with ``G_n`` on ``M^n``.

    Coordinates are named ``"1"`` to ``"N"``; the factors of each ``G_n`` are
    relabelled accordingly.
    """

    def __init__(self, space: OutcomeSpace, povms: Sequence[LabeledPOVM]):
        if not povms:
            raise ValueError("prefix family needs at least G_1")
        relabelled = []
        for n, P in enumerate(povms, start=1):
            if len(P.space.factors) != n:
                raise DimensionMismatchError(f"G_{n} has {len(P.space.factors)} factors")
            if any(f.atoms != space.atoms for f in P.space.factors):
                raise OutcomeError(f"G_{n} is not on M^{n}")
            relabelled.append(P.relabel(self.coordinate_names(n)))
        dims = {P.dim for P in relabelled}
        if len(dims) > 1:
            raise DimensionMismatchError(f"prefix members act on different dimensions {sorted(dims)}")
        self.space = space
        self.povms = tuple(relabelled)
        self.dim = dims.pop()

    @staticmethod
    def coordinate_names(n: int) -> tuple:
        return tuple(str(i) for i in range(1, n + 1))

    @property
    def depth(self) -> int:
        return len(self.povms)

    def __getitem__(self, n: int) -> LabeledPOVM:
        """``G_n`` (1-based)."""
        if not 1 <= n <= self.depth:
            raise IndexError(f"G_{n} not available (depth {self.depth})")
        return self.povms[n - 1]

    def prefix_residuals(self) -> list:
        """``max |marginal(G_{n+1}, 1..n) - G_n|`` for ``n = 1..N-1``."""
        out = []
        for n in range(1, self.depth):
            m = marginal(self[n + 1], self.coordinate_names(n))
            out.append(float(np.max(np.abs(m.effects - self[n].effects))))
        return out

    def index(self) -> IndexSet:
        coords = self.coordinate_names(self.depth)
        return IndexSet(coords, {c: self.space.relabel(c) for c in coords})

    def to_family(self) -> PovmFamily:
        """The stored prefixes only, as a family (other members are derived)."""
        return PovmFamily(self.index(), {P.space.labels: P for P in self.povms})

    @classmethod
    def from_family(cls, F: PovmFamily) -> "PrefixFamily":
        """Inverse of :meth:`to_family`; requires members keyed exactly ``{1..n}``."""
        N = len(F.index.coordinates)
        try:
            povms = [F.members[cls.coordinate_names(n)] for n in range(1, N + 1)]
        except KeyError:
            raise SubsetError("family members are not the prefixes {1..n}") from None
        space = F.index.spaces["1"]
        return cls(OutcomeSpace(space.label, space.atoms), povms)

    def to_dict(self) -> dict:
        return self.to_family().to_dict()


@dataclass
class ConsistencyReport:
    passed: bool
    max_residual: float
    witness: tuple | None
    pairs_checked: int
    residuals: list

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            K, K2, atom = self.witness
            w = {"K": list(K), "K_prime": list(K2), "atom": list(atom)}
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "witness": w,
            "pairs_checked": self.pairs_checked,
            "residuals": [{"K": list(K), "K_prime": list(K2), "residual": r} for K, K2, r in self.residuals],
        }


def _pair_residual(small: LabeledPOVM, big: LabeledPOVM, K: tuple):
    diff = np.abs(marginal(big, K).effects - small.effects)
    per_atom = diff.max(axis=(-2, -1))
    idx = np.unravel_index(int(np.argmax(per_atom)), per_atom.shape)
    atom = tuple(f.atoms[i] for f, i in zip(small.space.factors, idx))
    return float(per_atom[idx]), atom


def check_consistency(
    F: PovmFamily,
    tol: float | None = None,
    sampled_pairs: int = 50,
    seed: int | np.random.Generator | None = 0,
) -> ConsistencyReport:
    """Compare ``marginal(G_K', K)`` against ``G_K`` entrywise.

    Every stored pair ``K < K'`` is checked.  In addition ``sampled_pairs``
    random pairs ``(K, K')`` with ``K'`` stored and ``K`` a proper subset are
    compared against ``F.member(K)``, which may be derived from a different
    stored superset.
    """
    tol = DEFAULT_TOL.consistency if tol is None else tol
    dims = {P.dim for P in F.members.values()}
    if len(dims) > 1:
        raise DimensionMismatchError(f"members act on different Hilbert dimensions {sorted(dims)}")
    pairs = []
    keys = list(F.members)
    for K, K2 in itertools.permutations(keys, 2):
        if set(K) < set(K2):
            pairs.append((K, K2))
    rng = np.random.default_rng(seed)
    big_keys = [K for K in keys if len(K) > 1]
    if big_keys:
        for _ in range(sampled_pairs):
            K2 = big_keys[rng.integers(len(big_keys))]
            size = int(rng.integers(1, len(K2)))
            K = F.index.key(rng.choice(list(K2), size=size, replace=False).tolist())
            pairs.append((K, K2))
    residuals = []
    worst, witness = 0.0, None
    for K, K2 in pairs:
        r, atom = _pair_residual(F.member(K), F.members[K2], K)
        residuals.append((K, K2, r))
        if witness is None or r > worst:
            worst, witness = r, (K, K2, atom)
    return ConsistencyReport(worst <= tol, worst, witness, len(pairs), residuals)


def lift_prefix_family(F: PrefixFamily, tol: float | None = None) -> PovmFamily:
    """Family over every non-empty ``K`` in ``{1..N}``.

    ``G_K = marginal(G_n, K)`` with ``n = max K``; any larger ``n`` gives the
    same operator once the prefixes are consistent, which is checked first.
    """
    tol = DEFAULT_TOL.consistency if tol is None else tol
    for n, r in enumerate(F.prefix_residuals(), start=1):
        if r > tol:
            raise ConsistencyError(f"G_{n + 1} does not marginalize to G_{n} (residual {r:.3e})", n=n, residual=r)
    coords = F.coordinate_names(F.depth)
    members = {}
    for size in range(1, F.depth + 1):
        for K in itertools.combinations(coords, size):
            n = int(K[-1])
            members[K] = marginal(F[n], K)
    return PovmFamily(F.index(), members)


class CylinderSet:
    """``A_K x prod_{t not in K} M_t`` given by a base ``K`` and an event on ``M^K``."""

    __slots__ = ("base", "event")

    def __init__(self, base: Sequence[str], event: EventSet):
        base = tuple(base)
        if event.space.labels != base:
            raise OutcomeError(f"event factors {event.space.labels} do not match base {base}")
        self.base = base
        self.event = event

    @classmethod
    def from_atoms(cls, index: IndexSet, base: Iterable[str], atoms: Iterable) -> "CylinderSet":
        key = index.key(base)
        return cls(key, EventSet(index.product_space(key), atoms))

    @classmethod
    def from_mask(cls, index: IndexSet, base: Iterable[str], mask) -> "CylinderSet":
        key = index.key(base)
        return cls(key, EventSet.from_mask(index.product_space(key), mask))

    @classmethod
    def full(cls, index: IndexSet, base: Iterable[str]) -> "CylinderSet":
        key = index.key(base)
        return cls(key, EventSet.full(index.product_space(key)))

    def enlarge(self, index: IndexSet, base: Iterable[str]) -> "CylinderSet":
        """The same set written over a larger base ``K' >= K``."""
        key = index.key(base)
        if not set(self.base) <= set(key):
            raise SubsetError(f"{key} does not contain {self.base}")
        space = index.product_space(key)
        new_axes = tuple(i for i, c in enumerate(key) if c not in self.base)
        mask = np.broadcast_to(np.expand_dims(self.event.mask, new_axes), space.shape)
        return CylinderSet(key, EventSet.from_mask(space, mask))

    def complement(self) -> "CylinderSet":
        return CylinderSet(self.base, self.event.complement())

    def to_dict(self) -> dict:
        return {"base": list(self.base), "atoms": [list(a) for a in self.event.atoms]}

    def __repr__(self):
        return f"CylinderSet(base={self.base}, atoms={len(self.event)}/{self.event.space.size})"


def cylinder_operator(F: PovmFamily, C: CylinderSet) -> np.ndarray:
    """``G(C) = G_K(A_K)`` for the cylinder ``C = A_K x prod M_t``."""
    return event_operator(F.member(C.base), C.event)


def cylinder_probability(F: PovmFamily, C: CylinderSet, psi, tol: Tolerances = DEFAULT_TOL) -> float:
    """``mu^psi(C) = <psi|G_K(A_K) psi>`` for unit ``psi``."""
    return born_probability(F.member(C.base), C.event, psi, tol)


def random_cylinder(F: PovmFamily, rng: np.random.Generator, base_size: int | None = None) -> CylinderSet:
    """Random base among covered coordinates, each atom tuple kept with probability 1/2."""
    coords = F.covered_coordinates
    while True:
        size = int(rng.integers(1, len(coords) + 1)) if base_size is None else base_size
        base = F.index.key(rng.choice(list(coords), size=size, replace=False).tolist())
        if F.derivable(base):
            break
    space = F.index.product_space(base)
    return CylinderSet(base, EventSet.from_mask(space, rng.random(space.shape) < 0.5))


def scalar_slice(F: PovmFamily, psi, tol: Tolerances = DEFAULT_TOL) -> PovmFamily:
    """Family of 1x1 "POVMs" holding the probabilities ``<psi|G_K(a) psi>``.

    Consistency of this family is the classical consistency of the measures
    ``mu_K^psi``.
    """
    psi = linalg.require_normalized(psi, tol)
    members = {}
    for K, P in F.members.items():
        probs = np.einsum("i,...ij,j->...", psi.conj(), P.effects, psi).real
        members[K] = LabeledPOVM(P.space, probs[..., None, None])
    return PovmFamily(F.index, members)


@dataclass
class ExtensionReport:
    """Residual maxima of :func:`extend_and_verify`; ``passed`` needs all below ``tol``."""

    passed: bool
    tol: float
    consistency: ConsistencyReport
    n_cylinders: int
    max_operator_residual: float
    max_positivity_residual: float
    max_hermiticity_residual: float
    max_additivity_residual: float
    partition_residual: float
    identity_residual: float
    cylinders: list
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "consistency": self.consistency.to_dict(),
            "n_cylinders": self.n_cylinders,
            "max_operator_residual": self.max_operator_residual,
            "max_positivity_residual": self.max_positivity_residual,
            "max_hermiticity_residual": self.max_hermiticity_residual,
            "max_additivity_residual": self.max_additivity_residual,
            "partition_residual": self.partition_residual,
            "identity_residual": self.identity_residual,
            "cylinders": self.cylinders,
            "error": self.error,
        }


def reconstruct_cylinder_operator(
    F: PovmFamily, C: CylinderSet, seed=0, tol: Tolerances = DEFAULT_TOL
) -> np.ndarray:
    """Rebuild ``G(C)`` from the scalar measures ``psi -> mu^psi(C)`` alone."""
    q = lambda psi: cylinder_probability(F, C, psi, tol)  # noqa: E731
    return reconstruct_operator(polarize(q, F.dim, unit_sphere=True), F.dim, seed=seed, tol=tol)


def _split(C: CylinderSet, rng: np.random.Generator):
    coin = rng.random(C.event.mask.shape) < 0.5
    space = C.event.space
    return (
        CylinderSet(C.base, EventSet.from_mask(space, C.event.mask & coin)),
        CylinderSet(C.base, EventSet.from_mask(space, C.event.mask & ~coin)),
    )


def extend_and_verify(
    F: PovmFamily,
    cylinders: Sequence[CylinderSet] | int = 20,
    seed: int = 0,
    tol: float = 1e-10,
    partition_blocks: int = 3,
    consistency_tol: float | None = None,
) -> ExtensionReport:
    """Exercise the extension end to end on sampled cylinder sets.

    For each cylinder ``A`` the operator ``G(A)`` is rebuilt purely from the
    scalar map ``psi -> mu^psi(A)`` by polarization, then compared with
    :func:`cylinder_operator`.  Reconstructed operators are also checked for
    positivity, for additivity over a random split ``A = B u C``, and a
    random partition of a random base must reconstruct to the identity.
    """
    rng = np.random.default_rng(seed)
    consistency = check_consistency(F, consistency_tol, seed=rng)
    if isinstance(cylinders, int):
        cylinders = [random_cylinder(F, rng) for _ in range(cylinders)]
    if not cylinders:
        raise ValueError("nothing to verify: no cylinder sets")
    if not consistency.passed:
        return ExtensionReport(False, tol, consistency, len(cylinders), *([float("nan")] * 6), [],
                               error="family fails the consistency check")
    rec = lambda C: reconstruct_cylinder_operator(F, C, seed=rng)  # noqa: E731
    op_res = pos_res = herm_res = add_res = 0.0
    records = []
    try:
        for C in cylinders:
            G = rec(C)
            exact = cylinder_operator(F, C)
            r_op = float(np.max(np.abs(G - exact)))
            r_herm = linalg.hermiticity_residual(G)
            r_pos = max(0.0, -float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0]))
            B1, B2 = _split(C, rng)
            r_add = float(np.max(np.abs(rec(B1) + rec(B2) - G)))
            op_res, pos_res = max(op_res, r_op), max(pos_res, r_pos)
            herm_res, add_res = max(herm_res, r_herm), max(add_res, r_add)
            records.append({**C.to_dict(), "operator_residual": r_op, "positivity_residual": r_pos,
                            "hermiticity_residual": r_herm, "additivity_residual": r_add})
        ident = np.eye(F.dim)
        full = CylinderSet.full(F.index, F.covered_coordinates[:1])
        id_res = float(np.max(np.abs(rec(full) - ident)))
        part_base = random_cylinder(F, rng).base
        space = F.index.product_space(part_base)
        labels = rng.integers(partition_blocks, size=space.shape)
        total = sum(rec(CylinderSet(part_base, EventSet.from_mask(space, labels == b)))
                    for b in range(partition_blocks))
        part_res = float(np.max(np.abs(total - ident)))
    except NotSesquilinearError as exc:
        return ExtensionReport(False, tol, consistency, len(cylinders), op_res, pos_res, herm_res, add_res,
                               float("nan"), float("nan"), records, error=str(exc))
    passed = max(op_res, pos_res, herm_res, add_res, part_res, id_res) <= tol
    return ExtensionReport(passed, tol, consistency, len(cylinders), op_res, pos_res, herm_res,
                           add_res, part_res, id_res, records)
