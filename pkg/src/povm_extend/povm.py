"""POVMs on finite outcome spaces.

A :class:`LabeledPOVM` stores one effect per atom of a finite product space.
Event operators are sums of effects, so sigma-additivity reduces to finite
additivity.  Atom tuples are ordered lexicographically in the declared factor
order, and every serialization follows that order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import linalg
from .config import DEFAULT_TOL, Tolerances
from .errors import (
    DimensionMismatchError,
    MissingEffectError,
    NonCommutingError,
    OutcomeError,
    SubsetError,
)

Atom = Hashable
AtomTuple = tuple


@dataclass(frozen=True)
class OutcomeSpace:
    """A finite outcome space: a label and an ordered list of distinct atoms."""

    label: str
    atoms: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError(f"outcome space {self.label!r} has no atoms")
        index = {a: i for i, a in enumerate(atoms)}
        if len(index) != len(atoms):
            raise ValueError(f"outcome space {self.label!r} has repeated atoms")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.atoms)

    def index(self, atom) -> int:
        try:
            return self._index[atom]
        except (KeyError, TypeError):
            raise OutcomeError(f"atom {atom!r} is not in outcome space {self.label!r}") from None

    def relabel(self, label: str) -> "OutcomeSpace":
        return OutcomeSpace(label, self.atoms)

    def to_dict(self) -> dict:
        return {"label": self.label, "atoms": list(self.atoms)}

    @classmethod
    def from_dict(cls, data: dict) -> "OutcomeSpace":
        return cls(str(data["label"]), tuple(data["atoms"]))


@dataclass(frozen=True)
class ProductSpace:
    """Ordered product of outcome spaces with distinct labels."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product space needs at least one factor")
        labels = [f.label for f in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"factor labels must be distinct, got {labels}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, space: "OutcomeSpace | ProductSpace") -> "ProductSpace":
        return space if isinstance(space, ProductSpace) else cls((space,))

    @property
    def labels(self) -> tuple:
        return tuple(f.label for f in self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.size for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def factor(self, label: str) -> OutcomeSpace:
        for f in self.factors:
            if f.label == label:
                return f
        raise SubsetError(f"no factor labelled {label!r}")

    def atom_tuples(self) -> list:
        """All atom tuples in lexicographic factor order."""
        return list(itertools.product(*(f.atoms for f in self.factors)))

    def normalize_atom(self, atom) -> tuple:
        if not isinstance(atom, tuple):
            atom = tuple(atom) if isinstance(atom, list) else (atom,)
        if len(atom) != len(self.factors):
            raise OutcomeError(f"atom tuple {atom!r} has wrong length for space {self.labels}")
        return atom

    def index(self, atom) -> tuple:
        atom = self.normalize_atom(atom)
        return tuple(f.index(a) for f, a in zip(self.factors, atom))

    def to_dict(self) -> dict:
        return {"factors": [f.to_dict() for f in self.factors]}

    @classmethod
    def from_dict(cls, data: dict) -> "ProductSpace":
        return cls(tuple(OutcomeSpace.from_dict(f) for f in data["factors"]))


class EventSet:
    """A set of atom tuples of a product space, stored as a boolean mask."""

    __slots__ = ("space", "mask")

    def __init__(self, space, atoms: Iterable = ()):
        space = ProductSpace.of(space)
        mask = np.zeros(space.shape, dtype=bool)
        for atom in atoms:
            mask[space.index(atom)] = True
        mask.flags.writeable = False
        self.space = space
        self.mask = mask

    @classmethod
    def from_mask(cls, space, mask) -> "EventSet":
        space = ProductSpace.of(space)
        mask = np.array(mask, dtype=bool)
        if mask.shape != space.shape:
            raise OutcomeError(f"mask shape {mask.shape} does not match space shape {space.shape}")
        ev = cls(space)
        mask.flags.writeable = False
        ev.mask = mask
        return ev

    @classmethod
    def full(cls, space) -> "EventSet":
        space = ProductSpace.of(space)
        return cls.from_mask(space, np.ones(space.shape, dtype=bool))

    @property
    def atoms(self) -> list:
        return [t for t, m in zip(self.space.atom_tuples(), self.mask.ravel()) if m]

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, atom):
        return bool(self.mask[self.space.index(atom)])

    def _check_same(self, other: "EventSet"):
        if other.space != self.space:
            raise OutcomeError("events live on different spaces")

    def complement(self) -> "EventSet":
        return EventSet.from_mask(self.space, ~self.mask)

    def union(self, other: "EventSet") -> "EventSet":
        self._check_same(other)
        return EventSet.from_mask(self.space, self.mask | other.mask)

    def intersection(self, other: "EventSet") -> "EventSet":
        self._check_same(other)
        return EventSet.from_mask(self.space, self.mask & other.mask)

    def isdisjoint(self, other: "EventSet") -> bool:
        self._check_same(other)
        return not np.any(self.mask & other.mask)

    def __eq__(self, other):
        return isinstance(other, EventSet) and other.space == self.space and np.array_equal(self.mask, other.mask)

    def __repr__(self):
        return f"EventSet({self.space.labels}, {self.atoms!r})"


def as_event(space: ProductSpace, A) -> EventSet:
    if isinstance(A, EventSet):
        if A.space != space:
            raise OutcomeError(f"event space {A.space.labels} differs from POVM space {space.labels}")
        return A
    return EventSet(space, A)


class LabeledPOVM:
    """POVM on a finite product space.

    Parameters
    ----------
    space : OutcomeSpace or ProductSpace
    effects : array_like, shape ``space.shape + (dim, dim)``
        One operator per atom tuple.
    """

    __slots__ = ("space", "effects", "dim")

    def __init__(self, space, effects):
        space = ProductSpace.of(space)
        effects = np.array(effects, dtype=complex)
        if effects.ndim != len(space.factors) + 2:
            raise DimensionMismatchError(
                f"effects array has shape {effects.shape}, expected {space.shape} + (dim, dim)"
            )
        if effects.shape[:-2] != space.shape:
            raise MissingEffectError(f"effects cover shape {effects.shape[:-2]}, space has shape {space.shape}")
        if effects.shape[-1] != effects.shape[-2]:
            raise DimensionMismatchError("effects must be square")
        effects.flags.writeable = False
        self.space = space
        self.effects = effects
        self.dim = effects.shape[-1]

    @classmethod
    def from_effects(cls, space, effects: dict) -> "LabeledPOVM":
        """Build from a mapping atom tuple -> operator (every atom required)."""
        space = ProductSpace.of(space)
        normed = {space.normalize_atom(k): linalg.as_operator(v) for k, v in effects.items()}
        dims = {op.shape[0] for op in normed.values()}
        if len(dims) > 1:
            raise DimensionMismatchError(f"effects have differing dimensions {sorted(dims)}")
        missing = [a for a in space.atom_tuples() if a not in normed]
        if missing:
            raise MissingEffectError(f"no effect for atoms {missing[:5]}")
        extra = set(normed) - set(space.atom_tuples())
        if extra:
            raise OutcomeError(f"effects given for atoms outside the space: {sorted(map(repr, extra))[:5]}")
        (dim,) = dims
        arr = np.empty(space.shape + (dim, dim), dtype=complex)
        for a, op in normed.items():
            arr[space.index(a)] = op
        return cls(space, arr)

    def effect(self, atom) -> np.ndarray:
        return self.effects[self.space.index(atom)]

    def items(self):
        """Yield ``(atom_tuple, effect)`` pairs in lexicographic order."""
        flat = self.effects.reshape(-1, self.dim, self.dim)
        yield from zip(self.space.atom_tuples(), flat)

    def relabel(self, labels: Sequence[str]) -> "LabeledPOVM":
        if len(labels) != len(self.space.factors):
            raise ValueError("need one label per factor")
        space = ProductSpace(tuple(f.relabel(l) for f, l in zip(self.space.factors, labels)))
        return LabeledPOVM(space, self.effects)

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "dim": int(self.dim),
            "effects": [{"atom": list(a), "op": linalg.operator_to_dict(op)} for a, op in self.items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LabeledPOVM":
        space = ProductSpace.from_dict(data["space"])
        dim = int(data["dim"])
        effects = {}
        for entry in data["effects"]:
            atom = space.normalize_atom(entry["atom"])
            if atom in effects:
                raise OutcomeError(f"duplicate effect for atom {atom!r}")
            effects[atom] = linalg.operator_from_dict(entry["op"])
        povm = cls.from_effects(space, effects)
        if povm.dim != dim:
            raise DimensionMismatchError(f"POVM JSON declares dim {dim}, effects have dim {povm.dim}")
        return povm

    def __repr__(self):
        return f"LabeledPOVM(labels={self.space.labels}, shape={self.space.shape}, dim={self.dim})"


@dataclass
class VerificationReport:
    """Outcome of :func:`verify_povm`.

    ``failures`` names each violated axiom: ``("hermiticity", atom)``,
    ``("positivity", atom)`` or ``("normalization", None)``.
    """

    passed: bool
    positivity_residuals: dict
    hermiticity_residuals: dict
    normalization_residual: float
    failures: list

    @property
    def max_positivity_residual(self) -> float:
        return max(self.positivity_residuals.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "normalization_residual": self.normalization_residual,
            "max_positivity_residual": self.max_positivity_residual,
            "max_hermiticity_residual": max(self.hermiticity_residuals.values()),
            "positivity_residuals": [
                {"atom": list(a), "residual": r} for a, r in self.positivity_residuals.items()
            ],
            "failures": [{"axiom": ax, "atom": None if a is None else list(a)} for ax, a in self.failures],
        }


def verify_povm(P: LabeledPOVM, tol: Tolerances = DEFAULT_TOL) -> VerificationReport:
    """Check the POVM axioms for every effect of ``P``.

    Positivity residuals are ``max(0, -lambda_min)`` per effect and the
    normalization residual is ``max |sum(effects) - I|``.
    """
    flat = P.effects.reshape(-1, P.dim, P.dim)
    atoms = P.space.atom_tuples()
    herm = np.max(np.abs(flat - np.conj(np.swapaxes(flat, -1, -2))), axis=(-2, -1))
    sym = 0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2)))
    lmin = np.linalg.eigvalsh(sym)[:, 0]
    scale = 1.0 + np.max(np.abs(flat), axis=(-2, -1))
    failures = []
    pos_res, herm_res = {}, {}
    for a, h, lm, s in zip(atoms, herm, lmin, scale):
        herm_res[a] = float(h)
        pos_res[a] = float(max(0.0, -lm))
        if h > tol.hermitian:
            failures.append(("hermiticity", a))
        if lm < -tol.positivity * s:
            failures.append(("positivity", a))
    total = flat.sum(axis=0)
    norm_res = float(np.max(np.abs(total - np.eye(P.dim))))
    if norm_res > tol.norm:
        failures.append(("normalization", None))
    return VerificationReport(not failures, pos_res, herm_res, norm_res, failures)


def event_operator(P: LabeledPOVM, A) -> np.ndarray:
    """``G(A)``: the sum of effects over the atoms of ``A``."""
    A = as_event(P.space, A)
    return P.effects[A.mask].sum(axis=0)


def atom_probabilities(P: LabeledPOVM, psi) -> np.ndarray:
    """Array of ``<psi|G({a}) psi>`` over all atoms, shaped like the space."""
    psi = linalg.as_state(psi)
    if psi.size != P.dim:
        raise DimensionMismatchError(f"state dim {psi.size} != POVM dim {P.dim}")
    return np.einsum("i,...ij,j->...", psi.conj(), P.effects, psi).real


def born_probability(P: LabeledPOVM, A, psi, tol: Tolerances = DEFAULT_TOL) -> float:
    """``<psi|G(A) psi>`` for a unit vector ``psi``."""
    psi = linalg.as_state(psi)
    if psi.size != P.dim:
        raise DimensionMismatchError(f"state dim {psi.size} != POVM dim {P.dim}")
    psi = linalg.require_normalized(psi, tol)
    return float(linalg.quadratic_form(event_operator(P, A), psi).real)


def density_probability(P: LabeledPOVM, A, rho, tol: Tolerances = DEFAULT_TOL) -> float:
    """``tr(rho G(A))``."""
    rho = linalg.as_operator(rho)
    if rho.shape[0] != P.dim:
        raise DimensionMismatchError(f"density matrix dim {rho.shape[0]} != POVM dim {P.dim}")
    rho = linalg.as_density_matrix(rho, tol)
    return float(np.trace(rho @ event_operator(P, A)).real)


def marginal(P: LabeledPOVM, K: Sequence[str]) -> LabeledPOVM:
    """Sum out every factor of ``P`` whose label is not in ``K``.

    Factor order of the result follows ``P``.
    """
    K = set(K)
    labels = P.space.labels
    if not K <= set(labels):
        raise SubsetError(f"{sorted(K - set(labels))} not among POVM factors {labels}")
    if not K:
        raise SubsetError("marginal onto the empty coordinate set is not represented")
    drop = tuple(i for i, l in enumerate(labels) if l not in K)
    keep = tuple(f for f in P.space.factors if f.label in K)
    effects = P.effects.sum(axis=drop) if drop else P.effects
    return LabeledPOVM(ProductSpace(keep), effects)


def tensor_product(Q: LabeledPOVM, R: LabeledPOVM, mode: str = "kron", tol: Tolerances = DEFAULT_TOL) -> LabeledPOVM:
    """Joint POVM on ``Q.space x R.space``.

    ``mode="kron"`` acts on the tensor-product Hilbert space with effects
    ``kron(Q(a), R(b))``.  ``mode="commuting"`` stays on the common space with
    effects ``Q(a) R(b)`` and requires every pair to commute.
    """
    space = ProductSpace(Q.space.factors + R.space.factors)
    nq, nr = Q.space.size, R.space.size
    qf = Q.effects.reshape(nq, Q.dim, Q.dim)
    rf = R.effects.reshape(nr, R.dim, R.dim)
    if mode == "kron":
        eff = np.einsum("aij,bkl->abikjl", qf, rf).reshape(nq, nr, Q.dim * R.dim, Q.dim * R.dim)
        dim = Q.dim * R.dim
    elif mode == "commuting":
        if Q.dim != R.dim:
            raise DimensionMismatchError(f"commuting product needs equal dims, got {Q.dim} and {R.dim}")
        qr = np.einsum("aij,bjk->abik", qf, rf)
        rq = np.einsum("bij,ajk->abik", rf, qf)
        residual = float(np.max(np.abs(qr - rq)))
        if residual > tol.hermitian:
            raise NonCommutingError(f"effects do not commute (max |[Q(a),R(b)]| = {residual:.3e})", residual)
        eff, dim = qr, Q.dim
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return LabeledPOVM(space, eff.reshape(space.shape + (dim, dim)))


def projective_povm(label: str, basis, atoms: Sequence | None = None) -> LabeledPOVM:
    """POVM of rank-one projectors onto the columns of a unitary ``basis``."""
    basis = linalg.as_operator(basis)
    n = basis.shape[0]
    atoms = tuple(range(n)) if atoms is None else tuple(atoms)
    effects = np.einsum("ia,ja->aij", basis, basis.conj())
    return LabeledPOVM(OutcomeSpace(label, atoms), effects)


def random_povm(dim: int, n_outcomes: int, rng: np.random.Generator, label: str = "M") -> LabeledPOVM:
    """Random full-rank POVM: ``S^-1/2 A_a^dag A_a S^-1/2`` with ``S = sum A_a^dag A_a``."""
    a = rng.standard_normal((n_outcomes, dim, dim)) + 1j * rng.standard_normal((n_outcomes, dim, dim))
    pos = np.einsum("aji,ajk->aik", a.conj(), a)
    w, v = np.linalg.eigh(pos.sum(axis=0))
    s_inv_half = (v / np.sqrt(w)) @ v.conj().T
    effects = s_inv_half @ pos @ s_inv_half
    effects = 0.5 * (effects + np.conj(np.swapaxes(effects, -1, -2)))
    return LabeledPOVM(OutcomeSpace(label, tuple(range(n_outcomes))), effects)


def povm_from_kraus(label: str, atoms: Sequence, kraus: Sequence) -> LabeledPOVM:
    """Effects ``K_a^dag K_a`` for a list of Kraus operators."""
    k = np.asarray(kraus, dtype=complex)
    return LabeledPOVM(OutcomeSpace(label, tuple(atoms)), np.einsum("aji,ajk->aik", k.conj(), k))
