"""Sequential conditional sampling of trajectory prefixes from ``mu^psi``.

Coordinate ``k+1`` is drawn from

    p(a_{k+1} | a_1..a_k) = <psi|G_{k+1}(a_1..a_{k+1}) psi> / <psi|G_k(a_1..a_k) psi>,

which is a proper distribution exactly when the family is consistent.

Random streams: trajectory ``i`` under ``seed`` consumes uniforms from
``numpy.random.default_rng(SeedSequence(seed, spawn_key=(i,)))``, one per
coordinate.  A trajectory is therefore reproducible from ``(seed, i)`` alone,
regardless of batch size or thread count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .config import DEFAULT_TOL, Tolerances
from .errors import SubsetError, ZeroProbabilityPrefixError
from .family import CylinderSet, PovmFamily, PrefixFamily, cylinder_probability
from .povm import atom_probabilities


@dataclass(frozen=True)
class Trajectory:
    atoms: tuple
    seed: int
    index: int = 0


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


class PrefixLaw:
    """Exact prefix probabilities ``p_k[a_1..a_k] = <psi|G_k(a_1..a_k) psi>``, ``k = 1..n``."""

    def __init__(self, F: PrefixFamily | PovmFamily, psi, n: int, tol: Tolerances = DEFAULT_TOL):
        psi = linalg.require_normalized(psi, tol)
        if isinstance(F, PrefixFamily):
            if n > F.depth:
                raise ValueError(f"requested {n} coordinates but the family has depth {F.depth}")
            povms = [F[k] for k in range(1, n + 1)]
            family = F.to_family()
        else:
            coords = F.covered_coordinates
            if n > len(coords):
                raise ValueError(f"requested {n} coordinates but the family covers {len(coords)}")
            povms = [F.member(coords[:k]) for k in range(1, n + 1)]
            family = F
        if n < 1:
            raise ValueError("need at least one coordinate")
        self.family = family
        self.psi = psi
        self.n = n
        self.tol = tol
        self.coordinates = povms[-1].space.labels
        self.spaces = povms[-1].space.factors
        self.probs = [atom_probabilities(P, psi) for P in povms]

    def probability(self, prefix: Sequence[int]) -> float:
        """``<psi|G_k(prefix) psi>`` for atom indices ``prefix``."""
        if len(prefix) == 0:
            return 1.0
        return float(self.probs[len(prefix) - 1][tuple(prefix)])

    def conditional(self, prefix: Sequence[int]) -> np.ndarray:
        """Distribution of the next atom index given ``prefix``."""
        denom = self.probability(prefix)
        if denom < self.tol.zero_probability:
            raise ZeroProbabilityPrefixError(f"prefix {self.atoms(prefix)} has probability {denom:.3e}",
                                             prefix=self.atoms(prefix))
        return self.probs[len(prefix)][tuple(prefix)] / denom

    def atoms(self, indices: Sequence[int]) -> tuple:
        return tuple(self.spaces[k].atoms[i] for k, i in enumerate(indices))

    def sample_indices(self, uniforms: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling, vectorized over rows of ``uniforms`` (shape ``(N, n)``)."""
        N = uniforms.shape[0]
        out = np.zeros((N, self.n), dtype=np.intp)
        denom = np.ones(N)
        for k in range(self.n):
            if k:
                denom = self.probs[k - 1][tuple(out[:, :k].T)]
                bad = np.flatnonzero(denom < self.tol.zero_probability)
                if bad.size:
                    prefix = self.atoms(out[bad[0], :k])
                    raise ZeroProbabilityPrefixError(
                        f"prefix {prefix} has probability {denom[bad[0]]:.3e}", prefix=prefix)
                joint = self.probs[k][tuple(out[:, :k].T)]
            else:
                joint = np.broadcast_to(self.probs[0], (N,) + self.probs[0].shape)
            cond = np.clip(joint / denom[:, None], 0.0, None)
            cdf = np.cumsum(cond, axis=1)
            target = uniforms[:, k] * cdf[:, -1]
            out[:, k] = (cdf <= target[:, None]).sum(axis=1)
        return out


def _uniforms(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    u = np.empty((stop - start, n))
    for row, i in enumerate(range(start, stop)):
        u[row] = trajectory_rng(seed, i).random(n)
    return u


def sample_trajectory(F, psi, n: int, seed: int, index: int = 0, tol: Tolerances = DEFAULT_TOL) -> Trajectory:
    """One trajectory prefix of length ``n`` drawn from ``mu^psi``."""
    law = PrefixLaw(F, psi, n, tol)
    idx = law.sample_indices(_uniforms(seed, index, index + 1, n))[0]
    return Trajectory(law.atoms(idx), seed, index)


def resolve_threads(threads: int | None) -> int:
    """``None`` falls back to ``POVM_EXTEND_THREADS``; ``0`` means all cores."""
    if threads is None:
        threads = int(os.environ.get("POVM_EXTEND_THREADS", "1"))
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def sample_indices(law: PrefixLaw, n_traj: int, seed: int, threads: int | None = 1) -> np.ndarray:
    """Atom-index array of shape ``(n_traj, n)``; row ``i`` uses stream ``(seed, i)``."""
    threads = resolve_threads(threads)
    chunk = max(1, math.ceil(n_traj / threads))
    bounds = [(s, min(s + chunk, n_traj)) for s in range(0, n_traj, chunk)]
    work = lambda b: law.sample_indices(_uniforms(seed, b[0], b[1], law.n))  # noqa: E731
    if threads == 1 or len(bounds) <= 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, bounds))
    return np.concatenate(parts) if parts else np.zeros((0, law.n), dtype=np.intp)


def sample_trajectories(F, psi, n: int, n_traj: int, seed: int, threads: int | None = 1,
                        tol: Tolerances = DEFAULT_TOL) -> list:
    law = PrefixLaw(F, psi, n, tol)
    idx = sample_indices(law, n_traj, seed, threads)
    return [Trajectory(law.atoms(row), seed, i) for i, row in enumerate(idx)]


def trajectories_csv(law: PrefixLaw, indices: np.ndarray, seed: int) -> str:
    """CSV text with columns ``seed,index,a1,...,an``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "index"] + [f"a{k}" for k in range(1, law.n + 1)])
    atom_cols = [np.asarray(law.spaces[k].atoms, dtype=object)[indices[:, k]] for k in range(law.n)]
    for i in range(indices.shape[0]):
        w.writerow([seed, i] + [col[i] for col in atom_cols])
    return buf.getvalue()


def cylinder_battery(family: PovmFamily | PrefixFamily, n: int, rng: np.random.Generator,
                     n_random: int = 10) -> list:
    """Every single-atom event at each of the first ``n`` coordinates, plus
    ``n_random`` random events on random 2-coordinate bases."""
    index = family.index() if isinstance(family, PrefixFamily) else family.index
    coords = list(index.coordinates[:n])
    out = [CylinderSet.from_atoms(index, [c], [atom]) for c in coords for atom in index.spaces[c].atoms]
    if len(coords) >= 2:
        for _ in range(n_random):
            base = index.key(rng.choice(coords, size=2, replace=False).tolist())
            shape = index.product_space(base).shape
            out.append(CylinderSet.from_mask(index, base, rng.random(shape) < 0.5))
    return out


@dataclass
class EmpiricalReport:
    """Empirical cylinder frequencies against exact ``mu^psi`` values."""

    n_traj: int
    seed: int
    z_threshold: float
    entries: list
    max_abs_z: float
    passed: bool
    indices: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "n_traj": self.n_traj,
            "seed": self.seed,
            "z_threshold": self.z_threshold,
            "max_abs_z": self.max_abs_z,
            "passed": self.passed,
            "entries": self.entries,
        }


def empirical_vs_exact(
    F,
    psi,
    n: int,
    n_traj: int,
    cylinders: Sequence[CylinderSet],
    seed: int,
    z_threshold: float = 4.0,
    threads: int | None = 1,
    tol: Tolerances = DEFAULT_TOL,
    degenerate_tol: float = 1e-12,
) -> EmpiricalReport:
    """Sample ``n_traj`` prefixes and compare indicator frequencies of each cylinder.

    ``z = (freq - p) / sqrt(p (1 - p) / n_traj)``.  Cylinders with ``p`` within
    ``degenerate_tol`` of 0 or 1 must match exactly instead (``z`` is 0 or inf).
    """
    if n_traj <= 0:
        raise ValueError("no trajectories")
    law = PrefixLaw(F, psi, n, tol)
    pos = {c: k for k, c in enumerate(law.coordinates)}
    idx = sample_indices(law, n_traj, seed, threads)
    entries = []
    max_z = 0.0
    for C in cylinders:
        if not set(C.base) <= set(pos):
            raise SubsetError(f"cylinder base {C.base} is not within the sampled coordinates {law.coordinates}")
        hits = C.event.mask[tuple(idx[:, pos[c]] for c in C.base)]
        freq = float(hits.mean())
        p = cylinder_probability(law.family, C, law.psi, tol)
        if p <= degenerate_tol or p >= 1.0 - degenerate_tol:
            se = 0.0
            z = 0.0 if freq == round(p) else math.inf
        else:
            se = math.sqrt(p * (1.0 - p) / n_traj)
            z = (freq - p) / se
        max_z = max(max_z, abs(z))
        entries.append({**C.to_dict(), "frequency": freq, "exact": p, "stderr": se, "z": z})
    return EmpiricalReport(n_traj, seed, z_threshold, entries, max_z, max_z < z_threshold, idx)
