"""Discrete GRW flash process on a periodic lattice.

Each flash is a space-time point ``(site, time_bin)`` or the overflow atom
meaning "no flash within ``n_time_bins`` steps".  Between flashes the state
evolves by ``U = exp(-i H dt)``.  In every time step a collapse happens with
probability ``q = 1 - exp(-lambda dt)`` and lands on site ``x`` with collapse
operator ``Lambda(x)``.  The Kraus operator of one flash outcome is

    K_(x,k)    = sqrt(q (1-q)^(k-1)) sqrt(Lambda(x)) U^k
    K_overflow = (1-q)^(n_time_bins/2) U^n_time_bins

and ``sum_a K_a^dag K_a = I`` holds exactly.  The first ``n`` flashes have
joint POVM ``G_n(a_1..a_n) = K_a1^dag ... K_an^dag K_an ... K_a1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from . import linalg
from .errors import NotHermitianError, SizeCapError
from .family import (
    ConsistencyReport,
    PovmFamily,
    PrefixFamily,
    check_consistency,
    lift_prefix_family,
)
from .povm import LabeledPOVM, OutcomeSpace, ProductSpace
from .sampler import EmpiricalReport, PrefixLaw, cylinder_battery, empirical_vs_exact, trajectories_csv

OVERFLOW = "overflow"


@dataclass(frozen=True)
class GrwConfig:
    """Lattice GRW parameters.

    ``lam`` is the collapse rate (``lambda``).  The defaults give ``q = 1/2``.
    """

    L: int = 3
    sigma: float = 1.0
    lam: float = math.log(2.0)
    dt: float = 1.0
    n_time_bins: int = 2
    hopping: float = 1.0
    n_flashes: int = 3
    size_cap: int = 10_000_000

    def __post_init__(self):
        for name in ("L", "n_time_bins", "n_flashes"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("sigma", "lam", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not math.isfinite(self.hopping):
            raise ValueError("hopping must be finite")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"collapse probability per step q={self.q!r} is not in (0, 1)")

    @property
    def q(self) -> float:
        return -math.expm1(-self.lam * self.dt)

    @property
    def n_atoms(self) -> int:
        return self.L * self.n_time_bins + 1

    @classmethod
    def from_q(cls, q: float, dt: float = 1.0, **kwargs) -> "GrwConfig":
        if not 0.0 < q < 1.0:
            raise ValueError(f"q={q!r} is not in (0, 1)")
        return cls(lam=-math.log1p(-q) / dt, dt=dt, **kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q"] = self.q
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GrwConfig":
        data = dict(data)
        data.pop("q", None)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)


class FlashOutcome(NamedTuple):
    """A flash at ``(site, time_bin)``; both ``None`` for the overflow atom."""

    site: int | None
    time_bin: int | None

    @property
    def label(self) -> str:
        return OVERFLOW if self.site is None else f"{self.site}:{self.time_bin}"

    @classmethod
    def parse(cls, label: str) -> "FlashOutcome":
        if label == OVERFLOW:
            return cls(None, None)
        site, time_bin = label.split(":")
        return cls(int(site), int(time_bin))


def flash_outcomes(cfg: GrwConfig) -> list:
    """Site-major, then time bin, then overflow last."""
    out = [FlashOutcome(x, k) for x in range(cfg.L) for k in range(1, cfg.n_time_bins + 1)]
    return out + [FlashOutcome(None, None)]


def flash_space(cfg: GrwConfig, label: str = "M") -> OutcomeSpace:
    return OutcomeSpace(label, tuple(o.label for o in flash_outcomes(cfg)))


def hopping_hamiltonian(L: int, hopping: float) -> np.ndarray:
    """Nearest-neighbour ``-hopping`` on a ring (bonds ``j, j+1 mod L``)."""
    H = np.zeros((L, L), dtype=complex)
    for j in range(L):
        k = (j + 1) % L
        H[j, k] += -hopping
        H[k, j] += -hopping
    return H


def build_collapse_operators(cfg: GrwConfig) -> np.ndarray:
    """Diagonal ``Lambda(x)``, shape ``(L, L, L)``, with ``sum_x Lambda(x) = I`` by row normalization.

    ``Lambda(x)_jj = g(d(j, x)) / sum_x' g(d(j, x'))`` with ``g(d) = exp(-d^2 / 2 sigma^2)``
    and ``d`` the periodic lattice distance.
    """
    L = cfg.L
    j = np.arange(L)
    d = np.abs(j[:, None] - j[None, :])
    d = np.minimum(d, L - d)
    g = np.exp(-(d**2) / (2.0 * cfg.sigma**2))
    w = g / g.sum(axis=1, keepdims=True)
    ops = np.zeros((L, L, L), dtype=complex)
    ops[:, j, j] = w.T
    return ops


def build_kraus_operators(cfg: GrwConfig, H=None) -> np.ndarray:
    """Kraus operators in :func:`flash_outcomes` order, shape ``(n_atoms, L, L)``."""
    H = hopping_hamiltonian(cfg.L, cfg.hopping) if H is None else linalg.as_operator(H)
    if H.shape != (cfg.L, cfg.L):
        raise ValueError(f"Hamiltonian must be {cfg.L}x{cfg.L}")
    if not linalg.is_hermitian(H):
        raise NotHermitianError("Hamiltonian is not Hermitian")
    U = expm(-1j * H * cfg.dt)
    q = cfg.q
    sqrt_lambda = np.sqrt(np.real(build_collapse_operators(cfg)))
    kraus = []
    Uk = np.eye(cfg.L, dtype=complex)
    powers = []
    for _ in range(cfg.n_time_bins):
        Uk = U @ Uk
        powers.append(Uk)
    for x in range(cfg.L):
        for k in range(1, cfg.n_time_bins + 1):
            kraus.append(math.sqrt(q * (1.0 - q) ** (k - 1)) * sqrt_lambda[x] @ powers[k - 1])
    kraus.append((1.0 - q) ** (cfg.n_time_bins / 2.0) * powers[-1])
    return np.array(kraus)


def completeness_residual(kraus: np.ndarray) -> float:
    """``max |sum_a K_a^dag K_a - I|``."""
    total = np.einsum("aji,ajk->ik", kraus.conj(), kraus)
    return float(np.max(np.abs(total - np.eye(kraus.shape[-1]))))


def build_prefix_family(cfg: GrwConfig, H=None) -> PrefixFamily:
    """``G_1..G_N`` for the first ``N = cfg.n_flashes`` flashes.

    ``G_{n+1}(a, rest) = K_a^dag G_n(rest) K_a``.

    Raises
    ------
    SizeCapError
        If ``N * |M|^N * L^2`` exceeds ``cfg.size_cap``.
    """
    N, m = cfg.n_flashes, cfg.n_atoms
    if N * m**N * cfg.L**2 > cfg.size_cap:
        raise SizeCapError(f"{N} flashes over {m} atoms on {cfg.L} sites exceeds size cap {cfg.size_cap}")
    kraus = build_kraus_operators(cfg, H)
    space = flash_space(cfg)
    G = np.einsum("aji,ajk->aik", kraus.conj(), kraus)
    povms = [LabeledPOVM(ProductSpace((space.relabel("1"),)), G)]
    for n in range(2, N + 1):
        G = np.einsum("aji,...jk,akl->a...il", kraus.conj(), G, kraus)
        labels = PrefixFamily.coordinate_names(n)
        povms.append(LabeledPOVM(ProductSpace(tuple(space.relabel(l) for l in labels)), G))
    return PrefixFamily(space, povms)


def default_state(cfg: GrwConfig) -> np.ndarray:
    """Particle localized on site 0."""
    psi = np.zeros(cfg.L, dtype=complex)
    psi[0] = 1.0
    return psi


def single_flash_distribution(cfg: GrwConfig, site: int) -> np.ndarray:
    """Closed-form per-flash law for ``hopping = 0`` and ``psi = e_site``.

    ``P(x, k) = q (1-q)^(k-1) Lambda(x)_site,site`` and ``P(overflow) = (1-q)^n_time_bins``,
    in :func:`flash_outcomes` order.  Flashes are then i.i.d.
    """
    q = cfg.q
    lam = np.real(build_collapse_operators(cfg))[:, site, site]
    probs = [lam[x] * q * (1.0 - q) ** (k - 1) for x in range(cfg.L) for k in range(1, cfg.n_time_bins + 1)]
    return np.array(probs + [(1.0 - q) ** cfg.n_time_bins])


@dataclass
class GrwExperiment:
    config: GrwConfig
    prefix_family: PrefixFamily
    lifted: PovmFamily
    consistency: ConsistencyReport
    report: EmpiricalReport
    trajectories_csv: str = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.consistency.passed and self.report.passed


def run_grw_experiment(
    cfg: GrwConfig,
    psi=None,
    n_traj: int = 100_000,
    seed: int = 0,
    threads: int | None = 1,
    n_random_cylinders: int = 10,
    z_threshold: float = 4.0,
) -> GrwExperiment:
    """Build, lift, check, sample, and compare against exact cylinder probabilities."""
    psi = default_state(cfg) if psi is None else linalg.as_state(psi)
    prefix = build_prefix_family(cfg)
    lifted = lift_prefix_family(prefix)
    consistency = check_consistency(lifted, seed=seed)
    # spawn key outside the per-trajectory range
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**32,)))
    cylinders = cylinder_battery(lifted, cfg.n_flashes, rng, n_random_cylinders)
    report = empirical_vs_exact(prefix, psi, cfg.n_flashes, n_traj, cylinders, seed,
                                z_threshold=z_threshold, threads=threads)
    law = PrefixLaw(prefix, psi, cfg.n_flashes)
    csv_text = trajectories_csv(law, report.indices, seed)
    return GrwExperiment(cfg, prefix, lifted, consistency, report, csv_text)
