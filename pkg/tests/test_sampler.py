import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from povm_extend import linalg
from povm_extend.errors import ZeroProbabilityPrefixError
from povm_extend.family import CylinderSet, lift_prefix_family
from povm_extend.povm import atom_probabilities
from povm_extend.sampler import (
    PrefixLaw,
    cylinder_battery,
    empirical_vs_exact,
    sample_indices,
    sample_trajectories,
    sample_trajectory,
    trajectories_csv,
)

import builders


def uniform_family(m, depth, dim=2):
    return builders.iid_diagonal_family([[1.0 / m] * dim] * m, depth)


def test_uniform_family_frequencies():
    m, N = 4, 100_000
    law = PrefixLaw(uniform_family(m, 2), [1, 0], 2)
    idx = sample_indices(law, N, seed=1)
    p = 1.0 / m
    se = math.sqrt(p * (1 - p) / N)
    for k in range(2):
        freq = np.bincount(idx[:, k], minlength=m) / N
        assert np.all(np.abs(freq - p) < 4 * se)


def test_deterministic_family():
    F = builders.iid_diagonal_family([[1.0, 0.0], [0.0, 1.0]], 3)
    for i in range(20):
        assert sample_trajectory(F, [1, 0], 3, seed=5, index=i).atoms == (0, 0, 0)
        assert sample_trajectory(F, [0, 1], 3, seed=5, index=i).atoms == (1, 1, 1)


def test_biased_coin():
    F = builders.iid_diagonal_family([[1.0, 0.0], [0.0, 1.0]], 2)
    lifted = lift_prefix_family(F)
    C = CylinderSet.from_atoms(lifted.index, ["1"], [(0,)])
    rep = empirical_vs_exact(F, [0.6, 0.8], 2, 50_000, [C], seed=3)
    entry = rep.entries[0]
    assert entry["exact"] == pytest.approx(0.36)
    assert abs(entry["frequency"] - 0.36) < 4 * entry["stderr"]
    assert rep.passed


def test_no_trajectories():
    with pytest.raises(ValueError, match="no trajectories"):
        empirical_vs_exact(uniform_family(2, 1), [1, 0], 1, 0, [], seed=0)


def test_degenerate_probabilities_use_exact_match():
    F = builders.iid_diagonal_family([[1.0, 0.0], [0.0, 1.0]], 2)
    lifted = lift_prefix_family(F)
    C0 = CylinderSet.from_atoms(lifted.index, ["2"], [(0,)])
    rep = empirical_vs_exact(F, [1, 0], 2, 1000, [C0, C0.complement()], seed=0)
    assert [e["z"] for e in rep.entries] == [0.0, 0.0]
    assert [e["frequency"] for e in rep.entries] == [1.0, 0.0]


def test_seed_determinism_and_stream_splitting():
    F = builders.random_prefix_family(3, 3, 3, np.random.default_rng(0))
    psi = linalg.random_state(3, np.random.default_rng(1))
    law = PrefixLaw(F, psi, 3)
    a = sample_indices(law, 500, seed=42)
    b = sample_indices(law, 500, seed=42)
    assert np.array_equal(a, b)
    threaded = sample_indices(law, 500, seed=42, threads=4)
    assert np.array_equal(a, threaded)
    for i in (0, 17, 499):
        t = sample_trajectory(F, psi, 3, seed=42, index=i)
        assert t.atoms == law.atoms(a[i])
    assert not np.array_equal(a, sample_indices(law, 500, seed=43))
    trajs = sample_trajectories(F, psi, 3, 5, seed=42)
    assert [t.index for t in trajs] == list(range(5))


def test_chain_rule_exactness():
    F = builders.random_prefix_family(2, 3, 3, np.random.default_rng(9))
    psi = linalg.random_state(2, np.random.default_rng(10))
    law = PrefixLaw(F, psi, 3)
    for prefix in itertools.product(range(3), repeat=3):
        product = 1.0
        for k in range(3):
            cond = law.conditional(prefix[:k])
            assert abs(cond.sum() - 1) <= 1e-10
            product *= cond[prefix[k]]
        joint = np.vdot(psi, F[3].effects[prefix] @ psi).real
        assert abs(product - joint) <= 1e-12


def test_zero_probability_prefix_aborts():
    tiny = 1e-16
    F = builders.iid_diagonal_family([[tiny, tiny], [1 - tiny, 1 - tiny]], 2)
    law = PrefixLaw(F, [1, 0], 2)
    # u = 0 lands on the first atom with positive width, which has probability 1e-16
    with pytest.raises(ZeroProbabilityPrefixError) as err:
        law.sample_indices(np.zeros((1, 2)))
    assert err.value.prefix == (0,)
    with pytest.raises(ZeroProbabilityPrefixError):
        law.conditional([0])


def test_marginal_agreement_chi_square():
    F = builders.random_prefix_family(3, 4, 2, np.random.default_rng(77))
    psi = linalg.random_state(3, np.random.default_rng(78))
    N = 100_000
    idx = sample_indices(PrefixLaw(F, psi, 2), N, seed=7)
    observed = np.bincount(idx[:, 0], minlength=4)
    expected = atom_probabilities(F[1], psi) * N
    _, pvalue = stats.chisquare(observed, expected * observed.sum() / expected.sum())
    # two-sided 4 sigma
    assert pvalue > 6.3e-5


def test_sampling_from_lifted_family_matches_prefix_family():
    F = builders.random_prefix_family(2, 3, 3, np.random.default_rng(12))
    psi = linalg.random_state(2, np.random.default_rng(13))
    a = sample_indices(PrefixLaw(F, psi, 3), 200, seed=1)
    b = sample_indices(PrefixLaw(lift_prefix_family(F), psi, 3), 200, seed=1)
    assert np.array_equal(a, b)


def test_csv_format():
    F = builders.iid_diagonal_family([[1.0, 0.0], [0.0, 1.0]], 2)
    law = PrefixLaw(F, [0, 1], 2)
    text = trajectories_csv(law, sample_indices(law, 3, seed=9), seed=9)
    assert text == "seed,index,a1,a2\n9,0,1,1\n9,1,1,1\n9,2,1,1\n"


def test_cylinder_battery_shape():
    F = lift_prefix_family(uniform_family(3, 3))
    battery = cylinder_battery(F, 3, np.random.default_rng(0))
    assert len(battery) == 3 * 3 + 10
    assert all(len(C.base) == 2 for C in battery[9:])


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_empirical_frequencies_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    F = builders.random_prefix_family(2, 2, 2, rng)
    lifted = lift_prefix_family(F)
    cyl = cylinder_battery(lifted, 2, rng, n_random=3)
    rep = empirical_vs_exact(F, linalg.random_state(2, rng), 2, 200, cyl, seed=seed)
    for e in rep.entries:
        assert 0.0 <= e["frequency"] <= 1.0
        assert -1e-12 <= e["exact"] <= 1 + 1e-12
