import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from povm_extend import linalg
from povm_extend.errors import (
    DimensionMismatchError,
    MissingEffectError,
    NonCommutingError,
    NotNormalizedError,
    OutcomeError,
    SubsetError,
)
from povm_extend.povm import (
    EventSet,
    LabeledPOVM,
    OutcomeSpace,
    ProductSpace,
    atom_probabilities,
    born_probability,
    density_probability,
    event_operator,
    marginal,
    projective_povm,
    random_povm,
    tensor_product,
    verify_povm,
)

import oracles


@pytest.fixture
def qubit():
    return LabeledPOVM.from_effects(OutcomeSpace("Z", (0, 1)), {0: np.diag([1, 0]), 1: np.diag([0, 1])})


def test_outcome_space_invariants():
    with pytest.raises(ValueError):
        OutcomeSpace("M", ())
    with pytest.raises(ValueError):
        OutcomeSpace("M", (1, 1))
    with pytest.raises(ValueError):
        ProductSpace((OutcomeSpace("a", (0,)), OutcomeSpace("a", (1,))))


def test_product_space_lexicographic_order():
    space = ProductSpace((OutcomeSpace("a", ("x", "y")), OutcomeSpace("b", (0, 1, 2))))
    assert space.atom_tuples() == [("x", 0), ("x", 1), ("x", 2), ("y", 0), ("y", 1), ("y", 2)]
    assert space.index(("y", 2)) == (1, 2)


def test_verify_trivial_povm():
    P = LabeledPOVM.from_effects(OutcomeSpace("M", ("a",)), {"a": np.eye(2)})
    rep = verify_povm(P)
    assert rep.passed
    assert rep.normalization_residual == 0.0
    assert rep.max_positivity_residual == 0.0


def test_verify_projective(qubit):
    assert verify_povm(qubit).passed


def test_verify_detects_denormalized():
    P = LabeledPOVM.from_effects(OutcomeSpace("M", (0, 1)), {0: np.diag([0.7, 0.7]), 1: np.diag([0.4, 0.3])})
    rep = verify_povm(P)
    assert not rep.passed
    # sum = diag(1.1, 1.0)
    assert rep.normalization_residual == pytest.approx(0.1, abs=1e-12)
    assert rep.failures == [("normalization", None)]


def test_verify_localizes_negative_effect():
    P = LabeledPOVM.from_effects(OutcomeSpace("M", (0, 1)), {0: np.diag([1.2, 0.5]), 1: np.diag([-0.2, 0.5])})
    rep = verify_povm(P)
    assert rep.failures == [("positivity", (1,))]
    assert rep.positivity_residuals[(1,)] == pytest.approx(0.2)
    assert rep.positivity_residuals[(0,)] == 0.0


def test_missing_effect_and_dimension_mismatch():
    space = OutcomeSpace("M", (0, 1))
    with pytest.raises(MissingEffectError):
        LabeledPOVM.from_effects(space, {0: np.eye(2)})
    with pytest.raises(DimensionMismatchError):
        LabeledPOVM.from_effects(space, {0: np.eye(2), 1: np.eye(3)})


def test_event_operator_examples(qubit):
    assert np.array_equal(event_operator(qubit, []), np.zeros((2, 2)))
    assert np.allclose(event_operator(qubit, EventSet.full(qubit.space)), np.eye(2))
    assert np.array_equal(event_operator(qubit, [0]), np.diag([1, 0]))
    with pytest.raises(OutcomeError):
        event_operator(qubit, [2])


def test_born_probability_examples(qubit):
    assert born_probability(qubit, [0], [0.6, 0.8]) == pytest.approx(0.36)
    assert born_probability(qubit, [0, 1], [0.6, 0.8]) == pytest.approx(1.0)
    with pytest.raises(NotNormalizedError):
        born_probability(qubit, [0], [1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        born_probability(qubit, [0], [1.0, 0.0, 0.0])


def test_born_probability_matches_per_atom_sum():
    rng = np.random.default_rng(3)
    P = random_povm(3, 3, rng)
    psi = linalg.random_state(3, rng)
    A = [0, 2]
    expected = sum(oracles.quadratic_form_double_sum(P.effect(a), psi) for a in A).real
    assert born_probability(P, A, psi) == pytest.approx(expected, abs=1e-13)


def test_density_probability_examples(qubit):
    assert density_probability(qubit, [0], np.eye(2) / 2) == pytest.approx(0.5)
    psi = np.array([0.6, 0.8])
    assert density_probability(qubit, [0], linalg.projector(psi)) == pytest.approx(0.36)
    with pytest.raises(NotNormalizedError):
        density_probability(qubit, [0], np.eye(2))


def test_density_probability_matches_trace_oracle():
    rng = np.random.default_rng(11)
    P = random_povm(4, 3, rng)
    rho = linalg.random_density_matrix(4, rng)
    expected = oracles.trace_product(rho, event_operator(P, [1, 2])).real
    assert density_probability(P, [1, 2], rho) == pytest.approx(expected, abs=1e-13)


def test_density_reduces_to_born():
    rng = np.random.default_rng(5)
    P = random_povm(3, 4, rng)
    psi = linalg.random_state(3, rng)
    assert density_probability(P, [0, 3], linalg.projector(psi)) == pytest.approx(
        born_probability(P, [0, 3], psi), abs=1e-13)


def test_marginal_identity_and_product(qubit):
    assert np.array_equal(marginal(qubit, ["Z"]).effects, qubit.effects)
    R = projective_povm("X", np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    QR = tensor_product(qubit, R, mode="kron")
    m = marginal(QR, ["Z"])
    assert np.allclose(m.effects, np.einsum("aij,kl->aikjl", qubit.effects, np.eye(2)).reshape(2, 4, 4))
    with pytest.raises(SubsetError):
        marginal(qubit, ["nope"])


def test_marginal_of_commuting_product_recovers_factor():
    Q = LabeledPOVM(OutcomeSpace("1", (0, 1)), [np.diag([0.3, 0.9]), np.diag([0.7, 0.1])])
    R = LabeledPOVM(OutcomeSpace("2", "abc"), [np.diag([0.2, 0.5]), np.diag([0.5, 0.5]), np.diag([0.3, 0.0])])
    QR = tensor_product(Q, R, mode="commuting")
    assert np.allclose(marginal(QR, ["1"]).effects, Q.effects, atol=1e-15)
    assert np.allclose(marginal(QR, ["2"]).effects, R.effects, atol=1e-15)


def test_marginal_matches_extension_enumeration():
    rng = np.random.default_rng(8)
    Q = random_povm(2, 3, rng, label="1")
    R = random_povm(2, 2, rng, label="2")
    P = tensor_product(Q, R, mode="kron")
    for K in (["1"], ["2"]):
        m = marginal(P, K)
        brute = oracles.marginal_by_extension(P, K)
        for atom, op in brute.items():
            assert np.allclose(m.effect(atom), op, atol=1e-14)
        assert verify_povm(m).passed


def test_tensor_product_kron_projective(qubit):
    P = tensor_product(qubit, qubit.relabel(["Z2"]), mode="kron")
    assert P.dim == 4 and P.space.size == 4
    assert verify_povm(P).passed
    for i, (_, op) in enumerate(P.items()):
        expected = np.zeros((4, 4))
        expected[i, i] = 1
        assert np.array_equal(op, expected)


def test_tensor_product_commuting_diagonal():
    Q = LabeledPOVM(OutcomeSpace("1", (0, 1)), [np.diag([0.3, 0.9]), np.diag([0.7, 0.1])])
    R = LabeledPOVM(OutcomeSpace("2", (0, 1)), [np.diag([0.5, 0.25]), np.diag([0.5, 0.75])])
    P = tensor_product(Q, R, mode="commuting")
    assert np.allclose(P.effect((0, 1)), np.diag([0.15, 0.675]))
    assert verify_povm(P).passed


def test_tensor_product_commuting_rejects_noncommuting(qubit):
    X = projective_povm("X", np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    # [diag(1,0), |+><+|] = [[0, 1/2], [-1/2, 0]]
    comm = qubit.effect(0) @ X.effect(0) - X.effect(0) @ qubit.effect(0)
    assert np.max(np.abs(comm)) == pytest.approx(0.5)
    with pytest.raises(NonCommutingError) as err:
        tensor_product(qubit, X, mode="commuting")
    assert err.value.residual == pytest.approx(0.5)


def test_povm_json_round_trip():
    rng = np.random.default_rng(2)
    P = tensor_product(random_povm(2, 2, rng, "a"), random_povm(2, 3, rng, "b"), mode="kron")
    text = json.dumps(P.to_dict())
    Q = LabeledPOVM.from_dict(json.loads(text))
    assert Q.space == P.space
    assert np.array_equal(Q.effects, P.effects)
    atoms = [e["atom"] for e in P.to_dict()["effects"]]
    assert atoms == [list(a) for a in P.space.atom_tuples()]


seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_verified_povm_gives_probability_distributions(seed, dim, n):
    rng = np.random.default_rng(seed)
    P = random_povm(dim, n, rng)
    assert verify_povm(P).passed
    for _ in range(100):
        p = atom_probabilities(P, linalg.random_state(dim, rng))
        assert abs(p.sum() - 1) <= 1e-8
        assert np.all(p >= -1e-8) and np.all(p <= 1 + 1e-8)


@given(seeds)
def test_marginal_is_transitive(seed):
    rng = np.random.default_rng(seed)
    P = tensor_product(
        tensor_product(random_povm(2, 2, rng, "a"), random_povm(1, 3, rng, "b"), mode="kron"),
        random_povm(2, 2, rng, "c"), mode="kron")
    direct = marginal(P, ["a"])
    stepwise = marginal(marginal(P, ["a", "c"]), ["a"])
    assert np.max(np.abs(direct.effects - stepwise.effects)) <= 1e-14


@given(seeds)
def test_event_operator_finitely_additive(seed):
    rng = np.random.default_rng(seed)
    P = random_povm(3, 6, rng)
    labels = rng.integers(0, 3, size=6)
    A = EventSet.from_mask(P.space, labels == 0)
    B = EventSet.from_mask(P.space, labels == 1)
    assert A.isdisjoint(B)
    lhs = event_operator(P, A.union(B))
    rhs = event_operator(P, A) + event_operator(P, B)
    assert np.max(np.abs(lhs - rhs)) <= 4 * np.finfo(float).eps
    assert np.allclose(event_operator(P, A), oracles.event_operator_by_loop(P, A.atoms), atol=1e-15)
