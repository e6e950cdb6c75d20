import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nobroadcast import quantum_state as qs
from nobroadcast.errors import (
    DimensionMismatch,
    EmptyKeepSet,
    IndexOutOfRange,
    NotHermitian,
    NotPositive,
    NotUnitTrace,
)

from strategies import seeds

BELL = qs.pure(np.array([1, 0, 0, 1]) / math.sqrt(2), dims=(2, 2))


def test_valid_states():
    assert qs.new_density(np.eye(2) / 2).dim == 2
    assert qs.new_density(np.diag([0.7, 0.3])).dims == (2,)


def test_unit_trace_violation_reports_deviation():
    with pytest.raises(NotUnitTrace, match="1.000e-01"):
        qs.new_density(np.diag([0.7, 0.4]))


def test_negative_eigenvalue_rejected():
    with pytest.raises(NotPositive):
        qs.new_density(np.diag([1.2, -0.2]))


def test_non_hermitian_rejected():
    with pytest.raises(NotHermitian):
        qs.new_density(np.array([[0.5, 0.1], [0.0, 0.5]]))


def test_dims_must_factor_matrix():
    with pytest.raises(DimensionMismatch):
        qs.new_density(np.eye(4) / 4, dims=(2, 3))


def test_state_data_is_read_only():
    rho = qs.maximally_mixed(2)
    with pytest.raises(ValueError):
        rho.data[0, 0] = 1.0


def test_tensor_of_basis_states():
    t = qs.tensor(qs.basis_state(0, 2), qs.basis_state(0, 2))
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    np.testing.assert_array_equal(t.data, expected)
    assert t.dims == (2, 2)


def test_tensor_of_mixed_is_mixed():
    t = qs.tensor(qs.maximally_mixed(2), qs.maximally_mixed(2))
    np.testing.assert_allclose(t.data, np.eye(4) / 4)


def test_tensor_index_formula(rng):
    a = qs.random_density(2, rng)
    b = qs.random_density(3, rng)
    t = qs.tensor(a, b).data
    for i in range(2):
        for j in range(2):
            for k in range(3):
                for l in range(3):
                    assert t[i * 3 + k, j * 3 + l] == pytest.approx(a.data[i, j] * b.data[k, l], abs=1e-15)


def test_partial_trace_of_product(rng):
    a = qs.random_density(2, rng)
    b = qs.random_density(3, rng)
    ab = qs.tensor(a, b)
    np.testing.assert_allclose(qs.partial_trace(ab, [0]).data, a.data, atol=1e-14)
    np.testing.assert_allclose(qs.partial_trace(ab, [1]).data, b.data, atol=1e-14)


def test_partial_trace_of_bell_is_mixed():
    np.testing.assert_allclose(qs.partial_trace(BELL, [0]).data, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_index_sum_oracle(rng):
    rho = qs.random_density(9, rng, dims=(3, 3))
    r = rho.data.reshape(3, 3, 3, 3)
    oracle = np.array([[sum(r[i, k, j, k] for k in range(3)) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(qs.partial_trace(rho, [0]).data, oracle, atol=1e-14)


def test_partial_trace_three_parties_keeps_order(rng):
    a, b, c = (qs.random_density(d, rng) for d in (2, 3, 2))
    abc = qs.tensor_all([a, b, c])
    np.testing.assert_allclose(qs.partial_trace(abc, [2, 0]).data, qs.tensor(a, c).data, atol=1e-14)


def test_partial_trace_errors():
    with pytest.raises(EmptyKeepSet):
        qs.partial_trace(BELL, [])
    with pytest.raises(IndexOutOfRange):
        qs.partial_trace(BELL, [2])


def test_embed_operator_matches_kron(rng):
    op = rng.standard_normal((3, 3))
    np.testing.assert_allclose(qs.embed_operator(op, (2, 3), [1]), np.kron(np.eye(2), op))
    np.testing.assert_allclose(qs.embed_operator(op, (3, 2), [0]), np.kron(op, np.eye(2)))


def test_support_ranks():
    assert qs.support_decompose(qs.basis_state(0, 2)).rank == 1
    assert qs.support_decompose(qs.maximally_mixed(2)).rank == 2
    assert qs.support_decompose(qs.new_density(np.diag([0.999, 0.001]))).rank == 2


def test_log_on_support():
    np.testing.assert_allclose(qs.log_on_support(qs.maximally_mixed(2)).data, -math.log(2) * np.eye(2), atol=1e-15)
    np.testing.assert_allclose(qs.log_on_support(qs.basis_state(0, 2)).data, np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(
        qs.log_on_support(qs.new_density(np.diag([0.7, 0.3]))).data, np.diag(np.log([0.7, 0.3])), atol=1e-14
    )


def test_commutator_residuals():
    ok, res = qs.commutes(np.diag([0.7, 0.3]), np.diag([0.2, 0.8]))
    assert ok and res == 0.0
    ok, res = qs.commutes(qs.basis_state(0, 2), qs.pure([1, 1]))
    assert not ok and res == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_json_round_trip(rng):
    rho = qs.random_density(4, rng, dims=(2, 2))
    back = qs.density_from_json(qs.to_json(rho))
    np.testing.assert_array_equal(back.data, rho.data)
    assert back.dims == (2, 2)


@given(seeds, st.integers(2, 5), st.integers(1, 5))
def test_random_states_are_valid(seed, dim, rank):
    rho = qs.random_density(dim, np.random.default_rng(seed), min(rank, dim))
    qs.new_density(rho.data)
    assert qs.support_decompose(rho).rank == min(rank, dim)


@given(seeds)
def test_partial_traces_preserve_trace_and_positivity(seed):
    rho = qs.random_density(12, np.random.default_rng(seed), dims=(2, 3, 2))
    for keep in ([0], [1], [2], [0, 2], [1, 2]):
        red = qs.partial_trace(rho, keep)
        assert red.trace() == pytest.approx(1.0, abs=1e-12)
        assert red.eigvalsh()[0] >= -1e-12


@given(seeds, st.integers(2, 5))
def test_conjugation_keeps_spectrum(seed, dim):
    rng = np.random.default_rng(seed)
    rho = qs.random_density(dim, rng)
    u = qs.random_unitary(dim, rng)
    assert qs.unitarity_residual(u) < 1e-12
    np.testing.assert_allclose(qs.conjugate(rho, u).eigvalsh(), rho.eigvalsh(), atol=1e-12)
