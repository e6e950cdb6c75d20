import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nobroadcast import phase_space as ps
from nobroadcast.errors import BadSize, GridMismatch, TruncationInsufficient, ValidationError

finite = st.floats(min_value=-2.0, max_value=2.0)


def gaussian_moment(n, s2, hbar):
    """Closed forms of Tr[r (r / 2 pi hbar)^(n-1)] for the P-construction of N(0, s2 I)."""
    if n == 2:
        return 1 / (2 * math.pi * (2 * s2 + hbar))
    return 1 / ((2 * math.pi) ** 2 * (hbar**2 + 3 * hbar * s2 + 3 * s2**2))


def test_vacuum():
    v = ps.coherent_state(0.0, 0.0, ps.FockConfig(5, 1.0))
    np.testing.assert_array_equal(v, [1, 0, 0, 0, 0])


@given(finite, finite, finite, finite)
def test_coherent_overlaps(x1, p1, x2, p2):
    cfg = ps.FockConfig(60, 0.5)
    a, b = ps.coherent_state(x1, p1, cfg), ps.coherent_state(x2, p2, cfg)
    da = ps.alpha_of(x1, p1, 0.5) - ps.alpha_of(x2, p2, 0.5)
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx(math.exp(-abs(da) ** 2), abs=1e-10)


def test_truncation_is_checked():
    with pytest.raises(TruncationInsufficient):
        ps.coherent_state(5.0, 0.0, ps.FockConfig(10, 1.0))


def test_fock_rule_covers_tail():
    for a2 in (0.0, 1.0, 25.0, 400.0):
        assert ps.truncation_tail(a2, ps.fock_dim_for(a2)) < 1e-8


def test_narrow_gaussian_gives_vacuum():
    P = ps.PhaseSpaceDistribution.gaussian(sigma=0.02, nodes=41)
    rho = ps.p_construct(P, ps.auto_config(1.0, P))
    assert rho.data[0, 0].real >= 0.99


def test_isotropic_gaussian_is_thermal():
    # N(0, s^2 I) mixes coherent states into a thermal state with mean occupation s^2 / hbar
    s, hbar = 1.0, 1.0
    P = ps.PhaseSpaceDistribution.gaussian(sigma=s)
    rho = ps.p_construct(P, ps.auto_config(hbar, P))
    nbar = s**2 / hbar
    pops = nbar ** np.arange(8) / (1 + nbar) ** (np.arange(8) + 1)
    np.testing.assert_allclose(np.diag(rho.data).real[:8], pops, atol=1e-7)
    off = rho.data - np.diag(np.diag(rho.data))
    assert np.max(np.abs(off)) < 1e-7


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.3, 1.0))
def test_p_construct_gives_states(x0, p0, s):
    P = ps.PhaseSpaceDistribution.gaussian(center=(x0, p0), sigma=s, nodes=41)
    rho = ps.p_construct(P, ps.auto_config(1.0, P))
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    assert rho.eigvalsh()[0] >= -1e-10


def test_coarse_grid_detected():
    P = ps.PhaseSpaceDistribution.gaussian(sigma=1.0, nodes=21)  # spacing 0.6
    assert ps.resolution_drift(P, 1.0) < 1e-12
    with pytest.raises(ps.GridTooCoarse):
        ps.p_construct(P, ps.auto_config(0.02, P))


def test_pure_vacuum_moment():
    vac = ps.p_construct(ps.PhaseSpaceDistribution.gaussian(sigma=1e-4, nodes=11), ps.FockConfig(4, 1.0))
    assert ps.moment_quantum(vac, vac, 2, 1.0, normalization="hbar") == pytest.approx(1.0, abs=1e-6)
    assert ps.moment_quantum(vac, vac, 2, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-6)
    with pytest.raises(ValidationError):
        ps.moment_quantum(vac, vac, 1, 1.0)
    with pytest.raises(ValidationError):
        ps.moment_quantum(vac, vac, 2, 1.0, normalization="other")


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("hbar", [1.0, 0.5, 0.25])
def test_gaussian_moment_closed_forms(n, hbar):
    P = ps.PhaseSpaceDistribution.gaussian(sigma=1.0)
    rho = ps.p_construct(P, ps.auto_config(hbar, P))
    assert ps.moment_quantum(rho, rho, n, hbar) == pytest.approx(gaussian_moment(n, 1.0, hbar), rel=1e-6)


def test_small_hbar_moment_within_five_percent():
    P = ps.PhaseSpaceDistribution.gaussian(sigma=1.0)
    rho = ps.p_construct(P, ps.auto_config(0.1, P))
    target = 1 / (4 * math.pi)
    assert abs(ps.moment_quantum(rho, rho, 2, 0.1) - target) / target <= 0.05


def test_classical_moments():
    P = ps.PhaseSpaceDistribution.gaussian(sigma=1.0)
    assert ps.moment_classical(P, P, 2) == pytest.approx(1 / (4 * math.pi), rel=1e-7)
    x = np.linspace(-4, 4, 161)
    box = ps.PhaseSpaceDistribution.uniform_box(x, x)
    inner = ps.PhaseSpaceDistribution.from_function(lambda a, b: np.exp(-(a**2 + b**2)), x, x)
    assert ps.moment_classical(inner, box, 3) == pytest.approx(64.0**-2, rel=1e-12)
    left = ps.PhaseSpaceDistribution.from_function(lambda a, b: (a < -1.0) * 1.0, x, x)
    right = ps.PhaseSpaceDistribution.from_function(lambda a, b: (a > 1.0) * 1.0, x, x)
    assert ps.moment_classical(left, right, 2) == 0.0
    with pytest.raises(GridMismatch):
        ps.moment_classical(P, box, 2)


def test_sweep_rows_and_schedule_checks():
    P = ps.PhaseSpaceDistribution.gaussian(sigma=1.0, nodes=65)
    rows = ps.hbar_sweep(P, P, 2, [0.5])
    assert len(rows) == 1 and rows[0].rel_error == pytest.approx(0.5 / 2.5, rel=1e-4)
    with pytest.raises(ValidationError):
        ps.hbar_sweep(P, P, 2, [0.5, 0.5])


def test_entropy_sweep_approaches_kl():
    P1 = ps.PhaseSpaceDistribution.gaussian(center=(0, 0), sigma=1.0, nodes=65, extent=7.0)
    P2 = ps.PhaseSpaceDistribution.gaussian(center=(0.5, 0), sigma=1.2, nodes=65, extent=7.0)
    rows = ps.entropy_limit_sweep(P1, P2, [1.0, 0.5, 0.25])
    gaps = [abs(q - c) for _, q, c in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_csv_round_trip(tmp_path):
    P = ps.PhaseSpaceDistribution.gaussian(center=(0.5, -0.5), sigma=0.7, nodes=21)
    P.to_csv(tmp_path / "p.csv")
    Q = ps.PhaseSpaceDistribution.from_csv(tmp_path / "p.csv")
    np.testing.assert_allclose(Q.values, P.values, rtol=1e-14)
    np.testing.assert_array_equal(Q.x, P.x)


def test_v_matrix_small_cases():
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(ps.build_v_matrix(2).data).real), [0, 0, 2, 2], atol=1e-14)
    ev = np.linalg.eigvals(ps.build_v_matrix(3).data)
    w = np.exp(2j * math.pi / 3)
    for mu in (0, 1 - w, 1 - w.conjugate()):
        assert np.sum(np.abs(ev - mu) < 1e-10) == 2
    with pytest.raises(BadSize):
        ps.build_v_matrix(1)


@pytest.mark.parametrize("n", range(2, 9))
def test_v_matrix_verification(n):
    r = ps.verify_v_matrix(n)
    assert r["normality"] <= 1e-12
    assert r["eigen_residual"] <= 1e-10
    assert r["zero_eigenvalues"] == 2
    assert r["multiset_error"] <= 1e-10


@pytest.mark.parametrize("n", range(3, 9))
def test_opposite_pairing_fails_from_three_blocks(n):
    # pairing e_kj with 1 - w_j^((-1)^k) gives the eigenvalues of V^dag instead
    v = ps.build_v_matrix(n).data
    vals, vecs, roots = ps.analytic_eigenpairs(n)
    e = vecs[0, 1]
    assert np.linalg.norm(v @ e - (1 - roots[1] ** (-1)) * e) > 1e-3


def test_exponent_examples():
    direct, diag = ps.gaussian_exponent_check(3, [(0.4, -1.1)] * 3)
    assert abs(direct) < 1e-14 and abs(diag) < 1e-14
    v = ps.build_v_matrix(2).data
    assert (np.array([1.0, 0, 0, 0]) @ v @ np.array([1.0, 0, 0, 0])) == 1.0


@given(st.integers(2, 6), st.lists(st.tuples(finite, finite), min_size=6, max_size=6))
def test_exponent_two_routes_and_geometry(n, nodes):
    nodes = nodes[:n]
    direct, diag = ps.gaussian_exponent_check(n, nodes)
    assert abs(direct - diag) <= 1e-10
    u = np.asarray(nodes)
    nxt = np.roll(u, -1, axis=0)
    spread = 0.5 * np.sum((u - nxt) ** 2)
    area = -np.sum(u[:, 0] * nxt[:, 1] - u[:, 1] * nxt[:, 0])
    assert direct.real == pytest.approx(spread, abs=1e-10)
    assert direct.imag == pytest.approx(area, abs=1e-10)
