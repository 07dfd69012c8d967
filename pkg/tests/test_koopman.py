import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from koopfam.catalog import catalog
from koopfam.errors import AliasingError, DomainError, IllConditionedError, OriginError, WarmupError
from koopfam.grid import SnapshotMatrix, TimeGrid
from koopfam.koopman import (
    algorithm1,
    algorithm2,
    bias_sweep,
    compartment_rates,
    default_stencil,
    error_Ek,
    extract_koopman_eigs,
    generator_estimates,
    koopman_mode_decomposition,
    observable_oracle,
    theorem2_bias,
)
from koopfam.snapshots import ObservableMap, apply_observables, sample_trajectory
from koopfam.spectral import OperatorFamily
from koopfam.systems import HybridSystem, fundamental_matrices, fundamental_matrix

from oracles import damped_driven_alpha, taylor_expm


def snaps_of(name, K, dt=0.01, x0=None, overrides=None):
    s = catalog(name, overrides)
    return s, sample_trajectory(s, s.default_x0 if x0 is None else x0, TimeGrid(0, dt, K))


# --- hybrid algorithm -----------------------------------------------------

def test_default_stencil():
    assert default_stencil(2) == 3
    assert default_stencil(5, conserved_row=4) == 5


def test_alg1_constant_system():
    A = np.array([[-0.2, 1.0], [-1.5, 0.1]])
    s = HybridSystem(switch_times=[0.0], matrices_=[A])
    X = sample_trajectory(s, [1.0, 0.5], TimeGrid(0, 0.01, 400))
    res = algorithm1(X)
    assert not res.series.switch_flag.any() and res.switches == ()
    lam = np.sort_complex(np.linalg.eigvals(A))
    for k in (1, 50, 200, 400):
        np.testing.assert_allclose(np.sort_complex(res.series.koopman_eigs[k]), lam * 0.01 * k, atol=1e-9)
    np.testing.assert_allclose(res.family.accumulated[-1], taylor_expm(A * 4.0), atol=1e-9)


def test_alg1_switching_frequency():
    s, X = snaps_of("switching-frequency", 500)
    res = algorithm1(X, epsilon_rel=1e-6)
    np.testing.assert_allclose(res.switch_times, [1, 2, 3, 4], atol=2 * 0.01)
    sys_eigs = res.series.system_eigs
    t = X.times
    for k in range(1, 498):
        if res.series.switch_flag[k]:
            continue
        w = 2 if int(np.floor(t[k - 1] + 1e-9)) % 2 == 0 else 1
        if any(t[k - 1] < T < t[k + 2] for T in (1, 2, 3, 4)):
            continue
        np.testing.assert_allclose(np.sort(sys_eigs[k].imag), [-w, w], atol=1e-8)


def test_alg1_damped_driven_koopman():
    s, X = snaps_of("switching-damped-driven", 1000)
    res = algorithm1(X)
    kt = extract_koopman_eigs(res.family)
    for k in range(0, 1001, 50):
        t = X.times[k]
        ref = np.sort_complex(damped_driven_alpha(t) + np.array([-2j, 2j]) * t)
        np.testing.assert_allclose(np.sort_complex(kt.exponents[k]), ref, atol=1e-8)
    assert np.max(error_Ek(res.family, s)) <= 1e-8


def test_alg1_warmup_error():
    s = catalog("switching-frequency")
    X = sample_trajectory(s, [1.0, 1.0], TimeGrid(0.99, 0.01, 50))
    with pytest.raises(WarmupError):
        algorithm1(X)


def test_alg1_unpacks_and_validates():
    _, X = snaps_of("switching-frequency", 50)
    series, family, switches = algorithm1(X)
    assert family.accumulated.shape == (51, 2, 2)
    with pytest.raises(DomainError):
        algorithm1(X, epsilon_rel=0)
    with pytest.raises(DomainError):
        algorithm1(X, stencil=60)


def test_generators_and_rates():
    s, X = snaps_of("switching-frequency", 400)
    res = algorithm1(X)
    gens = generator_estimates(res)
    assert len(gens) == 4
    for g in gens:
        w = 2 if int(np.floor(g.t_start + 0.5)) % 2 == 0 else 1
        np.testing.assert_allclose(g.A, [[0, 1], [-w * w, 0]], atol=1e-8)
    A = np.array([[-0.3, 0.1], [0.3, -0.1]])
    assert compartment_rates(A) == {(1, 2): 0.3, (2, 1): 0.1}


# --- observable algorithm -------------------------------------------------

def _u(name, K=1000, dt=0.01, x0=(1.0, 0.0)):
    s = catalog(name)
    obs = ObservableMap(((0, 1),), 2)
    return s, obs, apply_observables(obs, sample_trajectory(s, x0, TimeGrid(0, dt, K)))


def test_alg2_cont_frequency_increments():
    s, obs, U = _u("cont-frequency")
    series, fam = algorithm2(U)
    t = U.times
    np.testing.assert_allclose(series.koopman_eigs[:, 0], 0, atol=1e-12)
    inc = np.diff(series.koopman_eigs[:, 1])
    ref = -1j * (2 * 0.01 + 0.5 / np.pi * (np.sin(np.pi * t[1:]) - np.sin(np.pi * t[:-1])))
    np.testing.assert_allclose(inc, ref, atol=1e-10)
    beta = s.blocks[0].beta(t, 0)
    np.testing.assert_allclose(series.koopman_eigs[:, 1], -1j * beta, atol=1e-9)
    assert np.max(error_Ek(fam, s, obs)) < 1e-9


def test_alg2_cont_damping_increments():
    s, obs, U = _u("cont-damping")
    series, _ = algorithm2(U)
    t = U.times
    np.testing.assert_allclose(np.diff(series.koopman_eigs[:, 0]),
                               0.5 / np.pi * (np.sin(np.pi * t[1:]) - np.sin(np.pi * t[:-1])), atol=1e-10)
    np.testing.assert_allclose(series.system_eigs[1:, 1].imag, -2, atol=1e-9)


def test_alg2_constant_diagonal():
    d = np.array([0.3, -1.2, 0.05])
    X = SnapshotMatrix(TimeGrid(0, 0.1, 20), np.exp(np.outer(d, 0.1 * np.arange(21))))
    series, fam = algorithm2(X)
    np.testing.assert_allclose(series.system_eigs[1:], np.tile(d, (20, 1)), atol=1e-13)
    np.testing.assert_allclose(np.diagonal(fam.accumulated[-1]), np.exp(2 * d), rtol=1e-13)


def test_alg2_errors():
    X = SnapshotMatrix(TimeGrid(0, 1, 2), np.array([[1.0, 0.0, 1.0]]))
    with pytest.raises(OriginError, match="row 0"):
        algorithm2(X)
    Z = SnapshotMatrix(TimeGrid(0, 1, 2), np.exp(1j * np.array([[0.0, 0.1, 2.2]])))
    with pytest.raises(AliasingError, match="step 2"):
        algorithm2(Z)


# --- spectra, modes, errors ------------------------------------------------

def test_extract_k0_zero_and_growing_decaying():
    s, X = snaps_of("switching-frequency", 1000)
    kt = extract_koopman_eigs(algorithm1(X).family)
    np.testing.assert_array_equal(kt.exponents[0], 0)
    re = kt.exponents[-1].real
    ref = np.log(np.abs(np.linalg.eigvals(fundamental_matrix(s, 10.0, 0).M)))
    np.testing.assert_allclose(np.sort(re), np.sort(ref), atol=1e-7)
    assert re.max() > 0 > re.min()


def test_extract_matching_is_permutation():
    _, X = snaps_of("hybrid-coupled-osc", 600)
    kt = extract_koopman_eigs(algorithm1(X).family)
    for p in kt.permutation:
        assert sorted(p) == list(range(4))


def test_kmd_identity():
    d = koopman_mode_decomposition(np.eye(2), [3.0, -1.0])
    np.testing.assert_allclose(d.eigenvalues, 0, atol=1e-15)
    np.testing.assert_allclose(d.reconstruct(), [3.0, -1.0])


def test_kmd_damped_driven():
    s = catalog("switching-damped-driven")
    for t in (0.7, 2.2, 4.9):
        F = fundamental_matrix(s, t, 0)
        d = koopman_mode_decomposition(F, [1.0, 1.0])
        assert np.linalg.matrix_rank(d.modes) == 2
        np.testing.assert_allclose(d.reconstruct(), F.M @ [1.0, 1.0], atol=1e-12)


def test_kmd_scalar():
    d = koopman_mode_decomposition(np.array([[np.e]]), [2.5])
    np.testing.assert_allclose(d.modes, [[1.0]])
    assert d.weights[0] == pytest.approx(2.5) and d.eigenvalues[0] == pytest.approx(1.0)


def test_kmd_defective():
    with pytest.raises(IllConditionedError):
        koopman_mode_decomposition(np.array([[1.0, 1.0], [0.0, 1.0]]), [1.0, 0.0])


def test_Ek_oracle_zero_and_baseline_large():
    s = catalog("switching-damped-driven")
    g = TimeGrid(0, 0.01, 300)
    M = fundamental_matrices(s, g.times, 0)
    steps = np.concatenate([M[:1], [M[k] @ np.linalg.inv(M[k - 1]) for k in range(1, 301)]])
    fam = OperatorFamily(grid=g, steps=steps, accumulated=M)
    assert np.max(error_Ek(fam, s)) <= 1e-12
    from koopfam.dmd import moving_stencil_spectrum
    c, X = snaps_of("cont-damping", 1000, x0=(1.0, 0.0))
    _, fam = moving_stencil_spectrum(X, 2)
    assert np.max(error_Ek(fam, c)) >= 1e-2


def test_Ek_needs_obs_for_observable_family():
    s, obs, U = _u("cont-frequency", K=20)
    _, fam = algorithm2(U)
    with pytest.raises(DomainError):
        error_Ek(fam, s)
    assert observable_oracle(s, obs, U.grid).shape == (21, 2, 2)


# --- moving-stencil bias ---------------------------------------------------

def test_theorem2_examples():
    lm, _ = theorem2_bias(0.0, 0.0, 2.0, -0.5 * np.pi, 0.01)
    assert lm / 0.01 == pytest.approx(-0.392699, abs=1e-6)
    assert theorem2_bias(0.3, 0.0, 1.7, 0.0, 0.02) == pytest.approx((0.3 * 0.02, 1.7 * 0.02))
    _, arg = theorem2_bias(0.0, -0.5 * np.pi, 2.0, 0.0, 0.01)
    assert arg / (2 * 0.01) == pytest.approx(np.sqrt(1 + 0.5 * np.pi / 4))
    with pytest.raises(DomainError):
        theorem2_bias(0, 0, 0, 0, 0.01)
    with pytest.raises(DomainError):
        theorem2_bias(0, 10.0, 1.0, 0, 0.01)


def test_bias_sweep_constant_exact():
    s = catalog("cont-damping", {"A_d": 0.0, "sigma0": 0.4})
    sw = bias_sweep(s, [0.04, 0.02, 0.01, 0.005], [0.5, 1.0])
    assert sw.error_re.max() <= 1e-10 and sw.error_arg.max() <= 1e-10


def test_bias_sweep_orders():
    dts = [0.04, 0.02, 0.01, 0.005]
    for name in ("cont-frequency", "cont-damping"):
        sw = bias_sweep(catalog(name), dts, [0.3, 0.5, 0.7, 1.2])
        assert sw.order_re >= 0.9 and sw.order_arg >= 0.9


def test_bias_sweep_damping_arg_factor():
    sw = bias_sweep(catalog("cont-damping"), [0.01], [0.5])
    assert sw.measured_arg[0, 0] / 2 == pytest.approx(np.sqrt(1 + 0.5 * np.pi / 4), rel=0.05)


def test_bias_sweep_frequency_real_bias():
    sw = bias_sweep(catalog("cont-frequency"), [0.01, 0.005], [0.5])
    np.testing.assert_allclose(sw.measured_re[:, 0], -np.pi / 8, rtol=0.1)


# --- properties ------------------------------------------------------------

@given(st.floats(0.5, 3.0), st.floats(0.5, 3.0), st.sampled_from([0.5, 1.0, 1.5]))
def test_property_alg1_accumulation_and_exactness(w1, w2, period):
    s, X = snaps_of("switching-frequency", 300, overrides={"omega1": w1, "omega2": w2, "period": period})
    fam = algorithm1(X).family
    for k in range(1, 301):
        np.testing.assert_array_equal(fam.accumulated[k], fam.steps[k] @ fam.accumulated[k - 1])
    for k, op in enumerate(fam.operators):
        if op is None or k % 11:
            continue
        a, b = X.times[op.window.first], X.times[op.window.last]
        seg = s.segment_index(a)
        if s.segment_index(b - 1e-12) == seg:
            np.testing.assert_allclose(op.M, taylor_expm(s.segment_matrices[seg] * 0.01), atol=1e-10)


@given(st.floats(-0.5, 0.5), st.floats(1.0, 3.0), st.floats(0.0, 0.8), st.floats(0.5, 4.0))
def test_property_alg2_branch_consistency(s0, w0, amp, wd):
    s = catalog("cont-frequency", {"sigma0": s0, "omega0": w0, "A_d": amp, "omega_d": wd})
    obs = ObservableMap(((0, 1),), 2)
    U = apply_observables(obs, sample_trajectory(s, [0.3, 1.0], TimeGrid(0, 0.01, 500)))
    series, _ = algorithm2(U)
    lam = series.koopman_eigs[:, 1]
    np.testing.assert_allclose(lam, np.concatenate([[0], np.cumsum(np.diff(lam))]), atol=1e-12)
    np.testing.assert_allclose(lam.imag, -s.blocks[0].beta(U.times, 0), atol=1e-9)


@given(st.sampled_from(["cont-frequency", "cont-damping"]), st.floats(0.2, 0.8), st.floats(0.4, 1.5))
def test_property_theorem2_order(name, amp, t):
    sw = bias_sweep(catalog(name, {"A_d": amp}), [0.04, 0.02, 0.01, 0.005], [t])
    assert sw.order_re >= 0.9 and sw.order_arg >= 0.9
