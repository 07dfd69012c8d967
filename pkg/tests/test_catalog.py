import numpy as np
import pytest

from koopfam.catalog import CATALOG_DEFAULTS, catalog, catalog_names, compartment_matrix
from koopfam.errors import ConfigError, DomainError
from koopfam.systems import HybridSystem, SpiralSystem, coupled_frequencies


def test_names_cover_all_examples():
    assert set(catalog_names()) == {
        "scalar", "switching-frequency", "switching-damped-driven", "hybrid-coupled-osc",
        "multicompartment", "cont-frequency", "cont-damping", "nonauto-coupled-osc",
    }


def test_multicompartment_rate_table():
    s = catalog("multicompartment")
    table = {"1,2": [0.0988, 0.0], "2,1": [0.1410, 5.0], "2,3": [0.0590, 3.0],
             "3,4": [0.1150, 18.0], "4,1": [0.0149, 30.0], "4,5": [0.0154, 55.0]}
    assert CATALOG_DEFAULTS["multicompartment"]["rates"] == table
    assert list(s.switch_times) == [0.0, 3.0, 5.0, 18.0, 30.0, 55.0]
    A = s.matrix(60.0)
    np.testing.assert_allclose(A.sum(axis=0), 0, atol=1e-16)
    assert A[1, 0] == 0.0988 and A[0, 1] == 0.1410 and A[4, 3] == 0.0154
    # before the first delay only 1 -> 2 transport is on
    A0 = s.matrix(1.0)
    assert np.count_nonzero(A0) == 2


def test_hybrid_coupled_segment_frequencies():
    s = catalog("hybrid-coupled-osc")
    even = np.sort(np.abs(np.linalg.eigvals(s.matrix(0.5)).imag))[::2]
    odd = np.sort(np.abs(np.linalg.eigvals(s.matrix(1.5)).imag))[::2]
    np.testing.assert_allclose(np.sort(even), np.sqrt([(15 - np.sqrt(29)) / 2, (15 + np.sqrt(29)) / 2]), atol=1e-12)
    np.testing.assert_allclose(np.sort(odd), np.sqrt([(27 - np.sqrt(53)) / 2, (27 + np.sqrt(53)) / 2]), atol=1e-12)


def test_damped_driven_switch_times():
    T = catalog("switching-damped-driven").switch_times
    np.testing.assert_allclose(T[:6], [0, 0.5, 1.5, 3.0, 5.0, 7.5])


def test_cont_frequency_beta():
    s = catalog("cont-frequency", {"B_d": 0.3})
    assert isinstance(s, SpiralSystem)
    b = s.blocks[0]
    t0, t = 0.2, 1.9
    ref = 2 * (t - t0) + 0.5 / np.pi * (np.sin(np.pi * t) - np.sin(np.pi * t0)) \
        - 0.3 / np.pi * (np.cos(np.pi * t) - np.cos(np.pi * t0))
    assert b.beta(t, t0) == pytest.approx(ref, abs=1e-14)
    assert b.alpha(t, t0) == 0


def test_nonauto_constant_frequencies():
    s = catalog("nonauto-coupled-osc")
    w = sorted(b.omega.const for b in s.blocks)
    np.testing.assert_allclose(w, sorted(coupled_frequencies(1, 1, 2, 1, 3)))
    assert s.observable_pairs == ((0, 2), (1, 3))


def test_overrides_applied_and_recorded():
    s = catalog("switching-frequency", {"omega1": 3.0, "t_max": 4})
    assert isinstance(s, HybridSystem)
    assert s.matrix(0.5)[1, 0] == -9.0
    assert s.origin == ("switching-frequency", {"omega1": 3.0, "t_max": 4})


@pytest.mark.parametrize("name,over", [("nope", None), ("scalar", {"b": 1}), ("scalar", {"a_const": "x"}),
                                       ("switching-frequency", {"period": 0}),
                                       ("multicompartment", {"rates": {"1,1": [0.1, 0]}}),
                                       ("multicompartment", {"rates": {"1,2": [-0.1, 0]}})])
def test_invalid_config(name, over):
    with pytest.raises(ConfigError):
        catalog(name, over)


def test_invalid_coupled_parameters():
    with pytest.raises(DomainError):
        catalog("hybrid-coupled-osc", {"m1": -1.0})


def test_compartment_matrix_delay():
    rates = {(1, 2): (0.5, 2.0)}
    np.testing.assert_array_equal(compartment_matrix(rates, 2, 1.0), np.zeros((2, 2)))
    np.testing.assert_array_equal(compartment_matrix(rates, 2, 2.0), [[-0.5, 0], [0.5, 0]])
