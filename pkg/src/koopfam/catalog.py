"""Named example systems with overridable default parameters."""

from __future__ import annotations

import math

import numpy as np

from koopfam.errors import ConfigError
from koopfam.systems import (
    CommutingSystem,
    HybridSystem,
    SpiralBlock,
    SpiralSystem,
    TrigFunction,
    coupled_frequencies,
    coupled_oscillator_matrix,
)

__all__ = ["catalog", "CATALOG_DEFAULTS", "catalog_names", "MULTICOMPARTMENT_RATES"]

#: ``(i, j) -> (K_ij, T_ij)``, 1-based compartments; transport from ``i`` to ``j``
#: switches on at ``T_ij``.
MULTICOMPARTMENT_RATES = {
    (1, 2): (0.0988, 0.0),
    (2, 1): (0.1410, 5.0),
    (2, 3): (0.0590, 3.0),
    (3, 4): (0.1150, 18.0),
    (4, 1): (0.0149, 30.0),
    (4, 5): (0.0154, 55.0),
}

CATALOG_DEFAULTS = {
    "scalar": {"a_const": 1.0, "a_cos": 0.0, "a_sin": 0.0, "a_freq": 0.0},
    "switching-frequency": {"omega1": 2.0, "omega2": 1.0, "period": 1.0, "t_max": 50.0},
    "switching-damped-driven": {"sigma1": 1.0, "sigma2": -1.0, "omega": 2.0, "t_max": 50.0},
    "hybrid-coupled-osc": {
        "m1": 1.0, "m2": 1.0, "k2": 1.0,
        "k1_even": 4.0, "k1_odd": 9.0, "k3_even": 9.0, "k3_odd": 16.0,
        "period": 1.0, "t_max": 50.0,
    },
    "multicompartment": {
        "rates": {f"{i},{j}": [K, T] for (i, j), (K, T) in MULTICOMPARTMENT_RATES.items()},
        "n": 5,
    },
    "cont-frequency": {
        "sigma0": 0.0, "omega0": 2.0, "omega_d": math.pi, "A_d": 0.5, "B_d": 0.0,
    },
    "cont-damping": {
        "sigma0": 0.0, "omega0": 2.0, "omega_d": math.pi, "A_d": 0.5, "B_d": 0.0,
    },
    "nonauto-coupled-osc": {
        "m1": 1.0, "m2": 1.0, "k1": 2.0, "k2": 1.0, "k3": 3.0,
        "a1": 0.5, "b1": 0.5, "freq1": 2.0,
        "a2": 0.5, "b2": 0.5, "freq2": 0.4,
    },
}


def catalog_names():
    return tuple(CATALOG_DEFAULTS)


def _number(name, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"catalog '{name}': parameter '{key}' must be a finite number, got {value!r}")
    return float(value)


def _merge(name, overrides):
    if name not in CATALOG_DEFAULTS:
        known = ", ".join(CATALOG_DEFAULTS)
        raise ConfigError(f"unknown catalog system '{name}' (known: {known})")
    params = dict(CATALOG_DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ConfigError(f"catalog '{name}' has no parameter '{key}'")
        params[key] = value
    for key, value in params.items():
        if key not in ("rates", "n"):
            params[key] = _number(name, key, value)
    return params


def _switch_grid(period, t_max):
    if period <= 0:
        raise ConfigError("switching period must be positive")
    if t_max <= 0:
        raise ConfigError("t_max must be positive")
    count = int(math.floor(t_max / period + 1e-9)) + 1
    return [l * period for l in range(count)]


def _parse_rates(raw, n):
    rates = {}
    if not isinstance(raw, dict):
        raise ConfigError("multicompartment 'rates' must map 'i,j' to [K, T]")
    for key, val in raw.items():
        try:
            i, j = (int(p) for p in str(key).split(","))
            K, T = (float(v) for v in val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"multicompartment rate entry {key!r}: expected 'i,j': [K, T]") from exc
        if not (1 <= i <= n and 1 <= j <= n) or i == j:
            raise ConfigError(f"multicompartment rate entry {key!r}: indices must be distinct in 1..{n}")
        if K < 0:
            raise ConfigError(f"multicompartment rate entry {key!r}: K must be non-negative")
        rates[(i, j)] = (K, T)
    return rates


def compartment_matrix(rates, n, t):
    """Generator of the closed compartment model at time ``t``.

    ``x_i' = -sum_j k_ij(t) x_i + sum_j k_ji(t) x_j`` with ``k_ij(t) = K_ij``
    once ``t >= T_ij``.
    """
    A = np.zeros((n, n))
    for (i, j), (K, T) in rates.items():
        if t >= T - 1e-12:
            A[j - 1, i - 1] += K
            A[i - 1, i - 1] -= K
    return A


def _trig(const, a, b, w):
    return TrigFunction(const=const, cos_amp=a, sin_amp=b, freq=w)


def catalog(name: str, overrides: dict | None = None):
    """Build a catalog system.

    Parameters
    ----------
    name : str
        One of :func:`catalog_names`.
    overrides : dict, optional
        Parameter values replacing the defaults in ``CATALOG_DEFAULTS[name]``.

    Raises
    ------
    ConfigError
        Unknown name, unknown parameter, or an invalid value.
    """
    p = _merge(name, overrides)
    meta = dict(name=name, origin=(name, dict(overrides or {})))

    if name == "scalar":
        a = _trig(p["a_const"], p["a_cos"], p["a_sin"], p["a_freq"])
        return CommutingSystem(R=np.eye(1), rates=(a,), default_x0=(1.0,), **meta)

    if name == "switching-frequency":
        T = _switch_grid(p["period"], p["t_max"])
        mats = [
            [[0.0, 1.0], [-(p["omega1"] if l % 2 == 0 else p["omega2"]) ** 2, 0.0]]
            for l in range(len(T))
        ]
        return HybridSystem(switch_times=T, matrices_=mats, default_x0=(1.0, 1.0), **meta)

    if name == "switching-damped-driven":
        # T_0 = 0, T_l = T_{l-1} + l/2.
        T = [0.0]
        while T[-1] + len(T) / 2 <= p["t_max"] + 1e-9:
            T.append(T[-1] + len(T) / 2)
        w2 = p["omega"] ** 2
        mats = []
        for l in range(len(T)):
            s = p["sigma1"] if l % 2 == 0 else p["sigma2"]
            mats.append([[s, 1.0], [-w2, s]])
        return HybridSystem(switch_times=T, matrices_=mats, default_x0=(1.0, 1.0), **meta)

    if name == "hybrid-coupled-osc":
        T = _switch_grid(p["period"], p["t_max"])
        mats = []
        for l in range(len(T)):
            par = "even" if l % 2 == 0 else "odd"
            k1, k3 = p[f"k1_{par}"], p[f"k3_{par}"]
            coupled_frequencies(p["m1"], p["m2"], k1, p["k2"], k3)  # validates parameters
            mats.append(coupled_oscillator_matrix(p["m1"], p["m2"], k1, p["k2"], k3))
        return HybridSystem(
            switch_times=T, matrices_=mats, default_x0=(1.0, 1.0, 1.0, 1.0),
            observable_pairs=((0, 2), (1, 3)), **meta,
        )

    if name == "multicompartment":
        n = p["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 2:
            raise ConfigError("multicompartment 'n' must be an integer >= 2")
        rates = _parse_rates(p["rates"], n)
        T = sorted({T for _, T in rates.values()} | {0.0})
        mats = [compartment_matrix(rates, n, t) for t in T]
        x0 = (1.0,) + (0.0,) * (n - 1)
        return HybridSystem(switch_times=T, matrices_=mats, default_x0=x0, conserved_row=n - 1, **meta)

    if name in ("cont-frequency", "cont-damping"):
        if p["omega_d"] == 0:
            raise ConfigError(f"catalog '{name}': omega_d must be non-zero")
        forcing = (p["A_d"], p["B_d"], p["omega_d"])
        if name == "cont-frequency":
            sigma = TrigFunction(const=p["sigma0"])
            omega = _trig(p["omega0"], *forcing)
        else:
            sigma = _trig(p["sigma0"], *forcing)
            omega = TrigFunction(const=p["omega0"])
        block = SpiralBlock(pair=(0, 1), sigma=sigma, omega=omega)
        return SpiralSystem(
            n=2, blocks=(block,), default_x0=(1.0, 1.0), observable_pairs=((0, 1),), **meta
        )

    if name == "nonauto-coupled-osc":
        w1, w2 = coupled_frequencies(p["m1"], p["m2"], p["k1"], p["k2"], p["k3"])
        zero = TrigFunction()
        blocks = (
            SpiralBlock(pair=(0, 2), sigma=zero, omega=_trig(w1, p["a1"], p["b1"], p["freq1"])),
            SpiralBlock(pair=(1, 3), sigma=zero, omega=_trig(w2, p["a2"], p["b2"], p["freq2"])),
        )
        return SpiralSystem(
            n=4, blocks=blocks, default_x0=(1.0, 1.0, 1.0, 1.0),
            observable_pairs=((0, 2), (1, 3)), **meta,
        )

    raise ConfigError(f"unknown catalog system '{name}'")  # pragma: no cover
