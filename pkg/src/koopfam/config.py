"""JSON system definitions.

Accepted forms::

    {"type": "catalog", "name": "multicompartment", "overrides": {...}}
    {"type": "hybrid", "switch_times": [...], "matrices": [[[...]], ...]}
    {"type": "spiral", "sigma": TRIG, "omega": TRIG}
    {"type": "spiral", "dim": 4, "blocks": [{"pair": [0, 2], "sigma": TRIG, "omega": TRIG}, ...]}
    {"type": "commuting", "R": [[...]], "rates": [TRIG, ...]}

``TRIG`` is ``{"const": c, "cos_amp": a, "sin_amp": b, "freq": w}`` (missing
keys are zero) or a bare number. Non-catalog forms accept optional
``name``, ``x0``, ``conserved_row`` and ``observable_pairs``.
"""

from __future__ import annotations

import json
import os

import numpy as np

from koopfam.catalog import catalog, catalog_names
from koopfam.errors import ConfigError
from koopfam.systems import (
    CommutingSystem,
    HybridSystem,
    LinearSystem,
    SpiralBlock,
    SpiralSystem,
    TrigFunction,
)

__all__ = ["parse_system", "serialize_system", "load_system", "system_to_dict"]

_TRIG_KEYS = ("const", "cos_amp", "sin_amp", "freq")
_COMMON = {"type", "name", "x0", "conserved_row", "observable_pairs"}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _num(value, path, allow_complex=False):
    if allow_complex and isinstance(value, list) and len(value) == 2:
        return complex(_num(value[0], path), _num(value[1], path))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {json.dumps(value)}")
    if not np.isfinite(value):
        _fail(path, "expected a finite number")
    return float(value)


def _matrix(value, path, n=None):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        _fail(path, "expected a non-empty list of rows")
    rows = [[_num(v, f"{path}[{i}][{j}]") for j, v in enumerate(r)] for i, r in enumerate(value)]
    size = len(rows)
    if any(len(r) != size for r in rows):
        _fail(path, "matrix must be square")
    if n is not None and size != n:
        _fail(path, f"expected a {n}x{n} matrix, got {size}x{size}")
    return np.array(rows)


def _trig(value, path, allow_complex=False):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return TrigFunction(const=_num(value, path))
    if allow_complex and isinstance(value, list):
        return TrigFunction(const=_num(value, path, allow_complex=True))
    if not isinstance(value, dict):
        _fail(path, "expected a number or an object with const/cos_amp/sin_amp/freq")
    extra = set(value) - set(_TRIG_KEYS)
    if extra:
        _fail(path, f"unknown key(s) {sorted(extra)}; allowed: {list(_TRIG_KEYS)}")
    kw = {k: _num(value[k], f"{path}.{k}", allow_complex and k != "freq") for k in _TRIG_KEYS if k in value}
    return TrigFunction(**kw)


def _check_keys(obj, allowed, path):
    extra = set(obj) - set(allowed)
    if extra:
        _fail(path, f"unknown key(s) {sorted(extra)}")


def _meta(obj, path, n):
    meta = {"name": str(obj.get("name", ""))}
    if "x0" in obj:
        x0 = obj["x0"]
        if not isinstance(x0, list) or len(x0) != n:
            _fail(f"{path}.x0", f"expected a list of {n} numbers")
        meta["default_x0"] = tuple(_num(v, f"{path}.x0[{i}]") for i, v in enumerate(x0))
    if "conserved_row" in obj:
        r = obj["conserved_row"]
        if isinstance(r, bool) or not isinstance(r, int) or not 0 <= r < n:
            _fail(f"{path}.conserved_row", f"expected an integer in 0..{n - 1}")
        meta["conserved_row"] = r
    if "observable_pairs" in obj:
        pairs = obj["observable_pairs"]
        try:
            meta["observable_pairs"] = tuple((int(a), int(b)) for a, b in pairs)
        except (TypeError, ValueError):
            _fail(f"{path}.observable_pairs", "expected a list of [p, q] index pairs")
    return meta


def system_from_dict(obj, path="system") -> LinearSystem:
    """Build a system from a decoded JSON object."""
    if not isinstance(obj, dict):
        _fail(path, "expected a JSON object")
    kind = obj.get("type")
    if kind == "catalog":
        _check_keys(obj, {"type", "name", "overrides"}, path)
        name = obj.get("name")
        if name not in catalog_names():
            _fail(f"{path}.name", f"unknown catalog system {json.dumps(name)}; known: {list(catalog_names())}")
        overrides = obj.get("overrides", {})
        if not isinstance(overrides, dict):
            _fail(f"{path}.overrides", "expected an object")
        try:
            return catalog(name, overrides)
        except ConfigError as exc:
            _fail(f"{path}.overrides", str(exc))
    if kind == "hybrid":
        _check_keys(obj, _COMMON | {"switch_times", "matrices"}, path)
        T = obj.get("switch_times")
        if not isinstance(T, list) or not T:
            _fail(f"{path}.switch_times", "expected a non-empty list")
        T = [_num(v, f"{path}.switch_times[{i}]") for i, v in enumerate(T)]
        if any(b <= a for a, b in zip(T, T[1:])):
            _fail(f"{path}.switch_times", "must be strictly increasing")
        mats = obj.get("matrices")
        if not isinstance(mats, list) or len(mats) != len(T):
            _fail(f"{path}.matrices", f"expected {len(T)} matrices (one per switch time)")
        first = _matrix(mats[0], f"{path}.matrices[0]")
        n = first.shape[0]
        mats = [first] + [_matrix(m, f"{path}.matrices[{i}]", n) for i, m in enumerate(mats[1:], 1)]
        return HybridSystem(switch_times=T, matrices_=mats, **_meta(obj, path, n))
    if kind == "spiral":
        if "blocks" in obj:
            _check_keys(obj, _COMMON | {"dim", "blocks"}, path)
            n = obj.get("dim")
            if isinstance(n, bool) or not isinstance(n, int) or n < 2:
                _fail(f"{path}.dim", "expected an integer >= 2")
            blocks = []
            if not isinstance(obj["blocks"], list) or not obj["blocks"]:
                _fail(f"{path}.blocks", "expected a non-empty list")
            for i, b in enumerate(obj["blocks"]):
                bp = f"{path}.blocks[{i}]"
                if not isinstance(b, dict):
                    _fail(bp, "expected an object")
                _check_keys(b, {"pair", "sigma", "omega"}, bp)
                pair = b.get("pair")
                if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, int) for v in pair)):
                    _fail(f"{bp}.pair", "expected [p, q]")
                blocks.append(SpiralBlock(tuple(pair), _trig(b.get("sigma", 0), f"{bp}.sigma"),
                                          _trig(b.get("omega", 0), f"{bp}.omega")))
        else:
            _check_keys(obj, _COMMON | {"sigma", "omega"}, path)
            n = 2
            blocks = [SpiralBlock((0, 1), _trig(obj.get("sigma", 0), f"{path}.sigma"),
                                  _trig(obj.get("omega", 0), f"{path}.omega"))]
        try:
            return SpiralSystem(n=n, blocks=tuple(blocks), **_meta(obj, path, n))
        except ConfigError as exc:
            _fail(path, str(exc))
    if kind == "commuting":
        _check_keys(obj, _COMMON | {"R", "R_imag", "rates"}, path)
        R = _matrix(obj.get("R"), f"{path}.R")
        n = R.shape[0]
        if "R_imag" in obj:
            R = R + 1j * _matrix(obj["R_imag"], f"{path}.R_imag", n)
        rates = obj.get("rates")
        if not isinstance(rates, list) or len(rates) != n:
            _fail(f"{path}.rates", f"expected {n} rate functions")
        rates = tuple(_trig(r, f"{path}.rates[{i}]", allow_complex=True) for i, r in enumerate(rates))
        try:
            return CommutingSystem(R=R, rates=rates, **_meta(obj, path, n))
        except ConfigError as exc:
            _fail(path, str(exc))
    _fail(f"{path}.type", f"expected one of catalog/hybrid/spiral/commuting, got {json.dumps(kind)}")


def parse_system(text: str, source="<config>") -> LinearSystem:
    """Parse JSON text; errors carry line/column or the offending field path."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return system_from_dict(obj)


def _num_out(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _trig_out(f: TrigFunction):
    out = {}
    for k in _TRIG_KEYS:
        v = getattr(f, k)
        if v != 0:
            out[k] = float(v) if k == "freq" else _num_out(v)
    return out


def _meta_out(system, out):
    if system.name:
        out["name"] = system.name
    if system.default_x0 is not None:
        out["x0"] = [float(v) for v in system.default_x0]
    if system.conserved_row is not None:
        out["conserved_row"] = int(system.conserved_row)
    if system.observable_pairs is not None:
        out["observable_pairs"] = [list(p) for p in system.observable_pairs]
    return out


def system_to_dict(system: LinearSystem) -> dict:
    if system.origin is not None:
        name, overrides = system.origin
        return {"type": "catalog", "name": name, "overrides": dict(overrides)}
    if isinstance(system, HybridSystem):
        out = {
            "type": "hybrid",
            "switch_times": list(system.switch_times),
            "matrices": [M.tolist() for M in system.segment_matrices],
        }
        return _meta_out(system, out)
    if isinstance(system, SpiralSystem):
        blocks = [{"pair": list(b.pair), "sigma": _trig_out(b.sigma), "omega": _trig_out(b.omega)}
                  for b in system.blocks]
        out = {"type": "spiral", "dim": system.n, "blocks": blocks}
        return _meta_out(system, out)
    if isinstance(system, CommutingSystem):
        out = {"type": "commuting", "R": np.real(system.R).tolist(),
               "rates": [_trig_out(f) for f in system.rates]}
        if np.iscomplexobj(system.R) and np.any(system.R.imag):
            out["R_imag"] = system.R.imag.tolist()
        return _meta_out(system, out)
    raise ConfigError(f"{type(system).__name__} cannot be serialised")


def serialize_system(system: LinearSystem) -> str:
    """Canonical JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(system_to_dict(system), sort_keys=True, indent=2) + "\n"


def load_system(arg: str) -> LinearSystem:
    """Resolve ``--system``: a catalog name, inline JSON, or a JSON file path."""
    text = arg.strip()
    if text in catalog_names():
        return catalog(text)
    if text.startswith("{"):
        return parse_system(text, "<inline>")
    if not os.path.exists(arg):
        raise ConfigError(
            f"--system {arg!r} is neither a catalog name ({', '.join(catalog_names())}), "
            "inline JSON, nor an existing file"
        )
    with open(arg, encoding="utf-8") as fh:
        return parse_system(fh.read(), arg)
