"""Text serialization of domain specs and voxel domains.

Specs use a flat ``key = value`` document::

    kind = torus
    center = 0, 0, 0
    major = 2
    minor = 0.5

Star-shaped coefficients are written as ``l,m,value`` triples separated by
``;``.  Union members are nested under ``member.<i>.`` prefixes.  Voxel
domains are written as a header (origin, h, dims) followed by a run-length
encoding of the mask in C order.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InvalidSpecError
from .specs import Ball, Ellipsoid, StarShaped, Torus, Union
from .voxel import VoxelDomain

_KINDS = {"ball": Ball, "ellipsoid": Ellipsoid, "torus": Torus, "star": StarShaped,
          "union": Union}


def parse_keyvalue(text: str) -> dict[str, tuple[str, int]]:
    """``key = value`` lines; ``#`` starts a comment.  Values keep their line number."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno, 1)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno, 1)
        out[key] = (value.strip(), lineno)
    return out


def _floats(value: str, n: int | None, key: str, line: int) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {value!r}", line) from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}", line)
    return vals


def _fmt(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ", ".join(_fmt(x) for x in v)


def spec_to_dict(spec, prefix: str = "") -> dict[str, str]:
    d = {prefix + "kind": spec.kind}
    if isinstance(spec, Union):
        d[prefix + "members"] = str(len(spec.members))
        for i, m in enumerate(spec.members):
            d.update(spec_to_dict(m, f"{prefix}member.{i}."))
        return d
    d[prefix + "center"] = _vec(spec.center)
    if isinstance(spec, Ball):
        d[prefix + "radius"] = _fmt(spec.radius)
    elif isinstance(spec, Ellipsoid):
        d[prefix + "semi_axes"] = _vec(spec.semi_axes)
        d[prefix + "rotation"] = _vec(spec.rotation)
    elif isinstance(spec, Torus):
        d[prefix + "major"] = _fmt(spec.major)
        d[prefix + "minor"] = _fmt(spec.minor)
    elif isinstance(spec, StarShaped):
        d[prefix + "base_radius"] = _fmt(spec.base_radius)
        d[prefix + "coefficients"] = "; ".join(f"{l},{m},{_fmt(v)}" for l, m, v in spec.coefficients)
    return d


def spec_to_text(spec) -> str:
    return "".join(f"{k} = {v}\n" for k, v in spec_to_dict(spec).items())


def spec_from_dict(kv: dict[str, tuple[str, int]], prefix: str = ""):
    def get(key, default=None):
        full = prefix + key
        if full in kv:
            return kv[full]
        if default is not None:
            return default
        line = min((ln for _, ln in kv.values()), default=None)
        raise ConfigError(f"missing key {full!r}", line)

    kind, line = get("kind")
    kind = kind.lower()
    if kind not in _KINDS:
        raise ConfigError(f"unknown kind {kind!r}", line)
    try:
        if kind == "union":
            n_str, ln = get("members")
            try:
                n = int(n_str)
            except ValueError:
                raise ConfigError(f"members: expected an integer, got {n_str!r}", ln) from None
            return Union(tuple(spec_from_dict(kv, f"{prefix}member.{i}.") for i in range(n)))
        cv, cl = get("center")
        center = _floats(cv, 3, prefix + "center", cl)
        num = lambda key: _floats(get(key)[0], 1, prefix + key, get(key)[1])[0]
        if kind == "ball":
            return Ball(center, num("radius"))
        if kind == "ellipsoid":
            axes = _floats(get("semi_axes")[0], 3, prefix + "semi_axes", get("semi_axes")[1])
            rv, ln = get("rotation", ("0,0,0", 0))
            return Ellipsoid(center, axes, _floats(rv, 3, prefix + "rotation", ln))
        if kind == "torus":
            return Torus(center, num("major"), num("minor"))
        coeff_text, ln = get("coefficients", ("", 0))
        coeffs = []
        for item in filter(None, (c.strip() for c in coeff_text.split(";"))):
            parts = item.split(",")
            if len(parts) != 3:
                raise ConfigError(f"coefficient {item!r} is not 'l,m,value'", ln)
            try:
                coeffs.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise ConfigError(f"coefficient {item!r} is not 'l,m,value'", ln) from None
        return StarShaped(center, num("base_radius"), tuple(coeffs))
    except InvalidSpecError as exc:
        raise InvalidSpecError(f"{exc} (spec starting at line {line})") from None


def spec_from_text(text: str):
    return spec_from_dict(parse_keyvalue(text))


def _rle(flat: np.ndarray) -> list[int]:
    """Run lengths, starting with a run of ``False`` (possibly empty)."""
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def voxel_to_text(d: VoxelDomain) -> str:
    runs = _rle(d.mask.ravel())
    lines = [
        f"origin = {_vec(d.origin)}",
        f"h = {_fmt(d.h)}",
        f"dims = {', '.join(str(n) for n in d.dims)}",
        "encoding = rle-false-first",
        f"runs = {' '.join(str(r) for r in runs)}",
    ]
    return "\n".join(lines) + "\n"


def voxel_from_text(text: str) -> VoxelDomain:
    kv = parse_keyvalue(text)
    for key in ("origin", "h", "dims", "runs"):
        if key not in kv:
            raise ConfigError(f"missing key {key!r}")
    origin = _floats(kv["origin"][0], 3, "origin", kv["origin"][1])
    h = _floats(kv["h"][0], 1, "h", kv["h"][1])[0]
    try:
        dims = tuple(int(x) for x in kv["dims"][0].split(","))
        runs = [int(x) for x in kv["runs"][0].split()]
    except ValueError:
        raise ConfigError("dims and runs must be integers", kv["runs"][1]) from None
    if len(dims) != 3 or sum(runs) != int(np.prod(dims)):
        raise ConfigError("run lengths do not match dims", kv["runs"][1])
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return VoxelDomain(np.asarray(origin), h, flat.reshape(dims))
