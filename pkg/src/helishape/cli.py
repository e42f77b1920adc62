"""Command-line experiment driver.

A run is described by a key-value config file with one ``[section]`` named
after the subcommand::

    [spectrum]
    spec = ball.txt            # a spec file, relative to the config
    h = 0.05
    objectives = nu, eta
    output = ball.csv

Specs can also be given inline with a ``spec.`` prefix (``spec.kind = ball``,
``spec.radius = 1``, ...).  Subcommands that take two domains use ``first``
and ``second`` in the same way.  See the README for every key.

Exit codes: 0 success, 2 configuration or precondition error, 3 solver
error, 4 empty feasible class.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import (
    AccuracyError,
    CapacityError,
    ConfigError,
    ConstructionError,
    DomainError,
    EmptyClassError,
    InvalidSpecError,
    MappingError,
    PreconditionError,
    ResolutionError,
    SolverError,
)
from .geometry.io import parse_keyvalue, spec_from_dict

log = logging.getLogger(__name__)

SUBCOMMANDS = ("spectrum", "geometry", "checks", "optimize", "hausdorff", "convergence")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_EMPTY = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# configuration


class RunConfig:
    """Parsed ``[section]`` of a config file with typed accessors."""

    def __init__(self, subcommand: str, values: dict, base_dir: Path, text: str):
        self.subcommand = subcommand
        self.values = values  # key -> (value, line)
        self.base_dir = base_dir
        self.text = text
        self._used: set[str] = set()

    def _raw(self, key: str):
        self._used.add(key)
        return self.values.get(key)

    def has(self, key: str) -> bool:
        return key in self.values

    def str(self, key: str, default: str | None = None) -> str:
        v = self._raw(key)
        if v is None:
            if default is None:
                raise ConfigError(f"[{self.subcommand}] missing key {key!r}")
            return default
        return v[0]

    def float(self, key: str, default: float | None = None) -> float:
        v = self._raw(key)
        if v is None:
            if default is None:
                raise ConfigError(f"[{self.subcommand}] missing key {key!r}")
            return default
        try:
            return float(v[0])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {v[0]!r}", v[1]) from None

    def int(self, key: str, default: int | None = None) -> int:
        v = self._raw(key)
        if v is None:
            if default is None:
                raise ConfigError(f"[{self.subcommand}] missing key {key!r}")
            return default
        try:
            return int(v[0])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {v[0]!r}", v[1]) from None

    def floats(self, key: str, default=None) -> list[float]:
        v = self._raw(key)
        if v is None:
            if default is None:
                raise ConfigError(f"[{self.subcommand}] missing key {key!r}")
            return list(default)
        try:
            return [float(x) for x in v[0].split(",")]
        except ValueError:
            raise ConfigError(f"{key}: expected numbers, got {v[0]!r}", v[1]) from None

    def words(self, key: str, default=None, allowed=None) -> list[str]:
        v = self._raw(key)
        if v is None:
            return list(default)
        out = [w.strip() for w in v[0].split(",") if w.strip()]
        for w in out:
            if allowed is not None and w not in allowed:
                raise ConfigError(f"{key}: {w!r} is not one of {', '.join(allowed)}", v[1])
        return out

    def spec(self, name: str = "spec"):
        """A spec given as a file path (``name = path``) or inline (``name.kind = ...``)."""
        if name in self.values:
            value, line = self._raw(name)
            path = (self.base_dir / value).resolve()
            if not path.is_file():
                raise ConfigError(f"{name}: spec file {value!r} not found", line)
            from .geometry.io import spec_from_text

            try:
                return spec_from_text(path.read_text())
            except ConfigError as exc:
                raise ConfigError(f"{path.name}: {exc}") from None
        prefix = name + "."
        sub = {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}
        if not sub:
            raise ConfigError(f"[{self.subcommand}] missing {name!r} (path or inline {prefix}*)")
        self._used.update(prefix + k for k in sub)
        return spec_from_dict(sub)

    def output(self) -> tuple[Path | None, str]:
        out = self._raw("output")
        fmt = self.words("format", ["csv"], ("csv", "json"))
        if len(fmt) != 1:
            raise ConfigError("format: give exactly one of csv, json", self.values["format"][1])
        return (self.base_dir / out[0] if out else None), fmt[0]

    def check_unused(self):
        unknown = sorted(k for k in self.values if k not in self._used
                         and not any(k.startswith(p + ".") for p in self._used))
        if unknown:
            key = unknown[0]
            raise ConfigError(f"[{self.subcommand}] unknown key {key!r}", self.values[key][1])

    def digest(self) -> str:
        canon = "\n".join(f"{k}={v[0]}" for k, v in sorted(self.values.items()))
        return hashlib.sha256(f"[{self.subcommand}]\n{canon}".encode()).hexdigest()[:16]


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    """Split the single ``[section]`` out of ``text``; line numbers are kept."""
    section, start, body = None, 0, []
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, len(raw.rstrip()) + 1)
            if section is not None:
                raise ConfigError("a config holds exactly one section", lineno, 1)
            section, start = stripped[1:-1].strip(), lineno
            if section not in SUBCOMMANDS:
                raise ConfigError(f"unknown section [{section}]; expected one of "
                                  f"{', '.join(SUBCOMMANDS)}", lineno, 2)
            body.append("")
            continue
        if section is None and stripped:
            raise ConfigError("key before the first [section] header", lineno, 1)
        body.append(raw)
    if section is None:
        raise ConfigError("no [section] header found")
    values = parse_keyvalue("\n".join(body))
    return RunConfig(section, values, Path(base_dir), text)


# ---------------------------------------------------------------------------
# output


def _round(v: float) -> float:
    """Keep 12 significant digits so reruns are byte-identical (ulp noise dropped)."""
    return float(f"{v:.12g}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(_round(float(v)))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return _round(v) if math.isfinite(v) else repr(v)
    return v


def provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.digest(), "helishape": __version__,
            "numpy": np.__version__, "scipy": scipy.__version__}


def render(rows: list[dict], fmt: str, prov: dict, extra: dict | None = None) -> str:
    if fmt == "json":
        doc = {"provenance": prov, "rows": rows}
        if extra:
            doc.update(extra)
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    keys.extend(k for k in prov if k not in keys)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        merged = {**prov, **r}
        w.writerow([_fmt(merged.get(k, "")) for k in keys])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# subcommands


def _positive(cfg: RunConfig, key: str, value: float) -> float:
    if not value > 0:
        raise ConfigError(f"{key} must be positive", cfg.values.get(key, (None, None))[1])
    return value


def cmd_spectrum(cfg: RunConfig):
    from .geometry.voxel import equal_volume_ball_radius, rasterize
    from .spectral import objective

    spec = cfg.spec()
    h = _positive(cfg, "h", cfg.float("h", 0.05))
    tol = cfg.float("tol", 1e-8)
    seed = cfg.int("seed", 0)
    objectives = cfg.words("objectives", ["nu"], ("nu", "eta"))
    field_path = cfg.str("eigenfield", "")
    d = rasterize(spec, h)
    R = equal_volume_ball_radius(d.volume())
    rows, extra = [], {}
    for which in objectives:
        res = objective(d, which, tol, seed=seed)
        row = {"kind": spec.kind, "objective": which, **res.record(), "volume": d.volume(),
               "R": R, "value_times_R": res.nu_or_eta * R, "seed": seed}
        if field_path:
            from .fieldspace import field_to_text

            p = cfg.base_dir / f"{field_path}.{which}.txt"
            write_atomic(p, field_to_text(res.eigenfield))
            row["eigenfield"] = str(p.name)
        rows.append(row)
    return rows, extra


def cmd_geometry(cfg: RunConfig):
    from .fieldspace import estimated_betti1
    from .geometry.ballcond import ball_condition
    from .geometry.voxel import diameter, equal_volume_ball_radius, packing_volume_bound, rasterize

    spec = cfg.spec()
    h = _positive(cfg, "h", cfg.float("h", 0.05))
    r_cap = cfg.float("r_cap", 10.0)
    d = rasterize(spec, h)
    rep = ball_condition(d, r_cap)
    diam = diameter(d)
    row = {"kind": spec.kind, "domain_hash": d.digest(), "h": h, "volume": d.volume(),
           "analytic_volume": spec.volume(), "R": equal_volume_ball_radius(d.volume()),
           "diameter": diam, "components": d.n_components, "betti1": estimated_betti1(d)}
    row.update({k: v for k, v in rep.as_dict().items() if "witness" not in k})
    row["interior_witness"] = " ".join(repr(float(x)) for x in rep.interior_witness)
    row["exterior_witness"] = " ".join(repr(float(x)) for x in rep.exterior_witness)
    if cfg.has("r0"):
        r0 = _positive(cfg, "r0", cfg.float("r0"))
        row["r0"] = r0
        row["packing_volume_bound"] = packing_volume_bound(diam, r0)
        row["feasible"] = rep.r_uniform >= r0 - 2 * h
    return [row], {}


def cmd_checks(cfg: RunConfig):
    from .framework_checks import OBJECTIVES, lower_bound_constant, solve, standard_suite

    h = _positive(cfg, "h", cfg.float("h", 0.05))
    tol = cfg.float("tol", 0.05)
    seed = cfg.int("seed", 0)
    solver_tol = cfg.float("solver_tol", 1e-8)
    objectives = cfg.words("objectives", list(OBJECTIVES), OBJECTIVES)
    times = tuple(cfg.floats("times", (0.01, 0.02, 0.04)))
    rows = []
    for name, rep in standard_suite(h, tol, objectives, solver_tol, seed, times):
        rows.append({"case": name, **rep.row()})
    from .corpus import standard_corpus
    from .geometry.voxel import rasterize

    triples = []
    for spec in standard_corpus().values():
        d = rasterize(spec, h)
        triples.append((d.volume(), solve(d, "nu", solver_tol, seed).nu_or_eta,
                        solve(d, "eta", solver_tol, seed).nu_or_eta))
    return rows, {"lower_bound_echo": lower_bound_constant(triples)}


def cmd_optimize(cfg: RunConfig):
    from .optimize import FAMILIES, FeasibleClass, bound_tracker, minimize

    family = cfg.words("family", ["ellipsoids"], FAMILIES)
    cls = FeasibleClass(
        r0=_positive(cfg, "r0", cfg.float("r0")),
        V=_positive(cfg, "V", cfg.float("V")),
        family=family[0],
        h=_positive(cfg, "h", cfg.float("h", 0.1)),
        degree=cfg.int("degree", 2),
        k=cfg.int("k", 2),
    )
    which = cfg.words("objective", ["nu"], ("nu", "eta"))[0]
    state = minimize(cls, which, budget=cfg.int("budget", 40), seed=cfg.int("seed", 0),
                     tol=cfg.float("tol", 1e-6))
    rows = [{"eval": i, **e.row()} for i, e in enumerate(state.evaluations)]
    extra = {"bounds": bound_tracker(state), "history": state.history,
             "best_spec": state.best_spec_text(), "best_params": list(state.best.params)}
    best_path = cfg.str("best_spec", "")
    if best_path:
        write_atomic(cfg.base_dir / best_path, state.best_spec_text())
    return rows, extra


def cmd_hausdorff(cfg: RunConfig):
    from .geometry.hausdorff import hausdorff, relative_hausdorff
    from .geometry.voxel import rasterize

    h = _positive(cfg, "h", cfg.float("h", 0.05))
    a, b = rasterize(cfg.spec("first"), h), rasterize(cfg.spec("second"), h)
    row = {"h": h, "first_hash": a.digest(), "second_hash": b.digest(), "hausdorff": hausdorff(a, b)}
    if cfg.has("R0"):
        R0 = _positive(cfg, "R0", cfg.float("R0"))
        center = cfg.floats("center", (0.0, 0.0, 0.0))
        row["R0"] = R0
        row["relative_hausdorff"] = relative_hausdorff(a, b, R0, center)
    return [row], {}


def convergence_study(spec, hs, objectives=("nu", "eta"), tol: float = 1e-8, seed: int = 0) -> list[dict]:
    """Per-h values and errors against the equal-volume ball eigenvalue ``4.4934/R``.

    ``R`` is the equal-volume radius of the spec itself (so the reference is
    exact for balls).  ``monotone`` flags strictly decreasing errors in ``h``.
    """
    from .analytic import BALL_CURL_EIGENVALUE
    from .biotsavart import helicity
    from .geometry.voxel import equal_volume_ball_radius, rasterize
    from .spectral import objective

    hs = [float(h) for h in hs]
    if len(hs) < 3:
        raise PreconditionError("a convergence study needs at least three grid spacings")
    if any(not h > 0 for h in hs):
        raise PreconditionError("grid spacings must be positive")
    hs = sorted(hs, reverse=True)
    R_spec = equal_volume_ball_radius(spec.volume())
    ref = BALL_CURL_EIGENVALUE / R_spec
    rows = []
    for h in hs:
        d = rasterize(spec, h)
        R = equal_volume_ball_radius(d.volume())
        row = {"h": h, "domain_hash": d.digest(), "faces": None, "R": R, "reference": ref}
        for which in objectives:
            res = objective(d, which, tol, seed=seed)
            row["faces"] = res.eigenfield.values.size
            row[which] = res.nu_or_eta
            row[f"{which}_helicity"] = helicity(res.eigenfield)
            row[f"{which}_error"] = abs(res.nu_or_eta - ref) / ref
            row[f"{which}_times_R"] = res.nu_or_eta * R
            row[f"{which}_residual"] = res.residual
        rows.append(row)
    for which in objectives:
        errs = [r[f"{which}_error"] for r in rows]
        mono = all(b < a for a, b in zip(errs, errs[1:]))
        for r in rows:
            r[f"{which}_monotone"] = mono
    return rows


def cmd_convergence(cfg: RunConfig):
    spec = cfg.spec()
    hs = cfg.floats("hs", (0.1, 0.07, 0.05))
    objectives = cfg.words("objectives", ["nu", "eta"], ("nu", "eta"))
    rows = convergence_study(spec, hs, objectives, cfg.float("tol", 1e-8), cfg.int("seed", 0))
    return rows, {}


COMMANDS = {
    "spectrum": cmd_spectrum,
    "geometry": cmd_geometry,
    "checks": cmd_checks,
    "optimize": cmd_optimize,
    "hausdorff": cmd_hausdorff,
    "convergence": cmd_convergence,
}


def run(cfg: RunConfig, output: Path | None = None, fmt: str | None = None) -> str:
    """Execute the configured subcommand and return the rendered payload.

    The payload is also written atomically to the configured output path.
    """
    out_path, cfg_fmt = cfg.output()
    rows, extra = COMMANDS[cfg.subcommand](cfg)
    cfg.check_unused()
    text = render(rows, fmt or cfg_fmt, provenance(cfg), extra)
    target = output or out_path
    if target is not None:
        write_atomic(target, text)
    return text


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, EmptyClassError):
        return EXIT_EMPTY
    if isinstance(exc, (SolverError, MappingError, ConstructionError, AccuracyError)):
        return EXIT_SOLVER
    if isinstance(exc, (ConfigError, InvalidSpecError, PreconditionError, DomainError,
                        ResolutionError, CapacityError, OSError)):
        return EXIT_CONFIG
    raise exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helishape", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + SUBCOMMANDS:
        sp = sub.add_parser(name, help="run a config file" if name == "run"
                            else f"run a config whose section is [{name}]")
        sp.add_argument("config", type=Path, help="key-value config file")
        sp.add_argument("-o", "--output", type=Path, help="override the configured output path")
        sp.add_argument("--format", choices=("csv", "json"), help="override the output format")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text()
        cfg = parse_config(text, args.config.parent)
        if args.command != "run" and args.command != cfg.subcommand:
            raise ConfigError(f"config section [{cfg.subcommand}] does not match "
                              f"subcommand {args.command!r}")
        payload = run(cfg, args.output, args.format)
        if args.output is None and cfg.output()[0] is None:
            sys.stdout.write(payload)
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = exit_code(exc)
        print(f"helishape: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
