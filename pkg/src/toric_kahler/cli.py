"""Command-line front end.

Every subcommand reads a polytope (JSON file or built-in name), writes JSON or
CSV to stdout or --out, and exits 0 on success, 2 on validation errors, 3 on
numerical failures and I/O errors. JSON outputs carry ``schema_version`` and
validate against the schemas shipped in ``toric_kahler/schemas``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import asymptotics as asy
from .curvature import FIELDS, curvature_field
from .errors import NumericalError, ValidationError
from .functional import AffineData, extremal_affine, futaki, stability_probe
from .functions import GaussianBump, PolynomialFunction, ZeroFunction
from .gridio import read_grid, write_grid, grid_to_csv, grid_to_matrix
from .polytope import barycenter, fano_structure, lattice_points, load_polytope
from .potential import (INTERIOR, GridCorrection, GridFunction, SymplecticPotential, grid_template,
                        interior_samples, legendre_solve, legendre_to_kahler,
                        random_admissible_perturbation)
from .rational import Poly, fraction_str
from .soliton import centered_potential, h_and_rho, identity_suite, soliton_constants
from .solver import solve_extremal_1d, solve_prescribed_2d, solve_soliton_2d
from .threads import set_threads

SCHEMA_VERSION = "1.0"
DEFAULT_SEED = 0


@dataclass
class RunConfig:
    command: str
    polytope: str
    potential: str | None = None
    grid: int = 33
    tol: float = 1e-4
    ks: tuple = (8, 16, 32)
    budget: int = 2000
    out: str | None = None
    seed: int = DEFAULT_SEED
    threads: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 2 <= self.grid <= 257:
            raise ValidationError("--grid must lie in [2, 257]")
        if not 0 < self.tol < 1:
            raise ValidationError("--tol must lie in (0, 1)")
        if any(k < 1 for k in self.ks):
            raise ValidationError("every k must be a positive integer")
        if self.budget < 1:
            raise ValidationError("--budget must be positive")
        if self.threads is not None and self.threads < 1:
            raise ValidationError("--threads must be positive")


# ------------------------------------------------------------------ schemas

def load_schema(name: str) -> dict:
    text = resources.files("toric_kahler").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def stamp(name: str, payload: dict) -> dict:
    out = {"schema_version": SCHEMA_VERSION, **payload}
    jsonschema.validate(out, load_schema(name))
    return out


# ------------------------------------------------------------------ inputs

def potential_from_descriptor(P, desc) -> SymplecticPotential:
    """{"reference": "guillemin", "correction": {"kind": ...}} from a JSON string, path or dict.

    Kinds: "zero"; "grid" with "path" to a grid CSV; "builtin:perturbation"
    (seed, amplitude); "builtin:quadratic" (amplitude · ‖x‖²/2);
    "builtin:bump" (center, width, amplitude).
    """
    if desc is None:
        return SymplecticPotential(P)
    if isinstance(desc, str):
        p = Path(desc)
        desc = json.loads(p.read_text() if p.exists() else desc)
    if desc.get("reference", "guillemin") != "guillemin":
        raise ValidationError("only the Guillemin reference is supported")
    corr = desc.get("correction", {"kind": "zero"})
    kind = corr.get("kind", "zero")
    if kind == "zero":
        return SymplecticPotential(P, ZeroFunction(P.dim))
    if kind == "grid":
        return SymplecticPotential(P, GridCorrection(read_grid(corr["path"])))
    if kind == "builtin:perturbation":
        return random_admissible_perturbation(P, int(corr.get("seed", DEFAULT_SEED)),
                                              float(corr.get("amplitude", 0.5)))
    if kind == "builtin:quadratic":
        amp = Fraction(str(corr.get("amplitude", "1")))
        terms = {tuple(2 * int(i == j) for i in range(P.dim)): amp / 2 for j in range(P.dim)}
        return SymplecticPotential(P, PolynomialFunction(Poly(P.dim, terms)))
    if kind == "builtin:bump":
        center = tuple(float(c) for c in corr.get("center", [float(c) for c in barycenter(P)]))
        return SymplecticPotential(P, GaussianBump(center, float(corr.get("width", 0.3)),
                                                   float(corr.get("amplitude", 0.01))))
    raise ValidationError(f"unknown correction kind {kind!r}")


def parse_affine(text, dim: int) -> AffineData:
    data = json.loads(text) if isinstance(text, str) else text
    if not isinstance(data, dict):
        raise ValidationError("--A must be a JSON object {constant, gradient}")
    return AffineData.from_json(data, dim)


def parse_points(text, dim: int) -> np.ndarray:
    pts = np.array(json.loads(text), dtype=float)
    pts = pts.reshape(-1, dim) if pts.ndim < 2 else pts
    if pts.shape[1] != dim:
        raise ValidationError(f"points must have {dim} coordinates")
    return pts


# ------------------------------------------------------------------ commands

def cmd_check_delzant(cfg, P):
    return stamp("check-delzant", {"delzant": True, "dim": P.dim, "label": P.label,
                                   "vertices": len(P.vertices),
                                   "vertex_list": [[fraction_str(c) for c in v] for v in P.vertices]})


def cmd_lattice(cfg, P):
    k = int(cfg.extra.get("k") or 1)
    pts = lattice_points(P, k)
    return stamp("lattice", {"k": k, "count": len(pts), "points": [list(p) for p in pts]})


def cmd_futaki(cfg, P):
    return stamp("futaki", {"futaki": [fraction_str(v) for v in futaki(P)]})


def cmd_extremal_a(cfg, P):
    return stamp("extremal-a", extremal_affine(P).to_json())


def cmd_stability_probe(cfg, P):
    A = parse_affine(cfg.extra["A"], P.dim) if cfg.extra.get("A") else extremal_affine(P)
    return stamp("stability-probe", stability_probe(P, A, cfg.budget).to_json())


def cmd_curvature(cfg, P):
    u = potential_from_descriptor(P, cfg.potential)
    name = cfg.extra.get("field", "S")
    grid = grid_template(P, cfg.grid)
    f = curvature_field(u, grid, (name,), cfg.threads)[name]
    return emit_field(f, cfg.out, cfg.extra.get("matrix", False))


def cmd_solve(cfg, P):
    eq = cfg.extra.get("equation", "prescribed")
    out = Path(cfg.out) if cfg.out else None
    if eq == "extremal" and P.dim == 1:
        A = parse_affine(cfg.extra["A"], 1) if cfg.extra.get("A") else extremal_affine(P)
        u = solve_extremal_1d(P, A)
        grid = grid_template(P, cfg.grid)
        S = curvature_field(u, grid, ("S",), cfg.threads)["S"]
        resid = float(np.nanmax(np.abs(S.values - A(grid.points).reshape(S.values.shape))))
        payload = {"equation": eq, "status": "Converged", "iterations": 0, "residual": resid,
                   "residual_history": [resid], "tolerance": cfg.tol, "witness": None}
        fields = {"u": grid.fill(u.value, where=(INTERIOR,)), "S": S}
    elif eq in ("extremal", "prescribed"):
        A = parse_affine(cfg.extra["A"], P.dim) if cfg.extra.get("A") else extremal_affine(P)
        report = solve_prescribed_2d(P, A, grid=cfg.grid, tol=cfg.tol,
                                     max_iter=int(cfg.extra.get("max_iter") or 200))
        payload = {"equation": eq, **report.to_json()}
        grid = grid_template(P, cfg.grid)
        fields = {"u": grid.fill(report.potential.value, where=(INTERIOR,)),
                  "S": curvature_field(report.potential, grid, ("S",), cfg.threads)["S"]}
    elif eq == "soliton":
        fano = fano_structure(P)
        report = solve_soliton_2d(fano, grid=cfg.grid, tol=cfg.tol,
                                  max_iter=int(cfg.extra.get("max_iter") or 50))
        payload = {"equation": eq, **report.to_json()}
        grid = grid_template(fano.centered, cfg.grid)
        fields = {"u": grid.fill(report.potential.value, where=(INTERIOR,)),
                  "rho": grid.fill(lambda X: h_and_rho(report.potential, fano, X)[1], where=(INTERIOR,))}
    else:
        raise ValidationError(f"unknown equation {eq!r}")
    payload = stamp("solve", payload)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(payload, indent=2))
        for name, f in fields.items():
            write_grid(f, out / f"{name}.csv")
            if cfg.extra.get("matrix") and P.dim == 2:
                write_grid(f, out / f"{name}.matrix", matrix=True)
    return payload


def cmd_soliton_constants(cfg, P):
    return stamp("soliton-constants", soliton_constants(fano_structure(P)).to_json())


def cmd_soliton_identities(cfg, P):
    fano = fano_structure(P)
    u = centered_potential(potential_from_descriptor(P, cfg.potential), fano)
    report = identity_suite(u, fano, route=cfg.extra.get("route", "dual"), seed=cfg.seed)
    return stamp("soliton-identities", report.to_json())


def cmd_legendre(cfg, P):
    u = potential_from_descriptor(P, cfg.potential)
    X = parse_points(cfg.extra["points"], P.dim) if cfg.extra.get("points") \
        else interior_samples(P, 4, margin=0.05)
    T = u.gradient(X)
    phi = legendre_to_kahler(u)
    back = legendre_solve(u, T)
    rows = [{"x": x.tolist(), "t": t.tolist(), "phi": float(p), "roundtrip": float(np.max(np.abs(b - x)))}
            for x, t, p, b in zip(X, T, phi.value(T), back)]
    return stamp("legendre", {"points": rows,
                              "max_roundtrip": max((r["roundtrip"] for r in rows), default=0.0)})


def asymptotics_rows(P, u, ks, mode: str, nus=None, weights=None, threads=None) -> list[tuple]:
    """Rows (k, ν..., value, reference, gap).

    l2: value k⁻¹ log I_ν(k), reference u(ν).
    veronese: value −k⁻¹ log B_{kν} for the k-fold convolution of level-1
    weights (default all ones on the lattice points of P), reference the
    Legendre transform of log Σ a_m e^{m·t} at ν; interior ν only, restricted
    to the given ν when kν is a lattice point.
    roundtrip: value sup|φ^{(k)} − φ| (normalized at Du(barycenter)), reference 0.
    """
    rows = []
    if mode == "l2":
        if nus is None:
            nus = np.array([[float(c) for c in barycenter(P)]])
        for k in ks:
            for nu in nus:
                val = asy.l2_log_integral(u, nu, k) / k
                ref = float(u.value(nu[None])[0])
                rows.append((k, *nu.tolist(), val, ref, abs(val - ref)))
    elif mode == "veronese":
        pts = lattice_points(P, 1)
        a = asy.CoefficientVector.from_weights(pts, weights if weights is not None else [1] * len(pts))
        phi = asy.algebraic_potential(a)
        for k in ks:
            b = asy.veronese_convolution(a, k)
            wanted = None if nus is None else {tuple(np.rint(k * nu).astype(int)) for nu in nus
                                               if np.allclose(k * nu, np.rint(k * nu))}
            for m, lb in zip(b.points, b.log_weights):
                nu = m / k
                if not P.contains(nu[None])[0] or (wanted is not None and tuple(m) not in wanted):
                    continue
                val = -lb / k
                ref = asy.algebraic_legendre(phi, nu)
                rows.append((k, *nu.tolist(), val, ref, abs(val - ref)))
    elif mode == "roundtrip":
        nu = [float(c) for c in barycenter(P)]
        for k in ks:
            r = asy.density_roundtrip(u, k, threads=threads)
            rows.append((k, *nu, r.error, 0.0, r.error))
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return rows


def cmd_asymptotics(cfg, P):
    u = potential_from_descriptor(P, cfg.potential)
    nus = parse_points(cfg.extra["nu"], P.dim) if cfg.extra.get("nu") else None
    weights = json.loads(cfg.extra["weights"]) if cfg.extra.get("weights") else None
    rows = asymptotics_rows(P, u, cfg.ks, cfg.extra.get("mode", "l2"), nus, weights, cfg.threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", *(f"nu{i}" for i in range(P.dim)), "value", "reference", "gap"])
    for r in rows:
        w.writerow([r[0], *(repr(float(v)) for v in r[1:])])
    return write_text(buf.getvalue(), cfg.out)


COMMANDS = {
    "check-delzant": cmd_check_delzant,
    "lattice": cmd_lattice,
    "futaki": cmd_futaki,
    "extremal-a": cmd_extremal_a,
    "stability-probe": cmd_stability_probe,
    "curvature": cmd_curvature,
    "solve": cmd_solve,
    "soliton-constants": cmd_soliton_constants,
    "soliton-identities": cmd_soliton_identities,
    "asymptotics": cmd_asymptotics,
    "legendre": cmd_legendre,
}


# ------------------------------------------------------------------ output

def emit_plot_data(field_: GridFunction, path, matrix: bool = False) -> Path:
    """Write a grid field as CSV (or gnuplot matrix)."""
    return write_grid(field_, path, matrix)


def emit_field(f: GridFunction, out, matrix: bool):
    if out:
        emit_plot_data(f, out, matrix)
        return None
    sys.stdout.write(grid_to_matrix(f) if matrix else grid_to_csv(f))
    return None


def write_text(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return None


# ------------------------------------------------------------------ parser

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="toric-kahler", description="Toric Kähler geometry toolkit")
    p.add_argument("--threads", type=int, default=None, help="worker cap (fallback: TORIC_THREADS)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("polytope", help="polytope JSON file or built-in name")
        s.add_argument("--out", default=None)
        s.add_argument("--seed", type=int, default=DEFAULT_SEED)
        s.add_argument("--threads", type=int, default=None, dest="sub_threads")
        return s

    add("check-delzant", "verify the Delzant condition")
    add("lattice", "lattice points of kP").add_argument("--k", type=int, default=1)
    add("futaki", "Futaki invariant (exact)")
    add("extremal-a", "extremal affine function (exact)")
    s = add("stability-probe", "single-crease L_A scan")
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--A", default=None)
    s = add("curvature", "curvature field on a grid (CSV)")
    s.add_argument("--potential", default=None)
    s.add_argument("--field", choices=FIELDS, default="S")
    s.add_argument("--grid", type=int, default=33)
    s.add_argument("--matrix", action="store_true")
    s = add("solve", "extremal, prescribed-curvature or soliton solve")
    s.add_argument("--equation", choices=("extremal", "prescribed", "soliton"), default="prescribed")
    s.add_argument("--A", default=None)
    s.add_argument("--grid", type=int, default=33)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", type=int, default=None, dest="max_iter")
    s.add_argument("--matrix", action="store_true")
    add("soliton-constants", "soliton constants c")
    s = add("soliton-identities", "weighted-integral identity report")
    s.add_argument("--potential", default=None)
    s.add_argument("--route", choices=("dual", "primal"), default="dual")
    s = add("asymptotics", "L² / Veronese / roundtrip asymptotics (CSV)")
    s.add_argument("--potential", default=None)
    s.add_argument("--k", default="8,16,32")
    s.add_argument("--mode", choices=("l2", "veronese", "roundtrip"), default="l2")
    s.add_argument("--nu", default=None, help="JSON list of points")
    s.add_argument("--weights", default=None, help="JSON list of level-1 weights")
    s = add("legendre", "Legendre transform at points")
    s.add_argument("--potential", default=None)
    s.add_argument("--points", default=None, help="JSON list of points in P")
    return p


def _parse_ks(text: str) -> tuple:
    try:
        return tuple(int(k) for k in str(text).split(",") if k.strip())
    except ValueError as exc:
        raise ValidationError(f"--k must be a comma-separated list of integers: {exc}") from exc


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    common = {"command", "polytope", "potential", "grid", "tol", "k", "budget", "out", "seed",
              "threads", "sub_threads"}
    extra = {k: v for k, v in vars(ns).items() if k not in common}
    if ns.command == "lattice":
        extra["k"] = ns.k
    ks = _parse_ks(ns.k) if ns.command == "asymptotics" else (8, 16, 32)
    threads = ns.sub_threads or ns.threads
    if threads is None and os.environ.get("TORIC_THREADS"):
        threads = int(os.environ["TORIC_THREADS"])
    return RunConfig(ns.command, ns.polytope, getattr(ns, "potential", None), getattr(ns, "grid", 33),
                     getattr(ns, "tol", 1e-4), ks, getattr(ns, "budget", 2000), ns.out, ns.seed,
                     threads, extra)


def _error(kind: str, message: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "error": kind, "message": message}


def dispatch(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        sys.stderr.write("output schema:\n" + json.dumps(load_schema("error"), indent=2) + "\n")
        return 2
    try:
        cfg = config_from_args(ns)
        set_threads(cfg.threads)
        P = load_polytope(cfg.polytope)
        payload = COMMANDS[cfg.command](cfg, P)
    except ValidationError as exc:
        err = _error(type(exc).__name__, str(exc))
        if ns.command == "check-delzant":
            err["delzant"] = False
        sys.stdout.write(json.dumps(err) + "\n")
        return 2
    except (NumericalError, OSError, np.linalg.LinAlgError) as exc:
        sys.stdout.write(json.dumps(_error(type(exc).__name__, str(exc))) + "\n")
        return 3
    finally:
        set_threads(None)
    if payload is not None:
        text = json.dumps(payload, indent=2) + "\n"
        if cfg.out and cfg.command != "solve":
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
        if cfg.command == "solve" and payload.get("status") != "Converged":
            return 3
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
