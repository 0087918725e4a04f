"""Command-line front end.

    isolab verify sobolev --n 2 --h 1/64 --corpus builtin
    isolab verify isoperimetric --shape square
    isolab proof knothe transport --f bump1 --n 2 --h 1/64
    isolab surface isoperimetric --name catenoid --h-band 1
    isolab density --j 1,10,100,1000

Every command writes one CSV summary and one JSON certificate per
(item, path) under --out, plus metadata.json with timestamps. Exit status is
0 when every certificate passes, 1 when any stage fails or a computation
errors, 2 on invalid input.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from isolab import __version__, corpus
from isolab.certificate import Certificate
from isolab.fileio import atomic_write, read_config, read_off, read_polygon, write_csv

THREADS_ENV = "ISOLAB_THREADS"
MAX_J = 10**6
SHAPES = ("square", "cube", "disk")
SURFACE_CHECKS = ("michael-simon", "isoperimetric", "first-variation", "curvature", "area")
VARIATIONS = ("radial-bump", "axial-bump")


class UsageError(Exception):
    """Invalid configuration or input; exit status 2."""


# --- argument parsing -----------------------------------------------------------


def _resolution(text: str) -> float:
    from isolab.grid import parse_resolution

    try:
        return parse_resolution(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}") from exc


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="reports", help="output directory (default: reports)")
    p.add_argument("--tol-scale", type=_positive_float, default=1.0,
                   help="multiplier for every discretisation tolerance")
    p.add_argument("--config", help="flat 'key = value' file; command-line flags win")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized spot checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isolab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="Sobolev deficits on the ball or isoperimetric deficits of shapes")
    v.add_argument("subject", choices=("sobolev", "isoperimetric"))
    v.add_argument("--n", type=int, default=2)
    v.add_argument("--h", type=_resolution, default=1.0 / 64)
    v.add_argument("--corpus", default="builtin", help="'builtin', comma-separated names, or a field CSV")
    v.add_argument("--shape", help="square, cube, disk, or a polygon text / OFF file")
    v.add_argument("--edges", type=int, default=4096, help="edge count for --shape disk")
    v.add_argument("--jobs", type=int, default=1)
    _common(v)

    p = sub.add_parser("proof", help="run a proof-path certificate on one function")
    p.add_argument("paths", nargs="+", choices=("knothe", "transport", "abp"))
    p.add_argument("--f", required=True, help="builtin corpus name or a field CSV")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--h", type=_resolution, default=1.0 / 64)
    p.add_argument("--delta", type=float, default=None, help="contact-set slack override (abp)")
    p.add_argument("--radial", action="store_true", help="also run the radial ODE check (transport)")
    p.add_argument("--jobs", type=int, default=1)
    _common(p)

    s = sub.add_parser("surface", help="hypersurface checks")
    s.add_argument("check", choices=SURFACE_CHECKS)
    s.add_argument("--name", help="registry surface name")
    s.add_argument("--chart", help="tabulated chart CSV s,t,x,y,z (area check only)")
    s.add_argument("--field", default="all", help="surface field name, 'all', or a variation field")
    s.add_argument("--h-band", type=_positive_float, dest="h_band", help="catenoid half height")
    s.add_argument("--r", type=_positive_float, help="radius (sphere, cap, disk)")
    s.add_argument("--angle", type=_positive_float, help="polar angle of a spherical cap")
    s.add_argument("--inner", type=_positive_float)
    s.add_argument("--outer", type=_positive_float)
    s.add_argument("--width", type=_positive_float, help="helicoid width")
    s.add_argument("--turn", type=_positive_float, help="helicoid parameter length")
    s.add_argument("--panels", type=int, default=None, help="panels per chart direction")
    _common(s)

    d = sub.add_parser("density", help="constants of the clamped density family")
    d.add_argument("--j", required=True, help="comma list and/or ranges, e.g. 1,10,100 or 1-20")
    d.add_argument("--chain", action="store_true", help="also certify the alpha chain on the surface corpus")
    _common(d)
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def _convert(action: argparse.Action, raw: str):
    if isinstance(action, argparse._StoreTrueAction):
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise UsageError(f"config key {action.dest!r} expects a boolean")
        return low in ("true", "1", "yes")
    if action.nargs in ("+", "*"):
        items = [x for x in raw.replace(",", " ").split() if x]
        conv = [action.type(x) if action.type else x for x in items]
        values = conv
    else:
        values = [action.type(raw) if action.type else raw]
    if action.choices is not None:
        bad = [x for x in values if x not in action.choices]
        if bad:
            raise UsageError(f"config key {action.dest!r}: invalid choice {bad[0]!r}")
    return values if action.nargs in ("+", "*") else values[0]


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sp = _subparser(parser, args.command)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    # explicit flags win: re-parse with config values as defaults
    defaults = {}
    for key, raw in cfg.items():
        try:
            defaults[key] = _convert(actions[key], raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
    positional = [a.dest for a in sp._actions if not a.option_strings and a.dest in defaults]
    sp.set_defaults(**{k: v for k, v in defaults.items() if k not in positional})
    args = parser.parse_args(argv)
    for k in positional:
        explicit = getattr(args, k)
        if explicit != defaults[k]:
            raise UsageError(f"config key {k!r} conflicts with the command line")
    return args


# --- helpers ---------------------------------------------------------------------


def _validate_grid_args(args) -> None:
    if args.n not in (2, 3):
        raise UsageError(f"unsupported dimension n={args.n}; expected 2 or 3")
    if not (1 / 256 - 1e-15 <= args.h <= 1 / 8 + 1e-15):
        raise UsageError(f"resolution h={args.h} unsupported; expected 1/256 <= h <= 1/8")
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be >= 1")


def _field_items(spec: str) -> list[str]:
    if spec == "builtin":
        return list(corpus.BUILTIN)
    if spec.endswith(".csv"):
        if not Path(spec).is_file():
            raise UsageError(f"field file {spec!r} not found")
        return [spec]
    names = [x.strip() for x in spec.split(",") if x.strip()]
    for name in names:
        if name not in corpus.BUILTIN:
            raise UsageError(f"unknown corpus item {name!r}; known: {', '.join(corpus.BUILTIN)}")
    return names


def _item_label(item: str) -> str:
    return Path(item).stem if item.endswith(".csv") else item


def _load_field(item: str, n: int, h: float):
    from isolab.fileio import read_field_csv
    from isolab.grid import ScalarField, make_ball_grid

    g = make_ball_grid(n, h)
    if item.endswith(".csv"):
        return read_field_csv(item, g)
    return ScalarField.from_function(g, corpus.get(item))


def _check_field_files(items, n: int, h: float) -> None:
    """Read user field files up front so bad input is a usage error, not a worker crash."""
    for item in items:
        if not item.endswith(".csv"):
            continue
        try:
            f = _load_field(item, n, h)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        if not f.positive:
            raise UsageError(f"{item}: field must be positive on the closed ball")


def _map_jobs(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


class Report:
    def __init__(self, out: str, command: str):
        self.out = Path(out)
        self.command = command
        self.certificates: list[tuple[str, dict]] = []
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {out!r}: {exc}") from exc
        if not os.access(self.out, os.W_OK):
            raise UsageError(f"output directory {out!r} is not writable")

    def certificate(self, stem: str, cert: Certificate | dict) -> None:
        d = cert.to_dict() if isinstance(cert, Certificate) else cert
        self.certificates.append((stem, d))
        atomic_write(self.out / f"{stem}.json", json.dumps(d, indent=2) + "\n")

    def csv(self, name: str, header, rows) -> Path:
        return write_csv(self.out / name, header, rows)

    @property
    def passed(self) -> bool:
        return all(d["pass"] for _, d in self.certificates)


def _write_metadata(args, argv, started: str, status: int) -> None:
    meta = {
        "argv": list(argv),
        "config": {k: v for k, v in sorted(vars(args).items())},
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "exit_status": status,
        "version": __version__,
        "threads": os.environ.get(THREADS_ENV),
    }
    atomic_write(Path(args.out) / "metadata.json", json.dumps(meta, indent=2, default=str) + "\n")


# --- verify -----------------------------------------------------------------------


def _sobolev_job(task):
    from isolab.functionals import FAIL, PASS_NOTE, sobolev_deficit

    item, n, h, tol_scale, seed = task
    f = _load_field(item, n, h)
    fv = sobolev_deficit(f)
    status = fv.status(tol_scale)
    cert = Certificate("sobolev", environment={"n": n, "resolution": h, "corpus_item": _item_label(item),
                                               "seed": seed, "tol_scale": tol_scale})
    cert.add("sobolev_deficit", "∫|∇f| + ∫_∂B f >= n|B|^{1/n} (∫ f^{n/(n-1)})^{(n-1)/n}", status != FAIL,
             tolerance=10.0 * h * tol_scale * fv.lhs,
             values={"grad_l1": fv.grad_l1, "boundary_l1": fv.boundary_l1, "lq_norm": fv.lq_norm,
                     "lhs": fv.lhs, "rhs": fv.rhs, "deficit": fv.deficit, "status": status},
             note="negative deficit within the discretisation allowance" if status == PASS_NOTE else "")
    row = [_item_label(item), n, h, fv.grad_l1, fv.boundary_l1, fv.lq_norm, fv.lhs, fv.rhs, fv.deficit, status]
    return row, cert.to_dict()


def cmd_verify(args, rep: Report) -> None:
    if args.subject == "sobolev":
        _validate_grid_args(args)
        items = _field_items(args.corpus)
        _check_field_files(items, args.n, args.h)
        tasks = [(it, args.n, args.h, args.tol_scale, args.seed) for it in items]
        rows = []
        for (row, cert) in _map_jobs(_sobolev_job, tasks, args.jobs):
            rows.append(row)
            rep.certificate(f"sobolev_n{args.n}_{row[0]}", cert)
            print(f"{row[0]:>10}  deficit {row[8]: .6f}  {row[9]}")
        rep.csv("verify_sobolev_summary.csv",
                ["item", "n", "h", "grad_l1", "boundary_l1", "lq_norm", "lhs", "rhs", "deficit", "status"], rows)
        return
    _verify_isoperimetric(args, rep)


def _load_shape(args):
    from isolab.functionals import regular_polygon, unit_cube, unit_square

    shape = args.shape or "square"
    if shape == "square":
        return "square", unit_square()
    if shape == "cube":
        return "cube", unit_cube()
    if shape == "disk":
        if args.edges < 3:
            raise UsageError("--edges must be >= 3")
        return f"disk{args.edges}", regular_polygon(args.edges)
    path = Path(shape)
    if not path.is_file():
        raise UsageError(f"unknown shape {shape!r}; expected {', '.join(SHAPES)} or a file")
    try:
        if path.suffix.lower() == ".off":
            return path.stem, read_off(path)
        return path.stem, read_polygon(path)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{shape}: {exc}") from exc


def _verify_isoperimetric(args, rep: Report) -> None:
    from isolab.functionals import isoperimetric_deficit, mesh_measures, polygon_measures

    label, region = _load_shape(args)
    try:
        if isinstance(region, tuple):
            n, (vol, bdry) = 3, mesh_measures(*region)
        else:
            n, (vol, bdry) = 2, polygon_measures(region)
        deficit = isoperimetric_deficit(region)
    except ValueError as exc:
        raise UsageError(f"{label}: {exc}") from exc
    tol = 1e-9 * bdry
    cert = Certificate("isoperimetric", environment={"shape": label, "n": n, "seed": args.seed})
    cert.add("isoperimetric_deficit", "|∂E| >= n|B|^{1/n} |E|^{(n-1)/n}", deficit >= -tol, tolerance=tol,
             values={"volume": vol, "boundary": bdry, "deficit": deficit})
    rep.certificate(f"isoperimetric_{label}", cert)
    rep.csv("verify_isoperimetric_summary.csv", ["shape", "n", "volume", "boundary", "deficit", "pass"],
            [[label, n, vol, bdry, deficit, cert.passed]])
    print(f"{label}: deficit {deficit:.6f}")


# --- proof ------------------------------------------------------------------------

CHAIN_QUANTITIES = (
    ("n_int_f_p", "chain_amgm_integrated", "lhs"),
    ("int_f_div_phi", "chain_amgm_integrated", "rhs"),
    ("int_div_f_phi_plus_grad", "chain_product_rule", "rhs"),
    ("boundary_flux_plus_grad", "chain_boundary_bound", "lhs"),
    ("boundary_plus_grad", "chain_boundary_bound", "rhs"),
)
# quantities that do not depend on the map; the 2% agreement is gated on these
MAP_FREE = ("n_int_f_p", "boundary_plus_grad")


def _proof_job(task):
    from isolab.functionals import normalize_for_transport

    path, item, n, h, tol_scale, seed, delta, radial = task
    f = _load_field(item, n, h)
    env = {"corpus_item": _item_label(item), "tol_scale": tol_scale}
    try:
        if path == "abp":
            from isolab.abp import abp_certificate

            cert = abp_certificate(f, tol_scale=tol_scale, delta=delta, seed=seed,
                                   richardson=f.func is not None, environment=env)
        elif path == "knothe":
            from isolab.knothe import knothe_certificate

            cert = knothe_certificate(normalize_for_transport(f)[0], tol_scale=tol_scale,
                                      environment=dict(env, seed=seed))
        else:
            from isolab.transport import transport_certificate

            cert = transport_certificate(normalize_for_transport(f)[0], tol_scale=tol_scale,
                                         radial=radial and corpus.is_radial(item), seed=seed, environment=env)
    except Exception as exc:  # surfaced with path context
        return {"error": f"{path} on {_item_label(item)}: {type(exc).__name__}: {exc}"}
    return cert.to_dict()


def chain_comparison(certs: dict) -> list[list]:
    """Rows (quantity, knothe, transport, relative difference, gated)."""
    k, t = certs["knothe"], certs["transport"]

    def value(cert, stage, key):
        for s in cert["stages"]:
            if s["stage"] == stage:
                return s["integrated_values"][key]
        raise KeyError(stage)

    rows = []
    for q, stage, key in CHAIN_QUANTITIES:
        a, b = value(k, stage, key), value(t, stage, key)
        rows.append([q, a, b, abs(a - b) / max(abs(a), abs(b), 1e-300), q in MAP_FREE])
    return rows


def cmd_proof(args, rep: Report) -> int:
    _validate_grid_args(args)
    if args.delta is not None and not 0.0 <= args.delta <= 0.1:
        raise UsageError("--delta must lie in [0, 0.1]")
    item = _field_items(args.f)
    if len(item) != 1:
        raise UsageError("--f takes a single function")
    item = item[0]
    _check_field_files([item], args.n, args.h)
    paths = list(dict.fromkeys(args.paths))
    tasks = [(p, item, args.n, args.h, args.tol_scale, args.seed, args.delta, args.radial) for p in paths]
    results = _map_jobs(_proof_job, tasks, args.jobs)
    label = _item_label(item)
    rows, certs, errors = [], {}, 0
    for p, res in zip(paths, results):
        if "error" in res:
            print(f"error: {res['error']}", file=sys.stderr)
            rows.append([label, p, False, "error", res["error"]])
            errors += 1
            continue
        certs[p] = res
        rep.certificate(f"proof_{p}_{label}_n{args.n}", res)
        failed = [s["stage"] for s in res["stages"] if not s["pass"]]
        rows.append([label, p, res["pass"], " ".join(failed), ""])
        print(f"[{p}] {label}: {'PASS' if res['pass'] else 'FAIL ' + ' '.join(failed)}")
    rep.csv("proof_summary.csv", ["item", "path", "pass", "failed_stages", "error"], rows)
    if "knothe" in certs and "transport" in certs:
        comp = chain_comparison(certs)
        rep.csv(f"proof_comparison_{label}_n{args.n}.csv",
                ["quantity", "knothe", "transport", "relative_difference", "gated"], comp)
        bad = [r[0] for r in comp if r[4] and r[3] > 0.02]
        for r in comp:
            print(f"  {r[0]:>26}  knothe {r[1]:.6f}  transport {r[2]:.6f}  rel {r[3]:.2e}")
        if bad:
            print(f"chain comparison exceeds 2% on {', '.join(bad)}", file=sys.stderr)
            errors += 1
    return 1 if errors else 0


# --- surface ----------------------------------------------------------------------


def _surface_from_args(args):
    from isolab import surfaces as S

    name = args.name
    if name not in S.SURFACES:
        raise UsageError(f"unknown surface {name!r}; known: {', '.join(S.SURFACES)}")
    params = {
        "catenoid": {"height": args.h_band},
        "disk": {"radius": args.r},
        "annulus": {"inner": args.inner, "outer": args.outer},
        "helicoid": {"width": args.width, "turn": args.turn},
        "sphere_cap": {"radius": args.r, "angle": args.angle},
        "sphere": {"radius": args.r},
        "saddle_graph": {},
    }[name]
    params = {k: v for k, v in params.items() if v is not None}
    if args.panels is not None:
        if args.panels < 1:
            raise UsageError("--panels must be >= 1")
        params["panels"] = (args.panels, args.panels)
    if name == "annulus" and params.get("inner", 0.5) >= params.get("outer", 1.0):
        raise UsageError("annulus needs inner < outer")
    if name == "sphere_cap" and not 0 < params.get("angle", 1.0) <= math.pi:
        raise UsageError("cap angle must lie in (0, π]")
    surf = S.get_surface(name, **params)
    try:
        surf.geometry()
        surf.check_curvature()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return surf


def _surface_fields(surf, spec):
    from isolab.surfaces import field_corpus

    fields = field_corpus(surf)
    if spec == "all":
        return fields
    chosen = [f for f in fields if f.name == spec]
    if not chosen:
        raise UsageError(f"unknown surface field {spec!r}; known: all, {', '.join(f.name for f in fields)}")
    return chosen


def _tag(surf) -> str:
    parts = [surf.name] + [f"{k}{v:g}" for k, v in sorted(surf.params.items())]
    return "_".join(parts)


def cmd_surface(args, rep: Report) -> None:
    from isolab import surfaces as S

    if args.check == "area" and args.chart:
        from isolab.fileio import read_chart_csv

        try:
            tab = S.TabulatedSurface.from_rows(read_chart_csv(args.chart))
        except (OSError, ValueError) as exc:
            raise UsageError(f"{args.chart}: {exc}") from exc
        rows = [[Path(args.chart).stem, tab.area(), tab.boundary_length()]]
        rep.csv("surface_area_summary.csv", ["surface", "area", "boundary_length"], rows)
        print(f"{rows[0][0]}: area {rows[0][1]:.10f}  boundary {rows[0][2]:.10f}")
        return
    if args.chart:
        raise UsageError("tabulated charts support the 'area' check only")
    if not args.name:
        raise UsageError("--name is required")
    surf = _surface_from_args(args)
    tag = _tag(surf)
    env = {"seed": args.seed}

    if args.check == "area":
        rows = [[tag, S.surface_area(surf), S.boundary_length(surf)]]
        rep.csv("surface_area_summary.csv", ["surface", "area", "boundary_length"], rows)
        print(f"{tag}: area {rows[0][1]:.10f}  boundary {rows[0][2]:.10f}")
        return

    if args.check == "isoperimetric":
        try:
            cert = S.isoperimetric_certificate(surf, environment=env)
        except ValueError as exc:
            print(f"notice: {exc}; running michael-simon instead", file=sys.stderr)
            args.field = "const" if args.field == "all" else args.field
            args.check = "michael-simon"
            return cmd_surface(args, rep)
        rep.certificate(f"surface_isoperimetric_{tag}", cert)
        v = cert.stage("minimal_isoperimetric").values
        rep.csv("surface_isoperimetric_summary.csv", ["surface", "area", "boundary_length", "deficit", "pass"],
                [[tag, v["area"], v["boundary_length"], v["deficit"], cert.passed]])
        print(f"{tag}: area {v['area']:.10f}  boundary {v['boundary_length']:.10f}  deficit {v['deficit']:.6f}")
        return

    if args.check == "michael-simon":
        rows = []
        for f in _surface_fields(surf, args.field):
            cert = S.michael_simon_deficit(surf, f, tol_scale=args.tol_scale, environment=env)
            rep.certificate(f"surface_michael_simon_{tag}_{f.name}", cert)
            v = cert.stage("sobolev_on_surface").values
            rows.append([tag, f.name, v["lhs"], v["rhs"], v["deficit"], cert.passed])
            print(f"{tag} {f.name}: lhs {v['lhs']:.8f}  rhs {v['rhs']:.8f}  deficit {v['deficit']:.8f}")
        rep.csv("surface_michael_simon_summary.csv", ["surface", "field", "lhs", "rhs", "deficit", "pass"], rows)
        return

    if args.check == "first-variation":
        spec = "radial-bump" if args.field == "all" else args.field
        if spec not in VARIATIONS:
            raise UsageError(f"unknown variation field {spec!r}; known: {', '.join(VARIATIONS)}")
        direction = "position" if spec == "radial-bump" else (0.0, 0.0, 1.0)
        res = S.first_variation_check(surf, S.ChartVariation(surf, direction, spec))
        cert = Certificate("michael_simon", environment=dict(env, surface=tag, variation=spec))
        cert.add("first_variation", "d/ds |Σ_s| at s = 0 equals ∫_Σ H <V, ν>", res["pass"], tolerance=1e-4,
                 values=res)
        rep.certificate(f"surface_first_variation_{tag}_{spec}", cert)
        rep.csv("surface_first_variation_summary.csv",
                ["surface", "field", "finite_difference", "integral", "relative_gap", "pass"],
                [[tag, spec, res["finite_difference"], res["integral"], res["relative_gap"], res["pass"]]])
        print(f"{tag} {spec}: derivative {res['finite_difference']:.3e}  ∫H<V,ν> {res['integral']:.3e}")
        return

    # curvature
    g = surf.geometry()
    hv = g["H"]
    row = [tag, float(hv.min()), float(hv.max()), "", ""]
    values = {"h_min": row[1], "h_max": row[2]}
    lvl = {"sphere": lambda: S.sphere_levelset(surf.params["radius"]),
           "sphere_cap": lambda: S.sphere_levelset(surf.params["radius"]),
           "catenoid": S.catenoid_levelset, "helicoid": S.helicoid_levelset}.get(surf.name)
    passed = True
    if lvl is not None:
        L = lvl()
        pts = g["X"]
        h_level = S.mean_curvature_levelset(L, pts) * S.orientation(L, g)
        agree = float(abs(h_level - hv).max())
        sample = L.sampler(1, np.random.default_rng(args.seed))
        row[3] = float(S.mean_curvature_levelset(L, sample)[0])
        row[4] = agree
        values.update(levelset_h_sample=row[3], max_levelset_parametric_difference=agree)
        passed = agree <= 1e-8
    cert = Certificate("michael_simon", environment=dict(env, surface=tag))
    cert.add("mean_curvature", "H = Δw/|∇w| - D²w(∇w,∇w)/|∇w|³", passed, tolerance=1e-8, values=values)
    rep.certificate(f"surface_curvature_{tag}", cert)
    rep.csv("surface_curvature_summary.csv",
            ["surface", "h_min", "h_max", "levelset_h", "levelset_parametric_difference"], [row])
    print(f"{tag}: H in [{row[1]:.10f}, {row[2]:.10f}]" + (f"  level-set H {row[3]:.10f}" if row[3] != "" else ""))


# --- density ----------------------------------------------------------------------


def parse_j_list(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                a, b = (int(x) for x in part.split("-", 1))
                if b < a:
                    raise UsageError(f"empty j range {part!r}")
                if b - a > 10000:
                    raise UsageError(f"j range {part!r} too long")
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise UsageError(f"bad j value {part!r}") from exc
    if not out:
        raise UsageError("no j values given")
    bad = [j for j in out if not 1 <= j <= MAX_J]
    if bad:
        raise UsageError(f"j must lie in [1, {MAX_J}]; got {bad[0]}")
    return sorted(set(out))


def cmd_density(args, rep: Report) -> None:
    from isolab.density import alpha_chain_check, convergence_summary, density_table

    js = parse_j_list(args.j)
    rows = density_table(js)
    rep.csv("density_table.csv", ["j", "c_j", "alpha_j", "pi_over_c_j"],
            [[r["j"], r["c_j"], r["alpha_j"], r["pi_over_c_j"]] for r in rows])
    summ = convergence_summary(rows)
    summ["c_increasing"] = all(a["c_j"] <= b["c_j"] for a, b in zip(rows, rows[1:]))
    summ["alpha_below_bound"] = all(r["alpha_j"] <= r["pi_over_c_j"] * (1 + 1e-12) for r in rows)
    atomic_write(rep.out / "density_convergence.json", json.dumps(summ, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"j={r['j']:>7}  c_j {r['c_j']:.10f}  alpha_j {r['alpha_j']:.10f}  pi/c_j {r['pi_over_c_j']:.10f}")
    cert = Certificate("alpha_chain", environment={"j": js, "seed": args.seed})
    cert.add("c_increasing", "c_j nondecreasing in j", summ["c_increasing"])
    cert.add("alpha_bound", "α_j <= π / c_j", summ["alpha_below_bound"], tolerance=1e-12)
    rep.certificate("density_constants", cert)
    if args.chain:
        from isolab.surfaces import field_corpus, surface_corpus

        for surf in surface_corpus():
            for f in field_corpus(surf):
                c = alpha_chain_check(surf, f, js, environment={"seed": args.seed})
                rep.certificate(f"alpha_chain_{_tag(surf)}_{f.name}", c)


# --- entry point ------------------------------------------------------------------

COMMANDS = {"verify": cmd_verify, "proof": cmd_proof, "surface": cmd_surface, "density": cmd_density}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"isolab: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        rep = Report(args.out, args.command)
        extra = COMMANDS[args.command](args, rep)
        status = 0 if rep.passed and not extra else 1
    except UsageError as exc:
        print(f"isolab: error: {exc}", file=sys.stderr)
        return 2
    _write_metadata(args, argv, started, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
