"""Command-line front end.

Each subcommand reads one JSON run configuration, applies flag overrides
(one flag per config field, e.g. ``--numerics.ide.z0 16``), validates the
result against the published schema and writes deterministic outputs into
``output.dir``.  Exit codes: 0 success, 2 configuration error, 3
mathematical degeneracy, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, DDEError, DegenerateLambda
from .patch import StripRegion

DEFAULT_CONFIG: dict = {
    "problem": {"a": 1.0, "mu_re": -1.0, "mu_im": 0.0, "branch": "-"},
    "lattice": {"p1": [3.0, 0.0], "p2": [0.0, 3.0], "x0": [0.31, 1.4]},
    "numerics": {
        "K": 20,
        "rk_tol": 1e-12,
        "slab_resolution": 40,
        "pole_exclusion_radius": 0.1,
        "contour_nodes": 64,
        "z_seed": 8.0,
        "ide": {"z0": 9.0, "n_iters": 5},
    },
    "continuation": {
        "seed": "auto",
        "strips_right": 3,
        "strips_left": 3,
        "seed_xi": None,
        "eta_lo": None,
        "eta_hi": None,
        "samples_per_unit": 10,
    },
    "output": {"dir": "out", "formats": ["json", "csv"]},
}

COMMANDS = ("series", "weierstrass-check", "continue", "sectors", "ide", "residual")
SAMPLE_HEADER = ["x_re", "x_im", "f_re", "f_im", "residual_abs"]
SEED_K = 60  # series seeds need many terms for the optimal truncation at |z| ~ 8


# ---------------------------------------------------------------------------
# configuration


def load_schema(name: str) -> dict:
    return json.loads(resources.files("meromorphic_dde").joinpath("schemas", name).read_text())


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _leaves(tree: dict, prefix: str = ""):
    for k, v in tree.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _leaves(v, path + ".")
        else:
            yield path


def _set_path(tree: dict, path: str, value) -> None:
    node = tree
    *parents, leaf = path.split(".")
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def _parse_flag_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(path: str | None, overrides: dict) -> dict:
    user: dict = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULT_CONFIG, user)
    for key, value in overrides.items():
        _set_path(cfg, key, value)
    try:
        jsonschema.validate(cfg, load_schema("runconfig.schema.json"))
    except jsonschema.ValidationError as exc:
        loc = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {loc}: {exc.message}") from exc
    return cfg


def _exact(x: float):
    """Floats from JSON become exact rationals (1.0 -> 1, 0.1 -> 1/10)."""
    q = Fraction(repr(float(x)))
    return q


def _params(cfg: dict):
    from .series_core import DDEParameters

    pr = cfg["problem"]
    mu = complex(pr["mu_re"], pr["mu_im"])
    mu_v = _exact(mu.real) if mu.imag == 0 else mu
    return DDEParameters(_exact(pr["a"]), mu_v)


def _pair(c) -> list[float]:
    c = complex(c)
    return [float(c.real), float(c.imag)]


def _cplx(p) -> complex:
    return complex(p[0], p[1])


# ---------------------------------------------------------------------------
# output


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _validated(obj: dict, schema: str) -> dict:
    jsonschema.validate(obj, load_schema(schema))
    return obj


def _write(cfg: dict, name: str, text: str) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    with open(p, "w", newline="") as fh:
        fh.write(text)
    return p


def _write_json(cfg, name, obj, schema):
    if "json" in cfg["output"]["formats"]:
        _write(cfg, name, _dump_json(_validated(obj, schema)))


def _write_samples(cfg, rows):
    if "csv" not in cfg["output"]["formats"]:
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    _write(cfg, "samples.csv", buf.getvalue())


def _report(command: str, cfg: dict, **fields) -> dict:
    rep = {"command": command, "version": __version__, "config": cfg}
    rep.update(fields)
    return rep


# ---------------------------------------------------------------------------
# commands


def cmd_series(cfg: dict) -> dict:
    from .series_core import formal_solution, leading_residual_order

    params = _params(cfg)
    fs = formal_solution(params, cfg["problem"]["branch"], K=cfg["numerics"]["K"], kind="exact")
    order = leading_residual_order(fs, tol=1e-30 if fs.kind != "exact" else 0.0)
    rep = _report("series", cfg, formal_solution=fs.to_json(), residual_leading_order=order)
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


def _sample_points(region: StripRegion, per_unit: int) -> np.ndarray:
    nx = max(2, int(round(region.width * per_unit)) + 1)
    ny = max(2, int(round(region.height * per_unit)) + 1)
    xs = np.linspace(region.xi_range[0], region.xi_range[1], nx)
    ys = np.linspace(region.eta_lo, region.eta_hi, ny)
    return (xs[:, None] + 1j * ys[None, :]).ravel()


def _lattice(cfg):
    from .special_functions import Lattice

    lt = cfg["lattice"]
    try:
        return Lattice(_cplx(lt["p1"]), _cplx(lt["p2"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_weierstrass_check(cfg: dict, n_points: int = 100) -> dict:
    from .continuation_engine import dde_residual_numeric, residue_at
    from .series_core import DDEParameters
    from .special_functions import mu0_pole_lattice, mu0_solution, wp_both

    a = float(cfg["problem"]["a"])
    lat = _lattice(cfg)
    x0 = _cplx(cfg["lattice"]["x0"])
    sol = mu0_solution(lat, x0, a)
    region = StripRegion((x0.real - 1.5 * a, x0.real + 1.5 * a), x0.imag - 1.5, x0.imag + 1.5)
    rng = np.random.default_rng(20240607)
    pts = rng.uniform(region.xi_range[0], region.xi_range[1], 4 * n_points) + 1j * rng.uniform(
        region.eta_lo, region.eta_hi, 4 * n_points)
    poles = mu0_pole_lattice(lat, x0, a, region, pad=2 * a)
    P = np.array([p for p, _ in poles])
    excl = cfg["numerics"]["pole_exclusion_radius"]
    far = (np.min(np.abs(pts[:, None] - P[None, :]), axis=1) > excl) & (
        np.min(np.abs(pts[:, None] + a - P[None, :]), axis=1) > excl)
    pts = pts[far][:n_points]
    res = np.abs(dde_residual_numeric(sol, pts, DDEParameters(a, 0)))
    P_, Q_ = wp_both(pts - x0, lat)
    ode = np.abs(Q_**2 - 4 * P_**3 + lat.g2 * P_ + lat.g3) / np.maximum(1.0, np.abs(P_) ** 3)
    table = []
    nodes = cfg["numerics"]["contour_nodes"]
    for p, r in mu0_pole_lattice(lat, x0, a, region):
        rr = residue_at(sol.value, p, 0.25 * min(lat.r_min, a), nodes)
        table.append({"x": _pair(p), "expected": float(r), "residue": _pair(rr)})
    rep = _report("weierstrass-check", cfg, lattice=lat.to_json(), n_points=int(len(pts)),
                  residual={"max": float(res.max()), "median": float(np.median(res))},
                  ode_residual_max=float(ode.max()), poles=table)
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


def _continuation_config(cfg):
    from .continuation_engine import ContinuationConfig

    nm = cfg["numerics"]
    res = nm["slab_resolution"]
    return ContinuationConfig(rk_tol=nm["rk_tol"], n_xi=res, eta_density=max(8, int(round(0.7 * res))),
                              contour_nodes=nm["contour_nodes"],
                              pole_exclusion_radius=nm["pole_exclusion_radius"])


def _seed(cfg):
    """(seed patch, mode) for the continuation and residual commands."""
    from .continuation_engine import series_patch
    from .series_core import formal_solution
    from .special_functions import mu0_solution

    params = _params(cfg)
    a = float(params.a)
    cc = cfg["continuation"]
    mode = cc["seed"]
    if mode == "auto":
        mode = "elliptic" if params.mu == 0 else "series"
    if mode == "elliptic":
        if params.mu != 0:
            raise ConfigError("elliptic seeds need mu = 0")
        x0 = _cplx(cfg["lattice"]["x0"])
        xi = x0.real + 0.5 if cc["seed_xi"] is None else cc["seed_xi"]
        lo = -1.0 if cc["eta_lo"] is None else cc["eta_lo"]
        hi = 2.0 if cc["eta_hi"] is None else cc["eta_hi"]
        region = _region(xi, a, lo, hi)
        seed = mu0_solution(_lattice(cfg), x0, a, region)
        if seed.poles:
            raise ConfigError("the elliptic seed strip contains poles; move seed_xi or the eta range")
        return seed, mode
    if params.mu == 0:
        raise DegenerateLambda("mu = 0: no formal series seed; use the elliptic seed")
    b = a / 2
    xi = cfg["numerics"]["z_seed"] - b if cc["seed_xi"] is None else cc["seed_xi"]
    lo = -3.0 if cc["eta_lo"] is None else cc["eta_lo"]
    hi = 3.0 if cc["eta_hi"] is None else cc["eta_hi"]
    K = max(cfg["numerics"]["K"], SEED_K)
    fs = formal_solution(params, cfg["problem"]["branch"], K=K, kind="mp")
    return series_patch(fs, _region(xi, a, lo, hi)), mode


def _region(xi, a, lo, hi):
    try:
        return StripRegion((xi, xi + a), lo, hi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _samples(patch, params, region, poles, cfg):
    from .continuation_engine import dde_residual_numeric

    a = float(params.a)
    excl = cfg["numerics"]["pole_exclusion_radius"]
    pts = _sample_points(region, cfg["continuation"]["samples_per_unit"])
    P = np.array([p.x for p in poles]) if poles else np.empty(0, dtype=complex)
    if P.size:
        pts = pts[np.min(np.abs(pts[:, None] - P[None, :]), axis=1) > excl]
    f = patch.value(pts)
    r = np.full(pts.shape, np.nan)
    ok = region.contains(pts + a, pad=1e-9)
    if P.size:
        ok &= np.min(np.abs(pts[:, None] + a - P[None, :]), axis=1) > excl
    if np.any(ok):
        r[ok] = np.abs(dde_residual_numeric(patch, pts[ok], params))
    rows = np.column_stack([pts.real, pts.imag, f.real, f.imag, r])
    return rows, r[ok]


def _stats(r):
    if r.size == 0:
        return {"n": 0, "max": None, "median": None}
    return {"n": int(r.size), "max": float(np.max(r)), "median": float(np.median(r))}


def cmd_continue(cfg: dict) -> dict:
    from .continuation_engine import continue_patch

    params = _params(cfg)
    seed, mode = _seed(cfg)
    cc = cfg["continuation"]
    res = continue_patch(seed, params, cc["strips_right"], cc["strips_left"], _continuation_config(cfg))
    region = res.region
    poles = res.poles
    rows, r = _samples(res, params, region, poles, cfg)
    strips = [{"side": side, "index": int(s.index),
               "xi_range": ([-s.region.xi_range[1], -s.region.xi_range[0]] if side == "left"
                            else list(s.region.xi_range)),
               "n_poles": len(s.poles), "cheb_tail": float(s.diagnostics.get("cheb_tail", 0.0))}
              for side, s in res.slabs]
    strips.sort(key=lambda d: d["xi_range"][0])
    pole_doc = {"poles": [p.to_json() for p in poles], "strips": strips}
    _write_json(cfg, "poles.json", pole_doc, "poles.schema.json")
    _write_samples(cfg, rows)
    rep = _report("continue", cfg, seed=mode,
                  region={"xi_range": list(region.xi_range), "eta": [region.eta_lo, region.eta_hi]},
                  n_poles=len(poles), residual=_stats(r), strips=strips)
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


def cmd_residual(cfg: dict) -> dict:
    """Pointwise DDE residual and potential identity of the seed solution itself."""
    from .continuation_engine import potentials

    params = _params(cfg)
    seed, mode = _seed(cfg)
    a = float(params.a)
    r0 = seed.region
    # the seed is an explicit formula, so it can be evaluated one step beyond its strip
    region = StripRegion((r0.xi_range[0], r0.xi_range[1] + a), r0.eta_lo, r0.eta_hi)
    from .patch import SolutionPatch

    wide = SolutionPatch(region, seed.value, seed.derivative, seed.poles)
    rows, r = _samples(wide, params, region, list(seed.poles), cfg)
    pts = rows[:, 0] + 1j * rows[:, 1]
    ok = region.contains(pts + a, pad=1e-9)
    pot = np.empty(0)
    if np.any(ok):
        # (f^2 + f')(x) - (f^2 - f')(x + a) = mu is the equation itself after factor exchange
        _, u_p = potentials(wide, 0.0, pts[ok])
        u_t, _ = potentials(wide, 0.0, pts[ok] + a)
        pot = np.abs(u_p - u_t - complex(params.mu))
    _write_samples(cfg, rows)
    rep = _report("residual", cfg, seed=mode, residual=_stats(r),
                  potential_identity_max=float(pot.max()) if pot.size else None)
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


def cmd_sectors(cfg: dict) -> dict:
    from .series_core import arg_lambda, lambda_from_mu
    from .sector_geometry import sector

    params = _params(cfg)
    lam = lambda_from_mu(params, cfg["problem"]["branch"])
    al = arg_lambda(lam)
    secs = [sector(br, n, al).to_json() for br in ("+", "-") for n in (0, 1, 2)]
    rep = _report("sectors", cfg, **{"lambda": _pair(lam), "arg_lambda": al, "sectors": secs,
                                     "empty": [f"S{s['branch']}{s['n']}" for s in secs if s["empty"]]})
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


def cmd_ide(cfg: dict) -> dict:
    from .ide_solver import iterate, large_z_coefficient
    from .series_core import formal_solution

    params = _params(cfg)
    ide = cfg["numerics"]["ide"]
    st = iterate(params, cfg["problem"]["branch"], ide["z0"], n_iters=ide["n_iters"])
    y4 = formal_solution(params, cfg["problem"]["branch"], K=4, kind="mp").y_k(4)
    rep = _report("ide", cfg, **st.to_json(),
                  z2_y1_far=_pair(large_z_coefficient(st.iterates[0])),
                  y4_formal=_pair(complex(y4)))
    _write_json(cfg, "report.json", rep, "report.schema.json")
    return rep


HANDLERS = {
    "series": cmd_series,
    "weierstrass-check": cmd_weierstrass_check,
    "continue": cmd_continue,
    "sectors": cmd_sectors,
    "ide": cmd_ide,
    "residual": cmd_residual,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="meromorphic-dde", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?", help="run configuration (JSON)")
        for leaf in _leaves(DEFAULT_CONFIG):
            sp.add_argument(f"--{leaf}", dest=f"ov:{leaf}", metavar="VALUE", default=None,
                            help="override (JSON literal or bare string)")
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are configuration errors
        return 0 if exc.code == 0 else ConfigError.exit_code
    overrides = {k[3:]: _parse_flag_value(v) for k, v in vars(args).items()
                 if k.startswith("ov:") and v is not None}
    try:
        cfg = resolve_config(args.config, overrides)
        HANDLERS[args.command](cfg)
    except DDEError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OverflowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
