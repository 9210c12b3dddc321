"""Command-line front end: ``elasto-np run|validate <config.json>``.

Numerical modules are imported lazily so that ``--threads`` can set the
BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

EXPERIMENTS = ("spectrum", "convergence", "calr-energy", "cloaking", "field-map", "expansion")
UNITS = "dimensionless: lengths in units of a reference length, moduli in units of a reference stress"
EXIT_CONFIG = 2
EXIT_RUNTIME = 1


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


# --- config parsing -----------------------------------------------------------


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _get(d: dict, key: str, path: str, required=True, default=None):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    return d[key]


def _num(v, path, *, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _deltas(v, path):
    if isinstance(v, dict):
        start = _num(_get(v, "start", path), f"{path}.start", positive=True)
        stop = _num(_get(v, "stop", path), f"{path}.stop", positive=True)
        num = _num(_get(v, "num", path), f"{path}.num", positive=True, integer=True)
        if num < 2:
            raise ConfigError(f"{path}.num", "need at least 2 points")
        a, b = math.log10(start), math.log10(stop)
        return [10 ** (a + (b - a) * i / (num - 1)) for i in range(num)]
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list or {start, stop, num}")
    return [_num(x, f"{path}[{i}]", positive=True) for i, x in enumerate(v)]


def _matrix(v, path):
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(r, list) and len(r) == 2 for r in v)):
        raise ConfigError(path, "expected a 2x2 nested list")
    return [[_num(v[i][k], f"{path}[{i}][{k}]") for k in range(2)] for i in range(2)]


@dataclass
class RunConfig:
    raw: dict
    experiment: str
    geometry: dict
    material: dict
    source: dict | None
    discretization: dict
    options: dict
    output_dir: str

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def parse_config(cfg: dict) -> RunConfig:
    """Validate every field before any computation; raises :class:`ConfigError`."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"experiment", "geometry", "material", "source", "discretization", "options", "output"}
    for k in cfg:
        if k not in known:
            raise ConfigError(k, "unknown key")
    exp = _get(cfg, "experiment", "")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")

    g = _get(cfg, "geometry", "")
    kind = _get(g, "kind", "geometry")
    if kind == "ellipse":
        a = _num(_get(g, "a", "geometry"), "geometry.a", positive=True)
        b = _num(_get(g, "b", "geometry"), "geometry.b", positive=True)
        if not a > b:
            raise ConfigError("geometry.b", "need a > b > 0 (use kind 'disk' for a circle)")
        geometry = {"kind": kind, "a": a, "b": b}
    elif kind == "disk":
        geometry = {"kind": kind, "radius": _num(_get(g, "radius", "geometry", False, 1.0), "geometry.radius", positive=True)}
    else:
        raise ConfigError("geometry.kind", "must be 'ellipse' or 'disk'")

    m = _get(cfg, "material", "")
    lam = _num(_get(m, "lambda", "material"), "material.lambda")
    mu = _num(_get(m, "mu", "material"), "material.mu")
    if mu <= 0:
        raise ConfigError("material.mu", "strong convexity requires mu > 0")
    if lam + mu <= 0:
        raise ConfigError("material.lambda", "strong convexity requires lambda + mu > 0")
    material = {"lambda": lam, "mu": mu}
    needs_source = exp in ("calr-energy", "cloaking", "field-map")
    if needs_source:
        c = _get(m, "contrast", "material")
        if isinstance(c, str):
            if c not in ("+k0", "-k0", "k0", "disk-radial"):
                raise ConfigError("material.contrast", "string contrast must be '+k0', '-k0' or 'disk-radial'")
            if c == "disk-radial" and lam == 0:
                raise ConfigError("material.contrast", "the radial disk eigenvalue is 0 for lambda = 0")
        else:
            c = _num(c, "material.contrast")
            if not c < 0:
                raise ConfigError("material.contrast", "contrast must be negative")
        material["contrast"] = c
        if exp == "field-map":
            material["delta"] = _num(_get(m, "delta", "material"), "material.delta", positive=True)
        else:
            ds = _deltas(_get(m, "deltas", "material"), "material.deltas")
            if exp == "calr-energy" and len(ds) < 5:
                raise ConfigError("material.deltas", "a fit needs at least 5 values")
            if exp == "cloaking" and len(ds) < 2:
                raise ConfigError("material.deltas", "a trend needs at least 2 values")
            material["deltas"] = ds

    source = None
    if needs_source:
        s = _get(cfg, "source", "")
        A = _matrix(_get(s, "A", "source"), "source.A")
        if "cartesian" in s:
            z = s["cartesian"]
            if not (isinstance(z, list) and len(z) == 2):
                raise ConfigError("source.cartesian", "expected [x1, x2]")
            pos = {"cartesian": [_num(z[0], "source.cartesian[0]"), _num(z[1], "source.cartesian[1]")]}
        elif geometry["kind"] == "ellipse":
            om = _num(_get(s, "omega", "source"), "source.omega")
            if "rho_over_rho0" in s:
                pos = {"rho_over_rho0": _num(s["rho_over_rho0"], "source.rho_over_rho0", positive=True), "omega": om}
                if not pos["rho_over_rho0"] > 1:
                    raise ConfigError("source.rho_over_rho0", "source must lie outside the inclusion (ratio > 1)")
            else:
                pos = {"rho": _num(_get(s, "rho", "source"), "source.rho", positive=True), "omega": om}
        else:
            pos = {"r": _num(_get(s, "r", "source"), "source.r", positive=True), "theta": _num(_get(s, "theta", "source"), "source.theta")}
            if not pos["r"] > geometry["radius"]:
                raise ConfigError("source.r", "source must lie outside the disk")
        source = {"A": A, **pos}

    d = cfg.get("discretization", {})
    n_nodes = _num(d.get("n_nodes", 256), "discretization.n_nodes", positive=True, integer=True)
    if n_nodes < 16 or n_nodes % 2:
        raise ConfigError("discretization.n_nodes", "must be an even integer >= 16")
    disc = {"n_nodes": n_nodes}
    if d.get("n_max") is not None:
        disc["n_max"] = _num(d["n_max"], "discretization.n_max", positive=True, integer=True)
    if "n_nodes_list" in d:
        lst = d["n_nodes_list"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError("discretization.n_nodes_list", "expected a non-empty list")
        for i, v in enumerate(lst):
            n = _num(v, f"discretization.n_nodes_list[{i}]", positive=True, integer=True)
            if n < 16 or n % 2:
                raise ConfigError(f"discretization.n_nodes_list[{i}]", "must be an even integer >= 16")
        disc["n_nodes_list"] = [int(v) for v in lst]
    if exp == "convergence" and "n_nodes_list" not in disc:
        raise ConfigError("discretization.n_nodes_list", "missing required key")

    if geometry["kind"] == "disk" and exp in ("expansion",):
        raise ConfigError("geometry.kind", f"experiment '{exp}' needs an ellipse")
    if geometry["kind"] == "disk" and exp == "convergence":
        raise ConfigError("geometry.kind", "experiment 'convergence' needs an ellipse")

    opts = cfg.get("options", {})
    if not isinstance(opts, dict):
        raise ConfigError("options", "expected an object")
    options = dict(opts)
    if exp == "field-map":
        grid = _get(opts, "grid", "options")
        for ax in ("x", "y"):
            v = _get(grid, ax, "options.grid")
            if not (isinstance(v, list) and len(v) == 3):
                raise ConfigError(f"options.grid.{ax}", "expected [min, max, num]")
            lo = _num(v[0], f"options.grid.{ax}[0]")
            hi = _num(v[1], f"options.grid.{ax}[1]")
            num = _num(v[2], f"options.grid.{ax}[2]", positive=True, integer=True)
            if not hi > lo:
                raise ConfigError(f"options.grid.{ax}", "need max > min")
            options.setdefault("_grid", {})[ax] = (lo, hi, num)
    if exp == "expansion":
        for key in ("x", "y"):
            v = _get(opts, key, "options")
            if not (isinstance(v, dict) and "rho_over_rho0" in v and "omega" in v) and not (isinstance(v, dict) and "cartesian" in v):
                raise ConfigError(f"options.{key}", "expected {rho_over_rho0, omega} or {cartesian}")
        lst = _get(opts, "n_trunc", "options")
        if not isinstance(lst, list) or not lst:
            raise ConfigError("options.n_trunc", "expected a non-empty list of integers")
        for i, v in enumerate(lst):
            _num(v, f"options.n_trunc[{i}]", positive=True, integer=True)
    if "method" in opts and opts["method"] not in ("spectral", "direct"):
        raise ConfigError("options.method", "must be 'spectral' or 'direct'")
    if "sample_rho_over_rho0" in opts:
        _num(opts["sample_rho_over_rho0"], "options.sample_rho_over_rho0", positive=True)
    if "n_max" in opts:
        _num(opts["n_max"], "options.n_max", positive=True, integer=True)

    out = cfg.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output", "expected an object")
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.dir", "expected a non-empty string")
    return RunConfig(cfg, exp, geometry, material, source, disc, options, out_dir)


# --- output helpers -----------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v
    return f"{float(v):.16e}"


def write_csv(path: Path, columns, rows, cfg_hash: str):
    """CSV with a leading comment row naming units and the config hash."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# units: {UNITS}; config_sha256={cfg_hash}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def _jsonable(v):
    import numpy as np

    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_manifest(path: Path, rc: RunConfig, files, results: dict, seed, threads):
    from . import __version__
    from .analytic_spectra import CATALOG_VERSION

    doc = {
        "config_sha256": rc.hash,
        "catalog_version": CATALOG_VERSION,
        "package_version": __version__,
        "experiment": rc.experiment,
        "units": UNITS,
        "files": files,
        "seed": seed,
        "threads": threads,
        "results": _jsonable(results),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- experiment runners -------------------------------------------------------


def _build(rc: RunConfig):
    from .core_types import EllipseGeometry, LameParams, elliptic_to_cartesian
    from .resonance import DipoleSource, DiskGeometry, calr_contrast

    params = LameParams(rc.material["lambda"], rc.material["mu"])
    if rc.geometry["kind"] == "ellipse":
        geom = EllipseGeometry(rc.geometry["a"], rc.geometry["b"])
    else:
        geom = DiskGeometry(rc.geometry["radius"])
    src = None
    contrast = None
    if rc.source is not None:
        s = rc.source
        if "cartesian" in s:
            z = s["cartesian"]
        elif "r" in s:
            z = [s["r"] * math.cos(s["theta"]), s["r"] * math.sin(s["theta"])]
        else:
            rho = s["rho_over_rho0"] * geom.rho0 if "rho_over_rho0" in s else s["rho"]
            z = elliptic_to_cartesian(geom, rho, s["omega"])
        src = DipoleSource(z, s["A"])
        c = rc.material["contrast"]
        if c in ("+k0", "k0"):
            contrast = calr_contrast(params, +1)
        elif c == "-k0":
            contrast = calr_contrast(params, -1)
        elif c == "disk-radial":
            contrast = params.contrast_for(params.disk_radial_eigenvalue)
        else:
            contrast = float(c)
    return params, geom, src, contrast


def _problem(rc, delta):
    from .resonance import CalrProblem

    params, geom, src, contrast = _build(rc)
    n_max = rc.discretization.get("n_max")
    return CalrProblem(params, geom, contrast, delta, src, n_max)


def run_spectrum(rc: RunConfig, out: Path):
    import numpy as np

    from .analytic_spectra import disk_spectrum, ellipse_spectrum
    from .core_types import make_disk_curve, make_ellipse_curve
    from .discrete_np import assemble, match_eigenvalues, plemelj_residual, self_adjointness_asymmetry, symmetrized_spectrum

    params, geom, _, _ = _build(rc)
    n = rc.discretization["n_nodes"]
    rows = []
    if rc.geometry["kind"] == "ellipse":
        curve = make_ellipse_curve(geom, n)
        n_max = rc.discretization.get("n_max", 8)
        spec = ellipse_spectrum(params, geom)
        targets = [(j, m, float(spec.k(j, m))) for m in range(1, n_max + 1) for j in (1, 2, 3, 4)]
    else:
        curve = make_disk_curve(geom.radius, n)
        ds = disk_spectrum(params, geom.radius)
        targets = []
        for j, (val, mult) in enumerate(ds.eigenvalues, start=1):
            for m in range(1, (mult or 1) + 1):
                targets.append((j, m, float(val)))
    np_ = assemble(params, curve)
    res = symmetrized_spectrum(np_)
    matched = match_eigenvalues(res.eigenvalues, [t[2] for t in targets])
    errs = []
    for (j, m, kval), (_, num, err) in zip(targets, matched):
        rows.append((j, m, kval, float("nan") if num is None else num, float("nan") if num is None else err))
        if num is not None:
            errs.append(err)
    write_csv(out / "spectrum.csv", ["j", "n", "k_analytic", "k_numeric", "abs_err"], rows, rc.hash)
    band = n // 4
    results = {
        "n_nodes": n,
        "max_abs_err": max(errs) if errs else None,
        "unmatched": sum(1 for r in rows if r[3] != r[3]),
        "half_multiplicity": res.half_multiplicity,
        "plemelj_residual": plemelj_residual(np_),
        "self_adjointness_asymmetry": self_adjointness_asymmetry(np_),
        "plemelj_residual_band": plemelj_residual(np_, band),
        "self_adjointness_asymmetry_band": self_adjointness_asymmetry(np_, band),
        "band": band,
        "eigenvalue_range": [float(np.min(res.eigenvalues)), float(np.max(res.eigenvalues))],
    }
    return ["spectrum.csv"], results


def run_convergence(rc: RunConfig, out: Path):
    import numpy as np

    from .analytic_spectra import ellipse_spectrum
    from .core_types import make_ellipse_curve
    from .discrete_np import assemble, match_eigenvalues, plemelj_residual, self_adjointness_asymmetry, symmetrized_spectrum

    params, geom, _, _ = _build(rc)
    spec = ellipse_spectrum(params, geom)
    n_max = rc.discretization.get("n_max", 8)
    targets = [float(spec.k(j, m)) for m in range(1, n_max + 1) for j in (1, 2, 3, 4)]
    rows = []
    for n in rc.discretization["n_nodes_list"]:
        np_ = assemble(params, make_ellipse_curve(geom, n))
        res = symmetrized_spectrum(np_)
        errs = [e for _, v, e in match_eigenvalues(res.eigenvalues, targets) if v is not None]
        band = n // 4
        rows.append((n, max(errs) if errs else float("nan"), plemelj_residual(np_), plemelj_residual(np_, band),
                     self_adjointness_asymmetry(np_), self_adjointness_asymmetry(np_, band)))
    write_csv(out / "convergence.csv",
              ["n_nodes", "max_abs_err", "plemelj_residual", "plemelj_residual_band", "asymmetry", "asymmetry_band"],
              rows, rc.hash)
    arr = np.array(rows, dtype=float)
    fit = None
    if len(rows) >= 2 and np.all(arr[:, 1] > 0):
        fit = float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)[0])
    return ["convergence.csv"], {"error_loglog_slope": fit, "n_max": n_max}


def run_calr_energy(rc: RunConfig, out: Path):
    from .resonance import energy_sweep

    pb = _problem(rc, rc.material["deltas"][0])
    method = rc.options.get("method", "spectral" if rc.geometry["kind"] == "ellipse" else "direct")
    lp = rc.options.get("log_power")
    sw = energy_sweep(pb, rc.material["deltas"], method=method, log_power=lp, n_nodes=rc.discretization["n_nodes"])
    rows = [(float(d), float(E), float(d * E), int(n), float(r))
            for d, E, n, r in zip(sw.deltas, sw.energies, sw.n_max_used, sw.residuals)]
    write_csv(out / "calr_energy.csv", ["delta", "E", "deltaE", "n_max_used", "fit_residual"], rows, rc.hash)
    results = {
        "method": method,
        "fitted_exponent": sw.exponent,
        "fitted_intercept": sw.intercept,
        "log_power_removed": sw.log_power,
        "rms_residual": sw.rms_residual,
    }
    if rc.geometry["kind"] == "ellipse":
        r = pb.rho_z / pb.geom.rho0
        if sw.log_power == 1.0:
            results["theory_exponent"] = -3 + r if r <= 3 else 0.0
        elif sw.log_power == 3.0:
            results["theory_exponent"] = -2.5 + r / 2 if r <= 5 else 0.0
        results["rho_z_over_rho0"] = r
    return ["calr_energy.csv"], results


def run_cloaking(rc: RunConfig, out: Path):
    from .resonance import boundedness_check, cloaking_verdict

    pb = _problem(rc, rc.material["deltas"][0])
    sr = rc.options.get("sample_rho_over_rho0")
    sample_rho = None
    if sr is not None and rc.geometry["kind"] == "ellipse":
        sample_rho = sr * pb.geom.rho0
    v = cloaking_verdict(pb, rc.material["deltas"], sample_rho=sample_rho, n_nodes=rc.discretization["n_nodes"])
    rows = [(float(d), float(E), float(dE), float(f), float(nv))
            for d, E, dE, f, nv in zip(v["deltas"], v["energy"], v["delta_energy"], v["far_field_sup"], v["normalized_sup"])]
    write_csv(out / "cloaking.csv", ["delta", "E", "deltaE", "far_field_sup", "normalized_sup"], rows, rc.hash)
    results = {k: v[k] for k in ("verdict", "delta_energy_trend", "far_field_trend", "far_field_slope", "normalized_trend", "sample_rho")}
    files = ["cloaking.csv"]
    bsr = rc.options.get("boundedness_rho_over_rho0")
    if bsr is not None and rc.geometry["kind"] == "ellipse":
        b = boundedness_check(pb, rc.material["deltas"], bsr * pb.geom.rho0)
        write_csv(out / "boundedness.csv", ["delta", "sup_abs_u_minus_F"],
                  [(float(d), float(s)) for d, s in zip(b["deltas"], b["sup"])], rc.hash)
        files.append("boundedness.csv")
        results["boundedness"] = {k: b[k] for k in ("variation", "bounded", "threshold", "sample_rho")}
    return files, results


def run_field_map(rc: RunConfig, out: Path):
    import numpy as np

    from .resonance import field_map

    pb = _problem(rc, rc.material["delta"])
    gx, gy = rc.options["_grid"]["x"], rc.options["_grid"]["y"]
    xs = np.linspace(*gx[:2], int(gx[2]))
    ys = np.linspace(*gy[:2], int(gy[2]))
    method = rc.options.get("method", "spectral" if rc.geometry["kind"] == "ellipse" else "direct")
    fm = field_map(pb, xs, ys, method=method, n_nodes=rc.discretization["n_nodes"])
    rows = []
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            rows.append((float(x), float(y), float(fm["scattered"][iy, ix]), float(fm["total"][iy, ix]), int(fm["mask"][iy, ix])))
    write_csv(out / "field_map.csv", ["x", "y", "abs_u_minus_F", "abs_u", "masked"], rows, rc.hash)
    return ["field_map.csv"], {"method": method, "nx": len(xs), "ny": len(ys), "masked": int(fm["mask"].sum())}


def run_expansion(rc: RunConfig, out: Path):
    import numpy as np

    from .analytic_spectra import ellipse_spectrum, kelvin_expansion
    from .core_types import elliptic_to_cartesian
    from .kernels import kelvin_matrix

    params, geom, _, _ = _build(rc)
    spec = ellipse_spectrum(params, geom)

    def point(v):
        if "cartesian" in v:
            return np.array(v["cartesian"], float)
        return elliptic_to_cartesian(geom, v["rho_over_rho0"] * geom.rho0, v["omega"])

    x, y = point(rc.options["x"]), point(rc.options["y"])
    on_bdry = bool(rc.options.get("y_on_boundary", False))
    ns = sorted(int(v) for v in rc.options["n_trunc"])
    partial = kelvin_expansion(spec, x, y, ns[-1], y_on_boundary=on_bdry, return_partials=True,
                               n_nodes=rc.discretization["n_nodes"])
    exact = kelvin_matrix(params, x, y)
    rows = [(n, float(np.abs(partial[n - 1] - exact).max())) for n in ns]
    write_csv(out / "expansion.csv", ["n_trunc", "max_abs_err"], rows, rc.hash)
    errs = np.abs(partial - exact).max(axis=(1, 2))
    nn = np.arange(1, errs.size + 1)
    ok = errs > 1e-14
    ratio = float(np.exp(np.polyfit(nn[ok], np.log(errs[ok]), 1)[0])) if ok.sum() >= 2 else None
    return ["expansion.csv"], {"tail_ratio": ratio, "final_error": float(errs[-1])}


RUNNERS = {
    "spectrum": run_spectrum,
    "convergence": run_convergence,
    "calr-energy": run_calr_energy,
    "cloaking": run_cloaking,
    "field-map": run_field_map,
    "expansion": run_expansion,
}


# --- entry point --------------------------------------------------------------


def _emit_error(kind: str, message: str, key: str | None = None):
    doc = {"status": "error", "kind": kind, "message": message}
    if key is not None:
        doc["key"] = key
    print(json.dumps(doc, sort_keys=True))


def _load(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _set_threads(n: int | None):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    if "numpy" in sys.modules:
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(n)
        except ImportError:
            pass


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="elasto-np", description="Elastostatic NP spectra and CALR experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        _emit_error("config", "--threads must be >= 1", "--threads")
        return EXIT_CONFIG
    _set_threads(args.threads)

    try:
        rc = parse_config(_load(args.config))
    except ConfigError as exc:
        _emit_error("config", exc.message, exc.key)
        return EXIT_CONFIG

    if args.command == "validate":
        print(json.dumps({"status": "ok", "experiment": rc.experiment, "config_sha256": rc.hash}, sort_keys=True))
        return 0

    out = Path(args.out or rc.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files, results = RUNNERS[rc.experiment](rc, out)
        write_manifest(out / "manifest.json", rc, files, results, args.seed, args.threads)
    except Exception as exc:  # any module failure becomes a machine-readable error
        _emit_error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    print(json.dumps({"status": "ok", "experiment": rc.experiment, "out": str(out), "files": files + ["manifest.json"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
