"""Command-line front end: ``fibrepair <command> ...``.

Without ``--out`` the primary artifact goes to stdout. With ``--out DIR`` every
artifact is written into DIR and a JSON summary is printed. Exit codes: 0 on
success, 2 for configuration or input errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import jsa as jsa_mod
from . import phasematch as pm
from . import schmidt_hom as sh
from . import tomography as tomo
from .dispersion import list_presets, load_preset
from .errors import ConfigError, NumericalError, ParseError


# ------------------------------------------------------------ helpers


def _g(x):
    """Round to 9 significant digits for JSON output."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: _g(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_g(v) for v in x]
    return x


def _dump(obj):
    return json.dumps(_g(obj), indent=2) + "\n"


def parse_range(text, default_steps=None):
    """``a:b:n`` -> (a, b, n); ``a:b`` uses ``default_steps``; ``a`` -> (a, a, 1)."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return v, v, 1
        if len(parts) == 2 and default_steps is not None:
            return float(parts[0]), float(parts[1]), int(default_steps)
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        pass
    raise ConfigError(f"cannot parse range {text!r}; expected start:stop:steps")


def parse_pair(text):
    parts = str(text).split(":")
    try:
        if len(parts) == 2:
            return float(parts[0]), float(parts[1])
    except ValueError:
        pass
    raise ConfigError(f"cannot parse interval {text!r}; expected lo:hi")


def parse_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def parse_filter(text):
    """``10x`` -> relative top-hat; ``CENTER:FWHM[:shape]`` in nm -> absolute filter."""
    if text is None:
        return None
    t = str(text).strip().lower()
    if t.endswith("x"):
        try:
            return jsa_mod.RelativeFilter(float(t[:-1]))
        except ValueError:
            raise ConfigError(f"cannot parse relative filter {text!r}") from None
    parts = t.split(":")
    try:
        shape = parts[2] if len(parts) > 2 else "tophat"
        return jsa_mod.FilterSpec(float(parts[0]), float(parts[1]), shape)
    except (ValueError, IndexError):
        raise ConfigError(f"cannot parse filter {text!r}; use 10x or center:fwhm[:shape]") from None


class Output:
    def __init__(self, out_dir, stdout):
        self.dir = Path(out_dir) if out_dir else None
        self.stdout = stdout
        self.files = []
        if self.dir is not None:
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"cannot create output directory {self.dir}: {exc}") from None

    def artifact(self, name, text, primary=False):
        if self.dir is not None:
            path = self.dir / name
            try:
                path.write_text(text)
            except OSError as exc:
                raise ConfigError(f"cannot write {path}: {exc}") from None
            self.files.append(str(path))
        elif primary:
            self.stdout.write(text)

    def summary(self, data, primary=False):
        """JSON summary: a file plus stdout when writing to a directory."""
        text = _dump(data)
        if self.dir is not None:
            self.artifact("summary.json", text)
            self.stdout.write(text)
        elif primary:
            self.stdout.write(text)


def _render(writer, *args):
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


def _point(args, fibre):
    points = pm.solve_phasematch(fibre, args.scheme, args.pump, args.power, _window(args))
    if not points:
        raise NumericalError(f"no phase-matched signal for a {args.pump:g} nm pump in the window")
    return points[args.branch] if args.branch < len(points) else points[-1]


def _window(args):
    return parse_pair(args.window) if getattr(args, "window", None) else None


# ------------------------------------------------------------ commands


def cmd_presets(args, out):
    names = list_presets()
    if args.action == "show":
        if not args.name:
            raise ConfigError("presets show needs a preset name")
        f = load_preset(args.name)
        out.summary(
            {
                "name": f.name,
                "length_m": f.length_m,
                "n2_m2_per_W": f.n2_m2_per_W,
                "Aeff_m2": f.aeff_m2,
                "valid_range_nm": list(f.valid_range),
                "notes": f.notes,
            },
            primary=True,
        )
        return
    out.artifact("presets.txt", "".join(n + "\n" for n in names), primary=True)


def cmd_phasematch(args, out):
    fibre = load_preset(args.preset)
    lo, hi, steps = parse_range(args.pump, 41)
    curve = pm.phasematch_curve(fibre, args.scheme, (lo, hi), steps, args.power, _window(args))
    out.artifact("phasematch.csv", _render(pm.write_curve_csv, curve), primary=True)
    n_pts = sum(len(p) for _, p in curve)
    sig = [p.lambda_s for _, ps in curve for p in ps]
    out.summary(
        {
            "preset": fibre.name,
            "scheme": str(pm.Scheme.parse(args.scheme)),
            "points": n_pts,
            "signal_min_nm": min(sig) if sig else None,
            "signal_max_nm": max(sig) if sig else None,
        }
    )


def cmd_bandwidth(args, out):
    fibre = load_preset(args.preset)
    point = _point(args, fibre)
    lengths = parse_list(args.lengths) if args.lengths else [args.length or fibre.length_m]
    dwp = float(pm.omega_width(point.lambda_p, args.pump_fwhm))
    rows = ["length_m,pump_fwhm_nm,signal_bandwidth_nm,signal_bandwidth_rad_per_s\n"]
    values = []
    for L in lengths:
        dw, dl = pm.signal_bandwidth(point, L, dwp)
        values.append(dl)
        rows.append(f"{L:.9g},{args.pump_fwhm:.9g},{dl:.9g},{dw:.9g}\n")
    out.artifact("bandwidth.csv", "".join(rows), primary=True)
    first, second = pm.bandwidth_terms(point, 1.0, dwp)
    out.summary(
        {
            "lambda_p_nm": point.lambda_p,
            "lambda_s_nm": point.lambda_s,
            "lambda_i_nm": point.lambda_i,
            "N_p": point.N_p,
            "N_s": point.N_s,
            "N_i": point.N_i,
            "pump_term_ratio_at_1m": second / first,
            "signal_bandwidth_nm": values,
        }
    )


def _build(args, fibre, point, length, fwhm_nm):
    pump = pm.PumpSpec(point.lambda_p, fwhm_nm, args.pump_shape, args.power)
    grid = jsa_mod.build_jsa(
        fibre,
        pump,
        point,
        length,
        n_s=args.grid,
        n_i=args.grid,
        span_factor=args.span_factor,
        phase_model=args.phase_model,
    )
    fs, fi = parse_filter(args.filter_s), parse_filter(args.filter_i)
    if fs is not None or fi is not None:
        grid = jsa_mod.apply_filters(grid, fs, fi)
    return grid


def cmd_jsa(args, out):
    fibre = load_preset(args.preset)
    point = _point(args, fibre)
    length = args.length or fibre.length_m
    grid = _build(args, fibre, point, length, args.pump_fwhm)
    m = jsa_mod.jsi_and_marginals(grid)
    out.artifact("jsi.csv", _render(jsa_mod.write_jsi_csv, grid))
    out.artifact("signal_marginal.csv", _render(jsa_mod.write_marginal_csv, grid.lambda_s, m.signal))
    out.artifact("idler_marginal.csv", _render(jsa_mod.write_marginal_csv, grid.lambda_i, m.idler))
    K = sh.schmidt_number(grid)
    out.summary(
        {
            "lambda_s_nm": point.lambda_s,
            "lambda_i_nm": point.lambda_i,
            "length_m": length,
            "pump_fwhm_nm": args.pump_fwhm,
            "grid": list(grid.shape),
            "signal_fwhm_nm": m.fwhm_s_nm,
            "idler_fwhm_nm": m.fwhm_i_nm,
            "K": K,
            "purity": 1.0 / K,
        },
        primary=True,
    )


def cmd_schmidt_scan(args, out):
    fibre = load_preset(args.preset)
    point = _point(args, fibre)
    bw_range = parse_pair(args.bw_range)
    fs, fi = parse_filter(args.filter_s), parse_filter(args.filter_i)
    filters = (fs, fi) if (fs is not None or fi is not None) else None
    kw = dict(
        n_s=args.grid,
        n_i=args.grid,
        phase_model=args.phase_model,
        span_factor=args.span_factor,
        pump_shape=args.pump_shape,
    )
    if args.lengths:
        scan = sh.scan_length(fibre, point, parse_list(args.lengths), bw_range, filters, samples=args.samples, **kw)
        out.artifact("length_scan.csv", _render(sh.write_length_scan_csv, scan), primary=True)
        for r, L in zip(scan.results, scan.lengths):
            out.artifact(f"bandwidth_scan_L{L:g}.csv", _render(sh.write_bandwidth_scan_csv, r))
        out.summary(
            {
                "lengths_m": scan.lengths,
                "K_min": scan.K_min,
                "bw_opt_nm": scan.bw_opt,
                "boundary": [r.boundary for r in scan.results],
                "K_min_decreasing": scan.k_decreasing,
                "bw_opt_decreasing": scan.bw_decreasing,
            }
        )
        return
    length = args.length or fibre.length_m
    res = sh.optimize_pump_bandwidth(fibre, point, length, bw_range, filters, samples=args.samples, **kw)
    out.artifact("bandwidth_scan.csv", _render(sh.write_bandwidth_scan_csv, res), primary=True)
    out.summary(
        {"length_m": length, "K_min": res.K_min, "bw_opt_nm": res.argmin, "boundary": res.boundary}
    )


def cmd_hom(args, out):
    fibre = load_preset(args.preset)
    point = _point(args, fibre)
    length = args.length or fibre.length_m
    a = _build(args, fibre, point, length, args.pump_fwhm)
    if args.preset_b or args.length_b or args.pump_fwhm_b:
        fibre_b = load_preset(args.preset_b) if args.preset_b else fibre
        point_b = _point(args, fibre_b) if args.preset_b else point
        b = _build(args, fibre_b, point_b, args.length_b or length, args.pump_fwhm_b or args.pump_fwhm)
    else:
        b = a
    if args.delays is None:
        limit = sh.max_delay(a, b)
        delays = np.linspace(-limit, limit, 201)
    else:
        lo, hi, n = parse_range(args.delays, 201)
        delays = np.linspace(lo, hi, n) * 1e-12 if n > 1 else np.array([lo * 1e-12])
    prof = sh.hom_dip_profile(a, b, delays)
    out.artifact("hom_dip.csv", _render(sh.write_dip_csv, prof), primary=True)
    out.summary(
        {
            "visibility": sh.hom_visibility(a, b),
            "K_a": sh.schmidt_number(a),
            "K_b": sh.schmidt_number(b),
            "max_delay_ps": sh.max_delay(a, b) * 1e12,
        }
    )


def _read_record(path, stdin):
    if path == "-":
        return tomo.read_record_csv(stdin)
    try:
        with open(path, newline="") as fh:
            return tomo.read_record_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from None


def _physical(rho):
    """Hermitian part, projected onto the physical set when needed."""
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real if tomo.is_physical(rho) else tomo.project_physical(rho)


def cmd_tomo(args, out, stdin):
    if args.tomo_cmd == "simulate":
        rho = _physical(tomo.load_state(args.state))
        seed = 0 if args.seed is None else args.seed
        rec = tomo.simulate_counts(rho, args.n, seed)
        out.artifact("record.csv", _render(tomo.write_record_csv, rec), primary=True)
        out.summary({"state": args.state, "n_per_setting": args.n, "seed": seed})
    elif args.tomo_cmd == "reconstruct":
        rec = _read_record(args.record, stdin)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.method == "linear":
                rho = tomo.linear_reconstruct(rec)
                diag = {"method": "linear", "physical": tomo.is_physical(rho)}
            else:
                res = tomo.mle_reconstruct(rec, gaussian=args.gaussian, seed=args.seed or 0)
                rho = res.rho
                diag = {
                    "method": "mle",
                    "nll": res.nll,
                    "evaluations": res.evaluations,
                    "converged": res.converged,
                }
        diag["warnings"] = [str(w.message) for w in caught]
        diag["metrics"] = tomo.metrics(rho).as_dict()
        if args.bootstrap:
            eb = tomo.error_bars(rec, args.bootstrap, args.seed, gaussian=args.gaussian)
            diag["std"] = eb.std
        # diagnostics ride along in the state JSON; extra keys are ignored on reload
        out.artifact("rho.json", _dump({**tomo.rho_to_json(rho), **diag}), primary=True)
    elif args.tomo_cmd == "metrics":
        rho = tomo.load_state(args.state)
        out.summary(tomo.metrics(rho).as_dict(), primary=True)
    elif args.tomo_cmd == "fringe":
        rho = _physical(tomo.load_state(args.state))
        lo, hi, n = parse_range(args.angles, 91)
        idler = args.basis
        try:
            idler = float(idler)
        except ValueError:
            pass
        scan = tomo.fringe_scan(rho, idler, np.linspace(lo, hi, n))
        text = "signal_hwp_deg,probability\n" + "".join(f"{t:.9g},{p:.9g}\n" for t, p in scan)
        out.artifact("fringe.csv", text, primary=True)
        fit = tomo.visibility(scan)
        out.summary({"visibility": fit.visibility, "fit_rms": fit.residual, "fallback": fit.fallback})


def _recipe_path(name):
    p = Path(name)
    if p.is_file():
        return p
    entry = resources.files("fibrepair") / "recipes" / f"{name}.json"
    if entry.is_file():
        return entry
    raise ConfigError(f"unknown recipe {name!r}")


def list_recipes():
    root = resources.files("fibrepair") / "recipes"
    return sorted(e.name[:-5] for e in root.iterdir() if e.name.endswith(".json"))


def cmd_recipe(args, out, stdout, stderr):
    if args.name in (None, "list"):
        out.artifact("recipes.txt", "".join(n + "\n" for n in list_recipes()), primary=True)
        return 0
    path = _recipe_path(args.name)
    try:
        recipe = json.loads(path.read_text())
        runs = recipe["runs"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed recipe {args.name}: {exc}") from None
    base = Path(args.out or ".") / recipe.get("name", Path(str(path)).stem)
    for run in runs:
        argv = list(run["args"]) + ["--out", str(base / run.get("subdir", ""))]
        code = main(argv, stdout=stdout, stderr=stderr)
        if code:
            return code
    return 0


# ------------------------------------------------------------ parser


def _common(p, seed=True):
    p.add_argument("--out", help="write artifacts into this directory")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="random seed")


def _source(p):
    p.add_argument("--preset", default="pcf-a", help="preset name or JSON path (default pcf-a)")
    p.add_argument("--scheme", default="ssff", help="pump->pair axes: ssff, ffss, ssss, ffff")
    p.add_argument("--pump", type=float, default=705.0, help="pump wavelength, nm")
    p.add_argument("--power", type=float, default=0.0, help="pump peak power, W")
    p.add_argument("--window", help="signal search window lo:hi in nm")
    p.add_argument("--branch", type=int, default=0, help="phase-matching branch (0 = bluest signal)")


def _grid(p):
    p.add_argument("--length", type=float, help="fibre length, m (default: preset)")
    p.add_argument("--grid", type=int, default=512, help="points per JSA axis")
    p.add_argument("--span-factor", type=float, default=4.0)
    p.add_argument("--phase-model", choices=("exact", "taylor"), default="exact")
    p.add_argument("--pump-shape", choices=("gaussian", "tophat", "supergaussian"), default="gaussian")
    p.add_argument("--filter-s", help="signal filter: 10x (relative) or center:fwhm[:shape] nm")
    p.add_argument("--filter-i", help="idler filter, same syntax")


def build_parser():
    ap = argparse.ArgumentParser(prog="fibrepair", description="Fibre photon-pair source design and analysis.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list or show fibre presets")
    p.add_argument("action", nargs="?", choices=("list", "show"), default="list")
    p.add_argument("name", nargs="?")
    _common(p, seed=False)

    p = sub.add_parser("phasematch", help="phase-matching curve CSV")
    p.add_argument("--preset", default="pcf-a")
    p.add_argument("--scheme", default="ssff")
    p.add_argument("--pump", default="700:740:41", help="pump range start:stop:steps, nm")
    p.add_argument("--power", type=float, default=0.0)
    p.add_argument("--window", help="signal search window lo:hi in nm")
    _common(p)

    p = sub.add_parser("bandwidth", help="signal bandwidth from group indices")
    _source(p)
    p.add_argument("--pump-fwhm", type=float, default=3.03, help="pump FWHM, nm")
    p.add_argument("--length", type=float)
    p.add_argument("--lengths", help="comma-separated lengths, m")
    _common(p)

    p = sub.add_parser("jsa", help="joint spectral intensity and marginals")
    _source(p)
    _grid(p)
    p.add_argument("--pump-fwhm", type=float, default=2.6, help="pump FWHM, nm")
    _common(p)

    p = sub.add_parser("schmidt-scan", help="Schmidt number vs pump bandwidth (and length)")
    _source(p)
    _grid(p)
    p.add_argument("--bw-range", default="0.5:8", help="pump FWHM range lo:hi, nm")
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--lengths", help="comma-separated lengths, m")
    _common(p)

    p = sub.add_parser("hom", help="HOM dip between two heralded sources")
    _source(p)
    _grid(p)
    p.add_argument("--pump-fwhm", type=float, default=3.03)
    p.add_argument("--preset-b")
    p.add_argument("--length-b", type=float)
    p.add_argument("--pump-fwhm-b", type=float)
    p.add_argument(
        "--delays",
        help="delay range start:stop:steps in ps, e.g. --delays=-10:10:201 (default: the grid's unaliased range)",
    )
    _common(p)

    p = sub.add_parser("tomo", help="polarization tomography")
    tsub = p.add_subparsers(dest="tomo_cmd", required=True)
    t = tsub.add_parser("simulate", help="Poisson counts for the 16 settings")
    t.add_argument("--state", required=True, help="density-matrix JSON or bundled name")
    t.add_argument("--n", type=float, default=1e4, help="pairs per setting")
    _common(t)
    t = tsub.add_parser("reconstruct", help="density matrix from a record CSV")
    t.add_argument("record", help="record CSV path or - for stdin")
    t.add_argument("--method", choices=("mle", "linear"), default="mle")
    t.add_argument("--gaussian", action="store_true", help="gaussian likelihood instead of Poisson")
    t.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for error bars")
    _common(t)
    t = tsub.add_parser("metrics", help="fidelity to Phi+, concurrence, tangle, linear entropy")
    t.add_argument("--state", required=True)
    _common(t, seed=False)
    t = tsub.add_parser("fringe", help="coincidence fringe vs signal HWP angle")
    t.add_argument("--state", required=True)
    t.add_argument("--basis", default="H", help="idler basis H or D, or an idler HWP angle")
    t.add_argument("--angles", default="0:90:91", help="signal HWP angles start:stop:steps, deg")
    _common(t, seed=False)

    p = sub.add_parser("recipe", help="run a bundled figure recipe (or 'list')")
    p.add_argument("name", nargs="?")
    _common(p, seed=False)
    return ap


def main(argv=None, stdout=None, stderr=None, stdin=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    stdin = stdin or sys.stdin
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out = Output(getattr(args, "out", None), stdout)
        if args.command == "presets":
            cmd_presets(args, out)
        elif args.command == "phasematch":
            cmd_phasematch(args, out)
        elif args.command == "bandwidth":
            cmd_bandwidth(args, out)
        elif args.command == "jsa":
            cmd_jsa(args, out)
        elif args.command == "schmidt-scan":
            cmd_schmidt_scan(args, out)
        elif args.command == "hom":
            cmd_hom(args, out)
        elif args.command == "tomo":
            cmd_tomo(args, out, stdin)
        elif args.command == "recipe":
            return cmd_recipe(args, out, stdout, stderr)
    except ConfigError as exc:
        stderr.write(f"fibrepair: error: {exc}\n")
        return 2
    except NumericalError as exc:
        stderr.write(f"fibrepair: numerical error: {exc}\n")
        return 3
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        stderr.write(f"fibrepair: error: invalid input: {exc}\n")
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        stderr.write(f"fibrepair: numerical error: {exc}\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
