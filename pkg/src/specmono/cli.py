"""Command-line interface.

Subcommands: ``synth``, ``fit``, ``monodromy``, ``bnf``, ``normal-joint`` and
``classical``. Errors print one line ``error: <CODE>: <message>`` to stderr
and exit with 1 (computation), 2 (configuration or regime) or 3 (I/O).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .birkhoff import GOLDEN, Frequency, birkhoff_normal_form, h_block_residual, twist_symbol
from .classical import circle_loop, closure_errors, continue_theta, period_lattice
from .errors import ConfigError, IOFailure, SpecMonoError
from .latticemono import (
    Ball,
    MicroChart,
    build_cocycle,
    conjugacy_equal,
    fit_ball,
    holonomy,
)
from .quantize import GoodRectangle, check_regime, joint_spectrum_normal, micro_chart_forward, synth_spectrum
from .symbolcalc import dumps, loads

log = logging.getLogger("specmono")


def _matrix(m) -> list[list[int]]:
    return [[int(v) for v in row] for row in np.asarray(m)]


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        io.write_text(out, text)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


# ---------------------------------------------------------------------------
# synth


def load_run_config(path):
    """Model, run parameters and cover from a run file.

    ``[run]`` holds ``eps``, ``h``, ``seed`` and optionally ``jitter_scale``,
    ``model`` and ``cover`` (paths relative to the run file). A ``[model]``
    section or cover sections in the run file itself take precedence.
    """
    path = Path(path)
    cp = io.read_ini(path)
    if not cp.has_section("run"):
        raise ConfigError(f"{path}: missing [run] section")
    run = cp["run"]
    params = {}
    for key in ("eps", "h"):
        if key not in run:
            raise ConfigError(f"{path}[run]: missing key {key!r}")
        params[key] = io.parse_floats(run[key], 1, where=f"{path}[run].{key}")[0]
    if "seed" not in run:
        raise ConfigError(f"{path}[run]: missing key 'seed' (required for randomized runs)")
    try:
        params["seed"] = int(run["seed"])
    except ValueError:
        raise ConfigError(f"{path}[run].seed: expected an integer") from None
    params["jitter_scale"] = io.parse_floats(run.get("jitter_scale", "1"), 1,
                                             where=f"{path}[run].jitter_scale")[0]
    if cp.has_section("model"):
        model = io.model_from_section(cp["model"], f"{path}[model]")
    elif "model" in run:
        model = io.read_model(_resolve(path.parent, run["model"]))
    else:
        raise ConfigError(f"{path}: no [model] section and no [run].model path")
    if any(s.startswith("ball") for s in cp.sections()):
        cover = io.cover_from_ini(cp, str(path))
    elif "cover" in run:
        cover = io.read_cover(_resolve(path.parent, run["cover"]))
    else:
        raise ConfigError(f"{path}: no cover sections and no [run].cover path")
    return model, params, cover


def cmd_synth(args) -> int:
    model, params, (balls, loops, centers) = load_run_config(args.config)
    if args.seed is not None:
        params["seed"] = args.seed
    eps, h, delta = params["eps"], params["h"], model.delta
    check_regime(eps, h, delta)
    if len(centers) == 0:
        raise ConfigError("cover defines no rectangles")
    out = Path(args.out)
    rects_meta = []
    for i, c in enumerate(centers):
        rect = GoodRectangle.at(c, eps, h, delta)
        cloud = synth_spectrum(model, rect, params["jitter_scale"], params["seed"] + i)
        name = f"rect_{i:04d}.spec"
        io.write_spectrum(out / name, cloud)
        ref = micro_chart_forward(model, rect)
        rects_meta.append({
            "index": i,
            "file": name,
            "center": _floats(c),
            "half_widths": list(rect.half_widths),
            "balls": [b for b, ball in enumerate(balls) if ball.contains(np.asarray(c))],
            "n_points": len(cloud),
            "analytic_f0_diff": _floats(ref.f0_diff),
            "analytic_f0_offset": _floats(ref.f0_offset),
        })
        log.info("rect %d: %d points", i, len(cloud))
    manifest = {
        "format": "manifest v1",
        "eps": eps,
        "h": h,
        "delta": delta,
        "seed": params["seed"],
        "jitter_scale": params["jitter_scale"],
        "model": model.describe(),
        "balls": [{"center": list(b.center), "radius": b.radius} for b in balls],
        "loops": loops,
        "rectangles": rects_meta,
    }
    io.write_text(out / "manifest.json", io.dumps_json(manifest))
    print(f"wrote {len(rects_meta)} spectra and manifest.json to {out}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _manifest_rects(manifest):
    try:
        eps, h, delta = manifest["eps"], manifest["h"], manifest["delta"]
        rects = [GoodRectangle.at(r["center"], eps, h, delta) for r in manifest["rectangles"]]
        balls = [Ball(tuple(b["center"]), b["radius"]) for b in manifest["balls"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest: {exc}") from None
    return rects, balls


def cmd_fit(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = io.read_json(manifest_path)
    rects, balls = _manifest_rects(manifest)
    loops = manifest.get("loops", {})
    if args.cover:
        balls, loops, _ = io.read_cover(args.cover)
    clouds = [io.read_spectrum(manifest_path.parent / r["file"]) for r in manifest["rectangles"]]
    centers = np.array([r.value_center for r in rects]).reshape(-1, 2)
    report_balls = []
    empty = []
    for b, ball in enumerate(balls):
        idx = np.flatnonzero(ball.contains(centers)) if len(centers) else np.array([], int)
        fit = fit_ball([rects[i] for i in idx], [clouds[i] for i in idx])
        charts = []
        for local in sorted(fit.charts):
            ch = fit.charts[local]
            charts.append({"rect": int(idx[local]), "f0_diff": _floats(ch.f0_diff),
                           "f0_offset": _floats(ch.f0_offset), "fit_residual": ch.fit_residual,
                           "n_points": ch.n_points})
        failures = {str(int(idx[k])): v for k, v in sorted(fit.failures.items())}
        if not charts:
            empty.append(b)
        report_balls.append({"ball": b, "center": list(ball.center), "radius": ball.radius,
                             "charts": charts, "failures": failures})
    report = {"format": "charts v1", "manifest": str(manifest_path.resolve()),
              "eps": manifest["eps"], "h": manifest["h"], "delta": manifest["delta"],
              "loops": loops, "balls": report_balls}
    _emit(io.dumps_json(report), args.out)
    if empty:
        print(f"error: NO_CHARTS: balls {empty} have no accepted chart", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# monodromy


def _charts_from_report(report):
    eps, h, delta = report["eps"], report["h"], report["delta"]
    out = {}
    manifest = None
    rect_cache = {}
    for entry in report["balls"]:
        charts = []
        for c in entry["charts"]:
            key = c["rect"]
            if key not in rect_cache:
                if manifest is None:
                    manifest = io.read_json(report["manifest"])
                rect_cache[key] = GoodRectangle.at(manifest["rectangles"][key]["center"], eps, h, delta)
            charts.append(MicroChart(rect_cache[key], c["f0_diff"], c["f0_offset"], c["fit_residual"],
                                     c.get("n_points", 0)))
        out[entry["ball"]] = charts
    return out, manifest


def cmd_monodromy(args) -> int:
    report = io.read_json(args.charts)
    try:
        charts, manifest = _charts_from_report(report)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"malformed chart report: {exc}") from None
    loops = dict(report.get("loops", {}))
    if args.loop:
        loops = {f"loop{i}": [int(v) for v in io.parse_floats(s, where="--loop")]
                 for i, s in enumerate(args.loop)}
    expect = io.parse_matrix(args.expect, where="--expect") if args.expect else None
    cocycle = build_cocycle({b: c for b, c in charts.items() if c})
    out = {"format": "holonomy v1", "transitions": [], "loops": {}, "triples": [list(t) for t in cocycle.triples]}
    for (a, b), M in sorted(cocycle.transitions.items()):
        if a < b:
            res = cocycle.overlap_residuals.get((a, b), ())
            out["transitions"].append({"pair": [a, b], "matrix": _matrix(M), "n_rects": len(res),
                                       "max_rounding_residual": max(res) if res else 0.0})
    for name, loop in sorted(loops.items()):
        H = holonomy(cocycle, loop)
        entry = {"balls": loop, "representative": _matrix(H.representative), "trace": H.trace, "det": H.det}
        if expect is not None:
            r = conjugacy_equal(H.representative, expect)
            entry["expected"] = _matrix(expect)
            entry["verdict"] = r.verdict
            entry["certificate"] = r.certificate
            if r.witness is not None:
                entry["witness"] = _matrix(r.witness)
        out["loops"][name] = entry
    _emit(io.dumps_json(out), args.out)
    if args.svg:
        if manifest is None:
            manifest = io.read_json(report["manifest"])
        base = Path(report["manifest"]).parent
        eps = report["eps"]
        groups, boxes = [], []
        for entry in report["balls"]:
            pts = []
            for c in entry["charts"]:
                cloud = io.read_spectrum(base / manifest["rectangles"][c["rect"]]["file"])
                pts.append(cloud.unscaled())
                rect = GoodRectangle.at(manifest["rectangles"][c["rect"]]["center"], eps,
                                        report["h"], report["delta"])
                boxes.append((rect.value_corners(), entry["ball"]))
            groups.append(np.vstack(pts) if pts else np.zeros((0, 2)))
        io.write_text(args.svg, io.scatter_svg(groups, boxes))
    return 0


# ---------------------------------------------------------------------------
# bnf, normal-joint, classical


def cmd_bnf(args) -> int:
    if args.builtin == "twist":
        p = twist_symbol()
        a = (1.0, GOLDEN)
    else:
        if not args.input:
            raise ConfigError("bnf needs --input FILE or --builtin twist")
        text = io._read_bytes(args.input).decode(errors="replace")
        p = loads(text, args.input)
        principal = p.h_order(0).select(lambda m, k: k == (0, 0) and m.eps == 0)
        a = (principal.coeff((1, 0, 0, 0)).real, principal.coeff((0, 1, 0, 0)).real)
    if args.freq:
        a = tuple(io.parse_floats(args.freq, 2, where="--freq"))
    try:
        freq = Frequency(a, args.alpha, args.d, args.qmax)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not freq.is_diophantine():
        raise ConfigError(f"frequency {a} fails the Diophantine test "
                          f"(alpha={args.alpha}, d={args.d}, qmax={args.qmax})")
    try:
        res = birkhoff_normal_form(p, freq, args.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(dumps(res.normal_form), args.out)
    if args.generator:
        io.write_text(args.generator, dumps(res.generator))
    summary = (f"order {res.normalized_order} residual {res.residual_norm:.3e} "
               f"h-block residual {h_block_residual(res.normal_form, args.order - 1):.3e} "
               f"terms {len(res.normal_form)} generator terms {len(res.generator)}")
    print(summary, file=sys.stderr)
    return 0


def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"cannot read {path}: no such file")
    try:
        if path.suffix == ".npy":
            return np.load(path)
        return np.loadtxt(path, dtype=complex, ndmin=2)
    except (ValueError, OSError) as exc:
        raise io.ParseError(str(exc), path=path) from None


def cmd_normal_joint(args) -> int:
    a1, a2 = _load_matrix(args.a1), _load_matrix(args.a2)
    window = io.parse_floats(args.window, 4, where="--window") if args.window else None
    try:
        pairs = joint_spectrum_normal(a1, a2, window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = {"format": "joint v1", "pairs": [{"mu": list(mu), "multiplicity": m} for mu, m in pairs]}
    _emit(io.dumps_json(out), args.out)
    return 0


def cmd_classical(args) -> int:
    if not args.point and not args.loop:
        raise ConfigError("classical needs --point and/or --loop")
    out = {"format": "classical v1"}
    if args.point:
        j, e = io.parse_floats(args.point, 2, where="--point")
        lat = period_lattice(j, e)
        entry = {"j": j, "e": e, "T": lat.T, "Theta": lat.Theta, "I": lat.action,
                 "quadrature_error": lat.quadrature_error, "basis": _floats(lat.basis)}
        if args.closure:
            entry["closure_errors"] = list(closure_errors(j, e))
        out["point"] = entry
    if args.loop:
        cx, cy, radius, n = io.parse_floats(args.loop, 4, where="--loop")
        if n != int(n) or n < 3 or radius <= 0:
            raise ConfigError("--loop needs radius > 0 and an integer nsteps >= 3")
        res = continue_theta(circle_loop((cx, cy), radius, int(n)))
        out["loop"] = {"center": [cx, cy], "radius": radius, "nsteps": int(n),
                       "theta_change": res.theta_change, "winding": res.winding,
                       "monodromy": _matrix(res.matrix)}
    _emit(io.dumps_json(out), args.out)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specmono", description="Spectral monodromy toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize point clouds over a cover")
    p.add_argument("--config", required=True, help="run file ([run], model and cover)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override [run].seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit micro-charts for every ball")
    p.add_argument("--manifest", required=True, help="manifest.json written by synth")
    p.add_argument("--cover", help="cover file overriding the manifest's balls and loops")
    p.add_argument("--out", help="chart report path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("monodromy", help="transition matrices and loop holonomy")
    p.add_argument("--charts", required=True, help="chart report written by fit")
    p.add_argument("--loop", action="append", help="ball indices, e.g. '0,1,2,3' (repeatable)")
    p.add_argument("--expect", help="expected matrix 'a,b;c,d' for a conjugacy verdict")
    p.add_argument("--svg", help="write a scatter plot of the fitted clouds")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_monodromy)

    p = sub.add_parser("bnf", help="Birkhoff normal form of a formal series")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="formalseries v1 file")
    src.add_argument("--builtin", choices=["twist"], help="use a shipped symbol")
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--qmax", type=int, default=10**6)
    p.add_argument("--freq", help="frequency 'a1,a2' (default: linear part of the input)")
    p.add_argument("--generator", help="also write the generator here")
    p.add_argument("--out", help="normal form path (default stdout)")
    p.set_defaults(func=cmd_bnf)

    p = sub.add_parser("normal-joint", help="joint spectrum of a commuting Hermitian pair")
    p.add_argument("--a1", required=True, help="matrix file (.npy or text)")
    p.add_argument("--a2", required=True, help="matrix file (.npy or text)")
    p.add_argument("--window", help="'lo1,hi1,lo2,hi2'")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_normal_joint)

    p = sub.add_parser("classical", help="period lattice and classical monodromy")
    p.add_argument("--point", help="'j,e' regular value")
    p.add_argument("--loop", help="'cx,cy,radius,nsteps' circle in (j, e)")
    p.add_argument("--closure", action="store_true", help="also run the ODE closure check at --point")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_classical)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecMonoError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {exc.code}: {msg}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error: IO: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
