"""Command-line front end.

One job per invocation; results land in --out (CSV or JSON) and every run
writes a manifest (<out>.manifest.json) recording resolved tolerances,
domain estimates and the library version.  Exit codes: 0 success, 2 for a
check command whose verdict is "fail", 1 for configuration or runtime
errors.  FREEFLOW_THREADS caps internal grid parallelism; output ordering
always follows grid order.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .cauchy import free_convolve, semigroup_marginal
from .conformal import ConformalPair, slit_image
from .errors import FreeflowError, NewtonDivergence, NotContaining
from .levyflow import (DEFAULT_T_SAMPLES, FlowField, build_fal2, fal2_check,
                       flow_conformal, flow_ode, increment_transform,
                       marginal_law, transition_kernel)
from .nevanlinna import (NevanlinnaSpec, RationalNevanlinna,
                         parse_named_form, recover_parameters, spec_fn,
                         to_analytic)

CHECK_FAIL = 2
ERROR = 1


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("FREEFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    cap = _thread_cap()
    items = list(items)
    if cap <= 1 or len(items) < 4:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as ex:
        return list(ex.map(fn, items))


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise FreeflowError(f"--grid wants lo:hi:n, got {text!r}") from exc
    if n < 2:
        raise FreeflowError("grid counts must be >= 2")
    return np.linspace(lo, hi, n)


def _parse_complex(text: str) -> complex:
    try:
        if "," in text:
            re_part, im_part = text.split(",")
            return complex(float(re_part), float(im_part))
        return complex(text.replace("i", "j"))
    except ValueError as exc:
        raise FreeflowError(f"cannot parse complex number {text!r}") from exc


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["flag"])
        for row in rows:
            flag = "" if all(math.isfinite(v) for v in row) else "nonfinite"
            writer.writerow([_fmt(v) if math.isfinite(v) else "nan"
                             for v in row] + [flag])


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(args, out_path: str, extra: dict) -> None:
    payload = {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "tolerances": {"absTol": args.tol_abs, "relTol": args.tol_rel,
                       "eps": args.eps},
        "threads": _thread_cap(),
        "domainEstimates": extra.pop("domainEstimates", None),
    }
    payload.update(extra)
    _write_json(out_path + ".manifest.json", payload)


def _values_payload(grid, values) -> dict:
    vals = np.asarray(values, dtype=complex).ravel()
    return {"grid": [float(g) for g in np.asarray(grid).ravel()],
            "values": [[float(v.real), float(v.imag)] for v in vals]}


def _load_form(text: str):
    return parse_named_form(text)


def _generator_field(args) -> FlowField:
    if getattr(args, "psi", None):
        return build_fal2(_load_form(args.psi))
    if getattr(args, "phi", None):
        return FlowField.from_generator(_load_form(args.phi))
    raise FreeflowError("one of --phi or --psi is required")


def _estimate_domain(phi_fn) -> dict | None:
    lam = 1.0
    while lam <= 4096.0:
        try:
            for d in (1j, (1 + 2j) / abs(1 + 2j), (-1 + 2j) / abs(-1 + 2j)):
                zeta = 1.05 * lam * d
                semigroup_marginal(phi_fn, 1.0, zeta)
            return {"gamma": 1.0, "lambda": lam}
        except (NewtonDivergence, FreeflowError):
            lam *= 2.0
    return None


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _cmd_nev_eval(args) -> int:
    form = _load_form(args.spec)
    if isinstance(form, RationalNevanlinna):
        fn = to_analytic(form)
    elif isinstance(form, NevanlinnaSpec):
        fn = spec_fn(form, abs_tol=args.tol_abs)
    else:
        fn = to_analytic(form)
    if args.z is not None:
        zs = np.array([_parse_complex(args.z)])
        grid = [zs[0].real]
        height = zs[0].imag
    else:
        grid = _parse_grid(args.grid)
        height = args.height
        zs = grid + 1j * height
    values = fn.eval_array(zs)
    payload = _values_payload(grid, values)
    payload["height"] = height
    _write_json(args.out, payload)
    _manifest(args, args.out, {})
    return 0


def _cmd_nev_recover(args) -> int:
    fn = to_analytic(_load_form(args.fn))
    u_grid = _parse_grid(args.grid) if args.grid else None
    rec = recover_parameters(fn, u_grid=u_grid, eps=args.eps)
    table_path = args.out + ".density.csv"
    rows = [(float(u), float(d)) for u, d in zip(rec.grid, rec.density)]
    _write_csv(table_path, ["u", "density"], rows)
    _write_json(args.out, {
        "alpha": rec.alpha, "beta": rec.beta, "mass": rec.mass,
        "impliedMass": rec.implied_mass, "massDeficit": rec.mass_deficit,
        "flags": list(rec.flags), "densityTable": table_path,
    })
    _manifest(args, args.out, {})
    return 0


def _cmd_conv(args) -> int:
    phi1 = to_analytic(_load_form(args.phi1))
    phi2 = to_analytic(_load_form(args.phi2))
    phi = free_convolve(phi1, phi2)
    grid = _parse_grid(args.grid)

    def g_at(zeta: complex) -> complex:
        return semigroup_marginal(phi, 1.0, zeta)

    dens = _density_from_subordination(g_at, grid, args.eps)
    _write_csv(args.out, ["x", "density"],
               [(float(x), float(d)) for x, d in zip(grid, dens)])
    deficit = 1.0 - float(np.trapezoid(np.nan_to_num(dens), grid))
    _manifest(args, args.out, {"massDeficit": deficit,
                               "domainEstimates": _estimate_domain(phi)})
    return 0


def _cmd_semigroup(args) -> int:
    phi = to_analytic(_load_form(args.phi))
    grid = _parse_grid(args.grid)
    t = args.t

    def g_at(zeta: complex) -> complex:
        return semigroup_marginal(phi, t, zeta)

    dens = _density_from_subordination(g_at, grid, args.eps)
    _write_csv(args.out, ["x", "density"],
               [(float(x), float(d)) for x, d in zip(grid, dens)])
    deficit = 1.0 - float(np.trapezoid(np.nan_to_num(dens), grid))
    _manifest(args, args.out, {"massDeficit": deficit, "t": t,
                               "domainEstimates": _estimate_domain(phi)})
    return 0


def _density_from_subordination(g_at, grid, eps: float) -> np.ndarray:
    def one(x: float) -> float:
        try:
            full = g_at(complex(x, eps))
            half = g_at(complex(x, eps / 2.0))
        except (NewtonDivergence, FreeflowError):
            return math.nan
        return float((2.0 * half - full).imag / -math.pi)

    return np.array(_pmap(one, [float(x) for x in grid]))


def _cmd_conformal_image(args) -> int:
    form = _load_form(args.psi)
    if not isinstance(form, RationalNevanlinna):
        raise FreeflowError("conformal-image wants a rational psi")
    if form.a < 0:
        si = slit_image(form)
        slits = [(float(q), float(p)) for q, p in si.slits]
    else:
        # the slit description assumes a < 0; only the boundary trace is
        # emitted for a = 0
        slits = []
    _write_csv(args.out, ["height", "tip"], slits)
    pair = ConformalPair.from_psi(form)
    delta = 1e-4
    boundary_rows = []
    edges = [-math.inf, *form.poles, math.inf]
    for j in range(len(form.poles) + 1):
        lo = edges[j] if math.isfinite(edges[j]) else edges[j + 1] - args.span
        hi = edges[j + 1] if math.isfinite(edges[j + 1]) else edges[j] + args.span
        if not math.isfinite(edges[j]) and not math.isfinite(edges[j + 1]):
            lo, hi = -args.span, args.span
        xs = np.linspace(lo + 1e-3, hi - 1e-3, args.samples)
        vals = np.asarray(pair.Psi(xs + 1j * delta))
        boundary_rows += [(j, float(x), float(v.real), float(v.imag))
                          for x, v in zip(xs, vals)]
    _write_csv(args.out + ".boundary.csv",
               ["interval", "x", "re_psi", "im_psi"], boundary_rows)
    _manifest(args, args.out, {"slits": [[q, p] for q, p in slits]})
    return 0


def _cmd_flowlines(args) -> int:
    form = _load_form(args.psi)
    pair = ConformalPair.from_psi(form)
    re_grid = _parse_grid(args.grid)
    rows = []
    im_levels = np.linspace(args.im_min, args.im_max, args.im_lines)
    for level in im_levels:
        zs = re_grid + 1j * level
        vals = np.asarray(pair.Psi(zs.astype(complex)))
        rows += [("im", float(level), float(z.real), float(z.imag),
                  float(w.real), float(w.imag)) for z, w in zip(zs, vals)]
    re_levels = np.linspace(float(re_grid[0]), float(re_grid[-1]),
                            args.re_lines)
    im_grid = np.linspace(max(args.im_min, 1e-3), args.im_max,
                          len(re_grid))
    for level in re_levels:
        zs = level + 1j * im_grid
        vals = np.asarray(pair.Psi(zs.astype(complex)))
        rows += [("re", float(level), float(z.real), float(z.imag),
                  float(w.real), float(w.imag)) for z, w in zip(zs, vals)]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "level", "re_z", "im_z", "re_w", "im_w",
                         "flag"])
        for kind, level, rz, iz, rw, iw in rows:
            finite = all(math.isfinite(v) for v in (level, rz, iz, rw, iw))
            writer.writerow([kind] + [_fmt(v) for v in (level, rz, iz, rw, iw)]
                            + ["" if finite else "nonfinite"])
    _manifest(args, args.out, {})
    return 0


def _cmd_fal2_build(args) -> int:
    try:
        ff = build_fal2(_load_form(args.psi))
    except NotContaining as exc:
        cert = exc.certificate
        payload = {"verdict": "not-containing"}
        if cert is not None:
            payload["certificate"] = _cert_dict(cert)
        _write_json(args.out, payload)
        _manifest(args, args.out, {"verdicts": payload})
        return CHECK_FAIL
    ys = [2.0 ** k for k in range(0, 21, 4)]
    probe = [[y, *_c_pair(ff.phi(1j * y))] for y in ys]
    payload = {"verdict": "built", "kind": ff.kind,
               "phiProbe": probe}
    if ff.power:
        payload["power"] = {"coeff": ff.power[0], "exponent": ff.power[1]}
    if ff.certificate is not None:
        payload["certificate"] = _cert_dict(ff.certificate)
    _write_json(args.out, payload)
    _manifest(args, args.out, {"verdicts": payload})
    return 0


def _cert_dict(cert) -> dict:
    def clean(v):
        if v != v:
            return "nan"
        if v == math.inf:
            return "inf"
        if v == -math.inf:
            return "-inf"
        return v
    return {"verdict": "yes" if cert.verdict else "no",
            "m2Plus": clean(cert.m2_plus), "alpha": cert.alpha,
            "drift": clean(cert.drift), "condition": cert.condition}


def _c_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _cmd_fal2_check(args) -> int:
    ff = _generator_field(args)
    t_samples = tuple(float(v) for v in args.t_samples.split(",")) \
        if args.t_samples else DEFAULT_T_SAMPLES
    verdict = fal2_check(ff, t_samples, im_tol=args.im_tol)
    payload = {"verdict": verdict.status,
               "tSamples": list(t_samples),
               "witness": None if verdict.witness is None
               else _c_pair(verdict.witness),
               "t": verdict.t,
               "detail": verdict.detail}
    _write_json(args.out, payload)
    _manifest(args, args.out, {"verdicts": payload})
    return CHECK_FAIL if verdict.failed else 0


def _cmd_flow(args) -> int:
    ff = _generator_field(args)
    re_grid = _parse_grid(args.grid)
    im_grid = _parse_grid(args.im_grid)
    ts = [float(v) for v in args.t.split(",")]
    rows = []
    for t in ts:
        zs = (re_grid[:, None] + 1j * im_grid[None, :]).ravel()
        if args.route == "ode":
            vals = np.array(_pmap(lambda z: flow_ode(ff, z, t), list(zs)))
        else:
            vals = np.asarray(flow_conformal(ff, zs, t))
        rows += [(float(z.real), float(z.imag), float(w.real), float(w.imag),
                  t) for z, w in zip(zs, vals)]
    _write_csv(args.out, ["re_in", "im_in", "re_out", "im_out", "t"], rows)
    _manifest(args, args.out, {"route": args.route, "t": ts})
    return 0


def _cmd_kernel(args) -> int:
    ff = _generator_field(args)
    grid = _parse_grid(args.grid)
    ks = transition_kernel(ff, args.t, args.x, grid, eps=args.eps)
    _write_csv(args.out, ["u", "density"],
               [(float(u), float(d)) for u, d in zip(ks.grid, ks.density)])
    _manifest(args, args.out, {"massDeficit": ks.mass_deficit, "t": args.t,
                               "x": args.x})
    return 0


def _cmd_marginal(args) -> int:
    ff = _generator_field(args)
    grid = _parse_grid(args.grid)
    ks = marginal_law(ff, args.t, grid, eps=args.eps)
    _write_csv(args.out, ["u", "density"],
               [(float(u), float(d)) for u, d in zip(ks.grid, ks.density)])
    _manifest(args, args.out, {"massDeficit": ks.mass_deficit, "t": args.t})
    return 0


def _cmd_increment(args) -> int:
    ff = _generator_field(args)
    if args.z is not None:
        zs = np.array([_parse_complex(args.z)])
        grid = [zs[0].real]
    else:
        grid = _parse_grid(args.grid)
        zs = np.asarray(grid) + 1j * args.height
    vals = np.asarray(increment_transform(ff, args.s, args.t, zs))
    payload = _values_payload(grid, vals)
    payload.update({"s": args.s, "t": args.t})
    _write_json(args.out, payload)
    _manifest(args, args.out, {})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freeflow",
        description="free additive convolution and free Levy flow engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--tol-abs", type=float, default=1e-10)
        p.add_argument("--tol-rel", type=float, default=1e-9)
        p.add_argument("--eps", type=float, default=1e-3,
                       help="Stieltjes boundary offset")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=default_out)

    p = sub.add_parser("nev-eval", help="evaluate a Nevanlinna description")
    p.add_argument("--spec", required=True)
    p.add_argument("--z")
    p.add_argument("--grid", default="-5:5:41")
    p.add_argument("--height", type=float, default=1.0)
    common(p, "nev-eval.json")
    p.set_defaults(handler=_cmd_nev_eval)

    p = sub.add_parser("nev-recover", help="recover (alpha, beta, nu)")
    p.add_argument("--fn", required=True)
    p.add_argument("--grid")
    common(p, "nev-recover.json")
    p.set_defaults(handler=_cmd_nev_recover)

    p = sub.add_parser("conv", help="free additive convolution density")
    p.add_argument("--phi1", required=True)
    p.add_argument("--phi2", required=True)
    p.add_argument("--grid", default="-5:5:201")
    common(p, "conv.csv")
    p.set_defaults(handler=_cmd_conv)

    p = sub.add_parser("semigroup", help="marginal density of t*phi")
    p.add_argument("--phi", required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--grid", default="-5:5:201")
    common(p, "semigroup.csv")
    p.set_defaults(handler=_cmd_semigroup)

    p = sub.add_parser("conformal-image", help="slit image of a rational psi")
    p.add_argument("--psi", required=True)
    p.add_argument("--span", type=float, default=6.0)
    p.add_argument("--samples", type=int, default=200)
    common(p, "conformal-image.csv")
    p.set_defaults(handler=_cmd_conformal_image)

    p = sub.add_parser("flowlines", help="images of Im/Re gridlines under Psi")
    p.add_argument("--psi", required=True)
    p.add_argument("--im-lines", type=int, default=8)
    p.add_argument("--re-lines", type=int, default=8)
    p.add_argument("--im-min", type=float, default=0.05)
    p.add_argument("--im-max", type=float, default=3.0)
    p.add_argument("--grid", default="-4:4:200")
    common(p, "flowlines.csv")
    p.set_defaults(handler=_cmd_flowlines)

    p = sub.add_parser("fal2-build", help="build a flow from psi")
    p.add_argument("--psi", required=True)
    common(p, "fal2-build.json")
    p.set_defaults(handler=_cmd_fal2_build)

    p = sub.add_parser("fal2-check", help="falsify the FAL2 property")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--t-samples")
    p.add_argument("--im-tol", type=float, default=1e-8)
    common(p, "fal2-check.json")
    p.set_defaults(handler=_cmd_fal2_check)

    p = sub.add_parser("flow", help="flow snapshots on a grid")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--t", default="1.0", help="comma-separated times")
    p.add_argument("--grid", default="-3:3:20")
    p.add_argument("--im-grid", default="0.1:3:20")
    p.add_argument("--route", choices=("auto", "conformal", "ode"),
                   default="auto")
    common(p, "flow.csv")
    p.set_defaults(handler=_cmd_flow)

    p = sub.add_parser("kernel", help="transition kernel density")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--grid", default="-8:8:321")
    common(p, "kernel.csv")
    p.set_defaults(handler=_cmd_kernel)

    p = sub.add_parser("marginal", help="marginal law density")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--grid", default="-8:8:321")
    common(p, "marginal.csv")
    p.set_defaults(handler=_cmd_marginal)

    p = sub.add_parser("increment", help="Voiculescu transform of increments")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--z")
    p.add_argument("--grid", default="-3:3:13")
    p.add_argument("--height", type=float, default=2.0)
    common(p, "increment.json")
    p.set_defaults(handler=_cmd_increment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for check failures
        return 0 if exc.code in (0, None) else ERROR
    try:
        if args.tol_abs <= 0 or args.tol_rel <= 0 or args.eps <= 0:
            raise FreeflowError("tolerances must be positive")
        return args.handler(args)
    except FreeflowError as exc:
        print(f"freeflow: error: {exc}", file=sys.stderr)
        return ERROR
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"freeflow: error: {exc}", file=sys.stderr)
        return ERROR


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
