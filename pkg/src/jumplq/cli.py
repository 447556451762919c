"""Command-line entry point.

Usage::

    python -m jumplq --config run.json [--seed N] [--out DIR]
                     [--dump-effective-config]

The JSON config selects a ``mode``:

``sre``
    Riccati solve; writes ``riccati.csv`` and ``report.txt``.
``frontier``
    Efficient frontier; writes ``frontier.csv``, ``feedback.csv`` and
    ``report.txt``.
``simulate``
    Monte Carlo under the synthesized feedback (``model``) or the efficient
    portfolio (``market``); writes ``report.txt`` and optionally
    ``paths.csv``.
``check-comparison``
    Comparison harness or a single explicit lattice pair.
``check-inequality``
    Elementary-inequality sweep.

Exit status: 0 success, 1 a check failed, 2 unreadable config, 3 invalid
config or arguments, 4 numerical failure.
"""

import argparse
import copy
import json
import os
import sys

from . import bsdej
from .conekit import DEFAULT_MAX_ITER, DEFAULT_TOL, Cone
from .errors import SolverError, ValidationError
from .meanvariance import (MarketModel, efficient_frontier, simulate_mv,
                           solve_mv)
from .simulate import (PathConfig, optimality_probe, simulate_controlled,
                       verify_value)
from .sre import LQCoefficients, solve_sre, solve_truncated

__all__ = ["main", "load_config", "effective_config", "run"]

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3, 4

MODES = ("sre", "frontier", "simulate", "check-comparison",
         "check-inequality")

_SECTIONS = {"mode", "model", "market", "cone", "numerics", "mc", "simulate",
             "comparison", "inequality", "output"}


class ConfigParseError(Exception):
    """The config file could not be read or is not valid JSON."""


def load_config(path):
    """Read a JSON config file into a dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigParseError("config root must be a JSON object")
    return data


def _section(cfg, name, allowed):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ValidationError(f"section {name!r} must be an object")
    extra = set(sec) - set(allowed)
    if extra:
        raise ValidationError(f"unknown keys in {name!r}: {sorted(extra)}")
    return sec


def _positive_int(value, name):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValidationError(f"{name} must be a positive integer")
    return int(value)


def _positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValidationError(f"{name} must be positive")
    return value


def _numerics(cfg):
    sec = _section(cfg, "numerics", ("steps", "tol", "max_iter", "scheme",
                                     "radius"))
    out = {
        "steps": _positive_int(sec.get("steps", 2000), "numerics.steps"),
        "tol": _positive(sec.get("tol", DEFAULT_TOL), "numerics.tol"),
        "max_iter": _positive_int(sec.get("max_iter", DEFAULT_MAX_ITER),
                                  "numerics.max_iter"),
        "scheme": str(sec.get("scheme", "rk4")),
        "radius": sec.get("radius"),
    }
    if out["scheme"] not in ("rk4", "implicit_euler"):
        raise ValidationError(f"unknown scheme {out['scheme']!r}")
    if out["radius"] is not None:
        out["radius"] = float(out["radius"])
        if not out["radius"] >= 0:
            raise ValidationError("numerics.radius must be nonnegative")
    return out


def _mc(cfg, seed):
    sec = _section(cfg, "mc", ("paths", "steps", "seed", "antithetic"))
    sec = dict(sec)
    if seed is not None:
        sec["seed"] = seed
    return PathConfig.from_dict(sec).to_dict()


def _control(value):
    if value in ("optimal", "zero"):
        return value
    if isinstance(value, dict) and set(value) == {"perturbed"}:
        return {"perturbed": float(value["perturbed"])}
    raise ValidationError(f"unknown control {value!r}")


def effective_config(cfg, seed=None, out=None):
    """Validate ``cfg`` and return it with every default filled in.

    The result is a plain JSON-compatible dict; feeding it back yields the
    same dict.
    """
    extra = set(cfg) - _SECTIONS
    if extra:
        raise ValidationError(f"unknown config sections {sorted(extra)}")
    mode = cfg.get("mode")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    eff = {"mode": mode}
    output = out if out is not None else cfg.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ValidationError("output must be a directory path")
    eff["output"] = output
    try:
        if mode in ("sre", "simulate") and "market" not in cfg:
            if "model" not in cfg:
                raise ValidationError(f"mode {mode!r} needs a model section")
            coeffs = LQCoefficients.from_dict(cfg["model"])
            eff["model"] = coeffs.to_dict()
            cone = (Cone.from_dict(cfg["cone"]) if "cone" in cfg
                    else Cone.full(coeffs.m))
            eff["cone"] = cone.to_dict()
            eff["numerics"] = _numerics(cfg)
        if mode == "frontier" or (mode == "simulate" and "market" in cfg):
            if "market" not in cfg:
                raise ValidationError("mode 'frontier' needs a market section")
            if "cone" in cfg:
                raise ValidationError("put the cone inside the market section")
            market = MarketModel.from_dict(cfg["market"])
            eff["market"] = market.to_dict()
            eff["numerics"] = _numerics(cfg)
            if mode == "frontier" and not market.targets:
                raise ValidationError("market.targets must list target means")
        if mode == "simulate":
            eff["mc"] = _mc(cfg, seed)
            sec = _section(cfg, "simulate", ("x0", "z", "control",
                                             "perturbations", "per_path_csv"))
            sim = {"per_path_csv": bool(sec.get("per_path_csv", False))}
            if "market" in cfg:
                if "z" not in sec:
                    raise ValidationError("simulate.z is required with a "
                                          "market")
                sim["z"] = float(sec["z"])
            else:
                sim["x0"] = float(sec.get("x0", 1.0))
                sim["control"] = _control(sec.get("control", "optimal"))
                sim["perturbations"] = [float(e) for e in
                                        sec.get("perturbations", [])]
            eff["simulate"] = sim
        if mode == "check-comparison":
            sec = _section(cfg, "comparison", (
                "pairs", "seed", "dims", "marks", "steps", "T", "tol",
                "scheme", "a", "b", "certificate"))
            comp = {"tol": float(sec.get("tol", 1e-10)),
                    "scheme": str(sec.get("scheme", "implicit"))}
            if comp["scheme"] not in ("implicit", "explicit"):
                raise ValidationError("comparison.scheme must be implicit "
                                      "or explicit")
            if "a" in sec or "b" in sec:
                if not ("a" in sec and "b" in sec):
                    raise ValidationError("explicit comparison needs a and b")
                comp["a"] = bsdej.LatticeBSDEJ.from_dict(sec["a"]).to_dict()
                comp["b"] = bsdej.LatticeBSDEJ.from_dict(sec["b"]).to_dict()
                cert = sec.get("certificate", {})
                c = bsdej.Certificate(**cert)
                comp["certificate"] = {"gamma_lower": float(c.gamma_lower),
                                       "monotone_coupling":
                                           bool(c.monotone_coupling)}
            else:
                s = seed if seed is not None else sec.get("seed", 0)
                comp.update({
                    "pairs": _positive_int(sec.get("pairs", 500),
                                           "comparison.pairs"),
                    "seed": int(s),
                    "dims": [_positive_int(x, "comparison.dims")
                             for x in sec.get("dims", [1, 2, 3])],
                    "marks": [_positive_int(x, "comparison.marks")
                              for x in sec.get("marks", [1, 2])],
                    "steps": _positive_int(sec.get("steps", 60),
                                           "comparison.steps"),
                    "T": _positive(sec.get("T", 1.0), "comparison.T"),
                })
            eff["comparison"] = comp
        if mode == "check-inequality":
            sec = _section(cfg, "inequality", ("samples", "seed", "tol"))
            s = seed if seed is not None else sec.get("seed", 0)
            eff["inequality"] = {
                "samples": _positive_int(sec.get("samples", 10 ** 6),
                                         "inequality.samples"),
                "seed": int(s),
                "tol": _positive(sec.get("tol", 1e-12), "inequality.tol"),
            }
    except (TypeError, KeyError, AttributeError) as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    return eff


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, name), "w", newline="") as fh:
        fh.write(text)


def _riccati(eff, coeffs, cone):
    num = eff["numerics"]
    if num["radius"] is not None:
        return solve_truncated(coeffs, cone, num["steps"], num["radius"],
                               num["scheme"], num["tol"], num["max_iter"])
    return solve_sre(coeffs, cone, num["steps"], num["scheme"], num["tol"],
                     num["max_iter"])


def _run_sre(eff):
    coeffs = LQCoefficients.from_dict(eff["model"])
    cone = Cone.from_dict(eff["cone"])
    sol = _riccati(eff, coeffs, cone)
    b = sol.bounds
    lines = [f"case={sol.case}", f"P1_0={sol.P1[0]:.17g}",
             f"P2_0={sol.P2[0]:.17g}",
             f"bounds c={b.c:.17g} M={b.M:.17g} "
             f"max_violation={b.max_violation:.6e} "
             f"{'PASS' if b.passed else 'FAIL'}"]
    return {"riccati.csv": sol.to_csv(),
            "report.txt": "\n".join(lines) + "\n"}, b.passed


def _run_frontier(eff):
    market = MarketModel.from_dict(eff["market"])
    fr = efficient_frontier(market, eff["numerics"]["steps"])
    hdr = ["shift(t)=lambda_star*exp(-int_t^T r)"]
    hdr += [f"z={r.z:.17g} lambda_star={r.lambda_star:.17g}"
            for r in fr.rows]
    report = (f"P10={fr.P10:.17g}\nP20={fr.P20:.17g}\n"
              f"discount={fr.discount:.17g}\n"
              f"strict P20*discount^2={fr.P20 * fr.discount ** 2:.17g} PASS\n")
    return {"frontier.csv": fr.to_csv(),
            "feedback.csv": fr.riccati.to_csv(None, hdr),
            "report.txt": report}, True


def _run_simulate(eff):
    mc = PathConfig.from_dict(eff["mc"])
    sim = eff["simulate"]
    files = {}
    if "market" in eff:
        market = MarketModel.from_dict(eff["market"])
        sol = solve_mv(market, sim["z"], eff["numerics"]["steps"])
        rep = simulate_mv(sol, mc)
        return {"report.txt": rep.to_text()}, rep.mean_ok and rep.var_ok
    coeffs = LQCoefficients.from_dict(eff["model"])
    cone = Cone.from_dict(eff["cone"])
    sol = _riccati(eff, coeffs, cone)
    ctl = sim["control"]
    if isinstance(ctl, dict):
        ctl = ("perturbed", ctl["perturbed"])
    rep = simulate_controlled(coeffs, sol, sim["x0"], mc, ctl,
                              keep_paths=sim["per_path_csv"])
    text = rep.to_text()
    ok = True
    if ctl == "optimal":
        chk = verify_value(rep, sol, sim["x0"])
        text += chk.to_text() + "\n"
        ok = chk.passed
        if sim["perturbations"]:
            probe = optimality_probe(coeffs, sol, sim["x0"], mc,
                                     sim["perturbations"])
            text += probe.to_text()
            ok = ok and probe.passed
    files["report.txt"] = text
    if sim["per_path_csv"]:
        files["paths.csv"] = rep.paths_csv()
    return files, ok


def _run_comparison(eff):
    comp = eff["comparison"]
    if "a" in comp:
        a = bsdej.LatticeBSDEJ.from_dict(comp["a"])
        b = bsdej.LatticeBSDEJ.from_dict(comp["b"])
        cert = bsdej.Certificate(**comp["certificate"])
        rep = bsdej.check_comparison(a, b, cert, comp["tol"], comp["scheme"])
        text = rep.to_text() + "\n"
        if rep.reasons:
            text += "".join(f"uncertified: {r}\n" for r in rep.reasons)
        return {"report.txt": text}, rep.status != "FAIL"
    rep = bsdej.run_comparison_harness(
        comp["pairs"], comp["seed"], tuple(comp["dims"]),
        tuple(comp["marks"]), comp["steps"], comp["T"], comp["tol"])
    return {"report.txt": rep.to_text() + "\n"}, rep.violations == 0


def _run_inequality(eff):
    sec = eff["inequality"]
    rep = bsdej.check_elementary_inequality(sec["samples"], sec["seed"],
                                            sec["tol"])
    return {"report.txt": rep.to_text() + "\n"}, rep.violations == 0


_RUNNERS = {"sre": _run_sre, "frontier": _run_frontier,
            "simulate": _run_simulate, "check-comparison": _run_comparison,
            "check-inequality": _run_inequality}


def run(eff):
    """Execute an effective config; return ``(files, passed)``.

    ``files`` maps output file names to their text; nothing is written.
    """
    return _RUNNERS[eff["mode"]](copy.deepcopy(eff))


def _build_parser():
    p = argparse.ArgumentParser(
        prog="jumplq",
        description="Riccati, mean-variance and comparison checks for "
                    "cone-constrained LQ control with jumps.")
    p.add_argument("--config", required=True, metavar="PATH",
                   help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None,
                   help="override every seed in the config")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="output directory (overrides the config)")
    p.add_argument("--dump-effective-config", action="store_true",
                   help="print the validated config with defaults and exit")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        if args.seed is not None and args.seed < 0:
            raise ValidationError("seed must be nonnegative")
        eff = effective_config(cfg, args.seed, args.out)
        if args.dump_effective_config:
            print(json.dumps(eff, indent=2, sort_keys=True))
            return EXIT_OK
        files, passed = run(eff)
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for name, text in files.items():
        _write(eff["output"], name, text)
    sys.stdout.write(files.get("report.txt", ""))
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
