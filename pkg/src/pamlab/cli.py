"""Command-line surface: `pam <command> [flags]`.

Every run is reproducible from its manifest: single evaluations emit JSON
with the full merged configuration embedded, CSV outputs get a sidecar
``<out>.manifest.json``, and any manifest can be re-fed via ``--config`` to
reproduce byte-identical numeric output.  Randomized commands refuse to run
without an explicit ``--seed``.  Exit codes: 0 success, 2 parameter error,
3 numerical non-convergence (the message carries the best iterate and its
residual).

Divergent quantities are serialized as the JSON string "inf" plus a
``divergent`` flag, never as a float sentinel.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import __version__, greens
from .lattice import Field, build_box
from .montecarlo import lambda_mc
from .phase import PHASE_CSV_HEADER, sweep
from .spectral import (
    ConvergenceError,
    PamParams,
    SolverOptions,
    check_gn,
    lambda_spectral,
    mu,
    tensor_gap,
)


class CliParamError(ValueError):
    """Invalid or missing command parameters (exit code 2)."""


@dataclass
class CommandResult:
    payload: dict                     # JSON-facing result body
    text: str                         # bare stdout form
    csv_header: tuple | None = None
    csv_rows: list | None = None


def _jsonable(value):
    """Floats that round-trip; infinities as the string 'inf'."""
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {exc}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats: {exc}")


def _seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pam",
        description="Annealed Lyapunov exponents of the parabolic Anderson "
                    "model with moving catalysts.")
    parser.add_argument("--version", action="version", version=f"pam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "d" in names:
            sp.add_argument("--d", type=int)
        if "n" in names:
            sp.add_argument("--n", type=int)
        if "p" in names:
            sp.add_argument("--p", type=int)
        if "kappa" in names:
            sp.add_argument("--kappa", type=float)
        if "rho" in names:
            sp.add_argument("--rho", type=float)
        if "tol" in names:
            sp.add_argument("--tol", type=float)
        sp.add_argument("--config", help="manifest JSON to take parameters from")
        sp.add_argument("--out", help="output file path")
        sp.add_argument("--format", choices=("json", "csv"), dest="fmt")

    sp = sub.add_parser("green", help="lattice Green function quantities")
    common(sp, "d", "tol")
    sp.add_argument("--quantity", choices=("zero", "at", "l2sq", "alpha"))
    sp.add_argument("--x", type=_int_list, help="site for --quantity at")
    sp.add_argument("--method",
                    choices=("time-integral", "fourier-quadrature", "monte-carlo"))
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=_seed_type)

    sp = sub.add_parser("mu", help="top of the spectrum of kappa*Delta + delta_0")
    common(sp, "d", "kappa", "tol")

    sp = sub.add_parser("lambda-spectral", help="certified box lower bounds of lambda_p")
    common(sp, "d", "n", "p", "kappa", "rho", "tol")
    sp.add_argument("--radius", type=int)
    sp.add_argument("--radii", type=_int_list)

    sp = sub.add_parser("lambda-mc", help="Feynman-Kac Monte Carlo for Lambda_p(t)")
    common(sp, "d", "n", "p", "kappa", "rho")
    sp.add_argument("--t", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=_seed_type)
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("phase", help="intermittency phase-diagram sweep (CSV)")
    common(sp, "d", "n", "kappa", "rho", "tol")
    sp.add_argument("--p-values", type=_int_list, dest="p_values")
    sp.add_argument("--kappas", type=_float_list)
    sp.add_argument("--rhos", type=_float_list)
    sp.add_argument("--radii", type=_int_list)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--resume", action="store_true", default=None)

    sp = sub.add_parser("check-gn", help="Gagliardo-Nirenberg inequality on random fields")
    common(sp, "d")
    sp.add_argument("--radius", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=_seed_type)

    sp = sub.add_parser("tensor-gap", help="certified lambda_2 - lambda_1 gap from p=1")
    common(sp, "d", "n", "kappa", "rho", "tol")
    sp.add_argument("--radius", type=int)
    return parser


# per-command parameter schema: (name, required, default)
_SCHEMAS: dict[str, list[tuple[str, bool, object]]] = {
    "green": [("d", True, None), ("quantity", False, "zero"), ("x", False, None),
              ("method", False, "time-integral"), ("tol", False, 1e-9),
              ("samples", False, 4_000_000), ("seed", False, None)],
    "mu": [("d", True, None), ("kappa", True, None), ("tol", False, 1e-10)],
    "lambda-spectral": [("d", True, None), ("n", True, None), ("p", True, None),
                        ("kappa", True, None), ("rho", True, None),
                        ("tol", False, 1e-8), ("radius", False, None),
                        ("radii", False, None)],
    "lambda-mc": [("d", True, None), ("n", True, None), ("p", True, None),
                  ("kappa", True, None), ("rho", True, None), ("t", True, None),
                  ("samples", False, 10_000), ("seed", False, None),
                  ("workers", False, 1)],
    "phase": [("d", True, None), ("n", True, None), ("p_values", False, [1, 2]),
              ("kappa", False, None), ("rho", False, None),
              ("kappas", False, None), ("rhos", False, None),
              ("radii", False, None), ("tol", False, 1e-8),
              ("workers", False, 1), ("resume", False, False)],
    "check-gn": [("d", True, None), ("radius", False, 6),
                 ("samples", False, 1000), ("seed", False, None)],
    "tensor-gap": [("d", True, None), ("n", True, None), ("kappa", True, None),
                   ("rho", True, None), ("radius", False, 6), ("tol", False, 1e-10)],
}


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliParamError(f"cannot read config {path}: {exc}")
    manifest = doc.get("manifest", doc)
    cfg_cmd = manifest.get("command")
    if cfg_cmd is not None and cfg_cmd != command:
        raise CliParamError(
            f"config {path} is for command {cfg_cmd!r}, not {command!r}")
    params = manifest.get("params", manifest)
    return dict(params)


def _merge_config(args: argparse.Namespace) -> dict:
    schema = _SCHEMAS[args.command]
    loaded = _load_config(args.config, args.command) if args.config else {}
    cfg = {}
    for name, required, default in schema:
        explicit = getattr(args, name, None)
        if explicit is not None:
            cfg[name] = explicit
        elif name in loaded and loaded[name] is not None:
            cfg[name] = loaded[name]
        elif required:
            raise CliParamError(f"missing required parameter --{name.replace('_', '-')}")
        else:
            cfg[name] = default
    return cfg


def _params_from(cfg: dict) -> PamParams:
    return PamParams(d=cfg["d"], n=cfg["n"], p=cfg["p"],
                     kappa=cfg["kappa"], rho=cfg["rho"])


def cmd_green(cfg: dict) -> CommandResult:
    quantity = cfg["quantity"]
    if quantity == "zero":
        if cfg["method"] == "monte-carlo" and cfg["seed"] is None:
            raise CliParamError("--seed is required for the monte-carlo method")
        est = greens.green_zero(cfg["d"], cfg["tol"], method=cfg["method"],
                                seed=cfg["seed"], samples=cfg["samples"])
    elif quantity == "at":
        if cfg["x"] is None:
            raise CliParamError("--x is required for --quantity at")
        est = greens.green_at(cfg["d"], cfg["x"], cfg["tol"])
    elif quantity == "l2sq":
        est = greens.green_l2sq(cfg["d"], cfg["tol"])
    else:
        est = greens.alpha(cfg["d"], cfg["tol"])
    payload = {"d": est.d, "quantity": est.quantity, "value": est.value,
               "abs_error": est.abs_error, "method": est.method,
               "divergent": est.divergent}
    return CommandResult(
        payload=payload, text=_fmt(est.value),
        csv_header=("d", "quantity", "value", "abs_error", "method"),
        csv_rows=[(str(est.d), est.quantity, _fmt(est.value),
                   _fmt(est.abs_error), est.method)])


def cmd_mu(cfg: dict) -> CommandResult:
    value = mu(cfg["d"], cfg["kappa"], cfg["tol"])
    payload = {"d": cfg["d"], "kappa": cfg["kappa"], "tol": cfg["tol"], "mu": value}
    return CommandResult(
        payload=payload, text=_fmt(value),
        csv_header=("d", "kappa", "mu"),
        csv_rows=[(str(cfg["d"]), _fmt(cfg["kappa"]), _fmt(value))])


def cmd_lambda_spectral(cfg: dict) -> CommandResult:
    params = _params_from(cfg)
    if cfg["radii"] is not None:
        radii = list(cfg["radii"])
    elif cfg["radius"] is not None:
        radii = [cfg["radius"]]
    else:
        raise CliParamError("one of --radius or --radii is required")
    ests = lambda_spectral(params, radii, SolverOptions(tol=cfg["tol"]))
    payload = {
        "params": vars(params).copy(),
        "estimates": [{"R": e.radius, "lambda_box": e.value, "residual": e.error,
                       "converged": e.converged} for e in ests],
    }
    rows = [(str(params.d), str(params.n), str(params.p), _fmt(params.kappa),
             _fmt(params.rho), str(e.radius), _fmt(e.value), _fmt(e.error))
            for e in ests]
    text = "\n".join(f"{e.radius} {_fmt(e.value)}" for e in ests)
    return CommandResult(
        payload=payload, text=text,
        csv_header=("d", "n", "p", "kappa", "rho", "R", "lambda_box", "residual"),
        csv_rows=rows)


def cmd_lambda_mc(cfg: dict) -> CommandResult:
    if cfg["seed"] is None:
        raise CliParamError("--seed is required: Monte Carlo runs must be reproducible")
    params = _params_from(cfg)
    est = lambda_mc(params, cfg["t"], cfg["samples"], cfg["seed"],
                    workers=cfg["workers"])
    interval_ok = est.ess >= 30.0
    payload = {
        "params": vars(params).copy(),
        "t": est.t, "samples": est.samples, "seed": est.seed,
        "lambda_t": est.lambda_t,
        "stderr": est.stderr if interval_ok else None,
        "ess": est.ess,
    }
    if interval_ok:
        text = f"{_fmt(est.lambda_t)} +- {_fmt(1.96 * est.stderr)}"
    else:
        text = (f"{_fmt(est.lambda_t)} (ESS {est.ess:.1f} < 30: "
                f"confidence interval suppressed)")
    row = (str(params.d), str(params.n), str(params.p), _fmt(params.kappa),
           _fmt(params.rho), _fmt(est.t), str(est.samples), str(est.seed),
           _fmt(est.lambda_t), _fmt(est.stderr), _fmt(est.ess))
    return CommandResult(
        payload=payload, text=text,
        csv_header=("d", "n", "p", "kappa", "rho", "t", "samples", "seed",
                    "lambda_t", "stderr", "ess"),
        csv_rows=[row])


def cmd_phase(cfg: dict) -> CommandResult:
    if cfg["kappas"] is not None:
        kappas = cfg["kappas"]
    elif cfg["kappa"] is not None:
        kappas = [cfg["kappa"]]
    else:
        raise CliParamError("one of --kappa or --kappas is required")
    if cfg["rhos"] is not None:
        rhos = cfg["rhos"]
    elif cfg["rho"] is not None:
        rhos = [cfg["rho"]]
    else:
        raise CliParamError("one of --rho or --rhos is required")
    if not cfg.get("out"):
        raise CliParamError("phase sweeps write CSV and require --out")
    rows = sweep(cfg["d"], cfg["n"], cfg["p_values"], kappas, rhos, cfg["out"],
                 radii=cfg["radii"], tol=cfg["tol"], workers=cfg["workers"],
                 resume=cfg["resume"])
    payload = {"out": cfg["out"], "rows_written": len(rows),
               "header": list(PHASE_CSV_HEADER)}
    return CommandResult(payload=payload,
                         text=f"{len(rows)} rows -> {cfg['out']}")


def cmd_check_gn(cfg: dict) -> CommandResult:
    if cfg["seed"] is None:
        raise CliParamError("--seed is required: the fields are randomly drawn")
    d = cfg["d"]
    if d not in (1, 2):
        raise CliParamError(f"--d must be 1 or 2, got {d}")
    box = build_box(d, cfg["radius"])
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg["seed"])))
    holds_count = 0
    worst = math.inf
    for _ in range(cfg["samples"]):
        f = Field(box, rng.standard_normal(box.size))
        lhs, rhs, ok = check_gn(f, d)
        holds_count += ok
        worst = min(worst, rhs - lhs)
    payload = {"d": d, "radius": cfg["radius"], "samples": cfg["samples"],
               "seed": cfg["seed"], "holds": holds_count,
               "min_margin": worst}
    return CommandResult(payload=payload,
                         text=f"{holds_count}/{cfg['samples']} hold, "
                              f"min margin {_fmt(worst)}")


def cmd_tensor_gap(cfg: dict) -> CommandResult:
    params = PamParams(d=cfg["d"], n=cfg["n"], p=1,
                       kappa=cfg["kappa"], rho=cfg["rho"])
    tg = tensor_gap(params, cfg["radius"], SolverOptions(tol=cfg["tol"]))
    payload = {"params": vars(params).copy(), "R": cfg["radius"],
               "lambda1": tg.lambda1, "gap": tg.gap, "rayleigh2": tg.rayleigh2}
    text = (f"lambda1 {_fmt(tg.lambda1)}  gap {_fmt(tg.gap)}  "
            f"rayleigh2 {_fmt(tg.rayleigh2)}")
    return CommandResult(payload=payload, text=text)


_COMMANDS: dict[str, Callable[[dict], CommandResult]] = {
    "green": cmd_green,
    "mu": cmd_mu,
    "lambda-spectral": cmd_lambda_spectral,
    "lambda-mc": cmd_lambda_mc,
    "phase": cmd_phase,
    "check-gn": cmd_check_gn,
    "tensor-gap": cmd_tensor_gap,
}


def _emit(command: str, cfg: dict, result: CommandResult,
          fmt: str | None, out: str | None) -> None:
    # the manifest carries only the numeric configuration: same manifest,
    # same numbers, regardless of where the output lands
    manifest = {"command": command, "version": __version__,
                "params": _jsonable({k: v for k, v in cfg.items() if k != "out"})}
    if fmt == "csv":
        if result.csv_rows is None and command != "phase":
            raise CliParamError(f"{command} has no CSV form")
        if command == "phase":
            # sweep already wrote its CSV; only the sidecar remains
            _write_manifest(cfg["out"], manifest)
            print(result.text)
            return
        if not out:
            raise CliParamError("--format csv requires --out")
        import csv as _csv

        with open(out, "w", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(result.csv_header)
            writer.writerows(result.csv_rows)
        _write_manifest(out, manifest)
        print(f"wrote {out}")
        return
    document = {"manifest": manifest, "result": _jsonable(result.payload)}
    blob = json.dumps(document, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(blob + "\n")
        print(f"wrote {out}")
    elif fmt == "json":
        print(blob)
    else:
        print(result.text)


def _write_manifest(out: str, manifest: dict) -> None:
    with open(out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = args.fmt
    if args.command == "phase" and fmt is None:
        fmt = "csv"
    try:
        cfg = _merge_config(args)
        if args.out is not None:
            cfg["out"] = args.out
        elif args.command == "phase" and "out" not in cfg:
            cfg["out"] = None
        result = _COMMANDS[args.command](cfg)
        _emit(args.command, cfg, result, fmt, args.out)
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CliParamError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
