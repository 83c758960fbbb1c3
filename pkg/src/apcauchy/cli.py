"""Command-line driver: ``apcauchy <subcommand> [--config FILE] [--out DIR]``.

Exit status is 0 when the run's verdict passes, 2 when a hypothesis or
certificate fails, 1 on usage or input errors.  Every subcommand writes
JSON (and, where there is a trajectory, CSV) into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

_THREADS = os.environ.get("APCAUCHY_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# defaults double as the whitelist of config keys
DEFAULTS = {
    "ap-test": {"forcing": "trig", "csv": None, "eps": 0.05, "tau_max": 2000.0,
                "tau_step": 0.01, "window": None},
    "stepanov": {"forcing": "pulse2", "csv": None, "p": 1.0, "eps": 0.05,
                 "tau_max": 20.0, "tau_step": 0.01, "window": [0.0, 40.0, 0.01],
                 "test": "ap"},
    "compose": {"p": 2, "r": 4, "forcing": "sin", "x": "cos", "a": 0.1,
                "eps": 0.05, "tau_max": 20.0, "tau_step": 0.01,
                "window": [0.0, 60.0, 0.01], "mode": "AP", "lipschitz": "sampled"},
    "conv": {"kernel": {"M": 1.0, "c": 1.0, "beta": 0.5}, "family": None,
             "forcing": "sin", "kind": "finite", "window": [0.0, 20.0, 0.01],
             "p": "inf", "T_tail": None},
    "certify": {"model": "scalar-semilinear", "problem": None, "n_max": 5,
                "mode": "AP"},
    "solve-ap": {"model": "scalar-semilinear", "problem": None, "window": None,
                 "tol": 1e-10, "max_iter": 200, "verify": True},
    "solve-dfp": {"model": "scalar-semilinear", "problem": None, "window": None,
                  "u0": None, "tol": 1e-10, "max_iter": 200, "verify": True,
                  "force": False},
    "mn": {"M": 1.0, "c": 1.0, "beta": 1.0, "L": 0.5, "lipschitz_csv": None,
           "n": 3, "method": "auto", "n_samples": 20000, "t_max": None},
    "heat-demo": {"n": 32, "b": 1.0, "m": "one", "p": 2.0, "k": 0.0,
                  "amplitude": 1.0, "t_end": 20.0, "h": 0.05, "mode": "AP",
                  "tol": 1e-10},
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="apcauchy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name in DEFAULTS:
        sp = sub.add_parser(name, help=f"run {name}")
        sp.add_argument("--config", type=Path, help="JSON config document")
        sp.add_argument("--out", type=Path, default=Path("apcauchy-out"),
                        help="output directory (default: apcauchy-out)")
        sp.add_argument("--tol", type=float, help="solver tolerance override")
        sp.add_argument("--eps", type=float, help="epsilon override")
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    return ap


def load_config(command: str, path: Path | None, tol=None, eps=None) -> dict:
    """Defaults for ``command`` updated from the config file; unknown keys raise."""
    cfg = dict(DEFAULTS[command])
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"--config: cannot read {path}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: invalid JSON ({exc.msg} at line {exc.lineno})")
        if not isinstance(doc, dict):
            raise UsageError("--config: expected a JSON object")
        for key in doc:
            if key not in cfg:
                raise UsageError(f"unknown config field {key!r} for {command}")
        cfg.update(doc)
    if tol is not None:
        if "tol" not in cfg:
            raise UsageError(f"--tol does not apply to {command}")
        cfg["tol"] = tol
    if eps is not None:
        if "eps" not in cfg:
            raise UsageError(f"--eps does not apply to {command}")
        cfg["eps"] = eps
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _float(cfg, key):
    v = cfg[key]
    try:
        return math.inf if v in ("inf", "infinity") else float(v)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected a number, got {v!r}")


def _window(cfg, key="window"):
    from .models import window_from
    try:
        return window_from(cfg[key], key)
    except ValueError as exc:
        raise UsageError(str(exc))


def _signal(cfg):
    """Forcing by name or a grid function read from ``csv``."""
    from .models import forcing_library
    from .serialize import read_grid_csv
    if cfg.get("csv"):
        try:
            return read_grid_csv(cfg["csv"])
        except (OSError, ValueError) as exc:
            raise UsageError(f"csv: {exc}")
    try:
        return forcing_library(cfg["forcing"]).function
    except KeyError:
        raise UsageError(f"forcing: unknown name {cfg['forcing']!r}")


def _problem(cfg, mode):
    from .models import get_model, problem_from_document
    if cfg.get("problem") is not None:
        doc = cfg["problem"]
        if isinstance(doc, str):
            try:
                doc = json.loads(Path(doc).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"problem: cannot load {cfg['problem']}: {exc}")
        doc = dict(doc)
        doc.setdefault("mode", mode)
        if cfg.get("window") is not None:
            doc["window"] = cfg["window"]
        if cfg.get("u0") is not None:
            doc["u0"] = cfg["u0"]
        try:
            return problem_from_document(doc)
        except ValueError as exc:
            raise UsageError(f"problem: {exc}")
    window = _window(cfg) if cfg.get("window") is not None else None
    try:
        return get_model(cfg["model"], mode, window, cfg.get("u0"))
    except KeyError:
        raise UsageError(f"model: unknown name {cfg['model']!r}")
    except ValueError as exc:
        raise UsageError(f"u0: {exc}")


def _status(ok: bool) -> int:
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# subcommands; each returns (exit status, summary dict)


def cmd_ap_test(cfg, out, seed):
    from .ap_analysis import ap_test
    from .serialize import write_column_csv, write_json
    f = _signal(cfg)
    window = _window(cfg) if cfg["window"] is not None else None
    rep = ap_test(f, _float(cfg, "eps"), _float(cfg, "tau_max"),
                  _float(cfg, "tau_step"), window)
    write_json(out / "ap_report.json", rep.to_dict(max_periods=10**9))
    write_column_csv(out / "periods.csv", "tau", rep.found_periods)
    return _status(rep.passed), {"verdict": rep.verdict,
                                 "inclusion_length": rep.inclusion_length}


def cmd_stepanov(cfg, out, seed):
    from .stepanov import sp_aap_test, sp_ap_test, stepanov_norm
    from .serialize import write_json
    f = _signal(cfg)
    p = _float(cfg, "p")
    window = _window(cfg) if cfg["window"] is not None else None
    test = cfg["test"]
    if test == "norm":
        norm = stepanov_norm(f, p, window)
        write_json(out / "stepanov_report.json", {"p": p, "norm": norm})
        return EXIT_PASS, {"norm": norm}
    if test not in ("ap", "aap"):
        raise UsageError(f"test: expected ap, aap or norm, got {test!r}")
    fn = sp_ap_test if test == "ap" else sp_aap_test
    rep = fn(f, p, _float(cfg, "eps"), _float(cfg, "tau_max"),
             _float(cfg, "tau_step"), window)
    write_json(out / "stepanov_report.json", rep)
    return _status(rep.passed), {"verdict": rep.ap_verdict or rep.aap_verdict,
                                 "norm": rep.norm}


def cmd_compose(cfg, out, seed):
    import numpy as np
    from .grid import GridFunction
    from .models import forcing_library
    from .serialize import write_json
    from .stepanov import LipschitzData, composition_exponent
    from .stepanov import compose_and_verify
    grid = _window(cfg)
    a = _float(cfg, "a")
    try:
        fo = forcing_library(cfg["forcing"]).function
        xf = forcing_library(cfg["x"]).function
    except KeyError as exc:
        raise UsageError(f"forcing/x: unknown name {exc.args[0]}")
    try:
        exps = composition_exponent(cfg["p"], cfg["r"])
    except ValueError as exc:
        raise UsageError(f"p/r: {exc}")

    def f(t, y):
        return np.asarray(fo(t), dtype=float) + a * np.asarray(y, dtype=float)

    x = GridFunction(grid, xf(grid.nodes))
    if cfg["lipschitz"] == "sampled":
        lip = LipschitzData.sampled(GridFunction(grid, np.full((grid.n, 1), abs(a))))
    elif cfg["lipschitz"] == "constant":
        lip = LipschitzData.constant(abs(a))
    else:
        raise UsageError("lipschitz: expected 'sampled' or 'constant'")
    rep = compose_and_verify(f, x, exps, lip, _float(cfg, "eps"), grid,
                             _float(cfg, "tau_max"), _float(cfg, "tau_step"),
                             cfg["mode"], seed=seed)
    write_json(out / "compose_report.json", rep)
    return _status(rep.verdict == "pass"), {"verdict": rep.verdict,
                                            "q": rep.exponent}


def cmd_conv(cfg, out, seed):
    from .convolution import QuadratureConfig, finite_convolution, infinite_convolution
    from .grid import GridFunction
    from .models import family_from_dict, forcing_library
    from .operators import KernelEnvelope
    from .serialize import write_grid_csv, write_json
    window = _window(cfg)
    try:
        if cfg["family"] is not None:
            kernel = family_from_dict(cfg["family"])
        else:
            k = cfg["kernel"]
            kernel = KernelEnvelope(float(k["M"]), float(k["c"]), float(k["beta"]))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"kernel: missing or invalid field {exc}")
    except ValueError as exc:
        raise UsageError(f"kernel: {exc}")
    try:
        fo = forcing_library(cfg["forcing"]).function
    except KeyError:
        raise UsageError(f"forcing: unknown name {cfg['forcing']!r}")
    qc = QuadratureConfig(T_tail=None if cfg["T_tail"] is None else _float(cfg, "T_tail"))
    p = _float(cfg, "p")
    if cfg["kind"] == "finite":
        import numpy as np
        vals = np.asarray(fo(window.nodes), dtype=float)
        res = finite_convolution(kernel, GridFunction(window, vals), qc, p)
    elif cfg["kind"] == "infinite":
        res = infinite_convolution(kernel, fo, window, qc, p)
    else:
        raise UsageError("kind: expected 'finite' or 'infinite'")
    write_grid_csv(out / "conv.csv", res.values)
    write_json(out / "conv.json", res.sidecar())
    return EXIT_PASS, res.sidecar()


def cmd_certify(cfg, out, seed):
    from .serialize import write_json
    from .solver import contraction_report
    mode = cfg["mode"]
    if mode not in ("AP", "DFP"):
        raise UsageError("mode: expected AP or DFP")
    prob = _problem(dict(cfg, u0=None), mode)
    rep = contraction_report(prob, int(cfg["n_max"]), seed)
    write_json(out / "certificate.json", rep)
    ok = rep.ap_certified if mode == "AP" else rep.dfp_certified
    return _status(ok), {"rho": rep.rho, "certified": ok}


def _solve(cfg, out, seed, mode):
    from .serialize import write_grid_csv, write_json
    from .solver import solve_ap, solve_dfp, verify_solution
    prob = _problem(cfg, mode)
    tol = _float(cfg, "tol")
    if mode == "AP":
        res = solve_ap(prob, tol, int(cfg["max_iter"]))
    else:
        res = solve_dfp(prob, tol, int(cfg["max_iter"]), force=bool(cfg["force"]))
    bundle = res.to_dict()
    if cfg["verify"]:
        bundle["verification"] = verify_solution(res, prob, tol).to_dict()
    write_grid_csv(out / "trajectory.csv", res.u)
    write_json(out / "solve.json", bundle)
    return _status(res.certified), {"iterations": res.iterations,
                                    "residual": res.residual}


def cmd_solve_ap(cfg, out, seed):
    return _solve(cfg, out, seed, "AP")


def cmd_solve_dfp(cfg, out, seed):
    return _solve(cfg, out, seed, "DFP")


def cmd_mn(cfg, out, seed):
    from .serialize import read_grid_csv, write_json
    from .solver import compute_Mn, kret_threshold
    from .stepanov import LipschitzData
    M, c, beta = _float(cfg, "M"), _float(cfg, "c"), _float(cfg, "beta")
    if cfg["lipschitz_csv"]:
        try:
            lip = LipschitzData.sampled(read_grid_csv(cfg["lipschitz_csv"]))
        except (OSError, ValueError) as exc:
            raise UsageError(f"lipschitz_csv: {exc}")
    else:
        lip = LipschitzData.constant(_float(cfg, "L"))
    t_max = None if cfg["t_max"] is None else _float(cfg, "t_max")
    values = [compute_Mn(lip, M, c, beta, n, cfg["method"], t_max=t_max,
                         n_samples=int(cfg["n_samples"]), seed=seed)
              for n in range(1, int(cfg["n"]) + 1)]
    thr = kret_threshold(M, c, beta)
    first = next((i for i, v in enumerate(values, 1) if v < 1), None)
    doc = {"M_n": values, "kret_threshold": thr, "lipschitz_sup": lip.sup(),
           "kret": "pass" if values[0] < 1 else "fail", "first_below_one": first}
    write_json(out / "mn.json", doc)
    return _status(first is not None), {"M_n": values}


def cmd_heat_demo(cfg, out, seed):
    import numpy as np
    from .grid import TimeGrid
    from .models import HeatModelSpec, heat_mode_oracle, poisson_heat_model
    from .serialize import write_grid_csv, write_json
    from .solver import solve_ap, solve_dfp
    m = cfg["m"] if isinstance(cfg["m"], str) else np.asarray(cfg["m"], dtype=float)
    try:
        spec = HeatModelSpec(int(cfg["n"]), _float(cfg, "b"), m, _float(cfg, "p"),
                             _float(cfg, "k"), _float(cfg, "amplitude"))
        window = TimeGrid(0.0, _float(cfg, "t_end"), _float(cfg, "h"))
    except ValueError as exc:
        raise UsageError(str(exc))
    mode = cfg["mode"]
    if mode not in ("AP", "DFP"):
        raise UsageError("mode: expected AP or DFP")
    model = poisson_heat_model(spec, window, mode)
    tol = _float(cfg, "tol")
    solve = solve_ap if mode == "AP" else solve_dfp
    res = solve(model.problem, tol)
    report = dict(model.report, iterations=res.iterations, residual=res.residual,
                  certificate=res.certificate.to_dict())
    if isinstance(cfg["m"], str) and cfg["m"] == "one" and spec.k == 0:
        ref = heat_mode_oracle(spec, window.nodes, ap=(mode == "AP"))
        report["oracle_error"] = float(np.max(np.abs(res.u.values - ref)))
    write_grid_csv(out / "trajectory.csv", res.u)
    write_json(out / "heat_report.json", report)
    ok = res.certified and model.condition_P.get("passed", True)
    return _status(ok), {"singular_dim": model.report["singular_dim"],
                         "oracle_error": report.get("oracle_error")}


COMMANDS = {
    "ap-test": cmd_ap_test, "stepanov": cmd_stepanov, "compose": cmd_compose,
    "conv": cmd_conv, "certify": cmd_certify, "solve-ap": cmd_solve_ap,
    "solve-dfp": cmd_solve_dfp, "mn": cmd_mn, "heat-demo": cmd_heat_demo,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        cfg = load_config(args.command, args.config, args.tol, args.eps)
        args.out.mkdir(parents=True, exist_ok=True)
    except UsageError as exc:
        print(f"apcauchy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"apcauchy: error: --out: {exc}", file=sys.stderr)
        return EXIT_USAGE

    from .solver import CertificateError, ContractionViolated
    from .operators import BlockDivergenceError
    try:
        status, summary = COMMANDS[args.command](cfg, args.out, args.seed)
    except UsageError as exc:
        print(f"apcauchy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CertificateError, ContractionViolated, BlockDivergenceError) as exc:
        print(f"apcauchy: {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, KeyError, TypeError) as exc:
        print(f"apcauchy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    from .serialize import dumps
    print(dumps({"command": args.command, "status": status, **summary}), end="")
    return status


def main() -> None:
    sys.exit(run())
