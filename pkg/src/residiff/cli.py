"""Command-line front end for the simulator and the verification tools.

Seven subcommands, one per workflow::

    residiff validate --config cfg.json            structural map checks
    residiff simulate --config cfg.json            ensemble moments of X_n
    residiff mixing   --config cfg.json            grid mixing times T(eps)
    residiff kv       --config cfg.json            corrector variance rates
    residiff sweep    --config cfg.json            MC rate vs bounds over eps
    residiff minorize --config cfg.json            bump-chain / Doeblin stages
    residiff oracle   --config cfg.json            finite-chain dual rates

Every subcommand reads a JSON config file (unknown keys are rejected so a
typo cannot silently fall back to a default), writes CSV tables plus a
manifest sidecar into ``--out``, and exits

* 0 on success,
* 1 on a configuration problem (bad JSON, unknown keys, invalid map, ...),
* 2 when a numerical assertion fails (a bound is violated, a chain does
  not mix, a Doeblin constant is nonpositive).

``--seed`` overrides the config seed where one is used, ``--threads``
parallelizes trajectory blocks without changing a single output byte (the
stream partition and merge order are pinned to the block size, not the
thread count).  Floats are printed with ``%.17g`` and a fixed ``\\n`` line
terminator, so re-running a subcommand with the same config and seed
reproduces the CSV files bit for bit; the manifest records the sha256 of
both the resolved config and each output for checking exactly that.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from importlib import resources
from io import StringIO
from pathlib import Path

import numpy as np

from . import __version__, diffusivity, maps, minorize, oracle, process, transfer
from .errors import (BoundViolation, ConfigError, NoMixingWithinCap,
                     NotMixing, ResidiffError)

# Assertion-type failures (a verified quantity missed its bound) exit with
# 2; every other library error is a configuration problem and exits 1.
_ASSERTION_ERRORS = (BoundViolation, NotMixing, NoMixingWithinCap)

_BUNDLED_ORACLE_FIXTURES = ("oracle_a", "oracle_b", "oracle_c")


# -- small helpers -------------------------------------------------------------


def _fmt(value) -> str:
    """CSV cell: floats as %.17g (round-trip exact), everything else str."""
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path, header, rows) -> str:
    """Write one table with pinned formatting; return its sha256 hex."""
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_text(path, text: str) -> str:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _load_config(path, allowed, required=()) -> dict:
    """Read a JSON object config; reject unknown and missing keys."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(
            f"{path}: unknown config keys {unknown}; allowed: {sorted(allowed)}")
    missing = sorted(set(required) - set(cfg))
    if missing:
        raise ConfigError(f"{path}: missing required config keys {missing}")
    return cfg


def _config_digest(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()


def _write_manifest(out_dir, subcommand: str, cfg: dict, seed, threads: int,
                    outputs: dict, extra: dict | None = None):
    manifest = {
        "tool": "residiff",
        "version": __version__,
        "subcommand": subcommand,
        "config": cfg,
        "config_sha256": _config_digest(cfg),
        "seed": seed,
        "threads": threads,
        "outputs": {name: outputs[name] for name in sorted(outputs)},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"{subcommand}.manifest.json"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _bundled_path(name: str):
    trav = resources.files("residiff").joinpath("data", name + ".json")
    if not trav.is_file():
        raise ConfigError(f"no bundled fixture named {name!r}")
    return trav


def _effective_seed(cfg: dict, args, default: int = 0) -> int:
    """--seed beats the config; the resolved value goes back into the
    config dict so the manifest digest covers what actually ran."""
    seed = args.seed if args.seed is not None else cfg.get("seed", default)
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be a u64, got {seed}")
    cfg["seed"] = seed
    return seed


def _grid_for(cfg: dict, m) -> transfer.UlamGrid:
    if "G" in cfg:
        return transfer.UlamGrid(m.d, int(cfg["G"]))
    return transfer.UlamGrid.default(m.d)


def _eps_list(cfg: dict) -> list:
    eps = cfg["eps_list"]
    if not isinstance(eps, (list, tuple)) or not eps:
        raise ConfigError("eps_list must be a non-empty list")
    return [float(e) for e in eps]


def _direction(cfg: dict, d: int) -> np.ndarray:
    v = cfg.get("v", [1.0] * d)
    vv = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if vv.shape != (d,):
        raise ConfigError(f"v must have {d} components, got {vv.shape}")
    return vv


# -- subcommands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    """Structural map checks with a machine-readable failure list."""
    cfg = _load_config(args.config, allowed={"map"}, required=("map",))
    target = cfg["map"]
    failures: list[tuple[str, str]] = []
    checks = {}
    if target in maps.BUILTIN_MAPS:
        report = maps.validate_map(maps.BUILTIN_MAPS[target]())
        failures, checks = list(report.failures), dict(report.checks)
    else:
        # Build without the constructor's own validation so one pass can
        # report every failure instead of stopping at the first.
        try:
            with open(target, encoding="utf-8") as fh:
                data = json.load(fh)
            if "cells" not in data:
                raise ConfigError("map description lacks a 'cells' section")
            d = int(data.get("dimension", 0)) or None
            cells = [maps.make_cell(
                corner=e["corner"], side=e["side"], target=e["target"],
                matrix=e.get("matrix"), offset=e.get("offset"), d=d)
                for e in data["cells"]]
            m = maps.bernoulli_map(cells, validate=False)
        except (ResidiffError, OSError, KeyError, ValueError,
                ZeroDivisionError, TypeError, json.JSONDecodeError) as exc:
            failures = [(type(exc).__name__, str(exc))]
            checks = {}
        else:
            report = maps.validate_map(m)
            failures, checks = list(report.failures), dict(report.checks)

    ok = not failures
    print(json.dumps(
        {"ok": ok,
         "failures": [{"kind": k, "detail": d} for k, d in failures]},
        indent=2, sort_keys=True))

    rows = [(name, int(passed), "") for name, passed in sorted(checks.items())]
    rows += [(kind, 0, detail) for kind, detail in failures]
    outputs = {"validate.csv": _write_csv(
        args.out / "validate.csv", ("check", "ok", "detail"), rows)}
    _write_manifest(args.out, "validate", cfg, None, args.threads, outputs)
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    """Ensemble moments of the noisy orbit at the requested snapshots."""
    cfg = _load_config(
        args.config,
        allowed={"map", "eps", "n_steps", "trajectories", "seed", "initial",
                 "snapshots", "directions"},
        required=("map", "eps", "n_steps", "trajectories"))
    m = maps.resolve_map(cfg["map"])
    seed = _effective_seed(cfg, args)
    initial = cfg.get("initial", "uniform")
    if not isinstance(initial, str):
        initial = np.asarray(initial, dtype=np.float64)
    directions = cfg.get("directions")
    res = process.simulate_ensemble(
        m, initial, float(cfg["eps"]), int(cfg["n_steps"]),
        int(cfg["trajectories"]), seed, snapshots=cfg.get("snapshots"),
        directions=directions, threads=args.threads)

    d = m.d
    n_dirs = res.snapshots[0].directions.shape[0]
    header = ["step", "n"]
    header += [f"mean_{a}" for a in range(d)]
    header += [f"mean_se_{a}" for a in range(d)]
    header += [f"cov_{a}_{b}" for a in range(d) for b in range(a, d)]
    header += [f"cov_se_{a}_{b}" for a in range(d) for b in range(a, d)]
    header += [f"var_v{k}" for k in range(n_dirs)]
    header += [f"var_se_v{k}" for k in range(n_dirs)]
    rows = []
    for snap in res.snapshots:
        row = [snap.step, snap.n]
        row += [snap.mean[a] for a in range(d)]
        row += [snap.mean_se[a] for a in range(d)]
        row += [snap.cov[a, b] for a in range(d) for b in range(a, d)]
        row += [snap.cov_se[a, b] for a in range(d) for b in range(a, d)]
        row += list(snap.direction_var)
        row += list(snap.direction_var_se)
        rows.append(row)
    outputs = {"simulate.csv": _write_csv(
        args.out / "simulate.csv", header, rows)}
    _write_manifest(args.out, "simulate", cfg, seed, args.threads, outputs,
                    extra={"backend": res.backend})
    return 0


def cmd_mixing(args) -> int:
    """Torus-kernel mixing times over a list of noise levels."""
    cfg = _load_config(
        args.config,
        allowed={"map", "eps_list", "G", "threshold", "cap", "mode"},
        required=("map", "eps_list"))
    m = maps.resolve_map(cfg["map"])
    grid = _grid_for(cfg, m)
    threshold = float(cfg.get("threshold", 0.5))
    cap = int(cfg.get("cap", 10_000))
    mode = cfg.get("mode", "iterate")
    rows = []
    for eps in _eps_list(cfg):
        kern = transfer.build_displacement_kernel(m, eps, grid)
        t = transfer.mixing_time(kern, threshold=threshold, cap=cap, mode=mode)
        rows.append((eps, t, abs(math.log(eps)), t / abs(math.log(eps))))
    outputs = {"mixing.csv": _write_csv(
        args.out / "mixing.csv",
        ("eps", "t_mix", "abs_ln_eps", "ratio"), rows)}
    _write_manifest(args.out, "mixing", cfg, None, args.threads, outputs)
    return 0


def cmd_kv(args) -> int:
    """Corrector (Kipnis--Varadhan) variance rates on the torus grid."""
    cfg = _load_config(
        args.config,
        allowed={"map", "eps_list", "G", "v", "mode"},
        required=("map", "eps_list"))
    m = maps.resolve_map(cfg["map"])
    grid = _grid_for(cfg, m)
    v = _direction(cfg, m.d)
    mode = cfg.get("mode", "linear")
    rows = []
    for eps in _eps_list(cfg):
        kern = transfer.build_displacement_kernel(m, eps, grid)
        corr = transfer.corrector_solve(kern, mode=mode)
        rate = transfer.kv_rate(kern, corr, v)
        t = transfer.mixing_time(kern)
        rows.append((eps, rate, corr.residual, t))
    outputs = {"kv.csv": _write_csv(
        args.out / "kv.csv", ("eps", "kv_rate", "residual", "t_mix"), rows)}
    _write_manifest(args.out, "kv", cfg, None, args.threads, outputs)
    return 0


def cmd_sweep(args) -> int:
    """Monte Carlo variance rates against the floor and envelope bounds."""
    cfg = _load_config(
        args.config,
        allowed={"map", "eps_list", "v", "n", "trajectories", "seed",
                 "c_floor", "use_kv", "check_bounds"},
        required=("map", "eps_list"))
    m = maps.resolve_map(cfg["map"])
    seed = _effective_seed(cfg, args)
    v = _direction(cfg, m.d)
    report = diffusivity.residual_sweep(
        m, _eps_list(cfg), v,
        n=int(cfg.get("n", 4096)),
        trajectories=int(cfg.get("trajectories", 16 * process.BLOCK)),
        seed=seed,
        c_floor=float(cfg.get("c_floor", 0.2)),
        use_kv=cfg.get("use_kv"),
        threads=args.threads,
        check_bounds=bool(cfg.get("check_bounds", True)))
    outputs = {"sweep.csv": _write_text(args.out / "sweep.csv",
                                        report.to_csv())}
    _write_manifest(args.out, "sweep", cfg, seed, args.threads, outputs)
    return 0


def cmd_minorize(args) -> int:
    """Bump-chain contraction and Doeblin stage constants on one map."""
    cfg = _load_config(
        args.config,
        allowed={"map", "eps", "G", "cube", "symbols", "x", "stages",
                 "beta_slack", "margin"},
        required=("map", "eps"))
    m = maps.resolve_map(cfg["map"])
    eps = float(cfg["eps"])
    G = int(cfg.get("G", 2048))
    stages = cfg.get("stages", ["bump", "defrag", "one_step", "two_step"])
    known = {"bump", "defrag", "one_step", "two_step"}
    bad = [s for s in stages if s not in known]
    if bad:
        raise ConfigError(f"unknown stages {bad}; allowed: {sorted(known)}")

    rows = []
    if "bump" in stages:
        rep = minorize.verify_bump_chain(
            m, cfg.get("cube", 0), cfg.get("symbols", [1, 2]), eps, G=G,
            beta_slack=float(cfg.get("beta_slack", 0.05)),
            margin=int(cfg.get("margin", 2)))
        for n, rho in enumerate(rep.step_ratios, start=1):
            rows.append(("bump_step_ratio", n, rho))
        for n, a in enumerate(rep.a_per_step, start=1):
            rows.append(("bump_a_per_step", n, a))
        rows.append(("bump_a_fit", 0, rep.a_fit))
        rows.append(("bump_beta_emp", 0, rep.beta_emp))
        rows.append(("bump_beta_theory", 0, rep.beta_theory))
    x = float(cfg.get("x", 0.3))
    for stage in ("defrag", "one_step", "two_step"):
        if stage not in stages:
            continue
        rep = minorize.verify_doeblin(m, x, eps, stage, G=G)
        rows.append((f"doeblin_{stage}",
                     rep.target_cube if rep.target_cube is not None else 0,
                     rep.constant))
        if not rep.constant > 0:
            outputs = {"minorize.csv": _write_csv(
                args.out / "minorize.csv", ("record", "index", "value"), rows)}
            _write_manifest(args.out, "minorize", cfg, None, args.threads,
                            outputs)
            raise BoundViolation(
                f"Doeblin constant for stage {stage!r} is not positive: "
                f"{rep.constant}")
    outputs = {"minorize.csv": _write_csv(
        args.out / "minorize.csv", ("record", "index", "value"), rows)}
    _write_manifest(args.out, "minorize", cfg, None, args.threads, outputs)
    return 0


def cmd_oracle(args) -> int:
    """Dual variance rates (corrector vs differenced MC recursion) on
    finite-state lattice chains, plus the finite-n martingale identity."""
    cfg = _load_config(
        args.config,
        allowed={"fixtures", "n_random", "seed", "v", "n_pair", "tol",
                 "kv_n"},
        required=())
    specs = []
    fixtures = cfg.get("fixtures")
    if fixtures is None:
        fixtures = [f"bundled:{name}" for name in _BUNDLED_ORACLE_FIXTURES]
    for entry in fixtures:
        if isinstance(entry, str) and entry.startswith("bundled:"):
            trav = _bundled_path(entry[len("bundled:"):])
            spec = oracle.PeriodicChainSpec.from_json(
                json.loads(trav.read_text()))
        else:
            spec = oracle.load_spec(entry)
        specs.append(spec)
    n_random = int(cfg.get("n_random", 0))
    if n_random:
        seed = _effective_seed(cfg, args)
        specs += [oracle.random_spec(seed + i) for i in range(n_random)]

    tol = float(cfg.get("tol", 1e-6))
    kv_n = int(cfg.get("kv_n", 32))
    n_pair = tuple(int(n) for n in cfg.get("n_pair", (4096, 8192)))
    rows = []
    for spec in specs:
        v = _direction(cfg, spec.d)
        dual = oracle.exact_variance_rate_dual(spec, v, n_pair=n_pair, tol=tol)
        kv = oracle.kv_identity_check(spec, v, kv_n)
        row = [spec.name or f"S{spec.S}", spec.S, dual.rate_A, dual.rate_B,
               dual.diff, kv.diff]
        if spec.beta is not None:
            mnr = oracle.minorization_bound_check(spec, v, n_pair=n_pair)
            row += [mnr.rate, mnr.bound]
        else:
            row += [float("nan"), float("nan")]
        rows.append(row)
    outputs = {"oracle.csv": _write_csv(
        args.out / "oracle.csv",
        ("spec", "S", "rate_A", "rate_B", "abs_diff", "kv_diff",
         "minorize_rate", "minorize_bound"), rows)}
    _write_manifest(args.out, "oracle", cfg, cfg.get("seed"), args.threads,
                    outputs)
    return 0


# -- driver ----------------------------------------------------------------------


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "mixing": cmd_mixing,
    "kv": cmd_kv,
    "sweep": cmd_sweep,
    "minorize": cmd_minorize,
    "oracle": cmd_oracle,
}


class _Parser(argparse.ArgumentParser):
    """argparse funnels every usage problem through error(); raising
    ConfigError there routes it to the config-error exit code (1)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="residiff",
                     description="noisy expanding-map diffusivity toolkit")
    parser.add_argument("--version", action="version",
                        version=f"residiff {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0],
                           description=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed (u64)")
        p.add_argument("--threads", type=int, default=1,
                       help="trajectory-block threads (never changes output)")
        p.add_argument("--out", default=".",
                       help="directory for CSV and manifest outputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "detail": str(exc)}),
              file=sys.stderr)
        return 1
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.out = Path(args.out)
        args.out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.subcommand](args)
    except _ASSERTION_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 2
    except (ResidiffError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
