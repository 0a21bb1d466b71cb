"""Command-line front end: ``htsl <subcommand> [flags]``.

Every option can also come from a TOML or JSON file passed with ``--config``;
flags given on the command line win over the file. Outputs are canonical
(sorted-key JSON, 17-digit CSV floats), so a fixed config and seed always
produce the same bytes.

Exit status: 0 success, 2 unknown subcommand or invalid config, 3 numerical
guard violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import io as hio
from .growth import GrowthFunction, block_base, contraction_constant, doubling_bounds
from .processes import (KernelTruncationError, LfsmSpec, QuasiStationarySpec, deterministic_power_path,
                        simulate_iid, simulate_lfsm, simulate_quasi_stationary, simulate_stable_levy,
                        simulate_zero)
from .slln import SCHEMA_VERSION, moment_series, quasi_stationary_series, sssi_moment_identity
from .stable import Gaussian, StableLaw
from .verify import (DiagnosticsReport, borel_cantelli_budget, bridge_check, decay_diagnostic, path_sup,
                     tail_exponent)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_INVALID = 2
EXIT_GUARD = 3

FAMILIES = ("iid-normal", "iid-stable", "ma", "ma-geometric", "levy", "lfsm", "zero", "power-path")
PHI_KINDS = ("power", "power-log", "sqrt-log")
STABLE_FAMILIES = ("iid-stable", "levy", "lfsm")


class ConfigError(ValueError):
    pass


class GuardViolation(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    command: str
    family: str | None = None
    phi: GrowthFunction | None = None
    p: float = 2.0
    a: int = 2
    levels: int = 8
    paths: int = 1000
    seed: int = 0
    n: int | None = None
    out: str | None = None
    csv: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        if self.family in STABLE_FAMILIES:
            return float(self.params["alpha"])
        return 2.0


# per-command defaults for keys that the dataclass does not fix
_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"family": "iid-normal", "n": 16, "paths": 1},
    "constants": {},
    "check": {"family": "iid-normal", "phi": "sqrt-log", "levels": 8, "mode": "moment", "m_max": 40},
    "verify": {"battery": "decay", "family": "iid-normal", "phi": "sqrt-log", "levels": 12},
    "lfsm-demo": {"alpha": 1.5, "hurst": 0.8, "mesh": 4, "levels": 8, "paths": 500, "eps": 0.5},
}
_PARAM_DEFAULTS = {"alpha": 1.5, "skew": 0.0, "sd": 1.0, "rho": 0.5, "hurst": 0.7, "mesh": 1, "eps": 0.5,
                   "q": 1.0, "beta": 0.0}


def load_config_file(path: str) -> dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object at the top level")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _phi_from(spec: Any, opts: dict[str, Any]) -> GrowthFunction:
    if isinstance(spec, dict):
        try:
            return GrowthFunction.from_json(spec)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"phi table needs numeric q, beta, x0: {exc}") from exc
    get = lambda k: float(opts[k] if opts.get(k) is not None else _PARAM_DEFAULTS[k])
    if spec == "power":
        return GrowthFunction.power(get("q"))
    if spec == "power-log":
        return GrowthFunction(get("q"), get("beta"))
    if spec == "sqrt-log":
        return GrowthFunction.sqrt_log(get("eps"))
    raise ConfigError(f"unknown phi {spec!r}; choose from {', '.join(PHI_KINDS)} or give a table")


def resolve(command: str, flags: dict[str, Any]) -> ExperimentConfig:
    """Merge defaults < config file < flags into an :class:`ExperimentConfig`."""
    merged: dict[str, Any] = dict(_DEFAULTS[command])
    cfg_path = flags.pop("config", None)
    if cfg_path:
        known = set(flags) | set(merged) | set(_PARAM_DEFAULTS)
        file_opts = load_config_file(cfg_path)
        unknown = sorted(set(file_opts) - known)
        if unknown:
            raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
        merged.update(file_opts)
    merged.update({k: v for k, v in flags.items() if v is not None})

    cfg = ExperimentConfig(command)
    for key in ("p", "a", "levels", "paths", "seed", "n", "out", "csv", "family"):
        if merged.get(key) is not None:
            setattr(cfg, key, merged.pop(key))
        else:
            merged.pop(key, None)
    try:
        cfg.p = float(cfg.p)
        cfg.a, cfg.levels, cfg.paths, cfg.seed = int(cfg.a), int(cfg.levels), int(cfg.paths), int(cfg.seed)
        cfg.n = None if cfg.n is None else int(cfg.n)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric option: {exc}") from exc
    if cfg.family is not None and cfg.family not in FAMILIES:
        raise ConfigError(f"unknown family {cfg.family!r}; choose from {', '.join(FAMILIES)}")
    if cfg.paths < 1 or cfg.levels < 0 or cfg.a < 2 or cfg.p <= 0:
        raise ConfigError("need paths >= 1, levels >= 0, a >= 2, p > 0")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    phi_spec = merged.pop("phi", None)
    cfg.params = {k: v for k, v in merged.items() if v is not None}
    for k, default in _PARAM_DEFAULTS.items():
        cfg.params.setdefault(k, default)
    if phi_spec is not None:
        try:
            cfg.phi = _phi_from(phi_spec, cfg.params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _reject_infinite_moment(cfg: ExperimentConfig) -> None:
    if cfg.alpha < 2 and cfg.p >= cfg.alpha:
        raise ConfigError(f"p={cfg.p:g} >= alpha={cfg.alpha:g}: the p-th moment is infinite; "
                          "use `verify --battery tail` for stable tails")


# ----------------------------------------------------------------------------
# sources


def make_source(cfg: ExperimentConfig, n: int, lazy: bool = True):
    """Ensemble of ``cfg.family`` with ``n`` unit time steps (mesh steps for Levy paths)."""
    pr, fam, P, seed = cfg.params, cfg.family, cfg.paths, cfg.seed
    if fam == "iid-normal":
        return simulate_iid(Gaussian(float(pr["sd"])), n, P, seed, lazy=lazy)
    if fam == "iid-stable":
        return simulate_iid(StableLaw(float(pr["alpha"]), float(pr["skew"])), n, P, seed, lazy=lazy)
    if fam in ("ma", "ma-geometric"):
        if fam == "ma":
            if "coefficients" not in pr:
                raise ConfigError("family 'ma' needs a coefficients list")
            spec = QuasiStationarySpec(tuple(float(c) for c in pr["coefficients"]))
        else:
            spec = QuasiStationarySpec.geometric(float(pr["rho"]))
        ens, _ = simulate_quasi_stationary(spec, n, P, seed, lazy=lazy)
        return ens
    if fam == "levy":
        mesh = int(pr["mesh"])
        return simulate_stable_levy(float(pr["alpha"]), n * mesh, 1 / mesh, P, seed,
                                    skew=float(pr["skew"]), lazy=lazy)
    if fam == "lfsm":
        spec = LfsmSpec(float(pr["alpha"]), float(pr["hurst"]), mesh=int(pr["mesh"]),
                        kernel_cutoff=pr.get("cutoff"), skew=float(pr["skew"]))
        return simulate_lfsm(spec, n, P, seed, lazy=lazy)
    if fam == "zero":
        return simulate_zero(n, P)
    if fam == "power-path":
        mesh = int(pr["mesh"])
        return deterministic_power_path(float(pr["hurst"]), n, 1 / mesh, P)
    raise ConfigError(f"family {fam!r} is not available here")


def _qs_spec(cfg: ExperimentConfig) -> QuasiStationarySpec:
    if cfg.family == "ma-geometric":
        return QuasiStationarySpec.geometric(float(cfg.params["rho"]))
    if cfg.family == "ma" and "coefficients" in cfg.params:
        return QuasiStationarySpec(tuple(float(c) for c in cfg.params["coefficients"]))
    raise ConfigError("quasi-stationary mode needs family 'ma' (with coefficients) or 'ma-geometric'")


# ----------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig) -> tuple[str | bytes, str]:
    ens = make_source(cfg, cfg.n, lazy=False)
    if cfg.out and cfg.out.endswith(".bin"):
        return hio.ensemble_to_bytes(ens), "bin"
    return hio.ensemble_to_csv(ens), "csv"


def constants_table(ps, c1=None, phi: GrowthFunction | None = None) -> list[dict[str, Any]]:
    c2 = None
    if c1 is None:
        bounds = doubling_bounds(phi)
        c1, c2 = bounds.c1, bounds.c2
    rows = []
    for p in ps:
        a, c = block_base(p, c1)
        rows.append({"p": p, "c1": c1, "c2": c2, "a": a, "c": c, "c_at_2": contraction_constant(p, c1, 2)})
    return rows


def cmd_constants(cfg: ExperimentConfig) -> tuple[str, str]:
    ps = cfg.params.get("p_list") or [cfg.p]
    c1 = cfg.params.get("c1")
    if c1 is None and cfg.phi is None:
        raise ConfigError("constants needs --c1 or a phi specification")
    if c1 is not None and not float(c1) > 1:
        raise ConfigError("c1 must exceed 1")
    rows = constants_table([float(p) for p in ps], None if c1 is None else float(c1), cfg.phi)
    if cfg.out and cfg.out.endswith(".json"):
        return hio.dumps({"schema_version": SCHEMA_VERSION, "kind": "constants-table", "rows": rows}), "json"
    cols = ["p", "c1", "c2", "a", "c"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r[k] is None else (str(r[k]) if isinstance(r[k], int) else hio._fmt(r[k]))
                              for k in cols))
    return "\n".join(lines) + "\n", "csv"


def cmd_check(cfg: ExperimentConfig) -> tuple[str, str]:
    phi = cfg.phi
    if cfg.params["mode"] == "quasi-stationary":
        rep = quasi_stationary_series(_qs_spec(cfg), phi, cfg.a, int(cfg.params["m_max"]))
        out = rep.to_json()
        out["config"] = _config_echo(cfg)
        return hio.dumps(out), "json"
    if cfg.params["mode"] != "moment":
        raise ConfigError("mode must be 'moment' or 'quasi-stationary'")
    _reject_infinite_moment(cfg)
    k_window = cfg.params.get("k_window")
    K = cfg.a ** cfg.levels if k_window is None else int(k_window)
    src = make_source(cfg, K + cfg.a ** cfg.levels + 1)
    cert = moment_series(src, cfg.p, phi, cfg.a, cfg.levels, k_window=K)
    out = cert.to_json()
    out["config"] = _config_echo(cfg)
    return hio.dumps(out), "json"


def _config_echo(cfg: ExperimentConfig) -> dict[str, Any]:
    return {"command": cfg.command, "family": cfg.family, "paths": cfg.paths, "seed": cfg.seed,
            "levels": cfg.levels, "a": cfg.a, "p": cfg.p,
            "phi": None if cfg.phi is None else cfg.phi.to_json(),
            "params": {k: v for k, v in sorted(cfg.params.items())}}


def cmd_verify(cfg: ExperimentConfig) -> tuple[str, str]:
    battery = cfg.params["battery"]
    if battery == "budget":
        rep = borel_cantelli_budget(float(cfg.params.get("constant", 1.0)),
                                    float(cfg.params.get("exponent", 2.0)), max(cfg.levels, 1))
        return hio.dumps(rep.to_json()), "json"
    if battery == "decay":
        src = make_source(cfg, 2 * cfg.a ** cfg.levels + 1)
        rep = decay_diagnostic(src, cfg.phi, cfg.a, cfg.levels, cfg.params.get("first_level"))
    elif battery == "bridge":
        if cfg.family not in ("levy", "power-path", "zero"):
            raise ConfigError("bridge battery needs a fine-grid path family (levy, power-path, zero)")
        src = make_source(cfg, cfg.a ** (cfg.levels + 1))
        rep = bridge_check(src, cfg.phi, cfg.a, cfg.levels, int(cfg.params.get("first_level") or 1))
    elif battery == "tail":
        if cfg.family != "levy":
            raise ConfigError("tail battery needs family 'levy'")
        src = make_source(cfg, 1)
        fit = tail_exponent(path_sup(src, 1.0))
        rep = DiagnosticsReport(kind="tail", levels=[], statistics={}, decay_scores={}, primary="sup",
                                n_paths=cfg.paths, tail_fit=fit,
                                params={"alpha": cfg.params["alpha"], "mesh": cfg.params["mesh"],
                                        "expected_slope": -float(cfg.params["alpha"])})
    else:
        raise ConfigError("battery must be one of decay, bridge, tail, budget")
    if cfg.csv:
        Path(cfg.csv).write_text(hio.tidy_csv(rep.tidy_rows()))
    out = rep.to_json()
    out["config"] = _config_echo(cfg)
    return hio.dumps(out), "json"


def cmd_lfsm_demo(cfg: ExperimentConfig) -> tuple[str, str]:
    pr = cfg.params
    alpha, hurst, eps = float(pr["alpha"]), float(pr["hurst"]), float(pr["eps"])
    spec = LfsmSpec(alpha, hurst, mesh=int(pr["mesh"]), kernel_cutoff=pr.get("cutoff"))
    # phi(x) = x^H (log x)^(1/alpha + eps), the normalizer of the integer-time limit
    phi = GrowthFunction(hurst, 1 / alpha + eps)
    n = 2 * cfg.a ** cfg.levels + 1
    ens = simulate_lfsm(spec, n, cfg.paths, cfg.seed)
    decay = decay_diagnostic(ens, phi, cfg.a, cfg.levels)

    # exact pass-through at H = 1/alpha on a short horizon
    short, probe_paths = 64, min(cfg.paths, 8)
    lev = simulate_stable_levy(alpha, short, 1.0, probe_paths, cfg.seed)
    pas = simulate_lfsm(LfsmSpec(alpha, 1 / alpha, mesh=spec.mesh), short, probe_paths, cfg.seed)
    identical = bool(np.array_equal(lev.values, pas.values))

    p = float(pr.get("p_moment", alpha / 2))
    if p >= alpha:
        raise ConfigError("p_moment must be < alpha")
    ratio_levels = min(cfg.levels, 6)
    ratios = sssi_moment_identity(ens, hurst, p, cfg.a, ratio_levels)
    out = {
        "schema_version": SCHEMA_VERSION, "kind": "lfsm-demo",
        "spec": {"alpha": alpha, "hurst": hurst, "mesh": spec.mesh, "kernel_cutoff": ens.meta["kernel_cutoff"],
                 "truncation_share": ens.meta["truncation_share"]},
        "regime": "bounded" if hurst >= 1 / alpha else "integer-times",
        "phi": phi.to_json(),
        "passthrough_identical": identical,
        "decay": decay.to_json(),
        "sssi_ratios": ratios.to_json(),
        "config": _config_echo(cfg),
    }
    return hio.dumps(out), "json"


COMMANDS = {"simulate": cmd_simulate, "constants": cmd_constants, "check": cmd_check,
            "verify": cmd_verify, "lfsm-demo": cmd_lfsm_demo}


# ----------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON file with option values")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--out", help="output file (stdout when omitted)")


def _family(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", help=f"one of {', '.join(FAMILIES)}")
    p.add_argument("--alpha", type=float)
    p.add_argument("--skew", type=float)
    p.add_argument("--sd", type=float)
    p.add_argument("--rho", type=float, help="geometric MA ratio")
    p.add_argument("--coefficients", type=lambda s: [float(x) for x in s.split(",")],
                   help="comma-separated MA coefficients")
    p.add_argument("--hurst", type=float)
    p.add_argument("--mesh", type=int, help="grid points per unit time")
    p.add_argument("--cutoff", type=float, help="LFSM kernel cutoff T")


def _phi(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", help=f"one of {', '.join(PHI_KINDS)}")
    p.add_argument("--q", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eps", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htsl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    s = sub.add_parser("simulate", help="write a path ensemble (CSV, or binary for *.bin)")
    _common(s)
    _family(s)
    s.add_argument("--n", type=int, help="number of unit time steps")

    c = sub.add_parser("constants", help="block base and contraction constant table")
    _common(c)
    _phi(c)
    c.add_argument("--p", type=float, nargs="+", dest="p_list")
    c.add_argument("--c1", type=float)

    k = sub.add_parser("check", help="moment-series certificate or quasi-stationary report")
    _common(k)
    _family(k)
    _phi(k)
    k.add_argument("--mode", choices=("moment", "quasi-stationary"))
    k.add_argument("--p", type=float)
    k.add_argument("--a", type=int)
    k.add_argument("--levels", type=int)
    k.add_argument("--k-window", type=int, dest="k_window")
    k.add_argument("--m-max", type=int, dest="m_max")

    v = sub.add_parser("verify", help="Monte Carlo diagnostics")
    _common(v)
    _family(v)
    _phi(v)
    v.add_argument("--battery", choices=("decay", "bridge", "tail", "budget"))
    v.add_argument("--a", type=int)
    v.add_argument("--levels", type=int)
    v.add_argument("--first-level", type=int, dest="first_level")
    v.add_argument("--constant", type=float, help="budget: tail constant K")
    v.add_argument("--exponent", type=float, help="budget: exponent e")
    v.add_argument("--csv", help="also write tidy per-level CSV here")

    d = sub.add_parser("lfsm-demo", help="LFSM battery: pass-through, decay, moment ratios")
    _common(d)
    d.add_argument("--alpha", type=float)
    d.add_argument("--hurst", type=float)
    d.add_argument("--mesh", type=int)
    d.add_argument("--cutoff", type=float)
    d.add_argument("--eps", type=float)
    d.add_argument("--levels", type=int)
    d.add_argument("--a", type=int)
    d.add_argument("--p-moment", type=float, dest="p_moment")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        cfg = resolve(args.command, flags)
        if args.command in ("check", "verify") and cfg.phi is None and cfg.params.get("battery") != "budget":
            raise ConfigError("a phi specification is required")
        payload, _ = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"htsl: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (KernelTruncationError, ArithmeticError, GuardViolation) as exc:
        print(f"htsl: numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:
        print(f"htsl: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if cfg.out:
        target = Path(cfg.out)
        if isinstance(payload, bytes):
            target.write_bytes(payload)
        else:
            target.write_text(payload)
    elif isinstance(payload, bytes):
        sys.stdout.buffer.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def main() -> None:
    sys.exit(run())
