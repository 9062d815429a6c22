"""Command line interface: ``annuitize {regime,solve,value,oracle,sweep}``.

Run configurations are flat TOML files whose keys carry their units
(``*_per_year``, ``*_years``, ``*_currency``). Presets ship with the package.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .boundary import SCHEMES, solve
from .coeffs import ProblemConfig, RegimeKind, classify, k0_optimal_time, tabulate
from .errors import BracketFailure, ConfigError, GridMismatch
from .mortality import GompertzMakeham

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_BRACKET = 3
EXIT_GRID = 4


@dataclass
class RunConfig:
    """Every recognised configuration key, with its unit in the name."""

    theta_per_year: float = 0.045
    alpha_per_year: float = 0.035
    sigma_per_sqrt_year: float = 0.10
    rho_per_year: float = 0.04
    rho_hat_per_year: float = 0.04
    K_currency: float = 2.0
    T_years: float = 30.0
    eta_years: float = 50.0
    gm_A_per_year: float = 0.00055845
    gm_B_per_year: float = 0.000025670
    gm_C: float = 1.1011
    scenario: str = "constant_f"
    f_constant: float = 1.0
    mu_bar: float = 0.0
    sweep_mu_bar: list = field(default_factory=list)
    # solver
    n_steps: int = 600
    root_tol: float = 1e-8
    refine_near_T: bool = False
    scheme: str = "premium"
    # oracles
    pde_n_y: int = 400
    pde_n_t: int = 2000
    pde_scheme: str = "ExplicitProjected"
    mc_paths: int = 100_000
    seed: int = 0
    # value command
    value_t_years: float = 0.0
    value_x_currency: list = field(default_factory=list)
    out_dir: str = "out"

    @classmethod
    def from_mapping(cls, data: dict) -> RunConfig:
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        kw = {}
        for k, v in data.items():
            default = known[k].default
            if isinstance(default, bool):
                if not isinstance(v, bool):
                    raise ConfigError(f"{k} must be true or false")
            elif isinstance(default, int):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"{k} must be an integer")
            elif isinstance(default, float):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{k} must be a number")
                v = float(v)
            elif isinstance(default, str):
                if not isinstance(v, str):
                    raise ConfigError(f"{k} must be a string")
            else:
                if not isinstance(v, list) or not all(isinstance(e, (int, float)) for e in v):
                    raise ConfigError(f"{k} must be a list of numbers")
                v = [float(e) for e in v]
            kw[k] = v
        rc = cls(**kw)
        rc.validate()
        return rc

    def validate(self):
        if self.scenario not in ("constant_f", "proportional_hazard"):
            raise ConfigError("scenario must be 'constant_f' or 'proportional_hazard'")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.n_steps < 16:
            raise ConfigError("n_steps must be at least 16")
        self.problem()  # type checks on the model inputs

    def problem(self, mu_bar: float | None = None) -> ProblemConfig:
        base = GompertzMakeham(self.gm_A_per_year, self.gm_B_per_year, self.gm_C)
        market = dict(theta=self.theta_per_year, alpha=self.alpha_per_year, sigma=self.sigma_per_sqrt_year,
                      rho=self.rho_per_year, rho_hat=self.rho_hat_per_year, K=self.K_currency,
                      T=self.T_years, eta=self.eta_years)
        if self.scenario == "constant_f":
            from .mortality import MortalityLaw

            law = MortalityLaw(base, 0.0)
            return ProblemConfig.constant_f(self.f_constant, subjective=law, objective=law, **market)
        return ProblemConfig.proportional(self.mu_bar if mu_bar is None else mu_bar, base, **market)


def preset_names() -> list[str]:
    root = resources.files("annuitize") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset_text(name: str) -> str:
    path = resources.files("annuitize") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def load_config(path: str | None = None, preset: str | None = None) -> RunConfig:
    """Preset values overlaid by the config file, if both are given."""
    data: dict = {}
    try:
        if preset:
            data.update(tomllib.loads(load_preset_text(preset)))
        if path:
            data.update(tomllib.loads(Path(path).read_text()))
    except (tomllib.TOMLDecodeError, OSError) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    return RunConfig.from_mapping(data)


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _finite(v):
    return float(v) if np.isfinite(v) else None


def _scan(cfg: ProblemConfig, n: int = 512) -> dict:
    t = np.linspace(0.0, cfg.T, n)
    tab = tabulate(cfg, t)
    gam = tab.gamma[np.isfinite(tab.gamma)]
    return {
        "g_min": float(tab.g.min()), "g_max": float(tab.g.max()),
        "ell_min": float(tab.ell.min()), "ell_max": float(tab.ell.max()),
        "g_sign_changes": int(np.count_nonzero(np.diff(np.sign(tab.g)) != 0)),
        "gamma_min": _finite(gam.min()) if gam.size else None,
        "gamma_max": _finite(gam.max()) if gam.size else None,
    }


# --------------------------------------------------------------------------
# commands


def cmd_regime(rc: RunConfig, out: Path | None) -> int:
    cfg = rc.problem()
    reg = classify(cfg)
    scan = _scan(cfg)
    print(f"regime: {reg.describe()}")
    print(f"g in [{scan['g_min']:.6g}, {scan['g_max']:.6g}], sign changes: {scan['g_sign_changes']}")
    print(f"ell in [{scan['ell_min']:.6g}, {scan['ell_max']:.6g}]")
    if scan["gamma_min"] is not None:
        print(f"gamma in [{scan['gamma_min']:.6g}, {scan['gamma_max']:.6g}]")
    if out is not None:
        write_json(out / "regime.json", {"regime": reg.describe(), "kind": reg.kind.value, "t0": reg.t0, **scan})
    return 0


def _gfun(cfg: ProblemConfig, t) -> list:
    tab = tabulate(cfg, t)
    return [(tab.t[i], tab.g[i], tab.ell[i], tab.f[i], tab.fp[i]) for i in range(len(t))]


def _solve_to(rc: RunConfig, out: Path, cfg: ProblemConfig | None = None, tag: str = ""):
    cfg = cfg or rc.problem()
    reg = classify(cfg)
    report: dict = {"regime": reg.describe(), "kind": reg.kind.value, "backend": kernels.BACKEND,
                    "n_steps": rc.n_steps, "scheme": rc.scheme}
    write_csv(out / f"gfun{tag}.csv", ["t", "g", "ell", "f", "f_prime"],
              _gfun(cfg, np.linspace(0.0, cfg.T, rc.n_steps + 1)))
    if reg.kind is RegimeKind.DETERMINISTIC_K0:
        report["optimal_wait_from_0"] = k0_optimal_time(cfg, 0.0)
    if not reg.solvable:
        print(f"regime {reg.describe()}: no free boundary to solve")
        write_json(out / f"report{tag}.json", report)
        return None, report
    t0 = time.perf_counter()
    b, rep = solve(cfg, rc.n_steps, scheme=rc.scheme, refine_near_T=rc.refine_near_T,
                   root_tol=rc.root_tol, regime=reg)
    report.update(rep.to_dict())
    report["timings"] = {"solve_seconds": time.perf_counter() - t0}
    write_csv(out / f"boundary{tag}.csv", ["t", "b", "gamma", "orientation"],
              [(b.t_grid[i], b.values[i], b.gamma[i], b.orientation.value) for i in range(b.n + 1)])
    if reg.kind is RegimeKind.RESTRICTED_HORIZON and reg.outside == "approximate":
        from .oracles import PdeGrid, pde_solve

        grid = PdeGrid.around(cfg, rc.pde_n_y, rc.pde_n_t, rc.pde_scheme, boundary=b, regime=reg)
        _, pb = pde_solve(cfg, grid, regime=reg, interval=(0.0, cfg.T))
        keep = pb.t <= reg.t0
        write_csv(out / f"boundary_approximate{tag}.csv", ["t", "b", "orientation", "source"],
                  [(pb.t[k], pb.values[k], pb.orientation.value, "pde_approximate") for k in np.flatnonzero(keep)])
        report["approximate_interval"] = [0.0, reg.t0]
    write_json(out / f"report{tag}.json", report)
    return b, report


def cmd_solve(rc: RunConfig, out: Path) -> int:
    b, report = _solve_to(rc, out)
    if b is not None:
        print(f"{report['regime']}: b(t0)={b.values[0]:.10g}, b(T)={b.values[-1]:.10g}, "
              f"max residual {report['max_normalized_residual']:.3g}")
    return 0


def cmd_value(rc: RunConfig, out: Path, t: float | None, xs: list | None) -> int:
    from .valuation import value_at

    cfg = rc.problem()
    t = rc.value_t_years if t is None else t
    xs = xs or rc.value_x_currency
    if not xs:
        raise ConfigError("no wealth levels given (use --x or value_x_currency)")
    reg = classify(cfg)
    if not reg.solvable:
        raise ConfigError(f"regime {reg.describe()} has no free boundary to value against")
    b, _ = solve(cfg, rc.n_steps, scheme=rc.scheme, refine_near_T=rc.refine_near_T, root_tol=rc.root_tol, regime=reg)
    i = b.index_of(t)
    V = np.atleast_1d(value_at(cfg, b, t, np.asarray(xs, dtype=float)))
    G = b.table.f[i] * (np.asarray(xs, dtype=float) - cfg.K)
    rows = [(b.t_grid[i], x, v, g, v - g, "Stop" if b.in_stop(i, x) else "Continue") for x, v, g in zip(xs, V, G)]
    for r in rows:
        print(f"t={r[0]:.6g} x={r[1]:.6g} V={r[2]:.12g} G={r[3]:.12g} premium={r[4]:.6g} {r[5]}")
    write_csv(out / "value.csv", ["t", "x", "V", "G", "premium", "region"], rows)
    return 0


def cmd_oracle(rc: RunConfig, out: Path) -> int:
    from .oracles import PdeGrid, mc_strategy_comparison, pde_solve, sup_relative_gap
    from .valuation import value_at

    cfg = rc.problem()
    reg = classify(cfg)
    if not reg.solvable:
        print(f"regime {reg.describe()}: nothing to cross-check")
        return 0
    b, rep = solve(cfg, rc.n_steps, scheme=rc.scheme, refine_near_T=rc.refine_near_T, root_tol=rc.root_tol, regime=reg)
    grid = PdeGrid.around(cfg, rc.pde_n_y, rc.pde_n_t, rc.pde_scheme, boundary=b, regime=reg)
    _, pb = pde_solve(cfg, grid, regime=reg)
    gap = sup_relative_gap(b, pb, b.t_grid[-1] - 1.0)
    probes = probe_points(b)
    mc = []
    ok = gap <= 0.05
    for t, x in probes:
        tab = mc_strategy_comparison(cfg, b, t, x, rc.mc_paths, rc.seed)
        v = value_at(cfg, b, t, x)
        e = tab.estimates["boundary"]
        z = e.z_score(v)
        dom = tab.dominates("stop_now") and tab.dominates("hold_to_T")
        ok = ok and abs(z) <= 3 and dom
        mc.append({"t": t, "x": x, "value": v, "mc_mean": e.mean, "mc_se": e.std_error, "z": z,
                   "stop_now": tab.estimates["stop_now"].mean, "hold_to_T": tab.estimates["hold_to_T"].mean,
                   "dominates": dom})
        print(f"probe t={t:.4g} x={x:.6g}: V={v:.8g} MC={e.mean:.8g}±{e.std_error:.3g} z={z:+.2f} dominates={dom}")
    print(f"PDE sup-relative gap on [0, T_eff-1]: {gap:.4%}")
    print("PASS" if ok else "FAIL")
    write_json(out / "oracle.json", {"regime": reg.describe(), "pde_gap": gap, "mc": mc, "pass": ok,
                                     "residual": rep.max_normalized_residual})
    return 0 if ok else EXIT_FAIL


def probe_points(b) -> list[tuple[float, float]]:
    """Four continuation-region probes at t = 0, T/3, 2T/3 (two at t = 0)."""
    from .coeffs import Orientation

    n = b.n
    idx = [0, 0, n // 3, (2 * n) // 3]
    rel = [0.5, 0.9, 0.8, 0.8] if b.orientation is Orientation.STOP_ABOVE else [2.0, 1.1, 1.5, 1.2]
    return [(float(b.t_grid[i]), float(r * b.values[i])) for i, r in zip(idx, rel)]


def cmd_sweep(rc: RunConfig, out: Path) -> int:
    if not rc.sweep_mu_bar:
        raise ConfigError("sweep needs sweep_mu_bar")
    if rc.scenario != "proportional_hazard":
        raise ConfigError("sweep varies mu_bar and needs scenario = 'proportional_hazard'")
    cols = []
    t = None
    for mu in rc.sweep_mu_bar:
        cfg = rc.problem(mu)
        b, _ = _solve_to(rc, out, cfg, tag=f"_mu{mu:g}")
        if b is None:
            raise ConfigError(f"mu_bar={mu:g} has no free boundary")
        t = b.t_grid if t is None else t
        if len(b.t_grid) != len(t) or np.any(b.t_grid != t):
            raise ConfigError("sweep members do not share a time grid")
        cols.append(b.values)
    vals = np.array(cols)
    rows = [[t[i], *vals[:, i]] for i in range(len(t))]
    write_csv(out / "sweep.csv", ["t"] + [f"b_mu{mu:g}" for mu in rc.sweep_mu_bar], rows)
    order = np.argsort(rc.sweep_mu_bar)
    worst = float(np.max(np.diff(vals[order], axis=0))) if len(order) > 1 else 0.0
    print(f"largest increase of b between consecutive mu_bar: {worst:.6g}")
    write_json(out / "sweep.json", {"mu_bar": rc.sweep_mu_bar, "max_increase": worst})
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--preset", metavar="NAME", help="built-in preset (see 'presets')")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="Monte Carlo seed")
    common.add_argument("--n-steps", type=int, metavar="N", help="time steps of the boundary solve")

    p = argparse.ArgumentParser(prog="annuitize", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("regime", parents=[common], help="classify the problem instance")
    sub.add_parser("solve", parents=[common], help="solve for the free boundary")
    pv = sub.add_parser("value", parents=[common], help="value function at grid nodes")
    pv.add_argument("--t", type=float, help="time (must be a grid node)")
    pv.add_argument("--x", type=float, nargs="+", help="wealth levels")
    sub.add_parser("oracle", parents=[common], help="PDE and Monte Carlo cross-checks")
    sub.add_parser("sweep", parents=[common], help="boundaries across sweep_mu_bar")
    sub.add_parser("presets", help="list built-in presets")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        rc = load_config(args.config, args.preset)
        if args.seed is not None:
            rc.seed = args.seed
        if args.n_steps is not None:
            if args.n_steps < 16:
                raise ConfigError("--n-steps must be at least 16")
            rc.n_steps = args.n_steps
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(args.out or rc.out_dir)
    try:
        if args.command == "regime":
            return cmd_regime(rc, out if args.out else None)
        if args.command == "solve":
            return cmd_solve(rc, out)
        if args.command == "value":
            return cmd_value(rc, out, args.t, args.x)
        if args.command == "oracle":
            return cmd_oracle(rc, out)
        return cmd_sweep(rc, out)
    except BracketFailure as exc:
        print(f"bracket failure: {exc}", file=sys.stderr)
        write_csv(out / "bracket_failure.csv", ["x", "residual"], exc.landscape)
        print(f"residual scan written to {out / 'bracket_failure.csv'}", file=sys.stderr)
        return EXIT_BRACKET
    except GridMismatch as exc:
        print(f"grid mismatch: {exc}", file=sys.stderr)
        return EXIT_GRID
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
