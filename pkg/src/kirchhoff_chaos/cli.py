"""Command-line entry point.

Every subcommand reads an optional flat YAML file (``--config-file``); flags
given on the command line override its keys. Exit status: 0 when all
diagnostics pass, 2 when a diagnostic fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTIC = 0, 1, 2

DEFAULTS = {
    "m": 2,
    "p": 25,
    "d": 1,
    "delta1": 1.0,
    "measure": "unit",
    "eps": 0.05,
    "sigma": None,
    "a": None,
    "itinerary": None,
    "tol": 1e-13,
    "outdir": "kc_output",
    "linearize": False,
    "xieta": None,
    "horizon": None,
    "t_end": 100.0,
    "samples": 2001,
    "taus": "-3:3:13",
    "transversality": True,
    "calibrate": True,
    "quantity": "amplitude",
    "mode": "effective",
    "eps_list": "0.04,0.06,0.09",
    "workers": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- option parsing

def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _tau_grid(text: str) -> np.ndarray:
    lo, hi, n = str(text).split(":")
    return np.linspace(float(lo), float(hi), int(n))


def load_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise UsageError(f"config file {path} must be a flat key-value mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown keys in {path}: {sorted(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config_file:
        cfg.update(load_config_file(args.config_file))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config-file", help="flat YAML file with default values for the flags")
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--delta1", type=float)
    p.add_argument("--measure", choices=("unit", "2pi"))
    p.add_argument("--outdir")
    p.add_argument("--tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kirchhoff-chaos", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", help="print the frequency configuration")
    _add_common(p)

    p = sub.add_parser("simulate-effective", help="pendulum orbit pushed through the effective chain")
    _add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--xieta", help="xi1,eta1,xi2,eta2 at rescaled time 0")
    p.add_argument("--horizon", type=float, help="rescaled time span")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("simulate-kirchhoff", help="exact flow from the datum synthesized at a pendulum state")
    _add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--xieta")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--linearize", action="store_const", const=True)

    p = sub.add_parser("melnikov", help="Melnikov function table and the energy a0")
    _add_common(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--taus", help="lo:hi:count")

    p = sub.add_parser("horseshoe", help="continuation, transversality and itinerary targeting")
    _add_common(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--itinerary", help="comma-separated symbols")
    p.add_argument("--no-transversality", dest="transversality", action="store_const", const=False)

    p = sub.add_parser("synthesize", help="initial datum for a targeted itinerary")
    _add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--itinerary")
    p.add_argument("--xieta")

    p = sub.add_parser("verify", help="full pipeline with oscillation detection")
    _add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--itinerary")
    p.add_argument("--horizon", type=float)
    p.add_argument("--no-calibrate", dest="calibrate", action="store_const", const=False)

    p = sub.add_parser("sweep", help="scaling exponents over several amplitudes")
    _add_common(p)
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--quantity", choices=("amplitude", "calN", "period"))
    p.add_argument("--mode", choices=("effective", "exact"))
    p.add_argument("--horizon", type=float)
    p.add_argument("--workers", type=int)
    return parser


# ---------------------------------------------------------------- helpers

def _config(cfg: dict):
    from .resonant import make_config
    return make_config(cfg["m"], cfg["p"], cfg["d"], delta1=cfg["delta1"], measure=cfg["measure"])


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["outdir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    from .harness import _plain
    path.write_text(json.dumps(_plain(data), indent=2))


def _sigma(cfg: dict) -> float:
    if cfg["sigma"] is not None:
        return float(cfg["sigma"])
    return cfg["m"] / cfg["p"]


def _start_state(cfg: dict) -> np.ndarray:
    if cfg["xieta"] is not None:
        x = _float_list(cfg["xieta"])
        if len(x) != 4:
            raise UsageError("--xieta needs four comma-separated numbers")
        return np.array(x)
    from .harness import _rotation_start
    from .pendulum import find_a0
    return _rotation_start(find_a0())


def _itinerary(cfg: dict, M0: int) -> list[int]:
    if cfg["itinerary"] is None:
        return [M0 + 1, M0 + 3, M0 + 2]
    seq = _int_list(cfg["itinerary"])
    if not seq:
        raise UsageError("empty itinerary")
    return seq


def _say(text: str) -> None:
    print(text, flush=True)


# ---------------------------------------------------------------- commands

def cmd_config(cfg: dict) -> int:
    config = _config(cfg)
    _say(json.dumps(config.to_dict(), indent=2))
    from .resonant import enumerate_triplets, is_admissible
    _say(f"alphas = {config.alphas}, detA = {config.detA}, admissible = {is_admissible(config.alphas)}")
    _say(f"triplets = {sorted(enumerate_triplets(config.alphas))}")
    return EXIT_OK


def cmd_simulate_effective(cfg: dict) -> int:
    from . import cascade, horseshoe
    from .synthesis import make_plan
    from .trajectory import Trajectory
    config = _config(cfg)
    plan = make_plan(config, cfg["eps"])
    x0 = _start_state(cfg)
    horizon = cfg["horizon"] if cfg["horizon"] is not None else 12.0
    s = np.linspace(0.0, horizon, cfg["samples"])
    sol = horseshoe.flow(x0, horizon, float(config.sigma), t_eval=s, rtol=cfg["tol"])
    out = _outdir(cfg)
    xi = Trajectory(sol.t, sol.y, "xieta", cascade.CHARTS["xieta"], sol.stats(), {})
    six = cascade.compose_chain(xi, plan.consts)
    xi.to_csv(out / "xieta.csv")
    six.to_csv(out / "state6.csv")
    drift = float(np.ptp(cascade.coupled_energy(sol.y, float(config.sigma))))
    _write_json(out / "plan.json", plan.to_dict())
    _say(f"wrote {out / 'state6.csv'} ({len(six)} samples, t in [0, {six.t[-1]:.6g}]); energy drift {drift:.2e}")
    return EXIT_OK


def cmd_simulate_kirchhoff(cfg: dict) -> int:
    from . import spectral
    from .resonant import to_physical
    from .synthesis import make_plan, synthesize
    config = _config(cfg)
    plan = make_plan(config, cfg["eps"])
    _, u0, report = synthesize(plan, _start_state(cfg))
    init = spectral.PhysicalState(*to_physical(u0))
    t = np.linspace(0.0, cfg["t_end"], cfg["samples"])
    run = spectral.integrate_kirchhoff(init, cfg["t_end"], cfg["tol"], t, weight=config.measure_weight,
                                       linearize=bool(cfg["linearize"]))
    out = _outdir(cfg)
    traj = run.to_trajectory()
    traj.to_csv(out / "kirchhoff.csv")
    e = traj.column("energy")
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    _write_json(out / "kirchhoff_stats.json", {"stats": run.stats, "energy_drift": drift, "datum": report})
    _say(f"wrote {out / 'kirchhoff.csv'}; {run.solution.message}; energy drift {drift:.2e}")
    if run.solution.status != 0:
        return EXIT_DIAGNOSTIC
    return EXIT_OK


def cmd_melnikov(cfg: dict) -> int:
    from .pendulum import J, find_a0, melnikov, melnikov_slope0
    a = cfg["a"] if cfg["a"] is not None else find_a0()
    sigma = _sigma(cfg)
    taus = _tau_grid(cfg["taus"])
    values = melnikov(taus, a)
    slope = melnikov_slope0(a)
    Ja = J(a)
    _say(f"a = {a:.12g}   M'(0) = {slope:.12g}   (2/3) J(a) = {2 * Ja / 3:.12g}   sigma = {sigma:g}")
    _say(f"{'tau':>10} {'M(tau)':>20} {'sigma*M(tau)':>20}")
    for t, v in zip(taus, values):
        _say(f"{t:10.4f} {v:20.12e} {sigma * v:20.12e}")
    out = _outdir(cfg)
    _write_json(out / "melnikov.json", {"a": a, "sigma": sigma, "tau": taus, "M": values,
                                        "slope0": slope, "J": Ja})
    ok = abs(melnikov(0.0, a)) <= 1e-10 and slope > 0
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def cmd_horseshoe(cfg: dict) -> int:
    from . import horseshoe
    sigma = _sigma(cfg)
    out = _outdir(cfg)
    orbit = horseshoe.continue_periodic_orbit(sigma, cfg["a"])
    _write_json(out / "periodic_orbit.json", orbit.to_dict())
    _say(f"periodic orbit: C1 distance {orbit.c1_distance:.3e}, multipliers {np.round(orbit.multipliers, 6)}")
    ok = True
    if cfg["transversality"]:
        cert = horseshoe.transversality_check(sigma, orbit)
        _write_json(out / "transversality.json", cert.to_dict())
        _say(f"transversality: tau* = {cert.tau_star:.3e}, slope ratio {cert.slope_ratio:.4f}")
        ok &= 0.5 <= cert.slope_ratio <= 2.0
    M0, _ = horseshoe.measure_M0(orbit)
    seq = _itinerary(cfg, M0)
    try:
        itin = horseshoe.target_itinerary(seq, sigma, orbit, M0=M0)
    except horseshoe.TargetingError as exc:
        _write_json(out / "itinerary.json", {"sigma": sigma, "M0": M0, "symbols_prescribed": seq,
                                             "achieved_prefix": exc.prefix, "error": str(exc)})
        _say(f"targeting failed: {exc}")
        return EXIT_DIAGNOSTIC
    itin.write_json(out / "itinerary.json")
    _say(f"M0 = {M0}; prescribed {seq}, realized {itin.realized}; theta {np.round(itin.theta_j, 4)}")
    ok &= itin.matches
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def cmd_synthesize(cfg: dict) -> int:
    from . import horseshoe
    from .synthesis import make_plan, synthesize, write_datum_json
    config = _config(cfg)
    plan = make_plan(config, cfg["eps"])
    out = _outdir(cfg)
    if cfg["xieta"] is not None:
        x0 = _start_state(cfg)
    else:
        sigma = float(config.sigma)
        orbit = horseshoe.continue_periodic_orbit(sigma)
        M0, _ = horseshoe.measure_M0(orbit)
        itin = horseshoe.target_itinerary(_itinerary(cfg, M0), sigma, orbit, M0=M0)
        itin.write_json(out / "itinerary.json")
        x0 = horseshoe.itinerary_samples(itin, np.array([0.0]))[0]
    spec, u0, report = synthesize(plan, x0)
    write_datum_json(out / "datum.json", plan, spec, u0, report)
    _say(f"eps = {plan.eps:g} (eps0 = {plan.eps0:.4g}); flags {plan.flags}")
    _say(f"max identity residual {report['max_residual']:.2e}; passed = {report['passed']}")
    return EXIT_OK if report["passed"] else EXIT_DIAGNOSTIC


def cmd_verify(cfg: dict) -> int:
    from . import harness, horseshoe
    config = _config(cfg)
    sigma = float(config.sigma)
    out = _outdir(cfg)
    orbit = horseshoe.continue_periodic_orbit(sigma)
    M0, _ = horseshoe.measure_M0(orbit)
    seq = _itinerary(cfg, M0)
    try:
        setup = harness.prepare(config, cfg["eps"], seq, orbit=orbit, M0=M0)
    except horseshoe.TargetingError as exc:
        _write_json(out / "manifest.json", {"config": config.to_dict(), "itinerary": seq, "M0": M0,
                                            "achieved_prefix": exc.prefix, "error": str(exc), "passed": False})
        _say(f"targeting failed: {exc}")
        return EXIT_DIAGNOSTIC
    exp = harness.run_experiment(config, cfg["eps"], seq, setup=setup, tol=cfg["tol"],
                                 horizon=cfg["horizon"], calibrate=bool(cfg["calibrate"]))
    exp.write(out)
    osc = exp.oscillations
    _say(f"prescribed {seq}; detected oscillations {osc.count}, realized {osc.realized}, prefix {osc.prefix}")
    _say(f"gronwall sup {exp.gronwall.sup:.3e} (threshold {exp.gronwall.threshold:.3e}); "
         f"energy drift {exp.exact.energy_drift:.2e}")
    _say(f"manifest: {out / 'manifest.json'}")
    return EXIT_OK if exp.passed else EXIT_DIAGNOSTIC


def _sweep_point(args):
    from . import harness
    config_kw, eps, quantity, mode, horizon, tol = args
    from .resonant import make_config
    config = make_config(**config_kw)
    kw = {"mode": mode, "tol": tol}
    if horizon is not None:
        kw["horizon"] = horizon
    return harness.scaling_point(config, eps, quantity, **kw)


def cmd_sweep(cfg: dict) -> int:
    from . import harness
    eps_list = _float_list(cfg["eps_list"])
    if len(eps_list) < 3:
        raise UsageError("--eps-list needs at least three values")
    config_kw = {"m": cfg["m"], "p": cfg["p"], "d": cfg["d"], "delta1": cfg["delta1"], "measure": cfg["measure"]}
    jobs = [(config_kw, e, cfg["quantity"], cfg["mode"], cfg["horizon"], cfg["tol"]) for e in eps_list]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            values = list(pool.map(_sweep_point, jobs))
    else:
        values = [_sweep_point(j) for j in jobs]
    exponent = harness.fit_exponent(eps_list, values)
    expected = {"amplitude": 3.0, "calN": 2.0, "period": -3.0}[cfg["quantity"]]
    out = _outdir(cfg)
    _write_json(out / f"sweep_{cfg['quantity']}_{cfg['mode']}.json",
                {"eps": eps_list, "values": values, "exponent": exponent, "expected": expected,
                 "quantity": cfg["quantity"], "mode": cfg["mode"]})
    _say(f"{cfg['quantity']} ({cfg['mode']}): exponent {exponent:.4f} (expected {expected:g})")
    return EXIT_OK if math.isfinite(exponent) and abs(exponent - expected) <= 0.15 else EXIT_DIAGNOSTIC


COMMANDS = {
    "config": cmd_config,
    "simulate-effective": cmd_simulate_effective,
    "simulate-kirchhoff": cmd_simulate_kirchhoff,
    "melnikov": cmd_melnikov,
    "horseshoe": cmd_horseshoe,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit status 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
