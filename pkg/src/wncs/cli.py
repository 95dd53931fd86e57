"""``wncs`` command-line front end.

Every command writes into ``--out`` (default ``./wncs-out``) and leaves a
``manifest.json`` there. Passing that manifest back as ``--config`` reruns
the command with the same configuration, seed and options.

Exit codes: 0 ok, 1 failed validation, 2 infeasible, 3 numerical failure,
4 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, load_config, resolved
from .errors import ConfigError, DomainError, InfeasibleError, NotAsUgesError, NumericalError
from .model import Protocol, TransmissionModel
from .power import (
    StabilityConstant,
    c_tau,
    solve_problem2,
    stability_region,
    two_link_feasibility,
)
from .protocols import (
    CoverOrderWarning,
    cover_stats,
    exact_expected_cover_time,
    rr_constants,
    sample_cover_times,
)
from .numerics import make_rng
from .sim import Dynamics, SimConfig, monte_carlo_decay, simulate
from .stability import (
    DeterministicGainInputs,
    StochasticGainInputs,
    deterministic_inputs_lti,
    min_rate_deterministic,
    min_rate_stochastic,
    stochastic_inputs_lti,
    x_subsystem_gain,
)

__all__ = ["main", "build_parser"]

MANIFEST_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2, 3, 4

# option defaults; kept outside argparse so a manifest can supply them
DEFAULTS = {
    "seed": 0,
    "trials": None,
    "grid": None,
    "delta": None,
    "tol": 1e-6,
    "threads": 1,
    "mode": "lp",
    "rate": None,
    "horizon": None,
    "protocol": None,
    "criteria": None,
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Output:
    """Collects files written to the output directory for the manifest."""

    def __init__(self, out: Path):
        self.dir = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows):
        path = self.dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def json(self, name: str, data):
        (self.dir / name).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
        self.files.append(name)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


# ------------------------------------------------------------------- options


def _manifest_options(path: str | None) -> dict:
    if path is None or not Path(path).is_file():
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return {}
    if isinstance(data, dict) and "manifest_version" in data:
        return dict(data.get("options", {}))
    return {}


def _resolve_options(args: argparse.Namespace) -> dict:
    """Command line beats manifest, manifest beats built-in default."""
    from_manifest = _manifest_options(getattr(args, "config", None))
    opts = {}
    for key, default in DEFAULTS.items():
        val = getattr(args, key, None)
        if val is None:
            val = from_manifest.get(key, default)
        opts[key] = val
    return opts


def _write_manifest(out: Output, args, opts: dict, scenario: Scenario | None, started: str):
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "version": __version__,
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": opts["seed"],
        "options": opts,
        "config": resolved(scenario) if scenario is not None else None,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "files": sorted(out.files),
    }
    (out.dir / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")


# ------------------------------------------------------------------ commands


def _stability_inputs(sc: Scenario, opts: dict):
    """Gains from the loop, with overrides from the ``stability`` section.

    A scenario without plant and controller must give ``gamma`` and
    ``normA`` (stochastic) and ``gamma_det`` and ``L`` (deterministic).
    """
    st = sc.section("stability")
    top = sc.require_topology()
    f = top.node_success()
    if sc.plant is None or sc.controller is None:
        try:
            sto = StochasticGainInputs(float(st["gamma"]), float(st["normA"]), tuple(f))
            det = DeterministicGainInputs(float(st.get("gamma_det", st["gamma"])),
                                          float(st.get("L", st["normA"])), rr_constants(f))
        except KeyError as exc:
            raise ConfigError(f"{sc.name}: without a plant the stability section needs {exc}") from None
        return sto, det
    w = sc.wncs
    tol = float(opts["tol"])
    gamma = st.get("gamma")
    if gamma is None:
        gamma = x_subsystem_gain(w, "stochastic", tol=tol)
    sqrt_theta = st.get("sqrt_theta")
    L1 = st.get("L1")
    if sqrt_theta is None:
        const = rr_constants(top)
        L1 = math.sqrt(top.N) if L1 is None else float(L1)
        sqrt_theta = x_subsystem_gain(w, "deterministic", a1=const.a1, L1=L1, tol=tol)
    sto = stochastic_inputs_lti(w, top, gamma, st.get("normA"))
    det = deterministic_inputs_lti(w, top, L1, sqrt_theta, st.get("normA"))
    return sto, det


def cmd_rate(sc: Scenario, opts: dict, out: Output) -> int:
    sto, det = _stability_inputs(sc, opts)
    ref = sc.section("reference")
    report = {"scenario": sc.name, "node_success": list(sc.require_topology().node_success())}
    for r, key in ((min_rate_stochastic(sto), "stochastic"), (min_rate_deterministic(det), "deterministic")):
        report[key] = {
            "omega_star": r.omega_star,
            "validity_floor": r.validity_floor,
            "omega_min_probability": r.tabbara_omega,
            "ratio": r.ratio,
            "consistent": r.is_consistent(),
            "lhs_at_omega_star": r.lhs(r.omega_star),
            "published_omega": ref.get(f"omega_{key}"),
            "published_omega_min_probability": ref.get(f"omega_minprob_{key}"),
        }
        out.csv(f"lhs_{key}.csv", ["omega", "lhs", "rho"], r.lhs_curve.rows())
        print(f"{key:>13}: w* = {r.omega_star:.6g}  floor = {r.validity_floor:.6g}  "
              f"min-probability = {r.tabbara_omega:.6g}  ratio = {r.ratio:.4f}")
    report["stochastic"]["gamma"] = sto.gamma
    report["stochastic"]["normA"] = sto.normA
    report["deterministic"]["gamma"] = det.gamma
    report["deterministic"]["L"] = det.L
    report["deterministic"]["kappa_bar"] = det.constants.kappa_bar
    out.json("rate.json", report)
    return EXIT_OK


def _power_constant(sc: Scenario, opts: dict) -> StabilityConstant:
    ch = sc.require_channel()
    st, pw = sc.section("stability"), sc.section("power")
    delta = float(opts["delta"] if opts["delta"] is not None else pw.get("delta", 1e-6))
    if "c_tau" in pw:
        return StabilityConstant.from_value(float(pw["c_tau"]), a=ch.a, delta=delta)
    try:
        gl, eta = float(st["gamma_plus_L"]), float(st["eta"])
    except KeyError as exc:
        raise ConfigError(f"{sc.name}: stability section needs {exc} (or power.c_tau)") from None
    return c_tau(sc.require_transmission().tau_bar, gl, 0.0, eta, delta, ch.a)


def cmd_power(sc: Scenario, opts: dict, out: Output) -> int:
    ch = sc.require_channel()
    c = _power_constant(sc, opts)
    pw = sc.section("power")
    mode = opts["mode"]
    if mode == "lp":
        grid = opts["grid"] if opts["grid"] is not None else pw.get("grid")
        sol = solve_problem2(ch, c, None if grid is None else int(grid), workers=opts["threads"])
        data = {"mode": mode, "c_tau": c.c_tau, "grid": grid, **sol.to_dict()}
        print(f"powers = {np.array2string(sol.powers, precision=6)}  total = {sol.objective:.8g}  "
              f"margin = {sol.margin:.3g}")
        out.json("solution.json", data)
        out.csv("powers.csv", ["link", "power"], enumerate(sol.powers.tolist()))
        return EXIT_OK
    st = sc.section("stability")
    tau = sc.require_transmission().tau_bar
    eta = float(st.get("eta", math.sqrt(0.5)))
    gl = float(st.get("gamma_plus_L", math.nan))
    rep = two_link_feasibility(ch, tau, gl, 0.0, eta, c.delta, ch.a, ch.p_max,
                               c_override=c.c_tau if "c_tau" in pw else None)
    if mode == "two-link":
        out.json("solution.json", {"mode": mode, **rep.to_dict()})
        print(f"eps* = {rep.eps_star}  powers = {rep.powers}  tau bound = {rep.tau_bound:.6g}")
        if rep.powers is None:
            raise InfeasibleError("the constant admits no split of the outage budget",
                                  binding="tau_bar")
        return EXIT_OK if rep.feasible else EXIT_INFEASIBLE
    if mode == "region":
        hi = ch.p_max if math.isfinite(ch.p_max) else 70.0
        res_n = int(opts["grid"]) if opts["grid"] is not None else 141
        reg = stability_region(ch, c, (0.0, hi), (0.0, hi), res_n)
        out.csv("region.csv", ["p1", "p2", "feasible"], reg.rows())
        out.csv("boundary.csv", ["p1", "p2_lower", "p2_upper"],
                zip(reg.p1.tolist(), reg.lower.tolist(), reg.upper.tolist()))
        out.json("solution.json", {"mode": mode, "resolution": res_n, **rep.to_dict()})
        print(f"{int(reg.feasible.sum())} of {reg.feasible.size} cells feasible; optimum {rep.powers}")
        return EXIT_OK
    raise ConfigError(f"unknown power mode {mode!r}")


def cmd_simulate(sc: Scenario, opts: dict, out: Output) -> int:
    w = sc.wncs
    top = sc.require_topology()
    sim = sc.section("simulation")
    tr = TransmissionModel(float(opts["rate"])) if opts["rate"] else sc.require_transmission()
    protocol = Protocol.parse(opts["protocol"]) if opts["protocol"] else sc.protocol
    horizon = float(opts["horizon"] or sim.get("horizon", 5.0))
    trials = int(opts["trials"] or sim.get("trials", 500))
    x0 = np.asarray(sim.get("x0", np.ones(w.n_x)), dtype=float)
    e0 = np.asarray(sim.get("e0", np.zeros(w.n_e)), dtype=float)
    dt = sim.get("dt")
    cfg = SimConfig(Dynamics.lti(w), top, protocol, tr, x0, e0, horizon, int(opts["seed"]),
                    None if dt is None else float(dt), int(sim.get("n_record", 500)))
    est = monte_carlo_decay(cfg, trials, workers=opts["threads"])
    out.csv("mean_norm.csv", ["t", "mean", "q90", "q99"], est.rows())
    traj = simulate(cfg.dynamics, top, protocol, tr, x0, e0, horizon, cfg.seed, cfg.dt,
                    cfg.n_record)
    out.csv("trajectory.csv", ["t"] + [f"x{i}" for i in range(w.n_x)] + [f"e{i}" for i in range(w.n_e)],
            ([t, *z] for t, z in zip(traj.times.tolist(), traj.states.tolist())))
    out.csv("jumps.csv", ["k", "t", "node", "link_ok"],
            ((j.k, j.t, j.node, "".join(str(v) for v in j.link_ok)) for j in traj.jumps))
    summary = {
        "rate": tr.rate,
        "protocol": protocol.value,
        "trials": est.trials,
        "horizon": horizon,
        "c": est.c,
        "c_ci": list(est.c_ci),
        "K": est.K,
        "residual": est.residual,
        "decays": est.decays,
        "final_ratio": est.final_ratio,
        "divergent": est.divergent,
        "interarrival_mean": est.interarrival_mean,
        "interarrival_count": est.interarrival_count,
    }
    out.json("summary.json", summary)
    print(f"c = {est.c:.6g}  95% CI ({est.c_ci[0]:.6g}, {est.c_ci[1]:.6g})  "
          f"final ratio = {est.final_ratio:.4g}  divergent = {est.divergent}/{est.trials}")
    return EXIT_OK


def cmd_cover(sc: Scenario, opts: dict, out: Output) -> int:
    f = sc.require_topology().node_success()
    trials = int(opts["trials"] or 100_000)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CoverOrderWarning)
        stats = cover_stats(f)
    samples = sample_cover_times(make_rng(int(opts["seed"]), 0), f, trials)
    values, counts = np.unique(samples, return_counts=True)
    out.csv("cover_histogram.csv", ["cover_time", "count", "frequency"],
            zip(values.tolist(), counts.tolist(), (counts / trials).tolist()))
    se = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    data = {
        "node_success": list(f),
        "expected_cover_time": stats.expected_cover,
        "pgf_domain_bound": stats.domain_bound,
        "exact_expected_cover_time": exact_expected_cover_time(f) if len(f) <= 20 else None,
        "monte_carlo_mean": float(samples.mean()),
        "monte_carlo_se": se,
        "trials": trials,
        "warnings": [str(w.message) for w in caught],
    }
    out.json("cover.json", data)
    print(f"E{{T}} (formula) = {stats.expected_cover:.6g}  Monte Carlo = {samples.mean():.6g} +- {se:.2g}")
    return EXIT_OK


def cmd_validate(sc: Scenario | None, opts: dict, out: Output) -> int:
    from .validation import CRITERIA, run_all

    numbers = opts["criteria"] or sorted(CRITERIA)
    results = run_all(numbers, seed=int(opts["seed"]))
    for r in results:
        print(r.report())
    out.json("validation.json", [
        {"criterion": r.number, "name": r.name, "passed": r.passed, "elapsed": r.elapsed,
         "budget": r.budget, "checks": [c.__dict__ for c in r.checks], "notes": r.notes}
        for r in results
    ])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "rate": cmd_rate,
    "power": cmd_power,
    "simulate": cmd_simulate,
    "cover": cmd_cover,
    "validate": cmd_validate,
}


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wncs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="scenario JSON, run manifest, or bundled scenario name")
        sp.add_argument("--out", default="wncs-out", help="output directory (default: wncs-out)")
        sp.add_argument("--seed", type=int, help="base RNG seed (default: 0)")
        sp.add_argument("--threads", type=int, help="worker thread cap (default: 1)")

    sp = sub.add_parser("rate", help="minimum transmission rates for both protocol classes")
    common(sp)
    sp.add_argument("--tol", type=float, help="relative tolerance of the gain bisection (default: 1e-6)")

    sp = sub.add_parser("power", help="minimum-power design")
    common(sp)
    sp.add_argument("--mode", choices=["lp", "two-link", "region"], help="default: lp")
    sp.add_argument("--grid", type=int,
                    help="simplex grid resolution (lp) or region grid size (default: from config, "
                         "else 50 for up to three links and 12 beyond; region 141)")
    sp.add_argument("--delta", type=float, help="slack in the stability constant (default: config or 1e-6)")

    sp = sub.add_parser("simulate", help="Monte Carlo decay estimate and one sample path")
    common(sp)
    sp.add_argument("--trials", type=int, help="number of trials (default: config or 500)")
    sp.add_argument("--rate", type=float, help="transmission rate override")
    sp.add_argument("--horizon", type=float, help="horizon override in seconds")
    sp.add_argument("--protocol", help="round_robin or stochastic_uniform")

    sp = sub.add_parser("cover", help="cover-time statistics of the stochastic protocol")
    common(sp)
    sp.add_argument("--trials", type=int, help="Monte Carlo samples (default: 100000)")

    sp = sub.add_parser("validate", help="run the acceptance checks")
    common(sp, config_required=False)
    sp.add_argument("--criteria", type=int, nargs="+", help="subset of criteria (default: all)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        opts = _resolve_options(args)
        sc = load_config(args.config) if getattr(args, "config", None) else None
        if sc is None and args.command != "validate":
            raise ConfigError("--config is required")
        out = Output(Path(args.out))
        code = COMMANDS[args.command](sc, opts, out)
        _write_manifest(out, args, opts, sc, started)
        return code
    except InfeasibleError as exc:
        binding = f" (binding: {exc.binding})" if exc.binding else ""
        print(f"infeasible: {exc}{binding}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NotAsUgesError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
