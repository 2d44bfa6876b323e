"""Reproducible experiment front end.

Subcommands
    gap-scan       exact minimum spectral gap over an n ladder -> CSV
    gibbs          exact thermal weight marginal + gap sandwich -> JSON
    pimc-validate  tiny-instance enumeration checks on the worldline chain
    sqa-run        one (or many seeded) quantum annealing runs
    sa-run         classical annealing baseline runs
    spike-time     ST sampling statistics plus the tail bound -> JSON + CSV
    fit            log-log exponent fit from a CSV series -> JSON

Every output artifact embeds the tool version, the canonical config, and
its SHA-256 hash, and formats floats via repr, so identical config plus
seed reproduces files byte for byte.  Multi-task commands derive
per-task seeds from the master seed as SeedSequence([master, index]) and
merge results by task index; SPIKEQMC_WORKERS sets the process pool
width (default 1).

Exit codes: 0 success, 1 domain/usage error, 2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from spikeqmc import __version__, exact, pimc, stats
from spikeqmc.annealer import build_schedule, default_beta, run_sqa
from spikeqmc.pimc import PimcConfig, default_slice_count
from spikeqmc.sa import SaConfig, geometric_beta_schedule, run_sa
from spikeqmc.spike import SpikeParams

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """Usage problems are domain errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def _config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit_json(path: Path, config: dict, payload: dict) -> None:
    doc = {"version": __version__, "config_hash": _config_hash(config),
           "config": config}
    doc.update(_jsonable(payload))
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"wrote {path}")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _emit_csv(path: Path, config: dict, header: str, rows) -> None:
    lines = [f"# spikeqmc={__version__}",
             f"# config_hash={_config_hash(config)}",
             f"# config={_canonical(config)}",
             header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _subseed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index])
               .generate_state(1, np.uint64)[0])


def _workers() -> int:
    return max(1, int(os.environ.get("SPIKEQMC_WORKERS", "1")))


def _pmap(fn, tasks):
    """Order-preserving map over independent tasks."""
    w = _workers()
    if w == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------- gap-scan

def _gap_task(task):
    n, alpha, eta, spikeless, s_points = task
    params = SpikeParams(n, alpha, eta)
    grid = np.linspace(0.0, 1.0, s_points + 1)[:-1]
    res = exact.min_gap_scan(params, s_grid=grid, spikeless=spikeless)
    return n, res.delta_min, res.s_star


def _cmd_gap_scan(args) -> int:
    ns = [int(v) for v in args.ns.split(",") if v]
    if not ns:
        raise ValueError("--ns must list at least one n")
    config = {"command": "gap-scan", "alpha": args.alpha, "eta": args.eta,
              "ns": ns, "s_points": args.s_points,
              "spikeless": args.spikeless}
    for n in ns:
        SpikeParams(n, args.alpha, args.eta)
    rows = _pmap(_gap_task, [(n, args.alpha, args.eta, args.spikeless,
                              args.s_points) for n in ns])
    _emit_csv(_out_dir(args) / "gap_scan.csv", config,
              "n,delta_min,s_star", rows)
    return 0


# ------------------------------------------------------------------- gibbs

def _cmd_gibbs(args) -> int:
    params = SpikeParams(args.n, args.alpha, args.eta)
    config = {"command": "gibbs", "n": args.n, "alpha": args.alpha,
              "eta": args.eta, "beta": args.beta, "s": args.s,
              "spikeless": args.spikeless}
    marginal = exact.sector_gibbs_marginal(params, args.s, args.beta,
                                           spikeless=args.spikeless)
    spec = exact.symmetric_ground_and_gap(params, args.s,
                                          spikeless=args.spikeless)
    tv = exact.tv_to_ground(params, args.s, args.beta,
                            spikeless=args.spikeless)
    lo, hi = exact.thermal_error_bounds(args.n, spec.gap, args.beta)
    _emit_json(_out_dir(args) / "gibbs.json", config, {
        "weight_marginal": marginal,
        "symmetric_gap": spec.gap,
        "ground_energy": float(spec.energies[0]),
        "tv_to_ground": tv,
        "tv_lower_bound": lo,
        "tv_upper_bound": hi,
        "sandwich_ok": bool(lo - 1e-12 <= tv <= hi + 1e-12),
    })
    return 0


# ----------------------------------------------------------- pimc-validate

def _cmd_pimc_validate(args) -> int:
    params = SpikeParams(args.n, args.alpha, args.eta)
    config = {"command": "pimc-validate", "n": args.n, "alpha": args.alpha,
              "eta": args.eta, "L": args.L, "s": args.s, "beta": args.beta,
              "spikeless": args.spikeless}
    cfg = PimcConfig(params=params, beta=args.beta, num_slices=args.L,
                     s=args.s, spikeless=args.spikeless)
    pi = pimc.enumerate_pi(cfg)
    P = pimc.transition_matrix(cfg)
    dense = P.toarray()
    row_residual = float(np.abs(dense.sum(axis=1) - 1.0).max())
    lazy_ok = bool(dense.diagonal().min() >= 0.5 - 1e-15)
    flow = pi[:, None] * dense
    db_violation = float(np.abs(flow - flow.T).max())
    stationarity = float(np.abs(pi @ dense - pi).max())
    gap = stats.chain_spectral_gap(P, pi=pi)
    checks = {
        "rows_stochastic": row_residual < 1e-12,
        "lazy": lazy_ok,
        "detailed_balance": db_violation < 1e-12,
        "stationary": stationarity < 1e-12,
        "gap_positive": gap > 0.0,
    }
    passed = all(checks.values())
    _emit_json(_out_dir(args) / "pimc_validate.json", config, {
        "row_sum_residual": row_residual,
        "detailed_balance_violation": db_violation,
        "stationarity_residual": stationarity,
        "spectral_gap": gap,
        "checks": checks,
        "passed": passed,
    })
    if not passed:
        print("pimc-validate: checks failed", file=sys.stderr)
        return 1
    return 0


# ----------------------------------------------------------------- sqa-run

def _sqa_task(task):
    (n, alpha, eta, beta, L, c_s, mult, spikeless, burn_in, seed) = task
    params = SpikeParams(n, alpha, eta)
    sched = build_schedule(n, beta, c_s=c_s, sweeps_multiplier=mult,
                           num_slices=L)
    return run_sqa(params, schedule=sched, num_slices=L, seed=seed,
                   spikeless=spikeless, burn_in_sweeps=burn_in)


def _cmd_sqa_run(args) -> int:
    params = SpikeParams(args.n, args.alpha, args.eta)
    beta = default_beta(params) if args.beta is None else args.beta
    L = default_slice_count(args.n, beta) if args.L is None else args.L
    config = {"command": "sqa-run", "n": args.n, "alpha": args.alpha,
              "eta": args.eta, "beta": beta, "L": L, "c_s": args.c_s,
              "sweeps_multiplier": args.sweeps_multiplier,
              "burn_in_sweeps": args.burn_in_sweeps,
              "spikeless": args.spikeless, "seed": args.seed,
              "num_seeds": args.num_seeds}
    base = (args.n, args.alpha, args.eta, beta, L, args.c_s,
            args.sweeps_multiplier, args.spikeless, args.burn_in_sweeps)
    out = _out_dir(args)
    if args.num_seeds == 1:
        rep = _sqa_task(base + (args.seed,))
        _emit_json(out / "sqa_run.json", config,
                   {"report": json.loads(rep.to_json())})
        trace = rep.trace_csv().rstrip("\n").split("\n")
        _emit_csv(out / "sqa_trace.csv", config, trace[0],
                  [r.split(",") for r in trace[1:]])
        return 0
    seeds = [_subseed(args.seed, k) for k in range(args.num_seeds)]
    reports = _pmap(_sqa_task, [base + (sd,) for sd in seeds])
    _emit_json(out / "sqa_runs.json", config, _summarize_runs(reports))
    return 0


def _summarize_runs(reports) -> dict:
    finals = [int(r.final_weight) for r in reports]
    bests = [int(r.best_weight_seen) for r in reports]
    return {
        "num_runs": len(reports),
        "runs": [{"seed": r.seed, "final_weight": int(r.final_weight),
                  "best_weight_seen": int(r.best_weight_seen),
                  "best_cost_seen": float(r.best_cost_seen),
                  "wall_steps": int(r.wall_steps)} for r in reports],
        "final_success_fraction": sum(f == 0 for f in finals) / len(finals),
        "best_success_fraction": sum(b == 0 for b in bests) / len(bests),
    }


# ------------------------------------------------------------------ sa-run

def _sa_task(task):
    (n, alpha, eta, stages, beta_start, beta_end, steps, spikeless,
     seed) = task
    params = SpikeParams(n, alpha, eta)
    sched = geometric_beta_schedule(n, stages, beta_start, beta_end)
    return run_sa(SaConfig(params, sched, steps_per_beta=steps, seed=seed,
                           spikeless=spikeless))


def _cmd_sa_run(args) -> int:
    SpikeParams(args.n, args.alpha, args.eta)
    beta_end = 2.0 * args.n if args.beta_end is None else args.beta_end
    steps = (math.ceil(args.sweeps_multiplier * args.n)
             if args.steps_per_beta is None else args.steps_per_beta)
    config = {"command": "sa-run", "n": args.n, "alpha": args.alpha,
              "eta": args.eta, "stages": args.stages,
              "beta_start": args.beta_start, "beta_end": beta_end,
              "steps_per_beta": steps, "spikeless": args.spikeless,
              "seed": args.seed, "num_seeds": args.num_seeds}
    base = (args.n, args.alpha, args.eta, args.stages, args.beta_start,
            beta_end, steps, args.spikeless)
    out = _out_dir(args)
    if args.num_seeds == 1:
        rep = _sa_task(base + (args.seed,))
        _emit_json(out / "sa_run.json", config,
                   {"report": json.loads(rep.to_json())})
        trace = rep.trace_csv().rstrip("\n").split("\n")
        _emit_csv(out / "sa_trace.csv", config, trace[0],
                  [r.split(",") for r in trace[1:]])
        return 0
    seeds = [_subseed(args.seed, k) for k in range(args.num_seeds)]
    reports = _pmap(_sa_task, [base + (sd,) for sd in seeds])
    _emit_json(out / "sa_runs.json", config, _summarize_runs(reports))
    return 0


# -------------------------------------------------------------- spike-time

def _cmd_spike_time(args) -> int:
    params = SpikeParams(args.n, args.alpha, args.eta)
    beta = default_beta(params) if args.beta is None else args.beta
    L = default_slice_count(args.n, beta) if args.L is None else args.L
    cfg = PimcConfig(params=params, beta=beta, num_slices=L, s=args.s,
                     spikeless=args.spikeless)
    thinning = args.thinning if args.thinning else cfg.site_count
    lam = (8.0 * params.height * beta * math.log(args.n)
           if args.lam is None else args.lam)
    config = {"command": "spike-time", "n": args.n, "alpha": args.alpha,
              "eta": args.eta, "beta": beta, "L": L, "s": args.s,
              "theta": args.theta, "lam": lam, "samples": args.samples,
              "thinning": thinning, "spikeless": args.spikeless,
              "seed": args.seed}
    rng = np.random.default_rng(args.seed)
    samples = stats.sample_spike_times(cfg, args.samples, thinning, rng)
    st = stats.SpikeTimeStats.from_samples(samples, m_max=args.m_max,
                                           num_slices=L)
    b_theta = stats.st_threshold(args.theta, cfg)
    bound = stats.mgf_chernoff_bound(lam, args.theta, cfg)
    hits = int((samples >= b_theta).sum())
    tail = hits / args.samples
    tail_stderr = math.sqrt(max(tail * (1.0 - tail), 1e-300) / args.samples)
    payload = {
        "mean": st.mean,
        "variance": st.variance,
        "n_effective": st.n_effective,
        "empirical_moments": {str(m): v
                              for m, v in st.empirical_moments.items()},
        "log_moment_bounds": {str(m): stats.moment_bound(m, L, args.n,
                                                         args.eta)
                              for m in range(1, args.m_max + 1)},
        "b_theta": b_theta,
        "tail_fraction": tail,
        "tail_stderr": tail_stderr,
        "log_mgf_bound": bound.mgf_bound,
        "log_chernoff_bound": bound.chernoff_bound,
        "small_lambda": bound.small_lambda,
    }
    if args.spikeless:
        leak = stats.estimate_leakage(cfg, args.theta, args.samples,
                                      thinning, np.random.default_rng(
                                          _subseed(args.seed, 1)))
        payload["leakage"] = {"estimate": leak.estimate,
                              "stderr": leak.stderr,
                              "successes": leak.successes,
                              "upper95": leak.upper95}
    out = _out_dir(args)
    _emit_json(out / "spike_time.json", config, payload)
    log_emp = math.log(tail) if tail > 0 else float("-inf")
    _emit_csv(out / "spike_time.csv", config,
              "n,L,beta,s,theta,lambda,bound_log,empirical_log,stderr",
              [(args.n, L, beta, args.s, args.theta, lam,
                bound.chernoff_bound, log_emp, tail_stderr)])
    return 0


# --------------------------------------------------------------------- fit

def _cmd_fit(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        raise ValueError(f"no such file: {path}")
    body = "\n".join(ln for ln in path.read_text().splitlines()
                     if ln and not ln.startswith("#"))
    data = np.genfromtxt(io.StringIO(body), delimiter=",", names=True)
    if data.dtype.names is None or args.x_col not in data.dtype.names \
            or args.y_col not in data.dtype.names:
        raise ValueError(
            f"{path} lacks columns {args.x_col!r}/{args.y_col!r}; "
            f"found {data.dtype.names}")
    x = np.atleast_1d(data[args.x_col])
    y = np.atleast_1d(data[args.y_col])
    config = {"command": "fit", "csv": str(path), "x_col": args.x_col,
              "y_col": args.y_col}
    exponent, r2 = stats.fit_gap_exponent(x, y)
    _emit_json(_out_dir(args) / "fit.json", config, {
        "exponent": exponent,
        "r_squared": r2,
        "num_points": int(x.size),
    })
    return 0


# -------------------------------------------------------------------- main

def _add_common(p, *, model=True, seed=True):
    if model:
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--alpha", type=float, required=True)
        p.add_argument("--eta", type=float, required=True)
        p.add_argument("--spikeless", action="store_true")
    if seed:
        p.add_argument("--seed", type=int, default=0,
                       help="master seed (default 0)")
    p.add_argument("--out-dir", default=".",
                   help="output directory (default: current)")


def _build_parser() -> _Parser:
    root = _Parser(prog="spikeqmc",
                   description="spike-cost annealing experiments")
    root.add_argument("--version", action="version",
                      version=f"spikeqmc {__version__}")
    sub = root.add_subparsers(dest="command", required=True,
                              parser_class=_Parser)

    p = sub.add_parser("gap-scan", help="exact minimum gap over an n ladder")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--ns", required=True,
                   help="comma-separated problem sizes, e.g. 64,128,256")
    p.add_argument("--s-points", type=int, default=512)
    p.add_argument("--spikeless", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_gap_scan)

    p = sub.add_parser("gibbs", help="exact thermal marginal and gap bounds")
    _add_common(p, seed=False)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.set_defaults(func=_cmd_gibbs)

    p = sub.add_parser("pimc-validate",
                       help="enumeration checks on a tiny worldline chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--spikeless", action="store_true")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_pimc_validate)

    p = sub.add_parser("sqa-run", help="quantum annealing run(s)")
    _add_common(p)
    p.add_argument("--beta", type=float, default=None,
                   help="default n^(1/2+alpha+eta)")
    p.add_argument("--L", type=int, default=None,
                   help="slice count (default from n and beta)")
    p.add_argument("--c-s", type=float, default=1.0)
    p.add_argument("--sweeps-multiplier", type=float, default=10.0)
    p.add_argument("--burn-in-sweeps", type=int, default=5)
    p.add_argument("--num-seeds", type=int, default=1)
    p.set_defaults(func=_cmd_sqa_run)

    p = sub.add_parser("sa-run", help="classical annealing baseline run(s)")
    _add_common(p)
    p.add_argument("--stages", type=int, default=100)
    p.add_argument("--beta-start", type=float, default=0.1)
    p.add_argument("--beta-end", type=float, default=None,
                   help="default 2n")
    p.add_argument("--steps-per-beta", type=int, default=None)
    p.add_argument("--sweeps-multiplier", type=float, default=10.0,
                   help="sets steps-per-beta = ceil(mult*n) when unset")
    p.add_argument("--num-seeds", type=int, default=1)
    p.set_defaults(func=_cmd_sa_run)

    p = sub.add_parser("spike-time",
                       help="spike-time statistics and tail bounds")
    _add_common(p)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--lam", type=float, default=None,
                   help="default 8 n^alpha beta ln n")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--thinning", type=int, default=None,
                   help="proposals between samples (default n*L)")
    p.add_argument("--m-max", type=int, default=4)
    p.set_defaults(func=_cmd_spike_time)

    p = sub.add_parser("fit", help="log-log exponent fit from a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--x-col", default="n")
    p.add_argument("--y-col", default="delta_min")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_fit)
    return root


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"spikeqmc: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"spikeqmc: internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
