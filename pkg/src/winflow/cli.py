"""Experiment runner.

Verbs: service-curve, effective-capacity, backlog, simulate, verify, and
reproduce (canned parameter studies fig4 through fig8).  Scenarios come from
an INI config file (see scenarios.py for the schema); every verb emits CSV
only.  Identical config and seed produce byte-identical files: floats are
written with shortest round-trip formatting and rows in deterministic order.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Sequence

import numpy as np

from . import units
from .bounds import (
    FeedbackParams,
    ThetaGrid,
    best_effcap_lower,
    block_curve,
    effcap_apriori,
    effcap_lower_blocks,
    effcap_lower_series,
    per_slot_curve,
    statistical_service_curve,
    steady_state_backlog_bound,
)
from .models import (
    DeterministicService,
    ExponentialArrivals,
    ExponentialVbrService,
    MarkovModulated2Service,
    MmooService,
    erlang_quantile,
)
from .scenarios import Scenario, canned_scenarios, load_scenarios
from .simulator import SimConfig, backlog_quantile, run_flow_control

__all__ = ["main"]


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write rows atomically; UTF-8, '.' decimal, deterministic order."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(",".join(header) + "\n")
            for row in rows:
                handle.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
                handle.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_bound_result_csv(path: str, result) -> str:
    """Serialize one BoundResult curve: t_or_theta, value, theta_opt, family, feasible."""
    rows = [
        [
            result.x[i],
            result.value[i],
            result.theta_opt[i],
            result.family,
            "true" if result.feasible[i] else "false",
        ]
        for i in range(len(result.x))
    ]
    return write_csv(path, ["t_or_theta", "value", "theta_opt", "family", "feasible"], rows)


def _is_markov(model) -> bool:
    return isinstance(model, (MmooService, MarkovModulated2Service))


def _grid(sc: Scenario) -> ThetaGrid:
    return ThetaGrid.logspace(sc.theta_min, sc.theta_max, sc.theta_points)


def _curve_family(model, fb: FeedbackParams):
    # at d = 1 the rate-capped per-slot route is the tightest available
    # (exact for i.i.d. increments); beyond that use the block bound
    return per_slot_curve(model, fb) if fb.d == 1 else block_curve(model, fb)


def cmd_service_curve(sc: Scenario, out_dir: str) -> List[str]:
    grid = _grid(sc)
    model = sc.service
    horizon = sc.horizon_slots
    ts = np.arange(horizon + 1)
    pairs = list(zip(sc.w_mb, sc.d_slots))
    ratios = {round(w / d, 12) for w, d in pairs}
    shared_ratio = len(ratios) == 1

    header = ["t_ms"]
    columns = []
    for w, d in pairs:
        fb = FeedbackParams(w=w, d=d)
        res = statistical_service_curve(_curve_family(model, fb), sc.epsilon, grid, horizon)
        header.append(f"curve_d{units.slots_to_ms(d, sc.slot_ms):g}ms_mb")
        columns.append(res.value)
    lower_cols = []
    for w, d in pairs:
        fb = FeedbackParams(w=w, d=d)
        lower = statistical_service_curve(per_slot_curve(model, fb), sc.epsilon, grid, horizon)
        lower_cols.append(lower.value)
        if shared_ratio:
            break
    if shared_ratio:
        header.append("lower_mb")
        columns.append(lower_cols[0])
    else:
        for (w, d), col in zip(pairs, lower_cols):
            header.append(f"lower_d{units.slots_to_ms(d, sc.slot_ms):g}ms_mb")
            columns.append(col)
    # the raw-service epsilon-quantile bounds any service envelope from
    # above, where the path distribution is known: Erlang sums for the
    # exponential server, a point mass for the constant server; otherwise
    # only the window term applies
    quantiles = None
    if isinstance(model, ExponentialVbrService):
        quantiles = np.array(
            [0.0] + [erlang_quantile(sc.epsilon, int(t), model.mean_rate) for t in ts[1:]]
        )
    elif isinstance(model, DeterministicService):
        quantiles = model.rate * ts.astype(float)
    for w, d in pairs:
        window_term = np.ceil(ts / d) * w
        upper = np.minimum(quantiles, window_term) if quantiles is not None else window_term
        header.append(f"upper_d{units.slots_to_ms(d, sc.slot_ms):g}ms_mb")
        columns.append(upper)

    rows = [
        [units.slots_to_ms(int(t), sc.slot_ms)] + [col[i] for col in columns]
        for i, t in enumerate(ts)
    ]
    path = os.path.join(out_dir, f"{sc.name}_service_curve.csv")
    return [write_csv(path, header, rows)]


def cmd_effective_capacity(sc: Scenario, out_dir: str) -> List[str]:
    grid = _grid(sc)
    model = sc.service
    iid = not _is_markov(model)
    paths = []

    def to_mbps(value: float) -> float:
        return units.mb_per_slot_to_mbps(value, sc.slot_ms) if math.isfinite(value) else math.nan

    for w, d in zip(sc.w_mb, sc.d_slots):
        fb = FeedbackParams(w=w, d=d)
        best = best_effcap_lower(model, fb, grid)
        rows = []
        for i, theta in enumerate(grid.values):
            series = effcap_lower_series(model, fb, theta) if iid else math.nan
            blocks = effcap_lower_blocks(model, fb, theta)
            apriori_lo, apriori_up = effcap_apriori(model, fb, theta)
            rows.append(
                [
                    units.theta_per_mb_to_per_bit(theta),
                    to_mbps(series),
                    to_mbps(blocks),
                    to_mbps(apriori_lo),
                    to_mbps(apriori_up),
                    to_mbps(best.value[i]),
                    best.provenance[i],
                ]
            )
        header = [
            "theta_per_bit",
            "lower_series_mbps",
            "lower_blocks_mbps",
            "apriori_lower_mbps",
            "apriori_upper_mbps",
            "best_lower_mbps",
            "best_family",
        ]
        d_ms = units.slots_to_ms(d, sc.slot_ms)
        path = os.path.join(out_dir, f"{sc.name}_effcap_d{d_ms:g}ms.csv")
        paths.append(write_csv(path, header, rows))
    return paths


def cmd_backlog(sc: Scenario, out_dir: str) -> List[str]:
    grid = _grid(sc)
    model = sc.service
    fb = FeedbackParams(w=sc.w_mb[0], d=sc.d_slots[0])
    curve = _curve_family(model, fb)
    header = ["lambda_mbps"] + [f"bound_eps{eps:.0e}_mb" for eps in sc.epsilons]
    if sc.simulate:
        header += [f"sim_eps{eps:.0e}_mb" for eps in sc.epsilons]
    rows = []
    for lam in sc.lambdas_mb:
        arrivals = ExponentialArrivals(lam)
        row = [units.mb_per_slot_to_mbps(lam, sc.slot_ms)]
        for eps in sc.epsilons:
            row.append(steady_state_backlog_bound(arrivals, curve, eps, grid))
        if sc.simulate:
            config = SimConfig(
                seed=sc.seed,
                total_slots=sc.total_slots,
                warmup_slots=sc.warmup_slots,
                arrivals=arrivals,
                service=model,
                feedback=fb,
                replications=sc.replications,
            )
            post = (sc.total_slots - sc.warmup_slots) * sc.replications
            for eps in sc.epsilons:
                if eps * post >= 100.0:
                    row.append(backlog_quantile(config, eps))
                else:
                    row.append(math.nan)
        rows.append(row)
    path = os.path.join(out_dir, f"{sc.name}_backlog.csv")
    return [write_csv(path, header, rows)]


def cmd_simulate(sc: Scenario, out_dir: str) -> List[str]:
    fb = FeedbackParams(w=sc.w_mb[0], d=sc.d_slots[0])
    config = SimConfig(
        seed=sc.seed,
        total_slots=sc.total_slots,
        warmup_slots=sc.warmup_slots,
        arrivals=sc.arrivals,
        service=sc.service,
        feedback=fb,
        replications=sc.replications,
    )
    paths = []
    summary_rows = []
    for r in range(sc.replications):
        run = run_flow_control(config, r)
        rows = [
            [
                int(k),
                run.backlog[k],
                run.queue[k],
            ]
            for k in run.checkpoints
        ]
        run_path = os.path.join(out_dir, f"{sc.name}_run{r}.csv")
        paths.append(write_csv(run_path, ["slot", "backlog_mb", "queue_mb"], rows))
        tail = run.backlog[sc.warmup_slots + 1 :]
        summary_rows.append(
            [
                r,
                units.mb_per_slot_to_mbps(run.throughput, sc.slot_ms),
                float(np.mean(tail)),
                float(np.max(tail)),
                float(np.quantile(tail, 0.99)),
                float(np.quantile(tail, 0.999)),
                run.backlog_drift(),
            ]
        )
    summary_path = os.path.join(out_dir, f"{sc.name}_summary.csv")
    paths.append(
        write_csv(
            summary_path,
            [
                "replication",
                "throughput_mbps",
                "mean_backlog_mb",
                "max_backlog_mb",
                "p99_backlog_mb",
                "p999_backlog_mb",
                "drift_ratio",
            ],
            summary_rows,
        )
    )
    return paths


_COMMANDS = {
    "service-curve": cmd_service_curve,
    "effective-capacity": cmd_effective_capacity,
    "backlog": cmd_backlog,
    "simulate": cmd_simulate,
}


def _run_scenarios(scenarios: List[Scenario], kind: str, out_dir: str, jobs: int) -> List[str]:
    selected = [sc for sc in scenarios if sc.kind == kind]
    if not selected:
        raise SystemExit(f"no scenarios of kind {kind!r} in the config")
    runner = _COMMANDS[kind]
    if jobs <= 1 or len(selected) == 1:
        produced = [runner(sc, out_dir) for sc in selected]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            produced = list(pool.map(lambda sc: runner(sc, out_dir), selected))
    return [p for group in produced for p in group]


def _apply_seed_override(scenarios: List[Scenario], seed) -> None:
    if seed is not None:
        for sc in scenarios:
            sc.seed = int(seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="winflow",
        description="Analytic bounds and simulation for window flow control "
        "systems with random service.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario INI file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override scenario seeds")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenario items")

    for verb in _COMMANDS:
        add_common(sub.add_parser(verb, help=f"run {verb} scenarios"))
    rep = sub.add_parser("reproduce", help="run a canned parameter study")
    rep.add_argument("figure", choices=["fig4", "fig5", "fig6", "fig7", "fig8"])
    add_common(rep, needs_config=False)
    ver = sub.add_parser("verify", help="run the invariant suite")
    ver.add_argument("--fast", action="store_true", help="smaller sample sizes")
    ver.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.verb == "verify":
        from .verify import run_report

        return run_report(fast=args.fast, seed=args.seed, stream=sys.stdout)

    if args.verb == "reproduce":
        scenarios = canned_scenarios(args.figure)
        _apply_seed_override(scenarios, args.seed)
        produced = []
        for sc in scenarios:
            produced.extend(_COMMANDS[sc.kind](sc, args.out))
        for path in produced:
            print(path)
        return 0

    scenarios = load_scenarios(args.config)
    _apply_seed_override(scenarios, args.seed)
    produced = _run_scenarios(scenarios, args.verb, args.out, args.jobs)
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
