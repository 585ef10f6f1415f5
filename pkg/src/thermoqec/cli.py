"""Command-line experiment runner.

Subcommands:
  run           simulate a configured experiment, write per-step CSV + summary
  verify-gates  check compiled gates and rounds against canonical unitaries
  rate-model    evaluate the analytic models (cooling, steady fidelity,
                slow cooling, round chain)
  compare       trajectory ensemble vs round-chain prediction (and optional
                master-equation oracle) at the configured parameters

Exit codes: 0 success, 1 runtime failure or verification threshold exceeded,
2 invalid configuration or parameters.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compiler import (
    build_measured_round,
    build_measurement_free_round,
    canonical_cnot,
    canonical_toffoli,
    compile_cnot,
    compile_toffoli,
    dump_schedule,
    phase_aligned_distance,
    schedule_net_unitary,
    GateSchedule,
    Step,
)
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import NoiseParams, evolve_master_equation, run_ensemble, trajectory_stream
from .metrics import compute_step_metrics, round_end_series
from .qstate import StateVector, trace_distance
from .ratemodel import (
    CoolingRates,
    RoundChainState,
    RoundEventParams,
    ancilla_steady_fidelity,
    chain_decay_constant,
    chain_steady_state,
    cooling_closed_form,
    decay_constant_series,
    event_probabilities,
    first_round_weight0,
    fit_decay_constant,
    flow_coefficients,
    integrate_cooling,
    iterate_round_chain,
    perturbative_weight0,
    slow_cooling_steady_fidelity,
    steady_weight0_ratio,
    steady_weight0_series,
)

GATE_TOL = 1e-9


def _fmt(x) -> str:
    return "nan" if x != x else f"{x:.12g}"


def _schedule_for(protocol: str) -> GateSchedule:
    return build_measured_round() if protocol == "measured" else build_measurement_free_round()


def _write_metrics_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "step", "time", "f2_data", "f2_ancilla", "s_total", "s_data", "s_anc", "n_traj"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.round_index,
                    r.step_index,
                    _fmt(r.time),
                    _fmt(r.f2_data),
                    _fmt(r.f2_ancilla),
                    _fmt(r.s_total),
                    _fmt(r.s_data),
                    _fmt(r.s_ancilla),
                    r.n_traj,
                ]
            )


def cmd_run(cfg: ExperimentConfig) -> int:
    schedule = _schedule_for(cfg.protocol)
    noise = NoiseParams(cfg.gamma_h, cfg.Gamma_c, cfg.n_c, cooling_gate=cfg.cooling)
    initial = StateVector.basis(schedule.n_qubits, 0)
    store, per_step = cfg.resolved_store(len(schedule))
    acc, _ = run_ensemble(
        initial,
        cfg.rounds,
        schedule,
        noise,
        cfg.n_traj,
        master_seed=cfg.master_seed,
        n_sub=cfg.n_sub,
        store=store,
        per_step_rho=per_step,
    )
    rows = compute_step_metrics(acc)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(out / "metrics.csv", rows)

    ends = round_end_series(rows, "f2_data")
    tail = ends[max(0, 3 * len(ends) // 4) :]
    lines = [
        f"thermoqec {__version__} run summary",
        f"protocol = {cfg.protocol} ({len(schedule)} steps/round)",
        f"gamma_h = {_fmt(cfg.gamma_h)}  Gamma_c = {_fmt(cfg.Gamma_c)}  n_c = {_fmt(cfg.n_c)}"
        f"  cooling = {cfg.cooling}",
        f"rounds = {cfg.rounds}  n_traj = {cfg.n_traj}  n_sub = {cfg.n_sub}  store = {store}",
        f"master_seed = {cfg.master_seed}  (trajectory k uses Philox key (master_seed, k))",
        f"final-round data fidelity = {_fmt(ends[-1])}",
        f"steady-state estimate (mean of last {len(tail)} rounds) = {_fmt(tail.mean())}",
    ]
    if cfg.protocol == "measured" and len(schedule) * cfg.gamma_h <= 1.0:
        params = RoundEventParams.from_physical(cfg.gamma_h, cfg.n_c, steps=len(schedule))
        flows = flow_coefficients(event_probabilities(params))
        chain = iterate_round_chain(RoundChainState.pristine(), flows, cfg.rounds)
        lines += [
            "rate-model comparison (weight-class chain):",
            f"  predicted first-round weight-0 = "
            f"{_fmt(first_round_weight0(cfg.n_c, params.alpha, params.beta))}",
            f"  simulated first-round data fidelity = {_fmt(ends[0])}",
            f"  predicted steady weight-0 = {_fmt(chain_steady_state(flows).P0)}",
            f"  chain after {cfg.rounds} rounds = {_fmt(chain[-1].P0)}",
        ]
    elif cfg.protocol == "measured":
        lines.append("rate-model comparison skipped: per-round error load exceeds 1")
    if cfg.oracle:
        oracle = evolve_master_equation(
            initial.projector(), schedule, noise, rounds=cfg.rounds
        )
        dists = []
        if acc.store != "full":
            lines.append("oracle comparison skipped: run needs store=full for total matrices")
        else:
            for rnd in range(cfg.rounds):
                dists.append(trace_distance(acc.mean_rho("total", rnd), oracle.rho(rnd)))
            lines.append(
                "trajectory-vs-oracle trace distance per round end = "
                + " ".join(_fmt(d) for d in dists)
            )
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    return 0


def _verification_table(fault_injection: bool = False):
    """(name, schedule-like fragment, canonical matrix, n_qubits) entries."""
    cnot_steps = compile_cnot(0, 1)
    if fault_injection:
        bad = []
        for step in cnot_steps:
            terms = tuple(
                type(t)(t.kind, t.qubits, t.strength + 1e-3) if t.kind == "hadamard" else t
                for t in step.terms
            )
            bad.append(Step(terms, label=step.label))
        cnot_steps = bad

    def frag_unitary(steps, n):
        sched = GateSchedule(n, tuple(range(n)), (), tuple(steps))
        return schedule_net_unitary(sched).matrix

    measured = build_measured_round()
    mf = build_measurement_free_round()

    transversal = measured.steps[2:6]
    canon_trans = np.eye(64, dtype=complex)
    for c, t in [(0, 3), (1, 4), (2, 5)]:
        canon_trans = canonical_cnot(6, c, t) @ canon_trans

    canon_measured = canon_trans.copy()
    for c, t in [(3, 4), (3, 5)]:
        canon_measured = canonical_cnot(6, c, t) @ canon_measured

    canon_mf = np.eye(32, dtype=complex)
    for c, t in [(0, 3), (2, 4), (1, 3), (1, 4)]:
        canon_mf = canonical_cnot(5, c, t) @ canon_mf
    idx = np.arange(32)
    xq3 = np.zeros((32, 32), dtype=complex)
    xq3[idx ^ 2, idx] = 1.0
    xq4 = np.zeros((32, 32), dtype=complex)
    xq4[idx ^ 1, idx] = 1.0
    canon_mf = xq4 @ canon_mf
    canon_mf = canonical_toffoli(5, 3, 4, 0) @ canon_mf
    canon_mf = xq4 @ canon_mf
    canon_mf = canonical_toffoli(5, 3, 4, 1) @ canon_mf
    canon_mf = xq3 @ canon_mf
    canon_mf = canonical_toffoli(5, 3, 4, 2) @ canon_mf
    canon_mf = xq3 @ canon_mf

    return [
        ("CNOT", frag_unitary(cnot_steps, 2), canonical_cnot(2, 0, 1)),
        ("Toffoli", frag_unitary(compile_toffoli(0, 1, 2), 3), canonical_toffoli(3, 0, 1, 2)),
        ("transversal CNOT block", frag_unitary(transversal, 6), canon_trans),
        (
            "measured round (pre-measurement)",
            schedule_net_unitary(measured, stop=14).matrix,
            canon_measured,
        ),
        ("measurement-free round", schedule_net_unitary(mf).matrix, canon_mf),
    ]


def cmd_verify_gates(fault_injection: bool = False, dump: bool = False) -> int:
    measured = build_measured_round()
    mf = build_measurement_free_round()
    print(f"measured round steps: {len(measured)}")
    print(f"measurement-free round steps: {len(mf)}")
    if dump:
        print(dump_schedule(measured))
        print(dump_schedule(mf))
    worst = 0.0
    for name, u, canon in _verification_table(fault_injection):
        d = phase_aligned_distance(u, canon)
        worst = max(worst, d)
        status = "ok" if d < GATE_TOL else "FAIL"
        print(f"{name:36s} phase-aligned distance = {d:.3e}  [{status}]")
    if worst >= GATE_TOL:
        print(f"verification FAILED (worst distance {worst:.3e} >= {GATE_TOL})")
        return 1
    print("all gate verifications passed")
    return 0


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def cmd_rate_model(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "cooling":
        rates = CoolingRates.from_reservoir(args.Gamma_c, args.n_c)
        P = np.zeros(8)
        P[args.initial] = 1.0
        rows = []
        n_pts = 200
        for j in range(n_pts + 1):
            t = args.t_max * j / n_pts
            pops = integrate_cooling(P, rates, t) if t > 0 else P
            row = [t] + list(pops)
            if rates.B == 0:
                row += list(cooling_closed_form(args.initial, rates.A, t))
            rows.append(row)
        header = ["t"] + [f"P{i}" for i in range(8)]
        if rates.B == 0:
            header += [f"P{i}_closed" for i in range(8)]
        _write_table(out / "cooling.csv", header, rows)
        print(f"wrote {out / 'cooling.csv'}")
        print(f"steady ancilla fidelity at n_c={args.n_c}: {_fmt(ancilla_steady_fidelity(args.n_c))}")
        return 0
    if args.model == "steady-fidelity":
        rows = [[n_c, ancilla_steady_fidelity(n_c)] for n_c in args.n_c_values]
        _write_table(out / "steady_fidelity.csv", ["n_c", "f2_ancilla"], rows)
        for n_c, f in rows:
            print(f"n_c = {_fmt(float(n_c))}  steady ancilla fidelity = {_fmt(f)}")
        return 0
    if args.model == "slow-cooling":
        a_rate = args.Gamma_c * (args.n_c + 1.0)
        alpha = 6 * args.steps * args.gamma_h
        x = float(np.exp(-args.steps * a_rate))
        fss = slow_cooling_steady_fidelity(alpha, x)
        print(f"alpha (per-round ancilla error load) = {_fmt(alpha)}")
        print(f"x (per-bit cooling survival over {args.steps} steps) = {_fmt(x)}")
        print(f"self-consistent steady ancilla fidelity = {_fmt(fss)}")
        return 0
    if args.model == "chain":
        params = RoundEventParams(args.F_a, args.alpha, args.beta if args.beta is not None else args.alpha)
        flows = flow_coefficients(event_probabilities(params))
        states = iterate_round_chain(RoundChainState.pristine(), flows, args.rounds)
        rows = [
            [n, s.P0, s.Pa, s.Pb, s.P7, perturbative_weight0(max(n, 1), params.alpha)]
            for n, s in enumerate(states)
        ]
        _write_table(out / "chain.csv", ["round", "P0", "Pa", "Pb", "P7", "P0_series"], rows)
        print(f"wrote {out / 'chain.csv'}")
        p0_seq = [s.P0 for s in states]
        p_ss, delta = fit_decay_constant(p0_seq, args.skip)
        print(f"first-round weight-0 (first-order) = {_fmt(first_round_weight0(0.0, params.alpha, params.beta))}")
        print(f"steady state: chain fixed point = {_fmt(chain_steady_state(flows).P0)}")
        print(f"              symmetric-ratio closed form = {_fmt(steady_weight0_ratio(flows))}")
        print(f"              matched second-order series = {_fmt(steady_weight0_series(params.alpha))}")
        print(f"fitted plateau = {_fmt(p_ss)}  fitted delta0 = {_fmt(delta)}")
        print(f"eigenvalue delta0 = {_fmt(chain_decay_constant(flows))}")
        print(f"series delta0 = 1 + 42*alpha^2 = {_fmt(decay_constant_series(params.alpha))}")
        print(f"(delta0 - 1)/alpha^2 = {_fmt((delta - 1) / params.alpha**2)}")
        return 0
    raise ConfigError(f"unknown rate-model subcommand {args.model!r}")


def cmd_compare(cfg: ExperimentConfig) -> int:
    if cfg.protocol != "measured":
        raise ConfigError("compare mode models the measured protocol only")
    schedule = _schedule_for(cfg.protocol)
    noise = NoiseParams(cfg.gamma_h, cfg.Gamma_c, cfg.n_c, cooling_gate=cfg.cooling)
    initial = StateVector.basis(schedule.n_qubits, 0)
    store = "full" if cfg.oracle else "scalar"
    acc, _ = run_ensemble(
        initial,
        cfg.rounds,
        schedule,
        noise,
        cfg.n_traj,
        master_seed=cfg.master_seed,
        n_sub=cfg.n_sub,
        store=store,
        per_step_rho=False,
    )
    sim = acc.mean_f2_data()[:, -1]
    params = RoundEventParams.from_physical(cfg.gamma_h, cfg.n_c, steps=len(schedule))
    flows = flow_coefficients(event_probabilities(params))
    chain = iterate_round_chain(RoundChainState.pristine(), flows, cfg.rounds)
    oracle = None
    if cfg.oracle:
        oracle = evolve_master_equation(initial.projector(), schedule, noise, rounds=cfg.rounds)
    rows = []
    for rnd in range(cfg.rounds):
        row = [rnd + 1, float(sim[rnd]), chain[rnd + 1].P0]
        if oracle is not None:
            f2o = oracle.f2_series()[rnd, -1, 0]
            row += [float(f2o), trace_distance(acc.mean_rho("total", rnd), oracle.rho(rnd))]
        rows.append(row)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["round", "f2_data_traj", "f2_data_chain"]
    if oracle is not None:
        header += ["f2_data_oracle", "trace_distance"]
    _write_table(out / "compare.csv", header, rows)
    for row in rows:
        print("  ".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    print(f"wrote {out / 'compare.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermoqec", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("run", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--traj", type=int, default=None, help="override n_traj")
        p.add_argument("--oracle", action="store_true", help="also run the master-equation oracle")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("verify-gates")
    p.add_argument("--fault-injection", action="store_true", help="perturb an angle; expect failure")
    p.add_argument("--dump", action="store_true", help="print full schedules")

    p = sub.add_parser("rate-model")
    rm = p.add_subparsers(dest="model", required=True)
    c = rm.add_parser("cooling")
    c.add_argument("--n-c", dest="n_c", type=float, default=0.0)
    c.add_argument("--Gamma-c", dest="Gamma_c", type=float, default=3.0)
    c.add_argument("--t-max", dest="t_max", type=float, default=3.0)
    c.add_argument("--initial", type=int, default=7, choices=range(8))
    c.add_argument("--out", default="results")
    c = rm.add_parser("steady-fidelity")
    c.add_argument("--n-c-values", dest="n_c_values", type=float, nargs="+", default=[0.0, 1e-3, 1e-2, 1e-1])
    c.add_argument("--out", default="results")
    c = rm.add_parser("slow-cooling")
    c.add_argument("--gamma-h", dest="gamma_h", type=float, default=1e-3)
    c.add_argument("--Gamma-c", dest="Gamma_c", type=float, default=0.1)
    c.add_argument("--n-c", dest="n_c", type=float, default=1e-2)
    c.add_argument("--steps", type=int, default=16)
    c.add_argument("--out", default="results")
    c = rm.add_parser("chain")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--beta", type=float, default=None)
    c.add_argument("--F-a", dest="F_a", type=float, default=1.0)
    c.add_argument("--rounds", type=int, default=4000)
    c.add_argument("--skip", type=int, default=4)
    c.add_argument("--out", default="results")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "compare"):
            overrides: dict = {}
            if args.seed is not None:
                overrides["master_seed"] = args.seed
            if args.traj is not None:
                overrides["n_traj"] = args.traj
            if args.oracle:
                overrides["oracle"] = True
            if args.out is not None:
                overrides["out"] = args.out
            cfg = load_config(args.config, overrides)
            return cmd_run(cfg) if args.command == "run" else cmd_compare(cfg)
        if args.command == "verify-gates":
            return cmd_verify_gates(args.fault_injection, args.dump)
        if args.command == "rate-model":
            return cmd_rate_model(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
