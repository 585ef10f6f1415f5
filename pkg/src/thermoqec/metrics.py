"""Turn ensemble accumulators into the plotted per-step quantities:
data/ancilla fidelities and the three von Neumann entropies (bits)."""

from __future__ import annotations

from dataclasses import dataclass
from math import nan

import numpy as np

from .dynamics import EnsembleAccumulator
from .qstate import StateVector, squared_fidelity, von_neumann_entropy


@dataclass(frozen=True)
class RoundMetrics:
    """One sampled point of the protocol, after step `step_index` of round
    `round_index`. Entropies are nan when the run did not accumulate the
    corresponding density matrices."""

    round_index: int
    step_index: int
    time: float
    f2_data: float
    f2_ancilla: float
    s_total: float
    s_data: float
    s_ancilla: float
    n_traj: int


def compute_step_metrics(acc: EnsembleAccumulator, reference: StateVector | None = None) -> list[RoundMetrics]:
    """Per-step metric rows from an accumulator.

    The data fidelity is the overlap with `reference` (default: the
    all-ground data pattern, i.e. the initial logical state); the ancilla
    fidelity is the population of the all-ground ancilla pattern.
    """
    if acc.count < 1:
        raise ValueError("empty accumulator")
    n_data = len(acc.data_qubits)
    if reference is None:
        reference = StateVector.basis(n_data, 0)
    if reference.n_qubits != n_data:
        raise ValueError("reference must live on the data register")
    default_ref = bool(np.allclose(reference.amplitudes, StateVector.basis(n_data, 0).amplitudes))

    steps_per_round = acc.n_steps
    rows: list[RoundMetrics] = []
    f2d = np.clip(acc.mean_f2_data(), 0.0, 1.0)
    f2a = np.clip(acc.mean_f2_anc(), 0.0, 1.0)
    for rnd in range(acc.n_rounds):
        for step in range(steps_per_round):
            s_total = s_data = s_anc = nan
            f2 = f2d[rnd, step]
            has_rho = acc.store != "scalar" and (acc.per_step_rho or step == steps_per_round - 1)
            if has_rho:
                rho_data = acc.mean_rho("data", rnd, step)
                rho_anc = acc.mean_rho("ancilla", rnd, step)
                s_data = max(0.0, von_neumann_entropy(rho_data))
                s_anc = max(0.0, von_neumann_entropy(rho_anc))
                if not default_ref:
                    f2 = squared_fidelity(rho_data, reference)
                if acc.store == "full":
                    s_total = max(0.0, von_neumann_entropy(acc.mean_rho("total", rnd, step)))
            rows.append(
                RoundMetrics(
                    round_index=rnd,
                    step_index=step,
                    time=float((rnd * steps_per_round + step + 1)),
                    f2_data=float(f2),
                    f2_ancilla=float(f2a[rnd, step]),
                    s_total=s_total,
                    s_data=s_data,
                    s_ancilla=s_anc,
                    n_traj=acc.count,
                )
            )
    return rows


def round_end_series(rows: list[RoundMetrics], field: str = "f2_data") -> np.ndarray:
    """Value of one metric at the last step of each round."""
    steps = max(r.step_index for r in rows) + 1
    return np.array([getattr(r, field) for r in rows if r.step_index == steps - 1])


def codespace_weight(acc: EnsembleAccumulator, rnd: int, step: int = -1) -> float:
    """Diagnostic: total population of the two codewords (all-zero and
    all-one data patterns) at a sample point. Requires stored matrices."""
    rho = acc.mean_rho("data", rnd, step)
    dim = rho.elements.shape[0]
    return float(rho.elements[0, 0].real + rho.elements[dim - 1, dim - 1].real)
