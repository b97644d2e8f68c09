"""Task checks for built protocols on either backend, and backend cross-checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sim_dense as dense
from .pauli import ContradictoryOutcome, PauliString
from .protocols import ProtocolInstance, w_vector
from .sim_stabilizer import (
    EIGENSTATE_PREP,
    averaged_bloch,
    branch_process_matrices,
    enumerate_trajectories,
    input_records,
    prepared_input,
    run_trajectory,
    teleport_process_matrix,
)


@dataclass
class TaskResult:
    passed: bool
    backend: str
    details: dict = field(default_factory=dict)


def _teleport_stabilizer(inst, max_branches):
    lanes_ok, ptms, blochs, n_branches = [], [], [], 0
    for i, f in inst.metadata["lanes"]:
        runs = input_records(inst.circuit, i, max_branches)
        per_branch = branch_process_matrices(inst.circuit, i, f, runs=runs)
        n_branches = max(n_branches, len(per_branch))
        ok = all(m is not None and np.allclose(m, np.eye(3), atol=1e-12) for m in per_branch.values())
        lanes_ok.append(ok)
        ptms.append(teleport_process_matrix(inst.circuit, i, f, runs=runs).tolist())
        blochs.append(list(averaged_bloch(runs[("X", 1)], f)))
    return all(lanes_ok), {"lanes_pass": lanes_ok, "process_matrices": ptms, "branches": n_branches,
                           "bloch_plus_x": blochs}


def _teleport_dense(inst, max_branches):
    c = inst.circuit
    lanes_ok = []
    worst = 0.0
    for i, f in inst.metadata["lanes"]:
        ok = True
        for psi in dense.EIGENSTATES.values():
            init = dense.single_site_input(c.n_physical, i, psi)
            rho_in = np.outer(psi, psi.conj())
            for state, _ in dense.enumerate_branches(c, init, max_branches):
                rho = dense.reduced_density(state, [f]).matrix
                err = float(np.max(np.abs(rho - rho_in)))
                worst = max(worst, err)
                ok &= err < 1e-10
        lanes_ok.append(bool(ok))
    return all(lanes_ok), {"lanes_pass": lanes_ok, "max_density_error": worst}


def _bell_signs(inst):
    signs = inst.metadata.get("bell_signs", {"XX": 1, "ZZ": 1})
    return signs["XX"], signs["ZZ"]


def _pair_paulis(n, i, f):
    return PauliString.uniform(n, "X", (i, f)), PauliString.uniform(n, "Z", (i, f))


def _ghz_paulis(n):
    out = [PauliString.uniform(n, "X", range(n))]
    out += [PauliString.uniform(n, "Z", (j, j + 1)) for j in range(n - 1)]
    return out


def check_task(instance: ProtocolInstance, backend: str = "stabilizer",
               max_branches: int = 1 << 12) -> TaskResult:
    """Verify the instance's task on every outcome branch of the chosen backend."""
    task = instance.metadata["task"]
    c = instance.circuit
    n = c.n_physical
    if task == "w" and backend == "stabilizer":
        backend = "dense"
    if backend not in ("stabilizer", "dense"):
        raise ValueError(f"unknown backend {backend!r}")
    if task == "teleport":
        fn = _teleport_stabilizer if backend == "stabilizer" else _teleport_dense
        ok, det = fn(instance, max_branches)
        return TaskResult(ok, backend, det)
    if task in ("bell", "ghz"):
        if task == "bell":
            i, f = instance.metadata["task_sites"]
            xx, zz = _pair_paulis(n, i, f)
            sx, sz = _bell_signs(instance)
            checks = [xx.with_sign(sx), zz.with_sign(sz)]
        else:
            checks = _ghz_paulis(n)
        if backend == "stabilizer":
            recs = enumerate_trajectories(c, max_branches=max_branches)
            ok = all(r.final_tableau.expectation(p) == 1 for r in recs for p in checks)
            return TaskResult(ok, backend, {"branches": len(recs)})
        runs = dense.enumerate_branches(c, None, max_branches)
        ok = all(dense.is_stabilized_by(s, p) for s, _ in runs for p in checks)
        det = {"branches": len(runs)}
        if task == "ghz":
            target = np.zeros(2 ** n, dtype=complex)
            target[0] = target[-1] = 1 / np.sqrt(2)
            fids = [dense.fidelity(s, dense.StateVector(target)) for s, _ in runs]
            det["min_fidelity"] = min(fids)
        return TaskResult(ok, backend, det)
    if task == "w":
        target = dense.StateVector(w_vector(n))
        runs = dense.enumerate_branches(c, None, max_branches)
        fids = [dense.fidelity(s, target) for s, _ in runs]
        total = sum(t.probability for _, t in runs)
        ok = min(fids) >= 1 - 1e-10 and abs(total - 1) < 1e-10
        return TaskResult(ok, "dense", {"branches": len(runs), "min_fidelity": min(fids)})
    raise ValueError(f"unknown task {task!r}")


def cross_check(circuit, initial_tableau=None, initial_state=None, max_branches: int = 1 << 12) -> dict:
    """Compare stabilizer and dense backends branch by branch.

    Each tableau branch is replayed densely with the same forced outcomes; the
    probabilities must agree and the dense state must be a +1 eigenstate of
    every stabilizer row.
    """
    recs = enumerate_trajectories(circuit, initial_tableau, max_branches)
    worst_p = 0.0
    all_fixed = True
    for rec in recs:
        state, traj = dense.apply_circuit(circuit, initial_state, "trajectory",
                                          forced=rec.trajectory.outcomes)
        worst_p = max(worst_p, abs(traj.probability - rec.trajectory.probability))
        for row in rec.final_tableau.stabilizer_rows:
            if not dense.is_stabilized_by(state, row, atol=1e-10):
                all_fixed = False
    total = sum(r.trajectory.probability for r in recs)
    return {
        "branches": len(recs),
        "max_probability_error": worst_p,
        "stabilizers_fixed": all_fixed,
        "probability_total": total,
        "agree": all_fixed and worst_p <= 1e-12 and abs(total - 1) <= 1e-12,
    }


def check_branch(instance: ProtocolInstance, outcomes, backend: str = "stabilizer") -> TaskResult:
    """Verify the task on the single branch selected by ``outcomes``."""
    task = instance.metadata["task"]
    c = instance.circuit
    n = c.n_physical
    outcomes = list(outcomes)
    if task == "w":
        backend = "dense"
    try:
        if task == "teleport":
            ok = True
            for i, f in instance.metadata["lanes"]:
                for axis, sign in EIGENSTATE_PREP:
                    if backend == "stabilizer":
                        rec = run_trajectory(c, prepared_input(n, i, axis, sign), forced=outcomes)
                        got = rec.final_tableau.expectation(PauliString.single(n, axis, f))
                        ok &= got == sign
                    else:
                        psi = dense.EIGENSTATES[(axis, sign)]
                        state, _ = dense.apply_circuit(c, dense.single_site_input(n, i, psi), forced=outcomes)
                        rho = dense.reduced_density(state, [f]).matrix
                        ok &= bool(np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-10))
            return TaskResult(bool(ok), backend, {"outcomes": outcomes})
        if task in ("bell", "ghz"):
            if task == "bell":
                i, f = instance.metadata["task_sites"]
                xx, zz = _pair_paulis(n, i, f)
                sx, sz = _bell_signs(instance)
                checks = [xx.with_sign(sx), zz.with_sign(sz)]
            else:
                checks = _ghz_paulis(n)
            if backend == "stabilizer":
                t = run_trajectory(c, forced=outcomes).final_tableau
                ok = all(t.expectation(p) == 1 for p in checks)
            else:
                state, _ = dense.apply_circuit(c, forced=outcomes)
                ok = all(dense.is_stabilized_by(state, p) for p in checks)
            return TaskResult(bool(ok), backend, {"outcomes": outcomes})
        if task == "w":
            state, _ = dense.apply_circuit(c, forced=outcomes)
            fid = dense.fidelity(state, dense.StateVector(w_vector(n)))
            return TaskResult(fid >= 1 - 1e-10, "dense", {"outcomes": outcomes, "fidelity": fid})
    except (ContradictoryOutcome, dense.NormCollapse):
        return TaskResult(False, backend, {"outcomes": outcomes, "error": "outcome not reachable"})
    raise ValueError(f"unknown task {task!r}")
