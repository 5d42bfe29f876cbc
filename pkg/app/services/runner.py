"""
Command execution shared by the CLI and the HTTP routers.

Each ``execute_*`` function builds the experiment from a validated config,
runs it, persists the outputs and returns the manifest with the command's
report. Exit status is carried by ``manifest.status``: "ok", "failed"
(numerical) or "inconclusive".
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from app import __version__
from app.physics.integrator import ResolventProblem, resolvent_solve
from app.physics.model import State, realize_field
from app.services.experiments import (
    build_context,
    dissipativity_sweep,
    initial_from_spec,
    initial_state,
    observation_records,
    pair_contraction_experiment,
    simulate_run,
    summarize_run,
)
from app.services.run_store import RunStore, run_store
from app.services.verification import run_verify
from app.utils.config_loader import config_digest
from schemas import ResolventReport, RunConfig, RunManifest

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    manifest: RunManifest
    out_dir: Path
    report: Optional[Dict[str, Any]] = None
    records: Optional[List[Dict[str, float]]] = None

    @property
    def exit_code(self) -> int:
        return 2 if self.manifest.status == "failed" else 0


def _manifest(subcommand: str, config: RunConfig, seed: int, context, started: float,
              status: str = "ok", message: Optional[str] = None) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        config_digest=config_digest(config),
        basis=context.basis.spec(),
        step={
            "dt": context.step_config.dt,
            "scheme": context.step_config.scheme,
            "radial_tol": context.step_config.radial_tol,
            "radial_max_iter": context.step_config.radial_max_iter,
            "damping_rule": context.step_config.damping_rule,
            "kernel_rule": context.step_config.kernel_rule,
        },
        seed=seed,
        code_version=__version__,
        wall_clock_seconds=time.perf_counter() - started,
        config=config.model_dump(mode="json"),
        status=status,
        message=message,
    )


def _out_dir(store: RunStore, subcommand: str, config: RunConfig, seed: int,
             out: Optional[Union[str, Path]]) -> Path:
    return Path(out) if out is not None else store.run_dir(subcommand, config_digest(config), seed)


def execute_simulate(config: RunConfig, seed: int = 0, out: Optional[Union[str, Path]] = None,
                     store: RunStore = run_store) -> CommandResult:
    started = time.perf_counter()
    context = build_context(config, seed)
    state0 = initial_from_spec(context, config.run.initial)
    companion = None
    if config.run.companion_energy is not None:
        offset = initial_state(context.basis, context.rng, config.run.companion_energy)
        companion = State(state0.a + offset.a, state0.b + offset.b, state0.time)
    trajectory = simulate_run(
        context.basis, context.physics, state0, config.run.T, context.step_config,
        epsilon=config.run.epsilon,
        tail_cutoff=config.run.tail_cutoff,
        observe_every=config.run.observe_every,
        snapshot_every=config.run.snapshot_every,
        companion=companion,
    )
    records = [record.model_dump(exclude_none=True) for record in observation_records(trajectory)]
    status = "failed" if trajectory.failed else "ok"
    manifest = _manifest("simulate", config, seed, context, started, status, trajectory.failure)
    out_dir = _out_dir(store, "simulate", config, seed, out)
    report = summarize_run(context.basis, context.physics, trajectory).model_dump(mode="json")
    outputs = store.persist_run(manifest, records, out_dir, trajectory.snapshots, report)
    manifest = manifest.model_copy(update={"outputs": outputs})
    return CommandResult(manifest, out_dir, report, records)


def execute_verify(config: RunConfig, seed: int = 0, out: Optional[Union[str, Path]] = None,
                   store: RunStore = run_store) -> CommandResult:
    started = time.perf_counter()
    context = build_context(config, seed)
    report = run_verify(context)
    status = "ok" if report.passed else "failed"
    failed = [check.name for check in report.checks if not check.passed]
    manifest = _manifest("verify", config, seed, context, started, status,
                         f"failed checks: {failed}" if failed else None)
    out_dir = _out_dir(store, "verify", config, seed, out)
    payload = report.model_dump(mode="json")
    outputs = store.persist_run(manifest, [], out_dir, report=payload)
    return CommandResult(manifest.model_copy(update={"outputs": outputs}), out_dir, payload)


def execute_sweep(config: RunConfig, seed: int = 0, out: Optional[Union[str, Path]] = None,
                  workers: int = 1, store: RunStore = run_store) -> CommandResult:
    started = time.perf_counter()
    context = build_context(config, seed)
    base = initial_state(context.basis, context.rng, 1.0)
    report = dissipativity_sweep(
        context.basis, context.physics, config.sweep.scales, config.sweep.T, context.step_config,
        burn_in=config.sweep.burn_in, base_state=base, workers=workers,
    )
    if any(t.error is not None for t in report.trajectories):
        status = "failed"
    else:
        status = "ok" if report.conclusive else "inconclusive"
    manifest = _manifest("sweep", config, seed, context, started, status, report.message)
    out_dir = _out_dir(store, "sweep", config, seed, out)
    payload = report.model_dump(mode="json")
    outputs = store.persist_run(manifest, [], out_dir, report=payload)
    return CommandResult(manifest.model_copy(update={"outputs": outputs}), out_dir, payload)


def execute_pair(config: RunConfig, seed: int = 0, out: Optional[Union[str, Path]] = None,
                 workers: int = 1, store: RunStore = run_store) -> CommandResult:
    started = time.perf_counter()
    context = build_context(config, seed)
    states = [initial_state(context.basis, context.rng, config.pair.energy) for _ in range(config.pair.count)]
    report = pair_contraction_experiment(
        context.basis, context.physics, states, config.pair.T_list, context.step_config,
        tail_cutoff=config.run.tail_cutoff, workers=workers,
    )
    status = "failed" if report.errors else "ok"
    manifest = _manifest("pair", config, seed, context, started, status,
                         f"failed trajectories: {sorted(report.errors)}" if report.errors else None)
    out_dir = _out_dir(store, "pair", config, seed, out)
    payload = report.model_dump(mode="json")
    outputs = store.persist_run(manifest, [], out_dir, report=payload)
    return CommandResult(manifest.model_copy(update={"outputs": outputs}), out_dir, payload)


def execute_resolvent(config: RunConfig, seed: int = 0, out: Optional[Union[str, Path]] = None,
                      store: RunStore = run_store) -> CommandResult:
    started = time.perf_counter()
    context = build_context(config, seed)
    problem = ResolventProblem(
        realize_field(config.resolvent.f0, context.basis, context.rng),
        realize_field(config.resolvent.f1, context.basis, context.rng),
    )
    solution = resolvent_solve(context.basis, context.physics, problem, config.resolvent.tol)
    converged = solution.residual <= config.resolvent.tol
    report = ResolventReport(sigma=solution.sigma, residual=solution.residual,
                             tol=config.resolvent.tol, converged=converged)
    manifest = _manifest("resolvent", config, seed, context, started, "ok" if converged else "failed",
                         None if converged else "residual above tolerance")
    out_dir = _out_dir(store, "resolvent", config, seed, out)
    payload = report.model_dump(mode="json")
    payload["u"] = solution.u.tolist()
    payload["v"] = solution.v.tolist()
    outputs = store.persist_run(manifest, [], out_dir, report=payload)
    return CommandResult(manifest.model_copy(update={"outputs": outputs}), out_dir, payload)
