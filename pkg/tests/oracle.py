"""An independent outcome predictor for the fixed two-task connector.

The acceptance suite runs that connector under every single-fault plan
and compares the engine's signal sequence against this module. To stay
trustworthy as a cross-check, the oracle is written the dumb way: it
walks the scripted fault queues with plain cursors and hard-coded
connector constants, sharing no code with the engine beyond the FaultPlan
value itself.

Connector constants (see support.fixed_connector):
  pool request 3:2, one creation retry round
  3 bootstrap steps per VM (install cc, base-setup 1, base-setup 2)
  task 1: fan-out = pool size, converges on iteration 2, max 2 iterations
  task 2: fan-out = pool size, single iteration
  all costs are one tick
"""

from __future__ import annotations

from dataclasses import dataclass

from smartconn.cloud_sim import FaultPlan
from smartconn.core_model import FtStrategy, RetryStrategy

IDEAL = 3
MINIMAL = 2
RETRY_LIMIT = 1
BOOT_STEPS_PER_VM = 3
TASK_PLANS = ((2, True), (1, False))  # (max_iterations, has_criterion)
CONVERGES_ON = 2  # 8 * 0.5**i drops below 3.0 at i == 2

SUCCESS = ["scStart", "dataCheckOk", "execStart", "transferStart", "transferCompleted", "scCompleted"]
VM_FAILED = ["scStart", "dataCheckOk", "vmFail", "scCompleted"]
EXEC_FAILED_EARLY = ["scStart", "dataCheckOk", "execStart", "execFailed", "scCompleted"]
EXEC_FAILED_AT_TRANSFER = [
    "scStart", "dataCheckOk", "execStart", "transferStart", "execFailed", "scCompleted",
]


@dataclass
class _Cursor:
    outcomes: tuple[bool, ...]
    pos: int = 0

    def next(self) -> bool:
        ok = self.outcomes[self.pos] if self.pos < len(self.outcomes) else True
        self.pos += 1
        return ok


@dataclass(frozen=True)
class Prediction:
    outcome: str  # Success | VmFailed | ExecFailed
    signals: list[str]


def predict(plan: FaultPlan, retry_strategy: RetryStrategy, ft_strategy: FtStrategy, rerun_limit: int = 1) -> Prediction:
    assert plan.mode == "scripted"
    creates = _Cursor(plan.create_vm)
    boots = _Cursor(plan.bootstrap_step)
    tasks = _Cursor(plan.task_step)
    transfers = _Cursor(plan.transfer)
    losses = {(l.vm_id, l.from_tick) for l in plan.reachability}

    def lost(vm: str, t: int) -> bool:
        return any(v == vm and start <= t for v, start in losses)

    # --- acquisition: ids count successes, ticks count rounds
    pool: list[str] = []

    def create_round(n: int) -> None:
        for _ in range(n):
            if creates.next():
                pool.append(f"vm-{len(pool)}")

    create_round(IDEAL)
    rounds = 0
    while len(pool) < MINIMAL and rounds < RETRY_LIMIT:
        rounds += 1
        create_round(MINIMAL - len(pool) if retry_strategy is RetryStrategy.BLOCK else 1)
    if len(pool) < MINIMAL:
        return Prediction("VmFailed", VM_FAILED)

    # --- timeline: data check ends at 1, acquisition takes 1 + rounds
    # ticks, bootstrap takes one more, so its probes land at 3 + rounds
    t_boot = 3 + rounds
    for vm in pool:
        if lost(vm, t_boot):
            return Prediction("VmFailed", VM_FAILED)
        for _ in range(BOOT_STEPS_PER_VM):
            if not boots.next():
                return Prediction("VmFailed", VM_FAILED)

    # --- task execution, one tick per iteration
    now = t_boot
    fan_out = len(pool)
    for task_no, (max_iterations, has_criterion) in enumerate(TASK_PLANS, start=1):
        rerun_counts = {f"t{task_no}p{j}": 0 for j in range(1, fan_out + 1)}
        for i in range(1, max_iterations + 1):
            healthy_at_assign = [vm for vm in pool if not lost(vm, now)]
            if not healthy_at_assign:
                return Prediction("ExecFailed", EXEC_FAILED_EARLY)
            assignment = {
                f"t{task_no}p{j}": healthy_at_assign[(j - 1) % len(healthy_at_assign)]
                for j in range(1, fan_out + 1)
            }
            now += 1
            outputs = 0
            affected = []
            for pid in sorted(assignment):
                if lost(assignment[pid], now):
                    affected.append(pid)
                elif tasks.next():
                    outputs += 1
                else:
                    return Prediction("ExecFailed", EXEC_FAILED_EARLY)
            if affected:
                healthy_now = [vm for vm in pool if not lost(vm, now)]
                rerunnable = (
                    ft_strategy is FtStrategy.RERUN_ELSEWHERE
                    and healthy_now
                    and all(rerun_counts[pid] < rerun_limit for pid in affected)
                )
                if rerunnable:
                    # a single-loss plan cannot strike the rerun wave too
                    for pid in sorted(affected):
                        rerun_counts[pid] += 1
                        if not tasks.next():
                            return Prediction("ExecFailed", EXEC_FAILED_EARLY)
                        outputs += 1
            if outputs == 0:
                return Prediction("ExecFailed", EXEC_FAILED_EARLY)
            if has_criterion and i >= CONVERGES_ON:
                break

    # --- transfer: one attempt plus one retry
    if transfers.next() or transfers.next():
        return Prediction("Success", SUCCESS)
    return Prediction("ExecFailed", EXEC_FAILED_AT_TRANSFER)
