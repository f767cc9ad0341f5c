"""Fault-tolerant orchestration of multi-task, parameter-swept
computations over a simulated cloud VM pool."""

from .cloud_sim import Clock, FaultPlan, ReachabilityLoss, SimulatedProvider
from .core_model import (
    ConvergenceCriterion,
    CostModel,
    DataConstraints,
    Direction,
    EventLog,
    ExecParamT,
    ExecParamVM,
    FtStrategy,
    InvalidDefinition,
    Job,
    JobState,
    Outcome,
    OutcomeKind,
    RetryStrategy,
    SCDefinition,
    SchedulingConstraints,
    SemanticRule,
    SignalKind,
    SweepSpec,
    SyntacticRule,
    TaskCodeKind,
    TaskCodeRef,
    UserReqVM,
    validate_definition,
    wcet_bound,
)
from .sc_engine import Env, check_input, replay, run_to_completion, start_job, step, verify_signal_protocol
from .store_transfer import JobStore, export_plot_data, transfer_output
from .sweep import expand_sweep, launch_sweep

__version__ = "0.1.0"

__all__ = [
    "Clock",
    "ConvergenceCriterion",
    "CostModel",
    "DataConstraints",
    "Direction",
    "Env",
    "EventLog",
    "ExecParamT",
    "ExecParamVM",
    "FaultPlan",
    "FtStrategy",
    "InvalidDefinition",
    "Job",
    "JobState",
    "JobStore",
    "Outcome",
    "OutcomeKind",
    "ReachabilityLoss",
    "RetryStrategy",
    "SCDefinition",
    "SchedulingConstraints",
    "SemanticRule",
    "SignalKind",
    "SimulatedProvider",
    "SweepSpec",
    "SyntacticRule",
    "TaskCodeKind",
    "TaskCodeRef",
    "UserReqVM",
    "check_input",
    "expand_sweep",
    "export_plot_data",
    "launch_sweep",
    "replay",
    "run_to_completion",
    "start_job",
    "step",
    "transfer_output",
    "validate_definition",
    "verify_signal_protocol",
    "wcet_bound",
]
