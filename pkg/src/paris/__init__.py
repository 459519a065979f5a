"""Transactional causal consistency over partially geo-replicated storage.

Non-blocking snapshot reads via a universally stable time computed by
gossip, a blocking baseline for comparison, a deterministic cluster
simulator, a trace checker, and a loopback socket transport.
"""

from .bench import ExperimentResult, Metrics, run_experiment, visibility_cdf, visibility_samples
from .bpr import BprServer
from .checker import Verdict, brute_force_oracle, run_all_checks, run_safety_suite
from .client import ClientSession, UsageError
from .clocks import TxId, VersionStamp, hlc_update_on_commit, hlc_update_on_prepare, version_cmp
from .server import PartitionServer, StaleTransaction
from .sim import Simulation, Stats
from .storage import ProtocolFault, RoutingFault, Storage, Version
from .topology import ClusterConfig, WorkloadConfig, desk_config, load_config, paper_scale_config
from .trace import TraceCollector, TraceEvent, read_trace

__version__ = "0.1.0"

__all__ = [
    "BprServer",
    "ClientSession",
    "ClusterConfig",
    "ExperimentResult",
    "Metrics",
    "PartitionServer",
    "ProtocolFault",
    "RoutingFault",
    "Simulation",
    "StaleTransaction",
    "Stats",
    "Storage",
    "TraceCollector",
    "TraceEvent",
    "TxId",
    "UsageError",
    "Verdict",
    "Version",
    "VersionStamp",
    "WorkloadConfig",
    "brute_force_oracle",
    "desk_config",
    "hlc_update_on_commit",
    "hlc_update_on_prepare",
    "load_config",
    "paper_scale_config",
    "read_trace",
    "run_all_checks",
    "run_experiment",
    "run_safety_suite",
    "version_cmp",
    "visibility_cdf",
    "visibility_samples",
]
