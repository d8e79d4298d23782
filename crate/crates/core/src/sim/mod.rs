//! Deterministic discrete-event simulation of a three-tier mesh: routers
//! joining through already-joined neighbors, ring-signature authentication to
//! the AS, key-list rotation under response delays, and data traffic.

mod engine;
mod metrics;
mod scenario;

pub use engine::{run, run_with_trace, scenario_fingerprint, JoinPhase, SimOutput, TraceRecord};
pub use metrics::{
    measure_overhead, measure_overhead_runs, ControlCounts, DropCounts, Metrics, OverheadReport, PacketCounts,
    REFERENCE_THROUGHPUT_DELTA,
};
pub use scenario::{
    build_bootstrap_topology, build_paper_topology, DelayDist, FlowSpec, KeyConfig, KeyMode, LinkSpec, NodeId,
    NodeKind, NodeSpec, ResponseDelay, RingConfig, SimScenario, TimingConfig, TrafficKind, PAPER_CLIENTS_PER_ROUTER,
    PAPER_ROUTERS,
};
