use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{KeyMode, NodeId};
use crate::error::{Error, Result};

/// Throughput reduction the original evaluation reported for key rotation.
pub const REFERENCE_THROUGHPUT_DELTA: f64 = 0.07;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    /// Sender or receiver held no usable key (or no security association).
    pub no_key: u64,
    /// The key a packet was sent under expired before it arrived.
    pub in_flight_at_expiry: u64,
    /// Lost on the link; not a key-management cause.
    pub link_loss: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.no_key + self.in_flight_at_expiry + self.link_loss
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounts {
    pub sent: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub dropped: DropCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCounts {
    pub messages: u64,
    pub bytes: u64,
    pub auth_exchanges: u64,
    pub auth_rejects: u64,
    pub key_requests: u64,
    pub key_responses: u64,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    /// Digest of the scenario with its mode blanked out; equal fingerprints
    /// mean two runs differ at most in key mode.
    pub fingerprint: String,
    pub seed: u64,
    pub mode: KeyMode,
    pub sim_time_us: u64,
    pub packets: PacketCounts,
    pub delivered_payload_bytes: u64,
    /// Delivered payload bits per second of simulated time.
    pub throughput_bps: f64,
    pub control: ControlCounts,
    /// Time each router spent without a usable key after first acquiring one.
    pub key_outage_us: BTreeMap<NodeId, u64>,
    /// Canonical ring-signature length of each router's authentication.
    pub signature_bytes: BTreeMap<NodeId, usize>,
    /// Time from power-up to final join phase; `null` if never reached.
    pub join_latency_us: BTreeMap<NodeId, Option<u64>>,
    /// Nodes in the order they completed joining.
    pub join_order: Vec<NodeId>,
}

impl Metrics {
    pub fn drop_rate(&self) -> f64 {
        if self.packets.sent == 0 {
            0.0
        } else {
            self.packets.dropped.total() as f64 / self.packets.sent as f64
        }
    }
}

/// Static-key versus rotating-key comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub runs: usize,
    pub base_mode: KeyMode,
    pub secured_mode: KeyMode,
    pub base_throughput_bps: f64,
    pub secured_throughput_bps: f64,
    /// `(base - secured) / base`; positive means the secured run is slower.
    pub throughput_delta: f64,
    pub base_drop_rate: f64,
    pub secured_drop_rate: f64,
    /// `secured - base`, in absolute drop-rate units.
    pub drop_rate_delta: f64,
    pub base_drops: DropCounts,
    pub secured_drops: DropCounts,
    pub reference_throughput_delta: f64,
}

fn sum_drops<'a>(ms: impl Iterator<Item = &'a Metrics>) -> DropCounts {
    ms.fold(DropCounts::default(), |acc, m| DropCounts {
        no_key: acc.no_key + m.packets.dropped.no_key,
        in_flight_at_expiry: acc.in_flight_at_expiry + m.packets.dropped.in_flight_at_expiry,
        link_loss: acc.link_loss + m.packets.dropped.link_loss,
    })
}

/// Compares one base run with one secured run of the same scenario.
pub fn measure_overhead(base: &Metrics, secured: &Metrics) -> Result<OverheadReport> {
    measure_overhead_runs(&[(base.clone(), secured.clone())])
}

/// Averages over paired runs. Every pair must share fingerprint and seed,
/// and all bases (and all secured runs) must use one mode.
pub fn measure_overhead_runs(pairs: &[(Metrics, Metrics)]) -> Result<OverheadReport> {
    let (first_base, first_secured) = pairs
        .first()
        .ok_or_else(|| Error::ScenarioMismatch("no runs to compare".into()))?;
    for (b, s) in pairs {
        if b.fingerprint != s.fingerprint || b.seed != s.seed {
            return Err(Error::ScenarioMismatch(format!(
                "runs {:?}/seed {} and {:?}/seed {} differ beyond key mode",
                b.scenario, b.seed, s.scenario, s.seed
            )));
        }
        if b.mode != first_base.mode || s.mode != first_secured.mode {
            return Err(Error::ScenarioMismatch("mixed modes across runs".into()));
        }
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&Metrics) -> f64, pick: &dyn Fn(&(Metrics, Metrics)) -> &Metrics| {
        pairs.iter().map(|p| f(pick(p))).sum::<f64>() / n
    };
    let base_tp = mean(&|m| m.throughput_bps, &|p| &p.0);
    let sec_tp = mean(&|m| m.throughput_bps, &|p| &p.1);
    let base_dr = mean(&|m| m.drop_rate(), &|p| &p.0);
    let sec_dr = mean(&|m| m.drop_rate(), &|p| &p.1);
    Ok(OverheadReport {
        runs: pairs.len(),
        base_mode: first_base.mode,
        secured_mode: first_secured.mode,
        base_throughput_bps: base_tp,
        secured_throughput_bps: sec_tp,
        throughput_delta: if base_tp > 0.0 { (base_tp - sec_tp) / base_tp } else { 0.0 },
        base_drop_rate: base_dr,
        secured_drop_rate: sec_dr,
        drop_rate_delta: sec_dr - base_dr,
        base_drops: sum_drops(pairs.iter().map(|p| &p.0)),
        secured_drops: sum_drops(pairs.iter().map(|p| &p.1)),
        reference_throughput_delta: REFERENCE_THROUGHPUT_DELTA,
    })
}
