//! Delay, energy and delivery accounting.
//!
//! Network energy covers the sensor nodes only; the sink is treated as a
//! mains-powered hub. Radio time spent on behalf of a packet class (sensing,
//! backoff, strobes, data, acknowledgments, guaranteed slots) is attributed
//! to that class; polling, lingering, beacons and sleep are overhead.
//! Per-class energy per delivered packet uses only the attributed share.

use crate::channel::{Activity, NodeId, Priority, RadioState, RadioTimeline};
use crate::engine::{Termination, VirtualTime};
use crate::error::{Result, SimError};
use crate::mac::Protocol;
use crate::traffic::PacketId;

/// Power draw per radio state in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerMap {
    pub transmit_mw: f64,
    pub receive_mw: f64,
    pub listen_mw: f64,
    pub idle_mw: f64,
    pub sleep_mw: f64,
}

impl Default for PowerMap {
    fn default() -> Self {
        PowerMap { transmit_mw: 52.2, receive_mw: 56.4, listen_mw: 56.4, idle_mw: 1.28, sleep_mw: 0.06 }
    }
}

impl PowerMap {
    pub fn mw(&self, state: RadioState) -> f64 {
        match state {
            RadioState::Transmit => self.transmit_mw,
            RadioState::Receive => self.receive_mw,
            RadioState::Listen => self.listen_mw,
            RadioState::Idle => self.idle_mw,
            RadioState::Sleep => self.sleep_mw,
        }
    }

    /// Joules for `micros` in `state`.
    pub fn joules(&self, state: RadioState, micros: u64) -> f64 {
        self.mw(state) * 1e-3 * micros as f64 * 1e-6
    }
}

/// Per-node radio timelines plus the power table that prices them.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub power: PowerMap,
    pub timelines: Vec<RadioTimeline>,
}

impl EnergyLedger {
    pub fn timeline(&self, node: NodeId) -> Option<&RadioTimeline> {
        self.timelines.get(node as usize)
    }
}

/// Total energy of one timeline in joules.
pub fn energy_of(timeline: &RadioTimeline, power: &PowerMap) -> f64 {
    RadioState::ALL
        .iter()
        .map(|&s| {
            let t: u64 = [Activity::Urgent, Activity::Normal, Activity::Overhead]
                .iter()
                .map(|&a| timeline.total_in(s, a))
                .sum();
            power.joules(s, t)
        })
        .sum()
}

/// Energy of one timeline attributed to `activity`, in joules.
pub fn energy_for(timeline: &RadioTimeline, power: &PowerMap, activity: Activity) -> f64 {
    RadioState::ALL.iter().map(|&s| power.joules(s, timeline.total_in(s, activity))).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub packet: PacketId,
    pub origin: NodeId,
    pub priority: Priority,
    pub generated_at: VirtualTime,
    pub delivered_at: VirtualTime,
    pub hops: u32,
    pub retransmissions: u32,
}

impl DeliveryRecord {
    pub fn delay(&self) -> u64 {
        self.delivered_at.since(self.generated_at)
    }
}

/// Mean end-to-end delay in milliseconds over records matching `filter`
/// (`None` matches every record).
pub fn average_delay(records: &[DeliveryRecord], filter: Option<Priority>) -> Result<f64> {
    let (sum, n) = records
        .iter()
        .filter(|r| filter.is_none_or(|p| r.priority == p))
        .fold((0u128, 0u64), |(s, n), r| (s + r.delay() as u128, n + 1));
    if n == 0 {
        return Err(SimError::NoData(format!("no delivered packets for {filter:?}")));
    }
    Ok(sum as f64 / n as f64 / 1_000.0)
}

/// Everything a finished run hands to the summarizer.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocol: Protocol,
    pub mean_interval_urgent: u64,
    pub mean_interval_normal: u64,
    pub seed: u64,
    pub end_time: VirtualTime,
    pub termination: Termination,
    pub generated_urgent: u64,
    pub generated_normal: u64,
    pub dropped: u64,
    pub deliveries: Vec<DeliveryRecord>,
    pub ledger: EnergyLedger,
    /// Sensor node ids included in network energy.
    pub sensors: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub protocol: Protocol,
    /// Seconds.
    pub mean_interval_urgent: f64,
    pub mean_interval_normal: f64,
    pub seed: u64,
    pub status: String,
    pub generated: u64,
    pub delivered: u64,
    pub delivered_urgent: u64,
    pub delivered_normal: u64,
    pub pdr: f64,
    pub avg_delay_urgent_ms: Option<f64>,
    pub avg_delay_normal_ms: Option<f64>,
    pub energy_total_j: f64,
    pub energy_per_node_j: Vec<f64>,
    pub energy_per_delivered_mj: Option<f64>,
    pub energy_urgent_per_delivered_mj: Option<f64>,
    pub energy_normal_per_delivered_mj: Option<f64>,
    pub end_time_s: f64,
}

fn per_packet_mj(joules: f64, count: u64) -> Option<f64> {
    (count > 0).then(|| joules * 1e3 / count as f64)
}

pub fn summarize(run: &RunOutput) -> SummaryRow {
    let power = &run.ledger.power;
    let timelines: Vec<&RadioTimeline> =
        run.sensors.iter().filter_map(|&n| run.ledger.timeline(n)).collect();
    let energy_per_node_j: Vec<f64> = timelines.iter().map(|t| energy_of(t, power)).collect();
    let energy_total_j: f64 = energy_per_node_j.iter().sum();
    let attributed = |a: Activity| timelines.iter().map(|t| energy_for(t, power, a)).sum::<f64>();
    let (eu, en) = (attributed(Activity::Urgent), attributed(Activity::Normal));

    let delivered = run.deliveries.len() as u64;
    let delivered_urgent = run.deliveries.iter().filter(|r| r.priority == Priority::Urgent).count() as u64;
    let delivered_normal = delivered - delivered_urgent;
    let generated = run.generated_urgent + run.generated_normal;

    let (energy_urgent, energy_normal) = if run.protocol == Protocol::Adp {
        // no priority path: both classes share one figure
        let pooled = per_packet_mj(eu + en, delivered);
        (pooled, pooled)
    } else {
        (per_packet_mj(eu, delivered_urgent), per_packet_mj(en, delivered_normal))
    };

    SummaryRow {
        protocol: run.protocol,
        mean_interval_urgent: run.mean_interval_urgent as f64 / 1e6,
        mean_interval_normal: run.mean_interval_normal as f64 / 1e6,
        seed: run.seed,
        status: run.termination.label().to_string(),
        generated,
        delivered,
        delivered_urgent,
        delivered_normal,
        pdr: if generated == 0 { 0.0 } else { (delivered as f64 / generated as f64).min(1.0) },
        avg_delay_urgent_ms: average_delay(&run.deliveries, Some(Priority::Urgent)).ok(),
        avg_delay_normal_ms: average_delay(&run.deliveries, Some(Priority::Normal)).ok(),
        energy_total_j,
        energy_per_node_j,
        energy_per_delivered_mj: per_packet_mj(energy_total_j, delivered),
        energy_urgent_per_delivered_mj: energy_urgent,
        energy_normal_per_delivered_mj: energy_normal,
        end_time_s: run.end_time.as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(priority: Priority, delay_ms: u64) -> DeliveryRecord {
        DeliveryRecord {
            packet: 0,
            origin: 1,
            priority,
            generated_at: VirtualTime::from_secs(1),
            delivered_at: VirtualTime::from_secs(1) + delay_ms * 1_000,
            hops: 1,
            retransmissions: 0,
        }
    }

    #[test]
    fn energy_examples() {
        let p = PowerMap::default();
        let mut tl = RadioTimeline::new(1, RadioState::Transmit, false);
        tl.set(RadioState::Sleep, Activity::Overhead, VirtualTime(25_000)).unwrap();
        tl.finish(VirtualTime(25_000 + 9_700_000));
        let tx_mj = p.joules(RadioState::Transmit, 25_000) * 1e3;
        let sleep_mj = p.joules(RadioState::Sleep, 9_700_000) * 1e3;
        assert!((tx_mj - 1.305).abs() < 1e-9);
        assert!((sleep_mj - 0.582).abs() < 1e-9);
        assert!((energy_of(&tl, &p) * 1e3 - 1.887).abs() < 1e-9);

        let empty = RadioTimeline::new(2, RadioState::Sleep, false);
        assert_eq!(energy_of(&empty, &p), 0.0);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(average_delay(&[rec(Priority::Normal, 52)], None).unwrap(), 52.0);
        let both = [rec(Priority::Normal, 52), rec(Priority::Normal, 104)];
        assert_eq!(average_delay(&both, None).unwrap(), 78.0);
        let mixed = [rec(Priority::Normal, 52), rec(Priority::Urgent, 10), rec(Priority::Urgent, 30)];
        assert_eq!(average_delay(&mixed, Some(Priority::Urgent)).unwrap(), 20.0);
        assert!(matches!(average_delay(&mixed[..1], Some(Priority::Urgent)), Err(SimError::NoData(_))));
    }
}
