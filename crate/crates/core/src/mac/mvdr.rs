//! Beacon-delimited superframes: contention access for normal traffic and
//! guaranteed time slots, at a higher data rate, for urgent traffic.

use crate::channel::NodeId;
use crate::engine::VirtualTime;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperframeConfig {
    pub period: u64,
    pub active: u64,
    pub beacon: u64,
    pub cap: u64,
    pub gts_slots: u32,
    pub gts_slot: u64,
}

impl Default for SuperframeConfig {
    fn default() -> Self {
        SuperframeConfig {
            period: 10_000_000,
            active: 300_000,
            beacon: 10_000,
            cap: 200_000,
            gts_slots: 3,
            gts_slot: 30_000,
        }
    }
}

impl SuperframeConfig {
    pub fn validate(&self) -> Result<()> {
        let layout = self.beacon + self.cap + self.gts_slots as u64 * self.gts_slot;
        if self.beacon == 0 || self.cap == 0 || self.gts_slot == 0 {
            return Err(SimError::Config("superframe durations must be positive".into()));
        }
        if layout > self.active {
            return Err(SimError::Config(format!(
                "superframe layout ({layout} us) exceeds the active portion ({} us)",
                self.active
            )));
        }
        if self.active >= self.period {
            return Err(SimError::Config("active portion must be shorter than the period".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: VirtualTime,
    pub end: VirtualTime,
}

impl Interval {
    pub fn contains(&self, t: VirtualTime) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtsSlot {
    pub interval: Interval,
    pub owner: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superframe {
    pub index: u64,
    pub beacon_at: VirtualTime,
    pub beacon_dur: u64,
    pub cap: Interval,
    pub gts: Vec<GtsSlot>,
    pub period: u64,
    pub active_dur: u64,
}

impl Superframe {
    pub fn active_end(&self) -> VirtualTime {
        self.beacon_at + self.active_dur
    }

    pub fn next_beacon(&self) -> VirtualTime {
        self.beacon_at + self.period
    }

    pub fn slot_of(&self, node: NodeId) -> Option<&GtsSlot> {
        self.gts.iter().find(|s| s.owner == node)
    }
}

/// Layout of superframe `k`. GTS slots go round-robin over `flows`.
pub fn superframe(cfg: &SuperframeConfig, k: u64, flows: &[NodeId]) -> Superframe {
    let beacon_at = VirtualTime(k * cfg.period);
    let cap_start = beacon_at + cfg.beacon;
    let cap_end = cap_start + cfg.cap;
    let gts = if flows.is_empty() {
        Vec::new()
    } else {
        (0..cfg.gts_slots as u64)
            .filter_map(|j| {
                let flow_idx = k * cfg.gts_slots as u64 + j;
                // fewer flows than slots: leave the remainder unassigned
                if flows.len() < cfg.gts_slots as usize && j as usize >= flows.len() {
                    return None;
                }
                let owner = flows[(flow_idx % flows.len() as u64) as usize];
                let start = cap_end + j * cfg.gts_slot;
                Some(GtsSlot { interval: Interval { start, end: start + cfg.gts_slot }, owner })
            })
            .collect()
    };
    Superframe {
        index: k,
        beacon_at,
        beacon_dur: cfg.beacon,
        cap: Interval { start: cap_start, end: cap_end },
        gts,
        period: cfg.period,
        active_dur: cfg.active,
    }
}

/// The first `count` superframes.
pub fn superframe_schedule(cfg: &SuperframeConfig, flows: &[NodeId], count: u64) -> Result<Vec<Superframe>> {
    cfg.validate()?;
    Ok((0..count).map(|k| superframe(cfg, k, flows)).collect())
}

/// Index of the superframe whose period contains `t`.
pub fn superframe_index(cfg: &SuperframeConfig, t: VirtualTime) -> u64 {
    t.0 / cfg.period
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Start the data frame at this instant.
    Transmit(VirtualTime),
    Deferred,
}

/// Slotted CSMA/CA inside the CAP: back off `backoff_slots`, sense for
/// `t_detect`, then transmit if the whole exchange fits before the CAP ends.
pub fn cap_access(
    now: VirtualTime,
    sf: &Superframe,
    backoff_slots: u32,
    slot: u64,
    t_detect: u64,
    exchange: u64,
) -> Access {
    if now >= sf.cap.end {
        return Access::Deferred;
    }
    let begin = now.max(sf.cap.start);
    let tx_at = begin + backoff_slots as u64 * slot + t_detect;
    if tx_at + exchange <= sf.cap.end {
        Access::Transmit(tx_at)
    } else {
        Access::Deferred
    }
}

/// Contention-free access in `node`'s slot of `sf`, if it has one that has
/// not started yet.
pub fn gts_access(node: NodeId, now: VirtualTime, sf: &Superframe, airtime: u64) -> Result<Access> {
    let Some(slot) = sf.slot_of(node) else {
        return Ok(Access::Deferred);
    };
    let slot_len = slot.interval.end.since(slot.interval.start);
    if airtime > slot_len {
        return Err(SimError::Config(format!("urgent frame ({airtime} us) does not fit a {slot_len} us GTS slot")));
    }
    if now <= slot.interval.start {
        Ok(Access::Transmit(slot.interval.start))
    } else {
        Ok(Access::Deferred)
    }
}

/// The next slot owned by `node` starting at or after `now`.
pub fn next_gts(cfg: &SuperframeConfig, flows: &[NodeId], node: NodeId, now: VirtualTime) -> Option<(Superframe, Interval)> {
    if !flows.contains(&node) {
        return None;
    }
    let first = superframe_index(cfg, now);
    let horizon = flows.len() as u64 + 2;
    (first..first + horizon).find_map(|k| {
        let sf = superframe(cfg, k, flows);
        let slot = sf.slot_of(node)?.interval;
        (slot.start >= now).then_some((sf.clone(), slot))
    })
}
