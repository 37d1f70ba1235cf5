//! Flat `key = value` run configuration.
//!
//! Durations are written in milliseconds (fractions allowed) and stored in
//! microseconds. Omitted keys keep their defaults; unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{FrameTimings, NodeId, Priority};
use crate::engine::VirtualTime;
use crate::error::{Result, SimError};
use crate::mac::adp::{PollDistribution, PollMode};
use crate::mac::adp2::CwPolicy;
use crate::mac::mvdr::SuperframeConfig;
use crate::mac::Protocol;
use crate::metrics::PowerMap;
use crate::topology::Topology;
use crate::traffic::{Pattern, PredictionParams};

/// Arrival process of one traffic class on every sensor node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    /// `None` disables the class.
    pub pattern: Option<Pattern>,
    /// Microseconds.
    pub mean_interval: u64,
}

/// A single packet injected at a fixed time, for scripted scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedArrival {
    pub at: VirtualTime,
    pub node: NodeId,
    pub priority: Priority,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub topology: Topology,
    pub stop_delivered: u64,
    /// Safety limit on virtual time, microseconds.
    pub max_time: u64,

    pub timings: FrameTimings,
    pub t_poll: u64,
    pub t_pi: u64,
    pub t_add: u64,
    pub t_cycle: u64,
    pub t_w: u64,
    pub t_s: u64,
    pub slot: u64,
    pub cw: CwPolicy,
    pub max_burst: usize,
    pub retry_limit: u32,
    pub packet_bytes: u32,

    pub initial_poll: PollDistribution,
    pub adapt_polling: bool,
    pub poll_mode: PollMode,
    pub poll_mean_cap: u64,
    pub cv_threshold: f64,
    pub history_window: usize,

    pub urgent: FlowSpec,
    pub normal: FlowSpec,
    /// Randomize each flow's start phase within one interval.
    pub random_phase: bool,
    pub script: Vec<ScriptedArrival>,

    pub prediction: PredictionParams,
    pub interrupt_predicted: bool,
    pub interrupt_on_urgent_strobe: bool,
    pub urgent_preempts_linger: bool,

    pub power: PowerMap,

    pub mvdr_beacon: u64,
    pub mvdr_cap: u64,
    pub mvdr_gts_slots: u32,
    pub mvdr_gts_slot: u64,
    pub mvdr_urgent_rate_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::Adp2,
            seed: 1,
            topology: Topology::default(),
            stop_delivered: 1000,
            max_time: 500_000_000_000,

            timings: FrameTimings::default(),
            t_poll: 20_000,
            t_pi: 50_000,
            t_add: 100_000,
            t_cycle: 10_000_000,
            t_w: 300_000,
            t_s: 9_700_000,
            slot: 1_000,
            cw: CwPolicy::default(),
            max_burst: 4,
            retry_limit: 5,
            packet_bytes: 58,

            initial_poll: PollDistribution::Deterministic,
            adapt_polling: true,
            poll_mode: PollMode::FixedMean,
            poll_mean_cap: 1_000_000,
            cv_threshold: 0.5,
            history_window: 10,

            urgent: FlowSpec { pattern: Some(Pattern::Poisson), mean_interval: 5_000_000 },
            normal: FlowSpec { pattern: Some(Pattern::Cbr), mean_interval: 5_000_000 },
            random_phase: true,
            script: Vec::new(),

            prediction: PredictionParams::default(),
            interrupt_predicted: true,
            interrupt_on_urgent_strobe: true,
            urgent_preempts_linger: true,

            power: PowerMap::default(),

            mvdr_beacon: 10_000,
            mvdr_cap: 200_000,
            mvdr_gts_slots: 3,
            mvdr_gts_slot: 30_000,
            mvdr_urgent_rate_factor: 2.0,
        }
    }
}

/// Every accepted key, with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("protocol", "ADP, ADP2 or MVDR"),
    ("seed", "run seed (u64)"),
    ("nodes", "sensor nodes in the chain (sink excluded)"),
    ("stop_delivered", "stop once this many packets reached the sink"),
    ("max_time_s", "virtual-time safety limit"),
    ("bit_rate_kbps", "base bit rate"),
    ("t_pre_ms", "preamble strobe airtime"),
    ("t_pre_pause_ms", "pause between strobes"),
    ("t_ea_ms", "early ACK airtime"),
    ("t_data_ms", "data frame airtime at the base rate"),
    ("t_ack_ms", "ACK / block ACK airtime"),
    ("t_detect_ms", "channel activity detection time"),
    ("t_poll_ms", "polling duration"),
    ("t_pi_ms", "mean polling interval"),
    ("t_add_ms", "additional wake-up time after an exchange"),
    ("t_cycle_ms", "cycle length (superframe period)"),
    ("t_w_ms", "wake-up time (superframe active portion)"),
    ("t_s_ms", "sleep time"),
    ("slot_ms", "backoff slot length"),
    ("cw_max", "contention window for normal traffic, slots"),
    ("cw_urgent", "contention window for urgent traffic, slots"),
    ("cw_urgent_adaptive", "halve the urgent window after each deferral"),
    ("max_burst", "packets per concatenated burst"),
    ("retry_limit", "per-hop retries before a drop"),
    ("packet_bytes", "payload size"),
    ("initial_poll", "deterministic or exponential"),
    ("adapt_polling", "choose the polling distribution from the arrival Cv"),
    ("poll_mode", "fixed or adaptive (mean follows traffic)"),
    ("poll_mean_cap_ms", "upper bound on the adaptive polling mean"),
    ("cv_threshold", "Cv below this is classified CBR"),
    ("history_window", "inter-arrival samples kept for Cv"),
    ("urgent_pattern", "cbr, poisson or none"),
    ("urgent_interval_s", "mean urgent generation interval per node"),
    ("normal_pattern", "cbr, poisson or none"),
    ("normal_interval_s", "mean normal generation interval per node"),
    ("random_phase", "randomize each flow's start phase"),
    ("script", "scripted arrivals: time_ms:node:priority separated by ';'"),
    ("guard_k", "prediction guard in standard deviations"),
    ("guard_min_ms", "minimum prediction guard"),
    ("guard_cap_ms", "maximum prediction guard"),
    ("interrupt_predicted", "interrupt normal transfers on predicted urgent arrivals"),
    ("interrupt_on_urgent_strobe", "interrupt normal transfers on heard urgent strobes"),
    ("urgent_preempts_linger", "urgent packets may cut the node's own linger short"),
    ("power_tx_mw", "transmit power draw"),
    ("power_rx_mw", "receive power draw"),
    ("power_listen_mw", "listen power draw"),
    ("power_idle_mw", "idle power draw"),
    ("power_sleep_mw", "sleep power draw"),
    ("mvdr_beacon_ms", "beacon length"),
    ("mvdr_cap_ms", "contention access period"),
    ("mvdr_gts_slots", "guaranteed slots per superframe"),
    ("mvdr_gts_slot_ms", "guaranteed slot length"),
    ("mvdr_urgent_rate_factor", "urgent bit rate as a multiple of the base rate"),
];

fn ms_to_us(v: f64) -> u64 {
    (v * 1_000.0).round() as u64
}

fn us_to_ms(v: u64) -> String {
    format!("{}", v as f64 / 1_000.0)
}

fn us_to_s(v: u64) -> String {
    format!("{}", v as f64 / 1_000_000.0)
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got {v:?}"))?;
    if !x.is_finite() {
        return Err(format!("expected a finite number, got {v:?}"));
    }
    Ok(x)
}

fn parse_positive(v: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(v)?;
    if x <= 0.0 {
        return Err(format!("must be > 0, got {v}"));
    }
    Ok(x)
}

fn parse_non_negative(v: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(v)?;
    if x < 0.0 {
        return Err(format!("must be >= 0, got {v}"));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_pattern(v: &str) -> std::result::Result<Option<Pattern>, String> {
    match v.to_ascii_lowercase().as_str() {
        "cbr" => Ok(Some(Pattern::Cbr)),
        "poisson" => Ok(Some(Pattern::Poisson)),
        "none" | "off" => Ok(None),
        _ => Err(format!("expected cbr, poisson or none, got {v:?}")),
    }
}

fn pattern_str(p: Option<Pattern>) -> &'static str {
    match p {
        Some(Pattern::Cbr) => "cbr",
        Some(Pattern::Poisson) => "poisson",
        None => "none",
    }
}

fn parse_priority(v: &str) -> std::result::Result<Priority, String> {
    match v.to_ascii_lowercase().as_str() {
        "urgent" | "u" => Ok(Priority::Urgent),
        "normal" | "n" => Ok(Priority::Normal),
        _ => Err(format!("expected urgent or normal, got {v:?}")),
    }
}

fn parse_script(v: &str) -> std::result::Result<Vec<ScriptedArrival>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [t, node, prio] = parts.as_slice() else {
                return Err(format!("script entry {item:?} is not time_ms:node:priority"));
            };
            Ok(ScriptedArrival {
                at: VirtualTime(ms_to_us(parse_non_negative(t)?)),
                node: parse_int(node)?,
                priority: parse_priority(prio)?,
            })
        })
        .collect()
}

impl SimConfig {
    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "protocol" => self.protocol = v.parse()?,
            "seed" => self.seed = parse_int(v)?,
            "nodes" => {
                let n: u32 = parse_int(v)?;
                if n == 0 {
                    return Err("must be >= 1".into());
                }
                self.topology = Topology::chain(n);
            }
            "stop_delivered" => self.stop_delivered = parse_int(v)?,
            "max_time_s" => self.max_time = (parse_positive(v)? * 1e6).round() as u64,
            "bit_rate_kbps" => self.timings.bit_rate = parse_positive(v)? * 1_000.0,
            "t_pre_ms" => self.timings.t_pre = ms_to_us(parse_positive(v)?),
            "t_pre_pause_ms" => self.timings.t_pre_pause = ms_to_us(parse_positive(v)?),
            "t_ea_ms" => self.timings.t_ea = ms_to_us(parse_positive(v)?),
            "t_data_ms" => self.timings.t_data = ms_to_us(parse_positive(v)?),
            "t_ack_ms" => self.timings.t_ack = ms_to_us(parse_positive(v)?),
            "t_detect_ms" => self.timings.t_detect = ms_to_us(parse_positive(v)?),
            "t_poll_ms" => self.t_poll = ms_to_us(parse_positive(v)?),
            "t_pi_ms" => self.t_pi = ms_to_us(parse_positive(v)?),
            "t_add_ms" => self.t_add = ms_to_us(parse_positive(v)?),
            "t_cycle_ms" => self.t_cycle = ms_to_us(parse_positive(v)?),
            "t_w_ms" => self.t_w = ms_to_us(parse_positive(v)?),
            "t_s_ms" => self.t_s = ms_to_us(parse_positive(v)?),
            "slot_ms" => self.slot = ms_to_us(parse_positive(v)?),
            "cw_max" => self.cw.cw_normal = parse_int(v)?,
            "cw_urgent" => self.cw.cw_urgent = parse_int(v)?,
            "cw_urgent_adaptive" => self.cw.adaptive = parse_bool(v)?,
            "max_burst" => self.max_burst = parse_int(v)?,
            "retry_limit" => self.retry_limit = parse_int(v)?,
            "packet_bytes" => self.packet_bytes = parse_int(v)?,
            "initial_poll" => {
                self.initial_poll = match v.to_ascii_lowercase().as_str() {
                    "deterministic" => PollDistribution::Deterministic,
                    "exponential" => PollDistribution::Exponential,
                    _ => return Err(format!("expected deterministic or exponential, got {v:?}")),
                }
            }
            "adapt_polling" => self.adapt_polling = parse_bool(v)?,
            "poll_mode" => {
                self.poll_mode = match v.to_ascii_lowercase().as_str() {
                    "fixed" => PollMode::FixedMean,
                    "adaptive" => PollMode::TrafficAdaptive,
                    _ => return Err(format!("expected fixed or adaptive, got {v:?}")),
                }
            }
            "poll_mean_cap_ms" => self.poll_mean_cap = ms_to_us(parse_positive(v)?),
            "cv_threshold" => self.cv_threshold = parse_positive(v)?,
            "history_window" => self.history_window = parse_int(v)?,
            "urgent_pattern" => self.urgent.pattern = parse_pattern(v)?,
            "urgent_interval_s" => self.urgent.mean_interval = (parse_positive(v)? * 1e6).round() as u64,
            "normal_pattern" => self.normal.pattern = parse_pattern(v)?,
            "normal_interval_s" => self.normal.mean_interval = (parse_positive(v)? * 1e6).round() as u64,
            "random_phase" => self.random_phase = parse_bool(v)?,
            "script" => self.script = parse_script(v)?,
            "guard_k" => self.prediction.k = parse_non_negative(v)?,
            "guard_min_ms" => self.prediction.guard_min = ms_to_us(parse_non_negative(v)?),
            "guard_cap_ms" => self.prediction.guard_cap = ms_to_us(parse_non_negative(v)?),
            "interrupt_predicted" => self.interrupt_predicted = parse_bool(v)?,
            "interrupt_on_urgent_strobe" => self.interrupt_on_urgent_strobe = parse_bool(v)?,
            "urgent_preempts_linger" => self.urgent_preempts_linger = parse_bool(v)?,
            "power_tx_mw" => self.power.transmit_mw = parse_non_negative(v)?,
            "power_rx_mw" => self.power.receive_mw = parse_non_negative(v)?,
            "power_listen_mw" => self.power.listen_mw = parse_non_negative(v)?,
            "power_idle_mw" => self.power.idle_mw = parse_non_negative(v)?,
            "power_sleep_mw" => self.power.sleep_mw = parse_non_negative(v)?,
            "mvdr_beacon_ms" => self.mvdr_beacon = ms_to_us(parse_positive(v)?),
            "mvdr_cap_ms" => self.mvdr_cap = ms_to_us(parse_positive(v)?),
            "mvdr_gts_slots" => self.mvdr_gts_slots = parse_int(v)?,
            "mvdr_gts_slot_ms" => self.mvdr_gts_slot = ms_to_us(parse_positive(v)?),
            "mvdr_urgent_rate_factor" => {
                let f = parse_positive(v)?;
                if f < 1.0 {
                    return Err("must be >= 1".into());
                }
                self.mvdr_urgent_rate_factor = f;
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parse config text. `origin` names the source in error messages.
    pub fn parse_str(text: &str, origin: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SimError::ConfigLine { path: origin.to_string(), line: i + 1, message };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected `key = value`, got {line:?}")));
            };
            let key = key.trim();
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.validate().map_err(|e| match e {
            SimError::Config(m) => SimError::ConfigLine { path: origin.to_string(), line: 0, message: m },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        SimConfig::parse_str(&text, &path.display().to_string())
    }

    pub fn superframe(&self) -> SuperframeConfig {
        SuperframeConfig {
            period: self.t_cycle,
            active: self.t_w,
            beacon: self.mvdr_beacon,
            cap: self.mvdr_cap,
            gts_slots: self.mvdr_gts_slots,
            gts_slot: self.mvdr_gts_slot,
        }
    }

    pub fn urgent_rate(&self) -> f64 {
        self.timings.bit_rate * self.mvdr_urgent_rate_factor
    }

    /// Longest strobe train before a retry: one mean sleep plus one poll.
    pub fn max_strobe_time(&self) -> u64 {
        self.t_pi + self.t_poll
    }

    pub fn validate(&self) -> Result<()> {
        self.cw.validate()?;
        if self.max_burst == 0 {
            return Err(SimError::Config("max_burst must be >= 1".into()));
        }
        if self.history_window < 2 {
            return Err(SimError::Config("history_window must be >= 2".into()));
        }
        if self.protocol == Protocol::Mvdr {
            self.superframe().validate()?;
            let urgent = self.timings.data_airtime(self.urgent_rate()) + self.timings.t_ack;
            if urgent > self.mvdr_gts_slot {
                return Err(SimError::Config(format!(
                    "urgent exchange ({urgent} us) does not fit a {} us GTS slot",
                    self.mvdr_gts_slot
                )));
            }
        }
        for s in &self.script {
            if s.node == 0 || !self.topology.contains(s.node) {
                return Err(SimError::Config(format!("scripted arrival at unknown sensor node {}", s.node)));
            }
        }
        Ok(())
    }

    /// The fully resolved configuration in `key = value` form.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("protocol", self.protocol.to_string());
        kv("seed", self.seed.to_string());
        kv("nodes", self.topology.node_count().to_string());
        kv("stop_delivered", self.stop_delivered.to_string());
        kv("max_time_s", us_to_s(self.max_time));
        kv("bit_rate_kbps", format!("{}", self.timings.bit_rate / 1_000.0));
        kv("t_pre_ms", us_to_ms(self.timings.t_pre));
        kv("t_pre_pause_ms", us_to_ms(self.timings.t_pre_pause));
        kv("t_ea_ms", us_to_ms(self.timings.t_ea));
        kv("t_data_ms", us_to_ms(self.timings.t_data));
        kv("t_ack_ms", us_to_ms(self.timings.t_ack));
        kv("t_detect_ms", us_to_ms(self.timings.t_detect));
        kv("t_poll_ms", us_to_ms(self.t_poll));
        kv("t_pi_ms", us_to_ms(self.t_pi));
        kv("t_add_ms", us_to_ms(self.t_add));
        kv("t_cycle_ms", us_to_ms(self.t_cycle));
        kv("t_w_ms", us_to_ms(self.t_w));
        kv("t_s_ms", us_to_ms(self.t_s));
        kv("slot_ms", us_to_ms(self.slot));
        kv("cw_max", self.cw.cw_normal.to_string());
        kv("cw_urgent", self.cw.cw_urgent.to_string());
        kv("cw_urgent_adaptive", self.cw.adaptive.to_string());
        kv("max_burst", self.max_burst.to_string());
        kv("retry_limit", self.retry_limit.to_string());
        kv("packet_bytes", self.packet_bytes.to_string());
        kv(
            "initial_poll",
            match self.initial_poll {
                PollDistribution::Deterministic => "deterministic",
                PollDistribution::Exponential => "exponential",
            }
            .into(),
        );
        kv("adapt_polling", self.adapt_polling.to_string());
        kv(
            "poll_mode",
            match self.poll_mode {
                PollMode::FixedMean => "fixed",
                PollMode::TrafficAdaptive => "adaptive",
            }
            .into(),
        );
        kv("poll_mean_cap_ms", us_to_ms(self.poll_mean_cap));
        kv("cv_threshold", format!("{}", self.cv_threshold));
        kv("history_window", self.history_window.to_string());
        kv("urgent_pattern", pattern_str(self.urgent.pattern).into());
        kv("urgent_interval_s", us_to_s(self.urgent.mean_interval));
        kv("normal_pattern", pattern_str(self.normal.pattern).into());
        kv("normal_interval_s", us_to_s(self.normal.mean_interval));
        kv("random_phase", self.random_phase.to_string());
        kv(
            "script",
            self.script
                .iter()
                .map(|s| format!("{}:{}:{}", us_to_ms(s.at.0), s.node, s.priority))
                .collect::<Vec<_>>()
                .join(";"),
        );
        kv("guard_k", format!("{}", self.prediction.k));
        kv("guard_min_ms", us_to_ms(self.prediction.guard_min));
        kv("guard_cap_ms", us_to_ms(self.prediction.guard_cap));
        kv("interrupt_predicted", self.interrupt_predicted.to_string());
        kv("interrupt_on_urgent_strobe", self.interrupt_on_urgent_strobe.to_string());
        kv("urgent_preempts_linger", self.urgent_preempts_linger.to_string());
        kv("power_tx_mw", format!("{}", self.power.transmit_mw));
        kv("power_rx_mw", format!("{}", self.power.receive_mw));
        kv("power_listen_mw", format!("{}", self.power.listen_mw));
        kv("power_idle_mw", format!("{}", self.power.idle_mw));
        kv("power_sleep_mw", format!("{}", self.power.sleep_mw));
        kv("mvdr_beacon_ms", us_to_ms(self.mvdr_beacon));
        kv("mvdr_cap_ms", us_to_ms(self.mvdr_cap));
        kv("mvdr_gts_slots", self.mvdr_gts_slots.to_string());
        kv("mvdr_gts_slot_ms", us_to_ms(self.mvdr_gts_slot));
        kv("mvdr_urgent_rate_factor", format!("{}", self.mvdr_urgent_rate_factor));
        out
    }
}
