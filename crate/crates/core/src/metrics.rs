//! Delivery records, the four dissemination metrics and sweep aggregation.

use std::fmt::Write as _;

use crate::engine::SimTime;
use crate::mobility::VehicleId;
use crate::protocols::{MsgId, ProtocolKind};
use crate::radio::LossCause;

/// Outcome for one (message, intended recipient) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub msg_id: MsgId,
    pub src: VehicleId,
    pub dst: VehicleId,
    pub sent_time: SimTime,
    pub recv_time: Option<SimTime>,
    pub loss_cause: Option<LossCause>,
    pub protocol: ProtocolKind,
    pub hop_count: u32,
    /// Payload bytes.
    pub size: u32,
}

impl DeliveryRecord {
    pub fn is_delivered(&self) -> bool {
        self.recv_time.is_some()
    }
}

/// Mean of `recv - sent` over delivered records, seconds. `None` when nothing arrived.
pub fn end_to_end_delay(records: &[DeliveryRecord]) -> Option<f64> {
    let (sum, n) = records
        .iter()
        .filter_map(|r| r.recv_time.map(|t| (t - r.sent_time).as_micros()))
        .fold((0u128, 0u64), |(s, n), d| (s + u128::from(d), n + 1));
    (n > 0).then(|| sum as f64 / n as f64 / 1e6)
}

pub fn delivery_probability(records: &[DeliveryRecord]) -> Option<f64> {
    let n = records.len();
    (n > 0).then(|| records.iter().filter(|r| r.is_delivered()).count() as f64 / n as f64)
}

pub fn packet_loss_ratio(records: &[DeliveryRecord]) -> Option<f64> {
    let n = records.len();
    (n > 0).then(|| records.iter().filter(|r| !r.is_delivered()).count() as f64 / n as f64)
}

/// Delivered payload bits per second over `window_s`.
pub fn average_throughput(records: &[DeliveryRecord], window_s: f64) -> f64 {
    let bits: u64 = records
        .iter()
        .filter(|r| r.is_delivered())
        .map(|r| u64::from(r.size) * 8)
        .sum();
    bits as f64 / window_s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub protocol: ProtocolKind,
    pub vehicle_count: u32,
    pub seed: u64,
    pub mean_e2e_delay: Option<f64>,
    pub delivery_probability: Option<f64>,
    pub plr: Option<f64>,
    /// bits/second
    pub avg_throughput: f64,
    pub n_sent: u64,
    pub n_delivered: u64,
    pub n_lost: u64,
}

pub fn summarize(
    protocol: ProtocolKind,
    vehicle_count: u32,
    seed: u64,
    records: &[DeliveryRecord],
    window_s: f64,
) -> MetricsSummary {
    let n_delivered = records.iter().filter(|r| r.is_delivered()).count() as u64;
    MetricsSummary {
        protocol,
        vehicle_count,
        seed,
        mean_e2e_delay: end_to_end_delay(records),
        delivery_probability: delivery_probability(records),
        plr: packet_loss_ratio(records),
        avg_throughput: average_throughput(records, window_s),
        n_sent: records.len() as u64,
        n_delivered,
        n_lost: records.len() as u64 - n_delivered,
    }
}

pub const CSV_HEADER: &str =
    "protocol,vehicle_count,seed,mean_e2e_delay_s,delivery_probability,plr,avg_throughput_bps,n_sent,n_delivered,n_lost";

/// Nine significant digits, plain decimal notation.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // `{:e}` rounds to the requested significant digits; re-render positionally.
    let sci = format!("{:.8e}", v);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let point = exp + 1;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

/// Orders rows by protocol label, vehicle count, then seed.
pub fn sort_summaries(rows: &mut [MetricsSummary]) {
    rows.sort_by(|a, b| {
        a.protocol
            .label()
            .cmp(b.protocol.label())
            .then(a.vehicle_count.cmp(&b.vehicle_count))
            .then(a.seed.cmp(&b.seed))
    });
}

/// Per-run metrics CSV. Absent metrics are empty fields.
pub fn to_csv(rows: &[MetricsSummary]) -> String {
    let mut rows = rows.to_vec();
    sort_summaries(&mut rows);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.protocol,
            r.vehicle_count,
            r.seed,
            opt(r.mean_e2e_delay),
            opt(r.delivery_probability),
            opt(r.plr),
            fmt_sig9(r.avg_throughput),
            r.n_sent,
            r.n_delivered,
            r.n_lost
        );
    }
    out
}

/// Mean and sample standard deviation (n - 1) of the present values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

/// Seed-averaged metrics for one (protocol, vehicle_count).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub protocol: ProtocolKind,
    pub vehicle_count: u32,
    pub seeds: usize,
    pub mean_e2e_delay: Option<Stat>,
    pub delivery_probability: Option<Stat>,
    pub plr: Option<Stat>,
    pub avg_throughput: Stat,
}

impl AggregateRow {
    /// Value used for plot-data files, by column name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "mean_e2e_delay_s" => self.mean_e2e_delay.map(|s| s.mean),
            "delivery_probability" => self.delivery_probability.map(|s| s.mean),
            "plr" => self.plr.map(|s| s.mean),
            "avg_throughput_bps" => Some(self.avg_throughput.mean),
            _ => None,
        }
    }
}

pub const PLOT_METRICS: [&str; 4] = ["mean_e2e_delay_s", "delivery_probability", "plr", "avg_throughput_bps"];

pub fn aggregate_sweep(summaries: &[MetricsSummary]) -> Vec<AggregateRow> {
    let mut rows = summaries.to_vec();
    sort_summaries(&mut rows);
    let mut out = Vec::new();
    for group in rows.chunk_by(|a, b| a.protocol == b.protocol && a.vehicle_count == b.vehicle_count) {
        out.push(AggregateRow {
            protocol: group[0].protocol,
            vehicle_count: group[0].vehicle_count,
            seeds: group.len(),
            mean_e2e_delay: Stat::of(group.iter().filter_map(|r| r.mean_e2e_delay)),
            delivery_probability: Stat::of(group.iter().filter_map(|r| r.delivery_probability)),
            plr: Stat::of(group.iter().filter_map(|r| r.plr)),
            avg_throughput: Stat::of(group.iter().map(|r| r.avg_throughput)).expect("nonempty group"),
        });
    }
    out
}

/// Two-column `vehicle_count value` file for one protocol and metric.
pub fn plot_data(rows: &[AggregateRow], protocol: ProtocolKind, metric: &str) -> String {
    let mut out = format!("# vehicle_count {metric} ({protocol}, seed mean)\n");
    for r in rows.iter().filter(|r| r.protocol == protocol) {
        if let Some(v) = r.metric(metric) {
            let _ = writeln!(out, "{} {}", r.vehicle_count, fmt_sig9(v));
        }
    }
    out
}
