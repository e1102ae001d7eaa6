use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use super::log::{EventKind, SimEventLog};
use crate::agent::AgentId;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickMetrics {
    #[serde(rename = "tick [ticks]")]
    pub tick: Tick,
    /// Messages in flight at the end of the tick.
    #[serde(rename = "queue_depth [msgs]")]
    pub queue_depth: u64,
    /// Deliveries during the tick.
    #[serde(rename = "throughput [msgs/tick]")]
    pub throughput: u64,
    #[serde(rename = "drops [msgs]")]
    pub drops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean: f64,
    pub median: Tick,
    pub p95: Tick,
    pub p99: Tick,
    pub max: Tick,
    pub histogram: BTreeMap<Tick, u64>,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<Tick>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let mut histogram = BTreeMap::new();
        for &s in &samples {
            *histogram.entry(s).or_insert(0) += 1;
        }
        let n = samples.len();
        // Nearest-rank percentile.
        let rank = |p: f64| samples[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n as u64,
            mean: samples.iter().sum::<u64>() as f64 / n as f64,
            median: rank(0.5),
            p95: rank(0.95),
            p99: rank(0.99),
            max: samples[n - 1],
            histogram,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub sends: u64,
    pub deliveries: u64,
    pub drops: u64,
    pub dups: u64,
    pub crashes: u64,
    /// Largest number of messages queued towards any single agent.
    pub max_queue_depth: u64,
    /// Largest total number of messages in flight.
    pub max_in_flight: u64,
    pub mean_throughput: f64,
    /// Longest run of consecutive ticks that each saw at least one drop.
    pub longest_drop_streak: u64,
    pub latency: LatencyStats,
    pub duration_ticks: Tick,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ticks: Vec<TickMetrics>,
    pub summary: MetricsSummary,
}

/// Derives per-tick and summary metrics from an event log.
pub fn metrics(log: &SimEventLog) -> MetricsReport {
    let Some(last) = log.records.last().map(|r| r.tick) else {
        return MetricsReport::default();
    };
    let mut per_tick: Vec<TickMetrics> = (0..=last)
        .map(|tick| TickMetrics {
            tick,
            queue_depth: 0,
            throughput: 0,
            drops: 0,
        })
        .collect();
    let mut summary = MetricsSummary {
        duration_ticks: last + 1,
        ..MetricsSummary::default()
    };
    let mut queued: HashMap<u64, AgentId> = HashMap::new();
    let mut depth: HashMap<AgentId, u64> = HashMap::new();
    let mut touched: Vec<AgentId> = Vec::new();
    let mut latencies = Vec::new();

    let mut i = 0;
    let records = &log.records;
    while i < records.len() {
        let tick = records[i].tick;
        touched.clear();
        while i < records.len() && records[i].tick == tick {
            let r = &records[i];
            let row = &mut per_tick[tick as usize];
            match r.kind {
                EventKind::Send | EventKind::Dup => {
                    if r.kind == EventKind::Send {
                        summary.sends += 1;
                    } else {
                        summary.dups += 1;
                    }
                    if let (Some(p), Some(to)) = (r.packet, r.to) {
                        queued.insert(p, to);
                        *depth.entry(to).or_insert(0) += 1;
                        touched.push(to);
                    }
                }
                EventKind::Deliver | EventKind::Drop => {
                    if r.kind == EventKind::Deliver {
                        summary.deliveries += 1;
                        row.throughput += 1;
                        if let Some(sent) = r.sent_at {
                            latencies.push(r.tick - sent);
                        }
                    } else {
                        summary.drops += 1;
                        row.drops += 1;
                    }
                    if let Some(to) = r.packet.and_then(|p| queued.remove(&p)) {
                        *depth.get_mut(&to).expect("queued packet has a depth entry") -= 1;
                    }
                }
                EventKind::Crash => summary.crashes += 1,
                EventKind::Timer => {}
            }
            i += 1;
        }
        per_tick[tick as usize].queue_depth = queued.len() as u64;
        summary.max_in_flight = summary.max_in_flight.max(queued.len() as u64);
        for to in &touched {
            summary.max_queue_depth = summary.max_queue_depth.max(depth[to]);
        }
    }
    // Fill gaps between recorded ticks with the carried-over depth.
    for t in 1..per_tick.len() {
        if per_tick[t].queue_depth == 0 && !records_at(log, t as Tick) {
            per_tick[t].queue_depth = per_tick[t - 1].queue_depth;
        }
    }

    let mut streak = 0;
    for row in &per_tick {
        streak = if row.drops > 0 { streak + 1 } else { 0 };
        summary.longest_drop_streak = summary.longest_drop_streak.max(streak);
    }
    summary.mean_throughput = summary.deliveries as f64 / summary.duration_ticks as f64;
    summary.latency = LatencyStats::from_samples(latencies);
    MetricsReport {
        ticks: per_tick,
        summary,
    }
}

fn records_at(log: &SimEventLog, tick: Tick) -> bool {
    log.records.binary_search_by(|r| r.tick.cmp(&tick)).is_ok()
}

impl MetricsReport {
    /// CSV with one row per tick; headers carry units.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.ticks {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    /// Summary with latencies scaled to milliseconds at `tick_ms` per tick.
    pub fn summary_json(&self, tick_ms: f64) -> serde_json::Value {
        let s = &self.summary;
        let ms = |t: Tick| t as f64 * tick_ms;
        serde_json::json!({
            "tick_ms": tick_ms,
            "duration_ticks": s.duration_ticks,
            "sends": s.sends,
            "deliveries": s.deliveries,
            "drops": s.drops,
            "dups": s.dups,
            "crashes": s.crashes,
            "max_queue_depth": s.max_queue_depth,
            "max_in_flight": s.max_in_flight,
            "mean_throughput": s.mean_throughput,
            "longest_drop_streak": s.longest_drop_streak,
            "latency_count": s.latency.count,
            "mean_ms": s.latency.mean * tick_ms,
            "median_ms": ms(s.latency.median),
            "p95_ms": ms(s.latency.p95),
            "p99_ms": ms(s.latency.p99),
            "max_ms": ms(s.latency.max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::LogRecord;

    fn rec(tick: Tick, kind: EventKind, packet: u64, sent_at: Tick) -> LogRecord {
        let mut r = LogRecord::bare(tick, kind);
        r.packet = Some(packet);
        r.to = Some(AgentId(1));
        r.sent_at = Some(sent_at);
        r
    }

    #[test]
    fn empty_log_gives_zero_metrics() {
        let m = metrics(&SimEventLog::new());
        assert!(m.ticks.is_empty());
        assert_eq!(m.summary, MetricsSummary::default());
    }

    #[test]
    fn single_message_latency() {
        let mut log = SimEventLog::new();
        log.push(rec(0, EventKind::Send, 0, 0));
        log.push(rec(3, EventKind::Deliver, 0, 0));
        let m = metrics(&log);
        assert_eq!(m.summary.latency.histogram, BTreeMap::from([(3, 1)]));
        assert_eq!(m.summary.latency.median, 3);
        assert_eq!(m.summary.max_queue_depth, 1);
        let depths: Vec<u64> = m.ticks.iter().map(|t| t.queue_depth).collect();
        assert_eq!(depths, vec![1, 1, 1, 0]);
        assert_eq!(m.ticks[3].throughput, 1);
    }

    #[test]
    fn dropped_at_send_never_counts_as_queued() {
        let mut log = SimEventLog::new();
        log.push(rec(0, EventKind::Send, 0, 0));
        log.push(rec(0, EventKind::Drop, 0, 0));
        log.push(rec(1, EventKind::Drop, 9, 1));
        let m = metrics(&log);
        assert_eq!(m.summary.max_queue_depth, 0);
        assert_eq!(m.summary.drops, 2);
        assert_eq!(m.summary.longest_drop_streak, 2);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let s = LatencyStats::from_samples((1..=100).collect());
        assert_eq!((s.median, s.p95, s.p99, s.max), (50, 95, 99, 100));
    }

    #[test]
    fn csv_header() {
        let mut log = SimEventLog::new();
        log.push(rec(0, EventKind::Send, 0, 0));
        log.push(rec(1, EventKind::Deliver, 0, 0));
        let csv = metrics(&log).to_csv();
        assert_eq!(
            csv,
            "tick [ticks],queue_depth [msgs],throughput [msgs/tick],drops [msgs]\n0,1,0,0\n1,0,1,0\n"
        );
    }
}
