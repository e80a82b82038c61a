//! Run artifacts: the append-only event log (the single source of truth a
//! run produces) and the metrics report derived from it. The report is a
//! pure function of the log, so re-running `report` on a stored log always
//! reproduces the original numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::time::SimTime;

/// Latency budget for a complete requisition.
pub const LATENCY_BUDGET_US: u64 = 100_000;
/// Delivery-ratio floor every loaded link must clear.
pub const PDR_FLOOR: f64 = 0.95;
/// Acceptable route-decision churn for the shipped dynamic scenario.
pub const ROUTE_RATE_LIMIT_PER_MIN: f64 = 0.92;

/// One log line: when, who, what, and a flat list of key=value details.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub time_us: u64,
    pub component: String,
    pub event: String,
    pub fields: Vec<(String, String)>,
}

impl Record {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn f64_field(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn u64_field(&self, key: &str) -> Option<u64> {
        self.get(key).and_then(|v| v.parse().ok())
    }
}

/// Time-ordered run log. Values must stay free of tabs and newlines; the
/// writer asserts it so a malformed line can never be produced.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<Record>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, component: &str, event: &str, fields: &[(&str, String)]) {
        debug_assert!(
            self.records.last().map_or(true, |r| r.time_us <= time.0),
            "log must stay time-ordered"
        );
        for (k, v) in fields {
            debug_assert!(
                !k.contains(['\t', '\n', '=']) && !v.contains(['\t', '\n']),
                "log field {k}={v} contains a reserved character"
            );
        }
        self.records.push(Record {
            time_us: time.0,
            component: component.to_string(),
            event: event.to_string(),
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        for r in &self.records {
            write!(out, "{}\t{}/{}", r.time_us, r.component, r.event).unwrap();
            for (k, v) in &r.fields {
                write!(out, "\t{k}={v}").unwrap();
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    /// Hex SHA-256 of the rendered log; the run's determinism fingerprint.
    pub fn digest_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn write_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let time_us = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::MalformedLog {
                    line: lineno,
                    reason: "missing or non-numeric timestamp".into(),
                })?;
            let tag = parts.next().ok_or_else(|| Error::MalformedLog {
                line: lineno,
                reason: "missing component/event".into(),
            })?;
            let (component, event) = tag.split_once('/').ok_or_else(|| Error::MalformedLog {
                line: lineno,
                reason: format!("tag {tag:?} lacks a component/event separator"),
            })?;
            let mut fields = Vec::new();
            for part in parts {
                let (k, v) = part.split_once('=').ok_or_else(|| Error::MalformedLog {
                    line: lineno,
                    reason: format!("field {part:?} lacks '='"),
                })?;
                fields.push((k.to_string(), v.to_string()));
            }
            records.push(Record {
                time_us,
                component: component.to_string(),
                event: event.to_string(),
                fields,
            });
        }
        Ok(EventLog { records })
    }

    pub fn read_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// One completed requisition as reported in the log.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRecord {
    pub seq: u32,
    pub intersection: u32,
    pub t_local_us: u64,
    pub t_comm_us: u64,
    pub t_exe_us: u64,
    pub t_total_us: u64,
    /// Request-to-response slice, excluding the route-file download.
    pub t_response_us: u64,
    /// Distance left to the intersection when the new route took effect.
    pub residual_m: f64,
    /// Deceleration needed to stop within the residual, if stopping is
    /// feasible at all.
    pub stop_decel: Option<f64>,
    pub braking_class: String,
}

/// One applied route decision.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEvent {
    pub time_us: u64,
    pub seq: u32,
    pub changed: bool,
    pub nodes: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkSummary {
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes_delivered: u64,
    /// (offered, delivered, dropped) per wire message type.
    pub per_type: BTreeMap<u8, (u64, u64, u64)>,
}

impl LinkSummary {
    pub fn pdr(&self) -> Option<f64> {
        (self.offered > 0).then(|| self.delivered as f64 / self.offered as f64)
    }

    /// Mean delivered bitrate over the run, bits per second.
    pub fn avg_bitrate_bps(&self, duration_us: u64) -> f64 {
        if duration_us == 0 {
            return 0.0;
        }
        self.bytes_delivered as f64 * 8.0 / (duration_us as f64 * 1e-6)
    }
}

/// Pass/fail juries. `None` means the run produced nothing to judge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Verdicts {
    pub latency: Option<bool>,
    pub reliability: Option<bool>,
    pub route_rate: Option<bool>,
}

impl Verdicts {
    /// Overall outcome: nothing judged may have failed.
    pub fn pass(&self) -> bool {
        [self.latency, self.reliability, self.route_rate]
            .iter()
            .all(|v| *v != Some(false))
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub seed: u64,
    pub duration_us: u64,
    pub threshold_m: f64,
    pub budget_us: u64,
    pub pdr_floor: f64,
    pub rate_limit_per_min: f64,
    pub links: BTreeMap<String, LinkSummary>,
    pub latencies: Vec<LatencyRecord>,
    pub t_max_us: Option<u64>,
    pub margin_pct: Option<f64>,
    pub route_events: Vec<RouteEvent>,
    pub route_changes: u64,
    pub route_change_rate_per_min: f64,
    pub requests_sent: u64,
    pub timeouts: u64,
    pub fallbacks: u64,
    pub arrived_at_us: Option<u64>,
    pub digest: String,
    pub warnings: Vec<String>,
    pub verdicts: Verdicts,
}

fn percentile(sorted: &[u64], pct: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((pct / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl MetricsReport {
    /// Everything here derives from the log alone.
    pub fn from_log(log: &EventLog) -> Self {
        let mut report = MetricsReport {
            seed: 0,
            duration_us: 0,
            threshold_m: f64::NAN,
            budget_us: LATENCY_BUDGET_US,
            pdr_floor: PDR_FLOOR,
            rate_limit_per_min: ROUTE_RATE_LIMIT_PER_MIN,
            links: BTreeMap::new(),
            latencies: Vec::new(),
            t_max_us: None,
            margin_pct: None,
            route_events: Vec::new(),
            route_changes: 0,
            route_change_rate_per_min: 0.0,
            requests_sent: 0,
            timeouts: 0,
            fallbacks: 0,
            arrived_at_us: None,
            digest: log.digest_hex(),
            warnings: Vec::new(),
            verdicts: Verdicts::default(),
        };

        let mut saw_start = false;
        for r in log.records() {
            match (r.component.as_str(), r.event.as_str()) {
                ("run", "start") => {
                    saw_start = true;
                    report.seed = r.u64_field("seed").unwrap_or(0);
                    report.duration_us = r.u64_field("duration_us").unwrap_or(0);
                    report.threshold_m = r.f64_field("threshold_m").unwrap_or(f64::NAN);
                    report.budget_us = r.u64_field("budget_us").unwrap_or(LATENCY_BUDGET_US);
                    report.pdr_floor = r.f64_field("pdr_floor").unwrap_or(PDR_FLOOR);
                    report.rate_limit_per_min =
                        r.f64_field("rate_limit_per_min").unwrap_or(ROUTE_RATE_LIMIT_PER_MIN);
                }
                ("stats", "link") => {
                    let Some(name) = r.get("link") else {
                        report.warnings.push("stats/link line without a link name".into());
                        continue;
                    };
                    let mut summary = LinkSummary {
                        offered: r.u64_field("offered").unwrap_or(0),
                        delivered: r.u64_field("delivered").unwrap_or(0),
                        dropped: r.u64_field("dropped").unwrap_or(0),
                        bytes_delivered: r.u64_field("bytes").unwrap_or(0),
                        per_type: BTreeMap::new(),
                    };
                    if let Some(types) = r.get("types") {
                        for item in types.split(';').filter(|s| !s.is_empty()) {
                            let nums: Vec<u64> =
                                item.split(':').filter_map(|n| n.parse().ok()).collect();
                            if nums.len() == 4 {
                                summary
                                    .per_type
                                    .insert(nums[0] as u8, (nums[1], nums[2], nums[3]));
                            }
                        }
                    }
                    report.links.insert(name.to_string(), summary);
                }
                (_, "latency") => {
                    let rec = LatencyRecord {
                        seq: r.u64_field("seq").unwrap_or(0) as u32,
                        intersection: r.u64_field("node").unwrap_or(0) as u32,
                        t_local_us: r.u64_field("t_local_us").unwrap_or(0),
                        t_comm_us: r.u64_field("t_comm_us").unwrap_or(0),
                        t_exe_us: r.u64_field("t_exe_us").unwrap_or(0),
                        t_total_us: r.u64_field("t_total_us").unwrap_or(0),
                        t_response_us: r.u64_field("t_response_us").unwrap_or(0),
                        residual_m: r.f64_field("residual_m").unwrap_or(f64::NAN),
                        stop_decel: r.f64_field("stop_decel"),
                        braking_class: r.get("class").unwrap_or("unknown").to_string(),
                    };
                    report.latencies.push(rec);
                }
                (_, "apply_route") => {
                    report.route_events.push(RouteEvent {
                        time_us: r.time_us,
                        seq: r.u64_field("seq").unwrap_or(0) as u32,
                        changed: r.get("changed") == Some("true"),
                        nodes: r.get("nodes").unwrap_or("").to_string(),
                    });
                }
                (_, "request_sent") => report.requests_sent += 1,
                (_, "timeout") => report.timeouts += 1,
                (_, "fallback") => report.fallbacks += 1,
                (_, "arrived") => report.arrived_at_us = Some(r.time_us),
                _ => {}
            }
        }

        if !saw_start {
            report.warnings.push("log has no run/start record".into());
        }
        if report.latencies.is_empty() {
            report.warnings.push("no completed requisition in this run".into());
        } else {
            let mut totals: Vec<u64> = report.latencies.iter().map(|l| l.t_total_us).collect();
            totals.sort_unstable();
            let t_max = *totals.last().unwrap();
            report.t_max_us = Some(t_max);
            report.margin_pct = Some(
                (report.budget_us as f64 - t_max as f64) / report.budget_us as f64 * 100.0,
            );
            report.verdicts.latency = Some(t_max <= report.budget_us);
        }

        report.route_changes = report.route_events.iter().filter(|e| e.changed).count() as u64;
        if report.duration_us > 0 {
            report.route_change_rate_per_min =
                report.route_changes as f64 / (report.duration_us as f64 / 60e6);
            report.verdicts.route_rate =
                Some(report.route_change_rate_per_min <= report.rate_limit_per_min);
        }

        let loaded: Vec<&LinkSummary> =
            report.links.values().filter(|l| l.offered > 0).collect();
        if !loaded.is_empty() {
            report.verdicts.reliability =
                Some(loaded.iter().all(|l| l.pdr().unwrap() >= report.pdr_floor));
        }

        report
    }

    pub fn latency_percentile(&self, pct: f64) -> Option<u64> {
        if self.latencies.is_empty() {
            return None;
        }
        let mut totals: Vec<u64> = self.latencies.iter().map(|l| l.t_total_us).collect();
        totals.sort_unstable();
        Some(percentile(&totals, pct))
    }

    /// Human-readable summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut w = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        w("run summary".into());
        w("===========".into());
        w(format!(
            "seed {}, duration {:.3} s, digest {}",
            self.seed,
            self.duration_us as f64 * 1e-6,
            &self.digest[..12.min(self.digest.len())]
        ));
        w(format!(
            "requisition threshold: {:.1} m (exact {:.3} m)",
            self.threshold_m, self.threshold_m
        ));
        w(format!(
            "requests: {} sent, {} completed, {} timeouts, {} fallbacks",
            self.requests_sent,
            self.latencies.len(),
            self.timeouts,
            self.fallbacks
        ));
        match self.t_max_us {
            Some(t_max) => {
                w(format!(
                    "latency: T_max {:.2} ms, margin {:.2}% below the {:.0} ms budget",
                    t_max as f64 * 1e-3,
                    self.margin_pct.unwrap_or(f64::NAN),
                    self.budget_us as f64 * 1e-3
                ));
                w(format!(
                    "  p50 {:.2} ms, p95 {:.2} ms; request-to-response max {:.2} ms",
                    self.latency_percentile(50.0).unwrap() as f64 * 1e-3,
                    self.latency_percentile(95.0).unwrap() as f64 * 1e-3,
                    self.latencies.iter().map(|l| l.t_response_us).max().unwrap() as f64 * 1e-3,
                ));
                for l in &self.latencies {
                    w(format!(
                        "  request {} at node {}: local {:.2} + comm {:.2} + exe {:.2} = {:.2} ms, \
                         residual {:.3} m, stop decel {} ({})",
                        l.seq,
                        l.intersection,
                        l.t_local_us as f64 * 1e-3,
                        l.t_comm_us as f64 * 1e-3,
                        l.t_exe_us as f64 * 1e-3,
                        l.t_total_us as f64 * 1e-3,
                        l.residual_m,
                        l.stop_decel.map_or("n/a".into(), |d| format!("{d:.2} m/s^2")),
                        l.braking_class,
                    ));
                }
            }
            None => w("latency: no completed requisition".into()),
        }
        w(format!(
            "route: {} decisions applied, {} changes, {:.3} changes/min (limit {:.2})",
            self.route_events.len(),
            self.route_changes,
            self.route_change_rate_per_min,
            self.rate_limit_per_min
        ));
        for e in &self.route_events {
            w(format!(
                "  request {}: nodes {} ({})",
                e.seq,
                e.nodes,
                if e.changed { "changed" } else { "unchanged" }
            ));
        }
        match self.arrived_at_us {
            Some(t) => w(format!("arrival: destination reached at {:.3} s", t as f64 * 1e-6)),
            None => w("arrival: destination not reached".into()),
        }
        w("links:".into());
        for (name, l) in &self.links {
            w(format!(
                "  {}: offered {}, delivered {}, dropped {}, pdr {}, avg {:.3} Mb/s",
                name,
                l.offered,
                l.delivered,
                l.dropped,
                l.pdr().map_or("n/a".into(), |p| format!("{:.2}%", p * 100.0)),
                l.avg_bitrate_bps(self.duration_us) / 1e6
            ));
        }
        w("verdicts:".into());
        let verdict = |v: Option<bool>| match v {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        };
        w(format!(
            "  latency within {:.0} ms budget: {}",
            self.budget_us as f64 * 1e-3,
            verdict(self.verdicts.latency)
        ));
        w(format!(
            "  delivery ratio >= {:.0}%: {}",
            self.pdr_floor * 100.0,
            verdict(self.verdicts.reliability)
        ));
        w(format!(
            "  route churn <= {:.2}/min: {}",
            self.rate_limit_per_min,
            verdict(self.verdicts.route_rate)
        ));
        w(format!("overall: {}", if self.verdicts.pass() { "PASS" } else { "FAIL" }));
        for warning in &self.warnings {
            w(format!("warning: {warning}"));
        }
        out
    }

    /// Delimited per-request records for scripted consumers.
    pub fn latency_csv(&self) -> String {
        let mut out = String::from(
            "seq,intersection,t_local_us,t_comm_us,t_exe_us,t_total_us,t_response_us,residual_m,stop_decel_mps2,braking_class\n",
        );
        for l in &self.latencies {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3},{},{}",
                l.seq,
                l.intersection,
                l.t_local_us,
                l.t_comm_us,
                l.t_exe_us,
                l.t_total_us,
                l.t_response_us,
                l.residual_m,
                l.stop_decel.map_or("".into(), |d| format!("{d:.3}")),
                l.braking_class
            )
            .unwrap();
        }
        out
    }

    /// Delimited per-link counters, with one aggregate row per link and one
    /// row per message type.
    pub fn links_csv(&self) -> String {
        let mut out =
            String::from("link,msg_type,offered,delivered,dropped,bytes_delivered,pdr,avg_bitrate_bps\n");
        for (name, l) in &self.links {
            writeln!(
                out,
                "{},all,{},{},{},{},{},{:.1}",
                name,
                l.offered,
                l.delivered,
                l.dropped,
                l.bytes_delivered,
                l.pdr().map_or("".into(), |p| format!("{p:.6}")),
                l.avg_bitrate_bps(self.duration_us)
            )
            .unwrap();
            for (ty, (offered, delivered, dropped)) in &l.per_type {
                let pdr = if *offered > 0 {
                    format!("{:.6}", *delivered as f64 / *offered as f64)
                } else {
                    String::new()
                };
                writeln!(out, "{name},{ty},{offered},{delivered},{dropped},,{pdr},").unwrap();
            }
        }
        out
    }
}
