//! Attacker-identification schemes and per-client strike accounting.
//!
//! Six schemes judge one connection-metric snapshot at a time. All
//! comparisons are strict, and a missing metric is never suspicious:
//!
//! | scheme    | metric            | suspicious when          |
//! |-----------|-------------------|--------------------------|
//! | `lc`      | duration `d`      | `d > threshold`          |
//! | `lpr`     | packet rate `p`   | `p < threshold`          |
//! | `pdu`     | distance diff `Δ` | `Δ < threshold`          |
//! | `lpr-pdu` | `p` and `Δ`       | both, on the same packet |
//! | `mpr`     | mean rate `p̄`     | `p̄ < threshold`          |
//! | `prv`     | rate variance `σ²`| `σ² < threshold`         |
//!
//! Suspicious snapshots add *strikes* to the owning client address; a client
//! is classified as an attacker the moment its strike count reaches the
//! configured requirement. Strikes never decay.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_tracker::{FlowTable, HandshakePolicy, MetricSnapshot};
use crate::trace_io::{Endpoint, Micros, PacketRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Lc,
    Lpr,
    Pdu,
    LprPdu,
    Mpr,
    Prv,
}

pub const ALL_SCHEMES: [Scheme; 6] =
    [Scheme::Lc, Scheme::Lpr, Scheme::Pdu, Scheme::LprPdu, Scheme::Mpr, Scheme::Prv];

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Lc => "lc",
            Scheme::Lpr => "lpr",
            Scheme::Pdu => "pdu",
            Scheme::LprPdu => "lpr-pdu",
            Scheme::Mpr => "mpr",
            Scheme::Prv => "prv",
        }
    }

    /// Connection duration is measured from the true connection start, so
    /// the handshake toggle does not apply to `lc`.
    pub fn uses_handshake_policy(&self) -> bool {
        !matches!(self, Scheme::Lc)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lc" => Ok(Scheme::Lc),
            "lpr" => Ok(Scheme::Lpr),
            "pdu" => Ok(Scheme::Pdu),
            "lpr-pdu" | "lpr_pdu" => Ok(Scheme::LprPdu),
            "mpr" => Ok(Scheme::Mpr),
            "prv" => Ok(Scheme::Prv),
            other => Err(format!("unknown scheme {other:?} (expected lc, lpr, pdu, lpr-pdu, mpr, prv)")),
        }
    }
}

/// Threshold values; only the fields the scheme consults need to be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Connection duration bound in seconds (`lc`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<f64>,
    /// Instantaneous packet-rate bound in Hz (`lpr`, `lpr-pdu`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
    /// Packet-distance difference bound in seconds (`pdu`, `lpr-pdu`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    /// Mean packet-rate bound in Hz (`mpr`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pbar: Option<f64>,
    /// Packet-rate variance bound in Hz² (`prv`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var: Option<f64>,
}

/// A fully specified detection configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub thresholds: Thresholds,
    /// Whether handshake segments feed the metrics (ignored by `lc`).
    pub include_handshake: bool,
    /// Suspicious events required before a client is classified.
    pub strikes: u32,
}

impl SchemeConfig {
    pub fn lc(d: f64, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::Lc,
            thresholds: Thresholds { d: Some(d), ..Default::default() },
            include_handshake: true,
            strikes,
        }
    }

    pub fn lpr(p: f64, include_handshake: bool, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::Lpr,
            thresholds: Thresholds { p: Some(p), ..Default::default() },
            include_handshake,
            strikes,
        }
    }

    pub fn pdu(delta: f64, include_handshake: bool, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::Pdu,
            thresholds: Thresholds { delta: Some(delta), ..Default::default() },
            include_handshake,
            strikes,
        }
    }

    pub fn lpr_pdu(p: f64, delta: f64, include_handshake: bool, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::LprPdu,
            thresholds: Thresholds { p: Some(p), delta: Some(delta), ..Default::default() },
            include_handshake,
            strikes,
        }
    }

    pub fn mpr(pbar: f64, include_handshake: bool, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::Mpr,
            thresholds: Thresholds { pbar: Some(pbar), ..Default::default() },
            include_handshake,
            strikes,
        }
    }

    pub fn prv(var: f64, include_handshake: bool, strikes: u32) -> Self {
        SchemeConfig {
            scheme: Scheme::Prv,
            thresholds: Thresholds { var: Some(var), ..Default::default() },
            include_handshake,
            strikes,
        }
    }

    /// The threshold fields the scheme consults, in a fixed order.
    fn required(&self) -> Vec<(&'static str, Option<f64>)> {
        match self.scheme {
            Scheme::Lc => vec![("d", self.thresholds.d)],
            Scheme::Lpr => vec![("p", self.thresholds.p)],
            Scheme::Pdu => vec![("delta", self.thresholds.delta)],
            Scheme::LprPdu => vec![("p", self.thresholds.p), ("delta", self.thresholds.delta)],
            Scheme::Mpr => vec![("pbar", self.thresholds.pbar)],
            Scheme::Prv => vec![("var", self.thresholds.var)],
        }
    }

    /// Check that exactly the relevant thresholds are present, finite, and
    /// positive, and that the strike requirement is at least one.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.required() {
            match value {
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "scheme {} requires threshold {name:?}",
                        self.scheme
                    )))
                }
                Some(v) if !v.is_finite() || v <= 0.0 => {
                    return Err(Error::InvalidConfig(format!(
                        "threshold {name:?} must be finite and positive, got {v}"
                    )))
                }
                Some(_) => {}
            }
        }
        let extras = [
            ("d", self.thresholds.d),
            ("p", self.thresholds.p),
            ("delta", self.thresholds.delta),
            ("pbar", self.thresholds.pbar),
            ("var", self.thresholds.var),
        ];
        let needed: Vec<&str> = self.required().iter().map(|(n, _)| *n).collect();
        for (name, value) in extras {
            if value.is_some() && !needed.contains(&name) {
                return Err(Error::InvalidConfig(format!(
                    "threshold {name:?} is not used by scheme {}",
                    self.scheme
                )));
            }
        }
        if self.strikes == 0 {
            return Err(Error::InvalidConfig("strikes must be at least 1".into()));
        }
        Ok(())
    }

    /// The handshake policy the flow tracker should run under. `lc` always
    /// measures from the true connection start.
    pub fn effective_policy(&self) -> HandshakePolicy {
        if self.scheme.uses_handshake_policy() {
            HandshakePolicy { include_handshake: self.include_handshake }
        } else {
            HandshakePolicy::include()
        }
    }
}

// ── predicates ──────────────────────────────────────────────────────────────

/// Duration above threshold: the connection has lived suspiciously long.
pub fn lc_suspicious(snapshot: &MetricSnapshot, threshold_d: f64) -> bool {
    snapshot.duration.is_some_and(|d| d > threshold_d)
}

/// Instantaneous packet rate below threshold.
pub fn lpr_suspicious(snapshot: &MetricSnapshot, threshold_p: f64) -> bool {
    snapshot.rate.is_some_and(|p| p < threshold_p)
}

/// Packet-distance difference below threshold: arrivals are too regular.
pub fn pdu_suspicious(snapshot: &MetricSnapshot, threshold_delta: f64) -> bool {
    snapshot.delta.is_some_and(|delta| delta < threshold_delta)
}

/// Conjunction of `lpr` and `pdu` on the same arrival.
pub fn lpr_pdu_suspicious(snapshot: &MetricSnapshot, threshold_p: f64, threshold_delta: f64) -> bool {
    lpr_suspicious(snapshot, threshold_p) && pdu_suspicious(snapshot, threshold_delta)
}

/// Mean packet rate below threshold.
pub fn mpr_suspicious(snapshot: &MetricSnapshot, threshold_pbar: f64) -> bool {
    snapshot.mean_rate.is_some_and(|pbar| pbar < threshold_pbar)
}

/// Packet-rate variance below threshold: the send cadence is too steady.
pub fn prv_suspicious(snapshot: &MetricSnapshot, threshold_var: f64) -> bool {
    snapshot.rate_variance.is_some_and(|var| var < threshold_var)
}

/// Dispatch a snapshot to the configured scheme. Call
/// [`SchemeConfig::validate`] first; missing thresholds are treated as
/// "not suspicious" here.
pub fn is_suspicious(snapshot: &MetricSnapshot, cfg: &SchemeConfig) -> bool {
    match cfg.scheme {
        Scheme::Lc => cfg.thresholds.d.is_some_and(|t| lc_suspicious(snapshot, t)),
        Scheme::Lpr => cfg.thresholds.p.is_some_and(|t| lpr_suspicious(snapshot, t)),
        Scheme::Pdu => cfg.thresholds.delta.is_some_and(|t| pdu_suspicious(snapshot, t)),
        Scheme::LprPdu => match (cfg.thresholds.p, cfg.thresholds.delta) {
            (Some(p), Some(delta)) => lpr_pdu_suspicious(snapshot, p, delta),
            _ => false,
        },
        Scheme::Mpr => cfg.thresholds.pbar.is_some_and(|t| mpr_suspicious(snapshot, t)),
        Scheme::Prv => cfg.thresholds.var.is_some_and(|t| prv_suspicious(snapshot, t)),
    }
}

// ── strikes and classification ──────────────────────────────────────────────

/// Emitted once per client, the moment its strike count reaches the
/// configured requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassificationEvent {
    pub client_ip: Ipv4Addr,
    pub scheme: Scheme,
    /// Timestamp of the strike that crossed the requirement.
    pub detection_ts: Micros,
    /// Timestamp of the client's first metric-eligible packet.
    pub first_seen_ts: Micros,
}

impl ClassificationEvent {
    /// Seconds from the client's first eligible packet to classification.
    pub fn detection_time(&self) -> f64 {
        crate::trace_io::to_secs(self.detection_ts - self.first_seen_ts)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ClientRecord {
    strikes: u64,
    first_seen: Option<Micros>,
    classified_at: Option<Micros>,
}

/// Per-client strike counters, aggregated by IP address alone: strikes from
/// all of a client's connections pool together.
#[derive(Debug, Clone, Default)]
pub struct StrikeRegistry {
    clients: BTreeMap<Ipv4Addr, ClientRecord>,
}

impl StrikeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the client's first metric-eligible packet (detection times are
    /// measured from here).
    pub fn observe_first_seen(&mut self, client: Ipv4Addr, ts: Micros) {
        let rec = self.clients.entry(client).or_default();
        if rec.first_seen.is_none() {
            rec.first_seen = Some(ts);
        }
    }

    /// Apply the outcome of one snapshot evaluation. Returns the
    /// classification event if this strike crossed the requirement; already
    /// classified clients are left untouched.
    pub fn apply_strike(
        &mut self,
        client: Ipv4Addr,
        ts: Micros,
        suspicious: bool,
        cfg: &SchemeConfig,
    ) -> Option<ClassificationEvent> {
        if !suspicious {
            return None;
        }
        let rec = self.clients.entry(client).or_default();
        if rec.classified_at.is_some() {
            return None;
        }
        rec.strikes += 1;
        if rec.strikes >= cfg.strikes as u64 {
            rec.classified_at = Some(ts);
            Some(ClassificationEvent {
                client_ip: client,
                scheme: cfg.scheme,
                detection_ts: ts,
                first_seen_ts: rec.first_seen.unwrap_or(ts),
            })
        } else {
            None
        }
    }

    pub fn strikes(&self, client: Ipv4Addr) -> u64 {
        self.clients.get(&client).map_or(0, |r| r.strikes)
    }

    pub fn is_classified(&self, client: Ipv4Addr) -> bool {
        self.clients.get(&client).is_some_and(|r| r.classified_at.is_some())
    }

    pub fn classified_clients(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.clients.iter().filter(|(_, r)| r.classified_at.is_some()).map(|(ip, _)| *ip)
    }
}

// ── detection engine ────────────────────────────────────────────────────────

/// Streams packets through a [`FlowTable`], evaluates the configured scheme
/// on every metric snapshot, and accumulates strikes into classifications.
#[derive(Debug, Clone)]
pub struct DetectionEngine {
    cfg: SchemeConfig,
    flows: FlowTable,
    registry: StrikeRegistry,
    events: Vec<ClassificationEvent>,
}

impl DetectionEngine {
    pub fn new(cfg: SchemeConfig, target: Endpoint) -> Self {
        let policy = cfg.effective_policy();
        DetectionEngine {
            cfg,
            flows: FlowTable::new(target, policy),
            registry: StrikeRegistry::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// Process one packet; returns the classification event if this packet's
    /// strike crossed the client's requirement.
    pub fn process_packet(&mut self, pkt: &PacketRecord) -> Option<ClassificationEvent> {
        let snapshot = self.flows.ingest_packet(pkt)?;
        self.registry.observe_first_seen(snapshot.client_ip, snapshot.ts);
        let suspicious = is_suspicious(&snapshot, &self.cfg);
        let event = self.registry.apply_strike(snapshot.client_ip, snapshot.ts, suspicious, &self.cfg);
        if let Some(ev) = event {
            self.events.push(ev);
        }
        event
    }

    /// Run an idle sweep: every open connection contributes one duration-only
    /// snapshot (so at most one strike per connection per sweep). Only `lc`
    /// can fire on these.
    pub fn sweep(&mut self, now: Micros) -> Vec<ClassificationEvent> {
        let mut out = Vec::new();
        for snapshot in self.flows.sweep_idle(now) {
            let suspicious = is_suspicious(&snapshot, &self.cfg);
            if let Some(ev) =
                self.registry.apply_strike(snapshot.client_ip, snapshot.ts, suspicious, &self.cfg)
            {
                self.events.push(ev);
                out.push(ev);
            }
        }
        out
    }

    pub fn events(&self) -> &[ClassificationEvent] {
        &self.events
    }

    pub fn registry(&self) -> &StrikeRegistry {
        &self.registry
    }

    pub fn flows(&self) -> &FlowTable {
        &self.flows
    }

    /// Open connections belonging to one client (used by mitigation to tear
    /// down an attacker's sockets).
    pub fn open_connections_of(&self, client: Ipv4Addr) -> Vec<crate::flow_tracker::FlowKey> {
        self.flows
            .connections()
            .filter(|c| !c.closed && c.key.client_ip == client)
            .map(|c| c.key)
            .collect()
    }
}
