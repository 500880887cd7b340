//! Discrete-event simulation of the detect → identify → mitigate pipeline:
//! a worker-pool server model, a reachability-probing controller, and
//! scheme-driven identification feeding block rules plus spoofed-RST
//! connection teardown.
//!
//! The server seats each connection in a worker slot on its first packet and
//! holds the slot until the connection completes (FIN), is torn down (RST,
//! trace-observed or injected), or times out. When the pool is full, new
//! connection attempts wait in a backlog queue — the model of a kernel SYN
//! backlog — and are seated in arrival order as slots free up. The server is
//! reachable exactly when a slot is free, so an exhausted pool reads as one
//! contiguous outage rather than flickering with every benign departure.
//!
//! The controller probes pool headroom on a fixed cadence. A failing probe
//! moves it from `Monitoring` into `Identifying`, which starts a fresh
//! detection engine over subsequent traffic; the first classification moves
//! it to `Mitigating`. Each classified client is immediately blocked (its
//! later packets never reach the server) and every open connection of that
//! client is torn down with an injected RST, releasing slots instantly. At a
//! probe where the server is reachable again and no classified client is
//! left unblocked, the controller returns to `Monitoring` and discards the
//! episode's engine. Blocks are permanent for the run.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_tracker::FlowKey;
use crate::schemes::{ClassificationEvent, DetectionEngine, SchemeConfig};
use crate::trace_io::{to_micros, to_secs, LabeledTrace, Micros, PacketRecord, TcpFlags};

// ── configuration ───────────────────────────────────────────────────────────

fn default_pool_size() -> usize {
    150
}

fn default_request_timeout() -> f64 {
    300.0
}

fn default_probe_interval() -> f64 {
    1.0
}

/// Worker-pool server parameters. Defaults mirror a stock prefork web server:
/// 150 workers, 300 s request timeout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_s: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { pool_size: default_pool_size(), request_timeout_s: default_request_timeout() }
    }
}

/// Controller parameters: probe cadence, optional idle-sweep cadence for the
/// embedded engine, and the scheme configuration it runs while identifying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    #[serde(default = "default_probe_interval")]
    pub probe_interval_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_interval_s: Option<f64>,
    pub scheme: SchemeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub server: ServerConfig,
    pub controller: ControllerConfig,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        self.controller.scheme.validate()?;
        if self.server.pool_size == 0 {
            return Err(Error::InvalidConfig("pool_size must be at least 1".into()));
        }
        if !(self.server.request_timeout_s.is_finite() && self.server.request_timeout_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "request_timeout must be positive, got {}",
                self.server.request_timeout_s
            )));
        }
        if !(self.controller.probe_interval_s.is_finite() && self.controller.probe_interval_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "probe_interval must be positive, got {}",
                self.controller.probe_interval_s
            )));
        }
        if let Some(s) = self.controller.sweep_interval_s {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("sweep_interval must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Monitoring,
    Identifying,
    Mitigating,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Monitoring => "monitoring",
            Phase::Identifying => "identifying",
            Phase::Mitigating => "mitigating",
        })
    }
}

// ── report ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Phase { from: Phase, to: Phase },
    Block { ip: Ipv4Addr },
    Rst { ip: Ipv4Addr, port: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub t_s: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub pool_size: usize,
    pub probe_interval_s: f64,
    /// Cumulative seconds with zero pool headroom.
    pub downtime_s: f64,
    pub first_unreachable_s: Option<f64>,
    /// Last transition back to a reachable server, if any outage ended.
    pub reachability_restored_s: Option<f64>,
    /// Last block installed, measured from the first unreachable instant.
    pub time_to_last_block_s: Option<f64>,
    pub blocked_total: usize,
    pub blocked_benign: usize,
    pub blocked_clients: Vec<Ipv4Addr>,
    pub final_phase: Phase,
    pub actions: Vec<ActionRecord>,
}

// ── server model ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConnState {
    Seated,
    Pending,
    Closed,
}

struct ServerModel {
    pool_size: usize,
    timeout: Micros,
    /// Seated connection → seat timestamp (timeout runs from here).
    seated: BTreeMap<FlowKey, Micros>,
    /// Arrival-ordered backlog of connections waiting for a slot. Entries
    /// whose state has moved on are skipped lazily on pop.
    backlog: VecDeque<FlowKey>,
    conns: BTreeMap<FlowKey, ConnState>,
    acquired: u64,
    released: u64,
    // Outage accounting.
    unreachable_since: Option<Micros>,
    downtime: Micros,
    first_unreachable: Option<Micros>,
    last_restored: Option<Micros>,
}

impl ServerModel {
    fn new(cfg: &ServerConfig) -> Self {
        ServerModel {
            pool_size: cfg.pool_size,
            timeout: to_micros(cfg.request_timeout_s),
            seated: BTreeMap::new(),
            backlog: VecDeque::new(),
            conns: BTreeMap::new(),
            acquired: 0,
            released: 0,
            unreachable_since: None,
            downtime: 0,
            first_unreachable: None,
            last_restored: None,
        }
    }

    fn reachable(&self) -> bool {
        self.seated.len() < self.pool_size
    }

    /// Reconcile the outage clock with the current pool state; call after
    /// every batch of same-timestamp mutations so that a release immediately
    /// backfilled from the backlog never reads as a restoration.
    fn note_reachability(&mut self, now: Micros) {
        debug_assert!(self.seated.len() <= self.pool_size);
        if self.reachable() {
            if let Some(since) = self.unreachable_since.take() {
                self.downtime += now - since;
                self.last_restored = Some(now);
            }
        } else if self.unreachable_since.is_none() {
            self.unreachable_since = Some(now);
            self.first_unreachable.get_or_insert(now);
        }
    }

    fn seat(&mut self, key: FlowKey, now: Micros) {
        self.seated.insert(key, now);
        self.conns.insert(key, ConnState::Seated);
        self.acquired += 1;
    }

    fn backfill(&mut self, now: Micros) {
        while self.seated.len() < self.pool_size {
            let Some(key) = self.backlog.pop_front() else { break };
            if self.conns.get(&key) == Some(&ConnState::Pending) {
                self.seat(key, now);
            }
        }
    }

    /// Release every seated connection whose timeout has elapsed by `now`,
    /// accounting each at its own deadline (and backfilling there) so outage
    /// bookkeeping stays exact between packets.
    fn expire_due(&mut self, now: Micros) {
        loop {
            let due = self
                .seated
                .iter()
                .map(|(k, seated_at)| (seated_at + self.timeout, *k))
                .filter(|(deadline, _)| *deadline <= now)
                .min();
            let Some((deadline, key)) = due else { break };
            self.seated.remove(&key);
            self.conns.insert(key, ConnState::Closed);
            self.released += 1;
            self.backfill(deadline);
            self.note_reachability(deadline);
        }
    }

    /// First packet of a connection requests a slot; FIN or RST ends it.
    fn observe(&mut self, key: FlowKey, flags: TcpFlags, now: Micros) {
        if flags.intersects(TcpFlags::FIN | TcpFlags::RST) {
            self.close(key, now);
            return;
        }
        match self.conns.get(&key) {
            Some(ConnState::Seated) | Some(ConnState::Pending) => {}
            Some(ConnState::Closed) if !flags.contains(TcpFlags::SYN) => {}
            _ => {
                if self.seated.len() < self.pool_size {
                    self.seat(key, now);
                } else {
                    self.conns.insert(key, ConnState::Pending);
                    self.backlog.push_back(key);
                }
                self.note_reachability(now);
            }
        }
    }

    fn close(&mut self, key: FlowKey, now: Micros) {
        match self.conns.get(&key) {
            Some(ConnState::Seated) => {
                self.seated.remove(&key);
                self.released += 1;
                self.conns.insert(key, ConnState::Closed);
                self.backfill(now);
                self.note_reachability(now);
            }
            Some(ConnState::Pending) => {
                // Lazy backlog removal: flipping the state makes the queued
                // entry a no-op on pop.
                self.conns.insert(key, ConnState::Closed);
            }
            _ => {
                self.conns.insert(key, ConnState::Closed);
            }
        }
    }

    /// Tear down every open (seated or backlogged) connection of `client`,
    /// returning the torn keys for the action log.
    fn teardown_client(&mut self, client: Ipv4Addr, now: Micros) -> Vec<FlowKey> {
        let keys: Vec<FlowKey> = self
            .conns
            .iter()
            .filter(|(k, state)| k.client_ip == client && **state != ConnState::Closed)
            .map(|(k, _)| *k)
            .collect();
        for key in &keys {
            self.close(*key, now);
        }
        keys
    }

    fn flush(&mut self, end: Micros) {
        if let Some(since) = self.unreachable_since.take() {
            self.downtime += end - since;
            // Not a restoration: the trace simply ended mid-outage.
            self.unreachable_since = Some(since);
        }
    }
}

// ── pipeline ────────────────────────────────────────────────────────────────

struct Sim<'a> {
    trace: &'a LabeledTrace,
    cfg: &'a SimConfig,
    server: ServerModel,
    phase: Phase,
    engine: Option<DetectionEngine>,
    blocked: BTreeSet<Ipv4Addr>,
    actions: Vec<ActionRecord>,
    probe_step: Micros,
    next_probe: Micros,
    sweep_step: Option<Micros>,
    next_sweep: Option<Micros>,
    last_block: Option<Micros>,
}

impl<'a> Sim<'a> {
    fn log(&mut self, now: Micros, action: Action) {
        self.actions.push(ActionRecord { t_s: to_secs(now), action });
    }

    fn set_phase(&mut self, now: Micros, to: Phase) {
        let from = self.phase;
        if from != to {
            self.phase = to;
            self.log(now, Action::Phase { from, to });
        }
    }

    /// Run probe and sweep timers due up to and including `upto` (timers fire
    /// before packets sharing their timestamp; probe wins a probe/sweep tie).
    fn timers_until(&mut self, upto: Micros) {
        loop {
            let probe_due = (self.next_probe <= upto).then_some(self.next_probe);
            let sweep_due = match (self.engine.is_some(), self.next_sweep) {
                (true, Some(t)) if t <= upto => Some(t),
                _ => None,
            };
            match (probe_due, sweep_due) {
                (Some(p), Some(s)) if s < p => self.fire_sweep(s),
                (Some(p), _) => self.fire_probe(p),
                (None, Some(s)) => self.fire_sweep(s),
                (None, None) => break,
            }
        }
    }

    fn fire_probe(&mut self, now: Micros) {
        self.next_probe = now + self.probe_step;
        self.server.expire_due(now);
        let reachable = self.server.reachable();
        match self.phase {
            Phase::Monitoring => {
                if !reachable {
                    self.set_phase(now, Phase::Identifying);
                    self.engine =
                        Some(DetectionEngine::new(self.cfg.controller.scheme.clone(), self.trace.target));
                    self.next_sweep = self.sweep_step.map(|s| now + s);
                }
            }
            Phase::Identifying | Phase::Mitigating => {
                // Return to monitoring once service is restored and the
                // identification stage has nothing left to act on.
                let debt = self
                    .engine
                    .as_ref()
                    .map(|e| e.registry().classified_clients().any(|ip| !self.blocked.contains(&ip)))
                    .unwrap_or(false);
                if reachable && !debt {
                    self.set_phase(now, Phase::Monitoring);
                    self.engine = None;
                    self.next_sweep = None;
                }
            }
        }
    }

    fn fire_sweep(&mut self, now: Micros) {
        self.next_sweep = Some(now + self.sweep_step.expect("sweep timer without step"));
        self.server.expire_due(now);
        if let Some(engine) = self.engine.as_mut() {
            let events = engine.sweep(now);
            for ev in events {
                self.mitigate(ev, now);
            }
        }
    }

    fn mitigate(&mut self, ev: ClassificationEvent, now: Micros) {
        if !self.blocked.insert(ev.client_ip) {
            return;
        }
        if self.phase == Phase::Identifying {
            self.set_phase(now, Phase::Mitigating);
        }
        self.log(now, Action::Block { ip: ev.client_ip });
        self.last_block = Some(now);
        for key in self.server.teardown_client(ev.client_ip, now) {
            self.log(now, Action::Rst { ip: key.client_ip, port: key.client_port });
        }
    }

    fn handle_packet(&mut self, pkt: &PacketRecord) {
        let Some(client) = self.trace.client_of(pkt) else { return };
        if self.blocked.contains(&client) {
            return;
        }
        self.server.expire_due(pkt.ts);

        if let Some(engine) = self.engine.as_mut() {
            if let Some(ev) = engine.process_packet(pkt) {
                self.mitigate(ev, pkt.ts);
            }
        }

        let key = FlowKey::of(pkt, self.trace.target).expect("client_of implies a target packet");
        self.server.observe(key, pkt.flags, pkt.ts);
    }

    fn run(mut self) -> SimulationReport {
        for pkt in &self.trace.packets {
            self.timers_until(pkt.ts);
            self.handle_packet(pkt);
        }
        let end = self.trace.end_ts();
        self.timers_until(end);
        self.server.expire_due(end);
        self.server.flush(end);
        debug_assert_eq!(
            self.server.acquired - self.server.released,
            self.server.seated.len() as u64,
            "slot conservation"
        );

        let blocked_clients: Vec<Ipv4Addr> = self.blocked.iter().copied().collect();
        let blocked_benign =
            blocked_clients.iter().filter(|ip| !self.trace.attacker_ips.contains(ip)).count();
        SimulationReport {
            pool_size: self.server.pool_size,
            probe_interval_s: to_secs(self.probe_step),
            downtime_s: to_secs(self.server.downtime),
            first_unreachable_s: self.server.first_unreachable.map(to_secs),
            reachability_restored_s: self.server.last_restored.map(to_secs),
            time_to_last_block_s: match (self.last_block, self.server.first_unreachable) {
                (Some(b), Some(f)) => Some(to_secs(b - f)),
                _ => None,
            },
            blocked_total: blocked_clients.len(),
            blocked_benign,
            blocked_clients,
            final_phase: self.phase,
            actions: self.actions,
        }
    }
}

/// Replay a labeled trace through the controller + server models.
pub fn run_pipeline(trace: &LabeledTrace, cfg: &SimConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let start = trace.start_ts();
    let probe_step = to_micros(cfg.controller.probe_interval_s);
    let sim = Sim {
        trace,
        cfg,
        server: ServerModel::new(&cfg.server),
        phase: Phase::Monitoring,
        engine: None,
        blocked: BTreeSet::new(),
        actions: Vec::new(),
        probe_step,
        next_probe: start + probe_step,
        sweep_step: cfg.controller.sweep_interval_s.map(to_micros),
        next_sweep: None,
        last_block: None,
    };
    Ok(sim.run())
}
