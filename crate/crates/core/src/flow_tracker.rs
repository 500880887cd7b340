//! Per-connection flow state and metric extraction.
//!
//! Every client→server packet that is *metric-eligible* under the active
//! handshake policy advances a connection's metrics:
//!
//! * `d`  — connection duration, `now − first_ts` in seconds
//! * `p`  — instantaneous packet rate, `pkt_count / d` (needs ≥ 2 packets)
//! * `Δ`  — absolute difference of the two most recent inter-packet gaps
//! * `p̄`  — running mean of the instantaneous rate samples
//! * `σ²` — running population variance of those samples
//!
//! With the handshake excluded, SYN segments and the first client pure-ACK
//! following the client's SYN (the segment completing the three-way
//! handshake) do not count; the connection clock starts at the first packet
//! that does. Server→client packets never feed rate or distance metrics —
//! they only extend the connection's observed lifetime.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::trace_io::{to_secs, Endpoint, LabeledTrace, Micros, PacketRecord, TcpFlags};

/// Whether handshake segments count toward the per-connection metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakePolicy {
    pub include_handshake: bool,
}

impl HandshakePolicy {
    pub fn include() -> Self {
        HandshakePolicy { include_handshake: true }
    }

    pub fn exclude() -> Self {
        HandshakePolicy { include_handshake: false }
    }
}

/// Connection identity: one TCP 4-tuple, oriented client → server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub client_ip: Ipv4Addr,
    pub client_port: u16,
    pub server_ip: Ipv4Addr,
    pub server_port: u16,
}

impl FlowKey {
    /// Resolve a packet to its connection key relative to `target`, with the
    /// non-target endpoint as the client. Returns `None` for packets that do
    /// not involve the target.
    pub fn of(pkt: &PacketRecord, target: Endpoint) -> Option<FlowKey> {
        if pkt.dst_ip == target.ip && pkt.dst_port == target.port {
            Some(FlowKey {
                client_ip: pkt.src_ip,
                client_port: pkt.src_port,
                server_ip: pkt.dst_ip,
                server_port: pkt.dst_port,
            })
        } else if pkt.src_ip == target.ip && pkt.src_port == target.port {
            Some(FlowKey {
                client_ip: pkt.dst_ip,
                client_port: pkt.dst_port,
                server_ip: pkt.src_ip,
                server_port: pkt.src_port,
            })
        } else {
            None
        }
    }
}

/// Where a connection stands in the three-way handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HandshakePhase {
    /// Nothing seen yet. A non-SYN first packet means the capture joined the
    /// connection mid-stream; it counts as established traffic.
    AwaitSyn,
    /// Client SYN seen; the next client pure-ACK completes the handshake.
    AwaitAck,
    Established,
}

/// Online mean/variance accumulator over rate samples (Welford's update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateStats {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl RateStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n >= 1).then_some(self.mean)
    }

    /// Population variance `M2 / n`; absent until two samples exist.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then_some(self.m2 / self.n as f64)
    }
}

/// Mutable per-connection tracking state.
#[derive(Debug, Clone)]
pub struct ConnectionState {
    pub key: FlowKey,
    phase: HandshakePhase,
    /// Timestamp of the first metric-eligible client packet.
    pub first_ts: Option<Micros>,
    /// Timestamp of the most recent packet in either direction.
    pub last_ts: Micros,
    /// Count of metric-eligible client→server packets.
    pub pkt_count: u64,
    /// Arrival time of the previous eligible packet (for gap computation).
    prev_arrival: Option<Micros>,
    /// Two most recent inter-packet gaps, in microseconds.
    prev_gap: Option<Micros>,
    last_gap: Option<Micros>,
    pub rates: RateStats,
    pub closed: bool,
    /// Time of the last idle sweep that visited this connection.
    pub last_swept: Option<Micros>,
}

impl ConnectionState {
    fn new(key: FlowKey, ts: Micros) -> Self {
        ConnectionState {
            key,
            phase: HandshakePhase::AwaitSyn,
            first_ts: None,
            last_ts: ts,
            pkt_count: 0,
            prev_arrival: None,
            prev_gap: None,
            last_gap: None,
            rates: RateStats::default(),
            closed: false,
            last_swept: None,
        }
    }

    /// The two most recent gaps in seconds, oldest first.
    pub fn recent_gaps(&self) -> (Option<f64>, Option<f64>) {
        (self.prev_gap.map(to_secs), self.last_gap.map(to_secs))
    }
}

/// Point-in-time metric values for one connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot {
    pub key: FlowKey,
    pub client_ip: Ipv4Addr,
    /// The arrival (or sweep) time this snapshot was taken at.
    pub ts: Micros,
    /// Connection duration `d` in seconds.
    pub duration: Option<f64>,
    /// Instantaneous packet rate `p` in Hz.
    pub rate: Option<f64>,
    /// Packet-distance difference `Δ` in seconds.
    pub delta: Option<f64>,
    /// Mean packet rate `p̄` in Hz.
    pub mean_rate: Option<f64>,
    /// Packet-rate variance `σ²` in Hz².
    pub rate_variance: Option<f64>,
    /// True when this snapshot came from an idle sweep rather than a packet
    /// arrival. Sweep snapshots carry only the duration.
    pub from_sweep: bool,
}

/// Full metrics for `state` as of `now`. Arrival-driven snapshots pass the
/// packet timestamp; sweeps pass the sweep time.
pub fn connection_metrics(state: &ConnectionState, now: Micros) -> MetricSnapshot {
    let duration = state.first_ts.map(|f| to_secs(now - f));
    let rate = match (state.first_ts, state.pkt_count) {
        (Some(first), n) if n >= 2 && now > first => Some(n as f64 / to_secs(now - first)),
        _ => None,
    };
    let delta = match (state.prev_gap, state.last_gap) {
        (Some(a), Some(b)) => Some(to_secs((b - a).abs())),
        _ => None,
    };
    MetricSnapshot {
        key: state.key,
        client_ip: state.key.client_ip,
        ts: now,
        duration,
        rate,
        delta,
        mean_rate: state.rates.mean(),
        rate_variance: state.rates.variance(),
        from_sweep: false,
    }
}

/// Tracks every connection of one trace against a single target endpoint.
#[derive(Debug, Clone)]
pub struct FlowTable {
    target: Endpoint,
    policy: HandshakePolicy,
    // Ordered map so sweeps and reports iterate deterministically.
    table: BTreeMap<FlowKey, ConnectionState>,
}

impl FlowTable {
    pub fn new(target: Endpoint, policy: HandshakePolicy) -> Self {
        FlowTable { target, policy, table: BTreeMap::new() }
    }

    pub fn target(&self) -> Endpoint {
        self.target
    }

    pub fn policy(&self) -> HandshakePolicy {
        self.policy
    }

    pub fn connections(&self) -> impl Iterator<Item = &ConnectionState> {
        self.table.values()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&ConnectionState> {
        self.table.get(key)
    }

    fn key_of(&self, pkt: &PacketRecord) -> Option<(FlowKey, bool)> {
        let key = FlowKey::of(pkt, self.target)?;
        let client_to_server = pkt.src_ip == key.client_ip && pkt.src_port == key.client_port;
        Some((key, client_to_server))
    }

    /// Feed one packet. Returns a metric snapshot when the packet was a
    /// metric-eligible client→server arrival; server packets and excluded
    /// handshake segments return `None`. Packets not involving the target are
    /// ignored (the loader filters them; this is a safety net).
    pub fn ingest_packet(&mut self, pkt: &PacketRecord) -> Option<MetricSnapshot> {
        let (key, client_to_server) = self.key_of(pkt)?;
        let state = self
            .table
            .entry(key)
            .or_insert_with(|| ConnectionState::new(key, pkt.ts));

        if state.closed {
            // A fresh SYN on a closed 4-tuple starts a new connection; other
            // traffic on a closed connection is ignored.
            if client_to_server && pkt.flags.contains(TcpFlags::SYN) {
                *state = ConnectionState::new(key, pkt.ts);
            } else {
                return None;
            }
        }

        state.last_ts = state.last_ts.max(pkt.ts);

        if !client_to_server {
            // Server packets extend the observed lifetime only. A server FIN
            // or RST still tears the connection down.
            if pkt.flags.intersects(TcpFlags::FIN | TcpFlags::RST) {
                state.closed = true;
            }
            return None;
        }

        if pkt.flags.contains(TcpFlags::RST) {
            state.closed = true;
            return None;
        }

        // Handshake bookkeeping and eligibility.
        let eligible = if pkt.flags.contains(TcpFlags::SYN) {
            state.phase = HandshakePhase::AwaitAck;
            self.policy.include_handshake
        } else {
            match state.phase {
                HandshakePhase::AwaitAck if pkt.is_pure_ack() => {
                    state.phase = HandshakePhase::Established;
                    self.policy.include_handshake
                }
                _ => {
                    state.phase = HandshakePhase::Established;
                    true
                }
            }
        };

        let closes = pkt.flags.contains(TcpFlags::FIN);
        if !eligible {
            if closes {
                state.closed = true;
            }
            return None;
        }

        state.pkt_count += 1;
        if state.first_ts.is_none() {
            state.first_ts = Some(pkt.ts);
        }
        if let Some(prev) = state.prev_arrival {
            let gap = pkt.ts - prev;
            state.prev_gap = state.last_gap;
            state.last_gap = Some(gap);
        }
        state.prev_arrival = Some(pkt.ts);

        // Push this arrival's rate sample first so the snapshot's mean and
        // variance already include it.
        if let Some(rate) = connection_metrics(state, pkt.ts).rate {
            state.rates.push(rate);
        }
        if closes {
            state.closed = true;
        }
        Some(connection_metrics(state, pkt.ts))
    }

    /// Duration-only snapshots for every open connection, used by sweeps that
    /// check connection lifetime between packet arrivals. The only state
    /// mutated is each connection's last-swept marker.
    pub fn sweep_idle(&mut self, now: Micros) -> Vec<MetricSnapshot> {
        let mut out = Vec::new();
        for state in self.table.values_mut() {
            if state.closed {
                continue;
            }
            if state.last_swept.is_some_and(|t| t >= now) {
                continue;
            }
            state.last_swept = Some(now);
            let Some(first) = state.first_ts else { continue };
            out.push(MetricSnapshot {
                key: state.key,
                client_ip: state.key.client_ip,
                ts: now,
                duration: Some(to_secs(now - first)),
                rate: None,
                delta: None,
                mean_rate: None,
                rate_variance: None,
                from_sweep: true,
            });
        }
        out
    }

    /// Feed an entire trace, returning every arrival-driven snapshot.
    pub fn ingest_trace(&mut self, trace: &LabeledTrace) -> Vec<MetricSnapshot> {
        trace.packets.iter().filter_map(|p| self.ingest_packet(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    const SEC: Micros = 1_000_000;

    fn target() -> Endpoint {
        Endpoint::new(Ipv4Addr::new(10, 0, 0, 1), 80)
    }

    fn client_pkt(ts: Micros, flags: TcpFlags, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: Ipv4Addr::new(192, 168, 0, 1),
            src_port: 40000,
            dst_ip: Ipv4Addr::new(10, 0, 0, 1),
            dst_port: 80,
            flags,
            payload_len: len,
        }
    }

    fn server_pkt(ts: Micros, flags: TcpFlags, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: Ipv4Addr::new(10, 0, 0, 1),
            src_port: 80,
            dst_ip: Ipv4Addr::new(192, 168, 0, 1),
            dst_port: 40000,
            flags,
            payload_len: len,
        }
    }

    fn data(ts: Micros) -> PacketRecord {
        client_pkt(ts, TcpFlags::ACK | TcpFlags::PSH, 10)
    }

    #[test]
    fn one_packet_has_duration_only() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0)).unwrap();
        let state = ft.connections().next().unwrap();
        let m = connection_metrics(state, 7 * SEC);
        assert_eq!(m.duration, Some(7.0));
        assert_eq!(m.rate, None);
        assert_eq!(m.delta, None);
        assert_eq!(m.mean_rate, None);
        assert_eq!(m.rate_variance, None);
    }

    #[test]
    fn two_packets_fifteen_seconds_apart() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        let m = ft.ingest_packet(&data(15 * SEC)).unwrap();
        assert_eq!(m.duration, Some(15.0));
        assert!((m.rate.unwrap() - 2.0 / 15.0).abs() < 1e-12);
        assert_eq!(m.delta, None, "Δ needs two gaps");
        assert!((m.mean_rate.unwrap() - 2.0 / 15.0).abs() < 1e-12);
        assert_eq!(m.rate_variance, None, "variance needs two samples");
    }

    #[test]
    fn three_packet_rate_statistics() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        ft.ingest_packet(&data(15 * SEC));
        let m = ft.ingest_packet(&data(30 * SEC)).unwrap();
        // Rate samples: 2/15 and 3/30.
        assert!((m.rate.unwrap() - 0.1).abs() < 1e-12);
        assert!((m.mean_rate.unwrap() - 7.0 / 60.0).abs() < 1e-12);
        assert!((m.rate_variance.unwrap() - 1.0 / 3600.0).abs() < 1e-12);
        assert_eq!(m.delta, Some(0.0));
    }

    #[test]
    fn gaps_and_delta_from_uneven_arrivals() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        ft.ingest_packet(&data(10 * SEC));
        let m = ft.ingest_packet(&data(25 * SEC)).unwrap();
        let state = ft.connections().next().unwrap();
        assert_eq!(state.recent_gaps(), (Some(10.0), Some(15.0)));
        assert_eq!(m.delta, Some(5.0));
    }

    #[test]
    fn handshake_exclusion_shifts_first_ts() {
        let syn = client_pkt(0, TcpFlags::SYN, 0);
        let ack = client_pkt(50_000, TcpFlags::ACK, 0);
        let d1 = data(100_000);
        let d2 = data(100_000 + 15 * SEC);

        let mut excl = FlowTable::new(target(), HandshakePolicy::exclude());
        assert!(excl.ingest_packet(&syn).is_none());
        assert!(excl.ingest_packet(&ack).is_none());
        excl.ingest_packet(&d1).unwrap();
        let m = excl.ingest_packet(&d2).unwrap();
        assert_eq!(excl.connections().next().unwrap().first_ts, Some(100_000));
        assert_eq!(m.duration, Some(15.0));
        assert!((m.rate.unwrap() - 2.0 / 15.0).abs() < 1e-12);

        let mut incl = FlowTable::new(target(), HandshakePolicy::include());
        incl.ingest_packet(&syn).unwrap();
        incl.ingest_packet(&ack).unwrap();
        incl.ingest_packet(&d1).unwrap();
        let m = incl.ingest_packet(&d2).unwrap();
        assert_eq!(incl.connections().next().unwrap().first_ts, Some(0));
        assert_eq!(m.duration, Some(15.1));
        assert!((m.rate.unwrap() - 4.0 / 15.1).abs() < 1e-12);
    }

    #[test]
    fn mid_stream_pure_ack_is_not_handshake() {
        // No SYN observed: a bare ACK is ordinary established traffic even
        // when the handshake is excluded.
        let mut ft = FlowTable::new(target(), HandshakePolicy::exclude());
        let m = ft.ingest_packet(&client_pkt(5 * SEC, TcpFlags::ACK, 0));
        assert!(m.is_some());
        assert_eq!(ft.connections().next().unwrap().pkt_count, 1);
    }

    #[test]
    fn only_first_pure_ack_after_syn_is_excluded() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::exclude());
        ft.ingest_packet(&client_pkt(0, TcpFlags::SYN, 0));
        assert!(ft.ingest_packet(&client_pkt(1000, TcpFlags::ACK, 0)).is_none());
        assert!(ft.ingest_packet(&client_pkt(2000, TcpFlags::ACK, 0)).is_some());
    }

    #[test]
    fn server_packets_extend_lifetime_but_not_metrics() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        assert!(ft.ingest_packet(&server_pkt(3 * SEC, TcpFlags::ACK, 500)).is_none());
        let state = ft.connections().next().unwrap();
        assert_eq!(state.pkt_count, 1);
        assert_eq!(state.last_ts, 3 * SEC);
    }

    #[test]
    fn fin_from_either_side_closes() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        ft.ingest_packet(&server_pkt(SEC, TcpFlags::FIN | TcpFlags::ACK, 0));
        assert!(ft.connections().next().unwrap().closed);
        // Closed connections stop producing metrics.
        assert!(ft.ingest_packet(&data(2 * SEC)).is_none());

        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        // The client FIN itself is still a metric-eligible arrival.
        assert!(ft.ingest_packet(&client_pkt(SEC, TcpFlags::FIN | TcpFlags::ACK, 0)).is_some());
        assert!(ft.connections().next().unwrap().closed);
    }

    #[test]
    fn rst_closes_without_counting() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        assert!(ft.ingest_packet(&client_pkt(SEC, TcpFlags::RST, 0)).is_none());
        let state = ft.connections().next().unwrap();
        assert!(state.closed);
        assert_eq!(state.pkt_count, 1);
    }

    #[test]
    fn syn_reopens_closed_tuple() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        ft.ingest_packet(&client_pkt(SEC, TcpFlags::RST, 0));
        assert!(ft.ingest_packet(&client_pkt(10 * SEC, TcpFlags::SYN, 0)).is_some());
        let state = ft.connections().next().unwrap();
        assert!(!state.closed);
        assert_eq!(state.pkt_count, 1);
        assert_eq!(state.first_ts, Some(10 * SEC));
    }

    #[test]
    fn sweep_skips_closed_and_marks_swept() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        for port in 0..4u16 {
            let mut p = data(0);
            p.src_port = 41000 + port;
            ft.ingest_packet(&p);
        }
        let mut fin = client_pkt(SEC, TcpFlags::FIN | TcpFlags::ACK, 0);
        fin.src_port = 41_003;
        ft.ingest_packet(&fin);

        let snaps = ft.sweep_idle(600 * SEC);
        assert_eq!(snaps.len(), 3, "closed connection is skipped");
        for s in &snaps {
            assert_eq!(s.duration, Some(600.0));
            assert!(s.from_sweep);
            assert_eq!(s.rate, None);
        }
        // A second sweep at the same instant is a no-op.
        assert!(ft.sweep_idle(600 * SEC).is_empty());
        assert_eq!(ft.sweep_idle(601 * SEC).len(), 3);
    }

    #[test]
    fn same_timestamp_packets_produce_no_rate_sample() {
        let mut ft = FlowTable::new(target(), HandshakePolicy::include());
        ft.ingest_packet(&data(0));
        let m = ft.ingest_packet(&data(0)).unwrap();
        assert_eq!(m.rate, None, "rate is undefined while d = 0");
        let state = ft.connections().next().unwrap();
        assert_eq!(state.pkt_count, 2);
        assert_eq!(state.rates.n, 0);
    }

    fn stream_of_gaps(gaps: &[Micros]) -> Vec<PacketRecord> {
        let mut ts = 0;
        let mut out = vec![data(0)];
        for g in gaps {
            ts += g;
            out.push(data(ts));
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Welford accumulator matches a two-pass recomputation of the same
        /// rate samples to 1e-9 relative error.
        #[test]
        fn prop_online_stats_match_two_pass(gaps in proptest::collection::vec(1i64..20_000_000i64, 1..60)) {
            let mut ft = FlowTable::new(target(), HandshakePolicy::include());
            for p in stream_of_gaps(&gaps) {
                ft.ingest_packet(&p);
            }
            let state = ft.connections().next().unwrap();

            // Two-pass oracle over the same instantaneous rate sequence.
            let mut ts = 0i64;
            let mut samples = Vec::new();
            for (i, g) in gaps.iter().enumerate() {
                ts += g;
                samples.push((i as f64 + 2.0) / to_secs(ts));
            }
            let mean: f64 = samples.iter().sum::<f64>() / samples.len() as f64;
            let var: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;

            let got_mean = state.rates.mean().unwrap();
            prop_assert!((got_mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            if samples.len() >= 2 {
                let got_var = state.rates.variance().unwrap();
                prop_assert!((got_var - var).abs() <= 1e-9 * var.abs().max(1.0));
            }
        }

        /// Δ is always non-negative, and rate-sample count stays below the
        /// packet count.
        #[test]
        fn prop_delta_nonnegative_and_sample_bound(gaps in proptest::collection::vec(0i64..30_000_000i64, 0..40)) {
            let mut ft = FlowTable::new(target(), HandshakePolicy::include());
            for p in stream_of_gaps(&gaps) {
                if let Some(m) = ft.ingest_packet(&p) {
                    if let Some(d) = m.delta {
                        prop_assert!(d >= 0.0);
                    }
                }
            }
            let state = ft.connections().next().unwrap();
            prop_assert!(state.rates.n <= state.pkt_count.saturating_sub(1));
        }

        /// Excluding the handshake never increases the eligible packet count.
        #[test]
        fn prop_handshake_policy_monotone(gaps in proptest::collection::vec(1i64..5_000_000i64, 1..30)) {
            let mut packets = vec![
                client_pkt(0, TcpFlags::SYN, 0),
                server_pkt(200, TcpFlags::SYN | TcpFlags::ACK, 0),
                client_pkt(400, TcpFlags::ACK, 0),
            ];
            let mut ts = 400;
            for g in &gaps {
                ts += g;
                packets.push(data(ts));
            }
            let mut with = FlowTable::new(target(), HandshakePolicy::include());
            let mut without = FlowTable::new(target(), HandshakePolicy::exclude());
            for p in &packets {
                with.ingest_packet(p);
                without.ingest_packet(p);
            }
            let n_with = with.connections().next().unwrap().pkt_count;
            let n_without = without.connections().next().unwrap().pkt_count;
            prop_assert!(n_without <= n_with);
            prop_assert_eq!(n_with - n_without, 2, "SYN and handshake ACK are the exact difference");
        }

        /// Per-flow state is independent of interleaving with other flows.
        #[test]
        fn prop_interleaving_independence(
            gaps_a in proptest::collection::vec(1i64..9_000_000i64, 1..25),
            gaps_b in proptest::collection::vec(1i64..9_000_000i64, 1..25),
        ) {
            let mk = |gaps: &[Micros], port: u16| -> Vec<PacketRecord> {
                let mut ts = 0;
                let mut out = Vec::new();
                for g in std::iter::once(&0).chain(gaps) {
                    ts += g;
                    let mut p = data(ts);
                    p.src_port = port;
                    out.push(p);
                }
                out
            };
            let a = mk(&gaps_a, 50_001);
            let b = mk(&gaps_b, 50_002);

            let mut merged: Vec<PacketRecord> = a.iter().chain(b.iter()).copied().collect();
            merged.sort_by_key(|p| p.ts);

            let mut together = FlowTable::new(target(), HandshakePolicy::include());
            for p in &merged { together.ingest_packet(p); }
            let mut alone = FlowTable::new(target(), HandshakePolicy::include());
            for p in &a { alone.ingest_packet(p); }

            let key = FlowKey {
                client_ip: Ipv4Addr::new(192, 168, 0, 1),
                client_port: 50_001,
                server_ip: Ipv4Addr::new(10, 0, 0, 1),
                server_port: 80,
            };
            let lhs = together.get(&key).unwrap();
            let rhs = alone.get(&key).unwrap();
            prop_assert_eq!(lhs.pkt_count, rhs.pkt_count);
            prop_assert_eq!(lhs.first_ts, rhs.first_ts);
            prop_assert_eq!(lhs.rates, rhs.rates);
            prop_assert_eq!(lhs.recent_gaps(), rhs.recent_gaps());
        }
    }
}
