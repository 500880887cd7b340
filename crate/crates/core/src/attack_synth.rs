//! Synthetic traffic generation: three slow-rate attack tools, a benign
//! web-browsing workload, and trace merging.
//!
//! All generators are deterministic in their seed. Clients draw addresses
//! sequentially from a configurable block — by convention attackers live in
//! 128.10.0.0/16 and benign clients in 192.168.0.0/16 — and every synthesized
//! connection opens with a normal three-way handshake (SYN, SYN-ACK 200 µs
//! later, final ACK at 400 µs).
//!
//! The three attack shapes:
//!
//! * **slowloris** — one connection per socket, an initial request line,
//!   then a small header fragment at an exact fixed interval, forever.
//! * **slowhttptest** — a complete POST head declaring a large
//!   `Content-Length`, then tiny body chunks at a fixed interval until the
//!   declared body is exhausted (at which point the connection finishes).
//! * **slowloris-ng** — keep-alive header lines sent as bursts of
//!   one-character packets 1 ms apart, with the interval between bursts
//!   jittered uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::{
    to_micros, Cidr, Endpoint, LabeledTrace, Micros, PacketRecord, TcpFlags,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackTool {
    Slowloris,
    Slowhttptest,
    SlowlorisNg,
}

impl AttackTool {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackTool::Slowloris => "slowloris",
            AttackTool::Slowhttptest => "slowhttptest",
            AttackTool::SlowlorisNg => "slowloris-ng",
        }
    }
}

impl std::fmt::Display for AttackTool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttackTool {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "slowloris" => Ok(AttackTool::Slowloris),
            "slowhttptest" => Ok(AttackTool::Slowhttptest),
            "slowloris-ng" | "slowloris_ng" => Ok(AttackTool::SlowlorisNg),
            other => Err(format!("unknown tool {other:?}")),
        }
    }
}

/// Parameters for one synthesized attack trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackProfile {
    pub tool: AttackTool,
    pub clients: u32,
    pub sockets_per_client: u32,
    /// Seconds between keep-alive sends (slowloris, slowloris-ng) or body
    /// chunks (slowhttptest).
    pub interval_s: f64,
    /// Uniform jitter half-width applied to the interval (slowloris-ng).
    pub jitter_s: f64,
    /// Declared POST body size (slowhttptest).
    pub content_length: u32,
    /// Bytes per body chunk (slowhttptest).
    pub body_chunk: u32,
    /// Send each header-line character as its own packet (slowloris-ng).
    pub burst_per_char: bool,
    pub attacker_block: Cidr,
    pub target: Endpoint,
    pub start_ts_s: f64,
    pub duration_s: f64,
    pub rng_seed: u64,
}

impl Default for AttackProfile {
    fn default() -> Self {
        AttackProfile::slowloris()
    }
}

impl AttackProfile {
    pub fn slowloris() -> Self {
        AttackProfile {
            tool: AttackTool::Slowloris,
            clients: 50,
            sockets_per_client: 1,
            interval_s: 15.0,
            jitter_s: 0.0,
            content_length: 8192,
            body_chunk: 10,
            burst_per_char: false,
            attacker_block: Cidr::new([128, 10, 0, 0].into(), 16).unwrap(),
            target: Endpoint::new([10, 0, 0, 1].into(), 80),
            start_ts_s: 0.0,
            duration_s: 600.0,
            rng_seed: 1,
        }
    }

    pub fn slowhttptest() -> Self {
        AttackProfile {
            tool: AttackTool::Slowhttptest,
            interval_s: 30.0,
            ..AttackProfile::slowloris()
        }
    }

    pub fn slowloris_ng() -> Self {
        AttackProfile {
            tool: AttackTool::SlowlorisNg,
            jitter_s: 5.0,
            burst_per_char: true,
            ..AttackProfile::slowloris()
        }
    }

    pub fn for_tool(tool: AttackTool) -> Self {
        match tool {
            AttackTool::Slowloris => AttackProfile::slowloris(),
            AttackTool::Slowhttptest => AttackProfile::slowhttptest(),
            AttackTool::SlowlorisNg => AttackProfile::slowloris_ng(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Synth("clients must be at least 1".into()));
        }
        if self.sockets_per_client == 0 {
            return Err(Error::Synth("sockets_per_client must be at least 1".into()));
        }
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            return Err(Error::Synth(format!("interval must be positive, got {}", self.interval_s)));
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0 && self.jitter_s < self.interval_s) {
            return Err(Error::Synth(format!(
                "jitter must lie in [0, interval), got {} against interval {}",
                self.jitter_s, self.interval_s
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(Error::Synth(format!("duration must be non-negative, got {}", self.duration_s)));
        }
        if self.tool == AttackTool::Slowhttptest && (self.content_length == 0 || self.body_chunk == 0) {
            return Err(Error::Synth("content_length and body_chunk must be positive".into()));
        }
        // Host indices start at .1, and the all-ones address is reserved.
        if u64::from(self.clients) > self.attacker_block.capacity().saturating_sub(2) {
            return Err(Error::Synth(format!(
                "{} clients exceed the {} block's capacity",
                self.clients, self.attacker_block
            )));
        }
        if self.attacker_block.contains(self.target.ip) {
            return Err(Error::Synth(format!(
                "target {} collides with the attacker block {}",
                self.target, self.attacker_block
            )));
        }
        Ok(())
    }
}

/// Collects packets for one synthesized trace.
struct TraceBuilder {
    trace: LabeledTrace,
}

impl TraceBuilder {
    fn new(target: Endpoint) -> Self {
        TraceBuilder { trace: LabeledTrace::new(target) }
    }

    fn client_pkt(&mut self, ts: Micros, client: std::net::Ipv4Addr, port: u16, flags: TcpFlags, len: u32) {
        self.trace.packets.push(PacketRecord {
            ts,
            src_ip: client,
            src_port: port,
            dst_ip: self.trace.target.ip,
            dst_port: self.trace.target.port,
            flags,
            payload_len: len,
        });
    }

    fn server_pkt(&mut self, ts: Micros, client: std::net::Ipv4Addr, port: u16, flags: TcpFlags, len: u32) {
        self.trace.packets.push(PacketRecord {
            ts,
            src_ip: self.trace.target.ip,
            src_port: self.trace.target.port,
            dst_ip: client,
            dst_port: port,
            flags,
            payload_len: len,
        });
    }

    /// Standard three-way handshake starting at `ts`; returns the timestamp
    /// of the client's final ACK.
    fn handshake(&mut self, ts: Micros, client: std::net::Ipv4Addr, port: u16) -> Micros {
        self.client_pkt(ts, client, port, TcpFlags::SYN, 0);
        self.server_pkt(ts + 200, client, port, TcpFlags::SYN | TcpFlags::ACK, 0);
        self.client_pkt(ts + 400, client, port, TcpFlags::ACK, 0);
        ts + 400
    }

    fn finish(mut self, tool: Option<String>, attacker_block: Option<Cidr>) -> LabeledTrace {
        self.trace.tool = tool;
        if let Some(block) = attacker_block {
            crate::trace_io::label_from_blocks(&mut self.trace, block);
        }
        self.trace.sort_packets();
        self.trace
    }
}

fn client_rng(seed: u64, client_index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ u64::from(client_index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Synthesize an attack trace per the profile's tool.
pub fn synthesize(profile: &AttackProfile) -> Result<LabeledTrace> {
    profile.validate()?;
    match profile.tool {
        AttackTool::Slowloris => synth_slowloris(profile),
        AttackTool::Slowhttptest => synth_slowhttptest(profile),
        AttackTool::SlowlorisNg => synth_slowloris_ng(profile),
    }
}

fn client_addr(profile: &AttackProfile, index: u32) -> std::net::Ipv4Addr {
    // .0 is the network address; hosts start at .1.
    profile.attacker_block.host(u64::from(index) + 1).expect("validated capacity")
}

fn socket_port(socket: u32) -> u16 {
    40_000 + socket as u16
}

/// Per-client start stagger: 1 ms between clients, 250 µs between sockets.
fn socket_start(profile: &AttackProfile, client: u32, socket: u32) -> Micros {
    to_micros(profile.start_ts_s) + i64::from(client) * 1_000 + i64::from(socket) * 250
}

/// slowloris: initial request line, then one small header fragment at an
/// exact fixed interval until the configured duration ends. The connection
/// deliberately never completes, so no FIN is ever sent.
fn synth_slowloris(profile: &AttackProfile) -> Result<LabeledTrace> {
    let mut b = TraceBuilder::new(profile.target);
    let end = to_micros(profile.start_ts_s + profile.duration_s);
    let interval = to_micros(profile.interval_s);
    for c in 0..profile.clients {
        let mut rng = client_rng(profile.rng_seed, c);
        let ip = client_addr(profile, c);
        for s in 0..profile.sockets_per_client {
            let port = socket_port(s);
            let syn_ts = socket_start(profile, c, s);
            if syn_ts > end {
                continue;
            }
            let est = b.handshake(syn_ts, ip, port);
            let line_ts = est + 600;
            if line_ts > end {
                continue;
            }
            b.client_pkt(line_ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, 32);
            let mut k = 1;
            loop {
                let ts = line_ts + k * interval;
                if ts > end {
                    break;
                }
                let len = rng.gen_range(8..=16);
                b.client_pkt(ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, len);
                k += 1;
            }
        }
    }
    Ok(b.finish(Some(profile.tool.to_string()), Some(profile.attacker_block)))
}

/// slowhttptest: a complete POST head declaring `content_length`, then
/// `body_chunk`-byte body packets at the fixed interval. The connection
/// finishes (FIN) once the declared body has been delivered; otherwise it is
/// cut off by the trace duration.
fn synth_slowhttptest(profile: &AttackProfile) -> Result<LabeledTrace> {
    let mut b = TraceBuilder::new(profile.target);
    let end = to_micros(profile.start_ts_s + profile.duration_s);
    let interval = to_micros(profile.interval_s);
    let total_chunks = u64::from(profile.content_length).div_ceil(u64::from(profile.body_chunk));
    let last_chunk_len = profile.content_length - (total_chunks as u32 - 1) * profile.body_chunk;

    for c in 0..profile.clients {
        let ip = client_addr(profile, c);
        for s in 0..profile.sockets_per_client {
            let port = socket_port(s);
            let syn_ts = socket_start(profile, c, s);
            if syn_ts > end {
                continue;
            }
            let est = b.handshake(syn_ts, ip, port);
            let head_ts = est + 600;
            if head_ts > end {
                continue;
            }
            b.client_pkt(head_ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, 160);
            let mut sent = 0u64;
            loop {
                let ts = head_ts + (sent as i64 + 1) * interval;
                if ts > end || sent == total_chunks {
                    break;
                }
                sent += 1;
                let len = if sent == total_chunks { last_chunk_len } else { profile.body_chunk };
                b.client_pkt(ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, len);
            }
            if sent == total_chunks {
                let fin_ts = head_ts + (sent as i64) * interval + 1_000;
                if fin_ts <= end {
                    b.client_pkt(fin_ts, ip, port, TcpFlags::FIN | TcpFlags::ACK, 0);
                }
            }
        }
    }
    Ok(b.finish(Some(profile.tool.to_string()), Some(profile.attacker_block)))
}

/// slowloris-ng: keep-alive header lines sent as bursts of one-character
/// packets 1 ms apart; burst start times are `interval ± jitter` apart
/// (uniform, microsecond resolution). With `burst_per_char` off each line is
/// a single packet, like plain slowloris with a jittered clock.
fn synth_slowloris_ng(profile: &AttackProfile) -> Result<LabeledTrace> {
    let mut b = TraceBuilder::new(profile.target);
    let end = to_micros(profile.start_ts_s + profile.duration_s);
    let interval = to_micros(profile.interval_s);
    let jitter = to_micros(profile.jitter_s);

    for c in 0..profile.clients {
        let mut rng = client_rng(profile.rng_seed, c);
        let ip = client_addr(profile, c);
        for s in 0..profile.sockets_per_client {
            let port = socket_port(s);
            let syn_ts = socket_start(profile, c, s);
            if syn_ts > end {
                continue;
            }
            let est = b.handshake(syn_ts, ip, port);
            let line_ts = est + 600;
            if line_ts > end {
                continue;
            }
            b.client_pkt(line_ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, 32);
            let mut burst_ts = line_ts;
            loop {
                let spread = if jitter > 0 { rng.gen_range(-jitter..=jitter) } else { 0 };
                burst_ts += interval + spread;
                if burst_ts > end {
                    break;
                }
                // A keep-alive line in the "X-abcd: 1234" shape, 12-16
                // characters.
                let line_len: u32 = rng.gen_range(12..=16);
                if profile.burst_per_char {
                    for i in 0..line_len {
                        b.client_pkt(burst_ts + i64::from(i) * 1_000, ip, port, TcpFlags::ACK | TcpFlags::PSH, 1);
                    }
                } else {
                    b.client_pkt(burst_ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, line_len);
                }
            }
        }
    }
    Ok(b.finish(Some(profile.tool.to_string()), Some(profile.attacker_block)))
}

// ── benign workload ─────────────────────────────────────────────────────────

/// Parameters for the synthetic benign browsing workload: short-lived
/// request/response connections with Poisson-like (exponential) request
/// spacing. A small share of clients browse slowly, which keeps the workload
/// from being trivially separable from attack traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenignProfile {
    pub clients: u32,
    pub client_block: Cidr,
    pub target: Endpoint,
    pub start_ts_s: f64,
    pub duration_s: f64,
    pub rng_seed: u64,
}

impl Default for BenignProfile {
    fn default() -> Self {
        BenignProfile {
            clients: 500,
            client_block: Cidr::new([192, 168, 0, 0].into(), 16).unwrap(),
            target: Endpoint::new([10, 0, 0, 1].into(), 80),
            start_ts_s: 0.0,
            duration_s: 600.0,
            rng_seed: 1,
        }
    }
}

impl BenignProfile {
    fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Synth("clients must be at least 1".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Synth(format!("duration must be positive, got {}", self.duration_s)));
        }
        if u64::from(self.clients) > self.client_block.capacity().saturating_sub(2) {
            return Err(Error::Synth(format!(
                "{} clients exceed the {} block's capacity",
                self.clients, self.client_block
            )));
        }
        if self.client_block.contains(self.target.ip) {
            return Err(Error::Synth(format!(
                "target {} collides with the client block {}",
                self.target, self.client_block
            )));
        }
        Ok(())
    }
}

/// Exponential sample by inverse transform (keeps the dependency surface to
/// plain uniform draws).
fn exp_sample(rng: &mut ChaCha8Rng, mean_s: f64) -> f64 {
    let u: f64 = rng.gen_range(1e-12..1.0f64);
    -mean_s * u.ln()
}

/// Truncated exponential: redraw until the sample lands strictly inside the
/// window. Clamping instead would pile samples onto the bounds and give a
/// real browser's timing a scripted-looking signature (repeated identical
/// gaps), which the uniformity metric would rightly flag.
fn exp_sample_in(rng: &mut ChaCha8Rng, mean_s: f64, window: (f64, f64)) -> f64 {
    for _ in 0..64 {
        let v = exp_sample(rng, mean_s);
        if v > window.0 && v < window.1 {
            return v;
        }
    }
    rng.gen_range(window.0..window.1)
}

/// Browsing speed classes: most clients are quick, a few think between
/// requests, and a handful trickle.
#[derive(Clone, Copy)]
enum Pace {
    Fast,
    Medium,
    Slow,
}

impl Pace {
    fn roll(rng: &mut ChaCha8Rng) -> Pace {
        let r: f64 = rng.gen_range(0.0..1.0);
        if r < 0.80 {
            Pace::Fast
        } else if r < 0.95 {
            Pace::Medium
        } else {
            Pace::Slow
        }
    }

    /// (request count range, gap mean seconds, gap window seconds)
    fn shape(&self) -> (std::ops::RangeInclusive<u32>, f64, (f64, f64)) {
        match self {
            Pace::Fast => (4..=10, 0.25, (0.02, 2.0)),
            Pace::Medium => (3..=6, 2.0, (0.8, 5.0)),
            Pace::Slow => (2..=4, 10.0, (5.0, 18.0)),
        }
    }
}

/// Synthesize the benign workload. The returned trace has an empty attacker
/// set.
pub fn synth_benign(profile: &BenignProfile) -> Result<LabeledTrace> {
    profile.validate()?;
    let mut b = TraceBuilder::new(profile.target);
    let start = to_micros(profile.start_ts_s);
    let end = to_micros(profile.start_ts_s + profile.duration_s);

    for c in 0..profile.clients {
        let mut rng = client_rng(profile.rng_seed, c);
        let ip = profile.client_block.host(u64::from(c) + 1).expect("validated capacity");
        let pace = Pace::roll(&mut rng);
        let (req_range, gap_mean, gap_window) = pace.shape();

        let conns = match pace {
            Pace::Slow => 1,
            _ => rng.gen_range(1..=2),
        };
        // Leave room for the slowest connection shape to finish.
        let window = (profile.duration_s - 80.0).max(1.0);
        let mut conn_start = start + to_micros(rng.gen_range(0.0..window));
        for conn in 0..conns {
            if conn_start >= end {
                break;
            }
            let port = 20_000 + conn as u16;
            let est = b.handshake(conn_start, ip, port);
            let n_req = rng.gen_range(req_range.clone());
            let mut ts = est + rng.gen_range(500..5_000);
            let mut last_data = ts;
            for r in 0..n_req {
                if ts > end {
                    break;
                }
                b.client_pkt(ts, ip, port, TcpFlags::ACK | TcpFlags::PSH, rng.gen_range(60..900));
                b.server_pkt(ts + 25_000, ip, port, TcpFlags::ACK | TcpFlags::PSH, rng.gen_range(200..1400));
                last_data = ts;
                if r + 1 < n_req {
                    let gap = exp_sample_in(&mut rng, gap_mean, gap_window);
                    ts += to_micros(gap);
                }
            }
            let fin_ts = last_data + 300_000;
            if fin_ts <= end {
                b.client_pkt(fin_ts, ip, port, TcpFlags::FIN | TcpFlags::ACK, 0);
                b.server_pkt(fin_ts + 20_000, ip, port, TcpFlags::FIN | TcpFlags::ACK, 0);
            }
            conn_start = fin_ts + to_micros(exp_sample_in(&mut rng, 40.0, (5.0, 120.0)));
        }
    }
    Ok(b.finish(None, None))
}

// ── merging ─────────────────────────────────────────────────────────────────

/// Overlay an attack trace onto a benign trace, shifting the attack by
/// `offset_s`. The two traces must share a target and use disjoint client
/// address spaces; labels come from both traces' attacker sets.
pub fn merge_traces(benign: &LabeledTrace, attack: &LabeledTrace, offset_s: f64) -> Result<LabeledTrace> {
    if benign.target != attack.target {
        return Err(Error::Synth(format!(
            "traces target different endpoints ({} vs {})",
            benign.target, attack.target
        )));
    }
    let benign_clients = benign.client_ips();
    let attack_clients = attack.client_ips();
    if let Some(shared) = benign_clients.intersection(&attack_clients).next() {
        return Err(Error::Synth(format!(
            "client address spaces overlap (e.g. {shared}); traces must use disjoint blocks"
        )));
    }

    let offset = to_micros(offset_s);
    let mut merged = LabeledTrace::new(benign.target);
    merged.packets.reserve(benign.packets.len() + attack.packets.len());
    merged.packets.extend_from_slice(&benign.packets);
    merged.packets.extend(attack.packets.iter().map(|p| {
        let mut p = *p;
        p.ts += offset;
        p
    }));
    merged.sort_packets();
    merged.attacker_ips = benign.attacker_ips.union(&attack.attacker_ips).copied().collect();
    merged.tool = attack.tool.clone().or_else(|| benign.tool.clone());
    Ok(merged)
}
