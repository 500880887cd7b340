//! Packet trace loading, writing, and labeling.
//!
//! Traces are classic pcap captures (microsecond timestamps, Ethernet link
//! type) holding IPv4/TCP traffic to or from a single target endpoint.
//! Ground-truth attacker labels travel in a JSON sidecar next to the capture
//! (`<trace>.labels.json`) or are derived from address blocks.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamps are stored as integer microseconds since the capture epoch.
/// Rate and duration arithmetic converts to seconds as `f64` at the edges.
pub type Micros = i64;

pub const MICROS_PER_SEC: f64 = 1_000_000.0;

/// Convert a microsecond timestamp or span to seconds.
pub fn to_secs(us: Micros) -> f64 {
    us as f64 / MICROS_PER_SEC
}

/// Convert seconds to whole microseconds (round to nearest).
pub fn to_micros(secs: f64) -> Micros {
    (secs * MICROS_PER_SEC).round() as Micros
}

bitflags::bitflags! {
    /// TCP header flags carried by a [`PacketRecord`].
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct TcpFlags: u8 {
        const FIN = 0x01;
        const SYN = 0x02;
        const RST = 0x04;
        const PSH = 0x08;
        const ACK = 0x10;
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.contains(TcpFlags::SYN) {
            parts.push("SYN");
        }
        if self.contains(TcpFlags::ACK) {
            parts.push("ACK");
        }
        if self.contains(TcpFlags::FIN) {
            parts.push("FIN");
        }
        if self.contains(TcpFlags::RST) {
            parts.push("RST");
        }
        if self.contains(TcpFlags::PSH) {
            parts.push("PSH");
        }
        write!(f, "{}", parts.join("|"))
    }
}

/// One captured TCP segment, reduced to the fields the detection schemes use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub ts: Micros,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub flags: TcpFlags,
    pub payload_len: u32,
}

impl PacketRecord {
    /// True when this packet has no TCP payload and only the ACK flag set
    /// (the shape of the segment completing a three-way handshake).
    pub fn is_pure_ack(&self) -> bool {
        self.payload_len == 0 && self.flags & (TcpFlags::SYN | TcpFlags::FIN | TcpFlags::RST) == TcpFlags::empty() && self.flags.contains(TcpFlags::ACK)
    }
}

/// The single server-side endpoint every packet of a trace involves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        Endpoint { ip, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (ip, port) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("expected ip:port, got {s:?}"))?;
        let ip = ip.parse().map_err(|e| format!("bad address in {s:?}: {e}"))?;
        let port = port.parse().map_err(|e| format!("bad port in {s:?}: {e}"))?;
        Ok(Endpoint { ip, port })
    }
}

/// An IPv4 CIDR block, used to label clients by address range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cidr {
    pub addr: Ipv4Addr,
    pub prefix: u8,
}

impl Cidr {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> std::result::Result<Self, String> {
        if prefix > 32 {
            return Err(format!("prefix /{prefix} out of range"));
        }
        Ok(Cidr { addr, prefix })
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        if self.prefix == 0 {
            return true;
        }
        let mask = u32::MAX << (32 - self.prefix as u32);
        (u32::from(ip) & mask) == (u32::from(self.addr) & mask)
    }

    /// Number of distinct host addresses available in the block (full range;
    /// callers that skip network/broadcast addresses subtract themselves).
    pub fn capacity(&self) -> u64 {
        1u64 << (32 - self.prefix as u32)
    }

    /// The `index`-th address inside the block (0 = network address).
    pub fn host(&self, index: u64) -> Option<Ipv4Addr> {
        if index >= self.capacity() {
            return None;
        }
        let mask = if self.prefix == 0 { 0 } else { u32::MAX << (32 - self.prefix as u32) };
        Some(Ipv4Addr::from((u32::from(self.addr) & mask) | index as u32))
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix)
    }
}

impl FromStr for Cidr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (addr, prefix) = s
            .split_once('/')
            .ok_or_else(|| format!("expected a.b.c.d/len, got {s:?}"))?;
        let addr = addr.parse().map_err(|e| format!("bad address in {s:?}: {e}"))?;
        let prefix: u8 = prefix.parse().map_err(|e| format!("bad prefix in {s:?}: {e}"))?;
        Cidr::new(addr, prefix)
    }
}

impl Serialize for Cidr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Cidr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A packet trace plus its ground truth: which client addresses are
/// attackers, which endpoint is the protected target, and (optionally) which
/// tool generated the attack traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    /// Packets sorted by timestamp (stable order for equal timestamps).
    pub packets: Vec<PacketRecord>,
    pub attacker_ips: BTreeSet<Ipv4Addr>,
    pub target: Endpoint,
    pub tool: Option<String>,
}

impl LabeledTrace {
    pub fn new(target: Endpoint) -> Self {
        LabeledTrace { packets: Vec::new(), attacker_ips: BTreeSet::new(), target, tool: None }
    }

    /// The client (non-target) address of a packet, or `None` when the packet
    /// does not involve the target endpoint at all.
    pub fn client_of(&self, pkt: &PacketRecord) -> Option<Ipv4Addr> {
        if pkt.src_ip == self.target.ip && pkt.src_port == self.target.port {
            Some(pkt.dst_ip)
        } else if pkt.dst_ip == self.target.ip && pkt.dst_port == self.target.port {
            Some(pkt.src_ip)
        } else {
            None
        }
    }

    /// True when the packet flows client -> target.
    pub fn is_client_to_server(&self, pkt: &PacketRecord) -> bool {
        pkt.dst_ip == self.target.ip && pkt.dst_port == self.target.port
    }

    /// Every client address observed in the trace, plus any labeled attacker
    /// that never sent a packet (it still counts against recall).
    pub fn client_ips(&self) -> BTreeSet<Ipv4Addr> {
        let mut out: BTreeSet<Ipv4Addr> =
            self.packets.iter().filter_map(|p| self.client_of(p)).collect();
        out.extend(self.attacker_ips.iter().copied());
        out
    }

    pub fn benign_ips(&self) -> BTreeSet<Ipv4Addr> {
        self.client_ips().difference(&self.attacker_ips).copied().collect()
    }

    pub fn sort_packets(&mut self) {
        self.packets.sort_by_key(|p| p.ts);
    }

    /// First packet timestamp, or 0 for an empty trace.
    pub fn start_ts(&self) -> Micros {
        self.packets.first().map(|p| p.ts).unwrap_or(0)
    }

    pub fn end_ts(&self) -> Micros {
        self.packets.last().map(|p| p.ts).unwrap_or(0)
    }
}

/// Counters describing what the loader kept and dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    /// Records present in the capture file.
    pub records: u64,
    /// Packets kept (IPv4/TCP involving the target endpoint).
    pub kept: u64,
    /// Frames that were not IPv4 TCP (ARP, UDP, fragments, ...).
    pub dropped_non_tcp: u64,
    /// TCP packets that do not touch the target endpoint.
    pub dropped_non_target: u64,
    /// Records too short to carry the advertised headers.
    pub dropped_malformed: u64,
}

impl ReadStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_non_tcp + self.dropped_non_target + self.dropped_malformed
    }
}

// ── classic pcap parsing ────────────────────────────────────────────────────

const PCAP_MAGIC_US: u32 = 0xa1b2_c3d4;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETH_HEADER_LEN: usize = 14;

#[derive(Clone, Copy)]
enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn u32(&self, b: &[u8]) -> u32 {
        let b: [u8; 4] = b[..4].try_into().unwrap();
        match self {
            ByteOrder::Little => u32::from_le_bytes(b),
            ByteOrder::Big => u32::from_be_bytes(b),
        }
    }

}

/// Load a capture, keeping only IPv4/TCP packets that involve `target`.
///
/// Both byte orders of the classic microsecond magic are accepted. Packets
/// come back sorted by timestamp (stable for ties); the labels of the
/// returned trace are empty — attach them from a sidecar or an address block.
/// Encountering IPv6 traffic is an error; other non-TCP frames are dropped
/// and counted in [`ReadStats`].
pub fn read_pcap(path: impl AsRef<Path>, target: Endpoint) -> Result<(LabeledTrace, ReadStats)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut data = Vec::new();
    reader.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;

    if data.len() < GLOBAL_HEADER_LEN {
        return Err(Error::pcap(path, "file shorter than the 24-byte global header"));
    }

    let order = match u32::from_le_bytes(data[..4].try_into().unwrap()) {
        PCAP_MAGIC_US => ByteOrder::Little,
        m if m.swap_bytes() == PCAP_MAGIC_US => ByteOrder::Big,
        m => {
            return Err(Error::pcap(
                path,
                format!("unrecognized magic {m:#010x} (classic microsecond pcap expected)"),
            ))
        }
    };

    let network = order.u32(&data[20..24]);
    if network != LINKTYPE_ETHERNET {
        return Err(Error::pcap(path, format!("unsupported link type {network} (Ethernet expected)")));
    }

    let mut trace = LabeledTrace::new(target);
    let mut stats = ReadStats::default();
    let mut offset = GLOBAL_HEADER_LEN;

    while offset < data.len() {
        if data.len() - offset < RECORD_HEADER_LEN {
            return Err(Error::pcap(
                path,
                format!("truncated record header at byte {offset}"),
            ));
        }
        let ts_sec = order.u32(&data[offset..]) as i64;
        let ts_usec = order.u32(&data[offset + 4..]) as i64;
        let incl_len = order.u32(&data[offset + 8..]) as usize;
        offset += RECORD_HEADER_LEN;
        if data.len() - offset < incl_len {
            return Err(Error::pcap(
                path,
                format!("record {} claims {incl_len} captured bytes but only {} remain", stats.records, data.len() - offset),
            ));
        }
        let frame = &data[offset..offset + incl_len];
        offset += incl_len;
        stats.records += 1;

        let ts = ts_sec * 1_000_000 + ts_usec;
        match parse_frame(frame) {
            FrameOutcome::Tcp(mut pkt) => {
                pkt.ts = ts;
                if trace.client_of(&pkt).is_some() {
                    trace.packets.push(pkt);
                    stats.kept += 1;
                } else {
                    stats.dropped_non_target += 1;
                }
            }
            FrameOutcome::NotTcp => stats.dropped_non_tcp += 1,
            FrameOutcome::TooShort => stats.dropped_malformed += 1,
            FrameOutcome::Ipv6 => {
                return Err(Error::Ipv6Unsupported { path: path.to_path_buf(), record: stats.records - 1 })
            }
        }
    }

    trace.sort_packets();
    Ok((trace, stats))
}

enum FrameOutcome {
    Tcp(PacketRecord),
    NotTcp,
    TooShort,
    Ipv6,
}

/// Decode Ethernet / IPv4 / TCP headers from one captured frame. Network
/// byte order throughout, independent of the capture file's own order.
fn parse_frame(frame: &[u8]) -> FrameOutcome {
    if frame.len() < ETH_HEADER_LEN {
        return FrameOutcome::TooShort;
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype == ETHERTYPE_IPV6 {
        return FrameOutcome::Ipv6;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return FrameOutcome::NotTcp;
    }
    let ip = &frame[ETH_HEADER_LEN..];
    if ip.len() < 20 {
        return FrameOutcome::TooShort;
    }
    if ip[0] >> 4 != 4 {
        return FrameOutcome::NotTcp;
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return FrameOutcome::TooShort;
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    let frag = u16::from_be_bytes([ip[6], ip[7]]);
    if frag & 0x1fff != 0 {
        // Later fragments carry no TCP header; reassembly is out of scope.
        return FrameOutcome::NotTcp;
    }
    if ip[9] != 6 {
        return FrameOutcome::NotTcp;
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    let tcp = &ip[ihl..];
    if tcp.len() < 14 {
        return FrameOutcome::TooShort;
    }
    let src_port = u16::from_be_bytes([tcp[0], tcp[1]]);
    let dst_port = u16::from_be_bytes([tcp[2], tcp[3]]);
    let data_off = ((tcp[12] >> 4) as usize) * 4;
    if data_off < 20 {
        return FrameOutcome::TooShort;
    }
    let flags = TcpFlags::from_bits_truncate(tcp[13] & 0x1f);
    // Payload length comes from the IP total length, so it survives captures
    // that truncate payload bytes (header-only traces).
    let payload_len = total_len.saturating_sub(ihl + data_off) as u32;

    FrameOutcome::Tcp(PacketRecord {
        ts: 0,
        src_ip,
        src_port,
        dst_ip,
        dst_port,
        flags,
        payload_len,
    })
}

// ── pcap writing ────────────────────────────────────────────────────────────

/// How much of each synthesized frame to store in the capture file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayloadMode {
    /// Store the full frame with payload bytes zero-filled to `payload_len`.
    #[default]
    ZeroFilled,
    /// Store only the 54 header bytes; the original length still reflects the
    /// payload so `payload_len` round-trips through the IP total length.
    HeadersOnly,
}

const FRAME_HEADER_LEN: usize = ETH_HEADER_LEN + 20 + 20;

/// Write a trace as a little-endian classic pcap plus a `<path>.labels.json`
/// sidecar. Reading the file back with [`read_pcap`] reproduces timestamps,
/// addresses, flags, and payload lengths exactly.
pub fn write_trace(trace: &LabeledTrace, path: impl AsRef<Path>, mode: PayloadMode) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);

    let mut header = Vec::with_capacity(GLOBAL_HEADER_LEN);
    header.extend_from_slice(&PCAP_MAGIC_US.to_le_bytes());
    header.extend_from_slice(&2u16.to_le_bytes()); // version 2.4
    header.extend_from_slice(&4u16.to_le_bytes());
    header.extend_from_slice(&0i32.to_le_bytes()); // thiszone
    header.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    header.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
    header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(path, e))?;

    let mut frame = Vec::new();
    for pkt in &trace.packets {
        let orig_len = FRAME_HEADER_LEN + pkt.payload_len as usize;
        let incl_len = match mode {
            PayloadMode::ZeroFilled => orig_len,
            PayloadMode::HeadersOnly => FRAME_HEADER_LEN.min(orig_len),
        };
        let ts_sec = (pkt.ts.div_euclid(1_000_000)) as u32;
        let ts_usec = (pkt.ts.rem_euclid(1_000_000)) as u32;

        let mut rec = Vec::with_capacity(RECORD_HEADER_LEN);
        rec.extend_from_slice(&ts_sec.to_le_bytes());
        rec.extend_from_slice(&ts_usec.to_le_bytes());
        rec.extend_from_slice(&(incl_len as u32).to_le_bytes());
        rec.extend_from_slice(&(orig_len as u32).to_le_bytes());
        w.write_all(&rec).map_err(|e| Error::io(path, e))?;

        frame.clear();
        build_frame(pkt, &mut frame);
        w.write_all(&frame[..incl_len]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    write_labels(&LabelSidecar::from_trace(trace), sidecar_path(path))?;
    Ok(())
}

/// Synthesize Ethernet + IPv4 + TCP headers (and a zeroed payload) for one
/// packet record.
fn build_frame(pkt: &PacketRecord, out: &mut Vec<u8>) {
    // Ethernet: fixed dummy MACs, IPv4 ethertype.
    out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
    out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
    out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let total_len = (20 + 20 + pkt.payload_len) as u16;
    let ip_start = out.len();
    out.push(0x45); // version 4, IHL 5
    out.push(0);
    out.extend_from_slice(&total_len.to_be_bytes());
    out.extend_from_slice(&[0, 0]); // identification
    out.extend_from_slice(&[0x40, 0]); // don't fragment
    out.push(64); // TTL
    out.push(6); // TCP
    out.extend_from_slice(&[0, 0]); // checksum placeholder
    out.extend_from_slice(&pkt.src_ip.octets());
    out.extend_from_slice(&pkt.dst_ip.octets());
    let checksum = ipv4_checksum(&out[ip_start..ip_start + 20]);
    out[ip_start + 10..ip_start + 12].copy_from_slice(&checksum.to_be_bytes());

    out.extend_from_slice(&pkt.src_port.to_be_bytes());
    out.extend_from_slice(&pkt.dst_port.to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]); // seq
    out.extend_from_slice(&[0, 0, 0, 0]); // ack
    out.push(0x50); // data offset 5 words
    out.push(pkt.flags.bits());
    out.extend_from_slice(&8192u16.to_be_bytes()); // window
    out.extend_from_slice(&[0, 0, 0, 0]); // checksum + urgent (unused)

    out.resize(out.len() + pkt.payload_len as usize, 0);
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in header.chunks(2) {
        sum += u32::from(u16::from_be_bytes([chunk[0], chunk[1]]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

// ── label sidecars ──────────────────────────────────────────────────────────

/// Ground-truth labels stored next to a capture as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub attacker_ips: Vec<String>,
    pub target_ip: String,
    pub target_port: u16,
    pub tool: Option<String>,
}

impl LabelSidecar {
    pub fn from_trace(trace: &LabeledTrace) -> Self {
        LabelSidecar {
            attacker_ips: trace.attacker_ips.iter().map(|ip| ip.to_string()).collect(),
            target_ip: trace.target.ip.to_string(),
            target_port: trace.target.port,
            tool: trace.tool.clone(),
        }
    }

    pub fn target(&self) -> Result<Endpoint> {
        let ip = self
            .target_ip
            .parse()
            .map_err(|e| Error::LabelFormat { path: Default::default(), reason: format!("bad target_ip {:?}: {e}", self.target_ip) })?;
        Ok(Endpoint::new(ip, self.target_port))
    }

    pub fn attacker_set(&self) -> Result<BTreeSet<Ipv4Addr>> {
        self.attacker_ips
            .iter()
            .map(|s| {
                s.parse().map_err(|e| Error::LabelFormat {
                    path: Default::default(),
                    reason: format!("bad attacker ip {s:?}: {e}"),
                })
            })
            .collect()
    }
}

/// Conventional sidecar path for a capture: `<trace>.labels.json`.
pub fn sidecar_path(trace_path: impl AsRef<Path>) -> std::path::PathBuf {
    let p = trace_path.as_ref();
    let mut os = p.as_os_str().to_owned();
    os.push(".labels.json");
    std::path::PathBuf::from(os)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSidecar> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&data)
        .map_err(|e| Error::LabelFormat { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn write_labels(sidecar: &LabelSidecar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut data = serde_json::to_vec_pretty(sidecar)
        .map_err(|e| Error::LabelFormat { path: path.to_path_buf(), reason: e.to_string() })?;
    data.push(b'\n');
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Attach labels from a sidecar to a loaded trace (consistency-checked
/// against the trace's target).
pub fn apply_sidecar(trace: &mut LabeledTrace, sidecar: &LabelSidecar) -> Result<()> {
    let target = sidecar.target()?;
    if target != trace.target {
        return Err(Error::Inconsistent(format!(
            "sidecar target {target} does not match trace target {}",
            trace.target
        )));
    }
    trace.attacker_ips = sidecar.attacker_set()?;
    trace.tool = sidecar.tool.clone();
    Ok(())
}

/// Label every observed client inside `attacker_block` as an attacker.
///
/// The convention used by the synthetic traces: benign clients live in
/// 192.168.0.0/16 and attackers in 128.10.0.0/16.
pub fn label_from_blocks(trace: &mut LabeledTrace, attacker_block: Cidr) {
    let clients: BTreeSet<Ipv4Addr> =
        trace.packets.iter().filter_map(|p| trace.client_of(p)).collect();
    trace.attacker_ips = clients.into_iter().filter(|ip| attacker_block.contains(*ip)).collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pkt(ts: Micros, src: [u8; 4], sport: u16, dst: [u8; 4], dport: u16, flags: TcpFlags, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: src.into(),
            src_port: sport,
            dst_ip: dst.into(),
            dst_port: dport,
            flags,
            payload_len: len,
        }
    }

    fn target() -> Endpoint {
        Endpoint::new(Ipv4Addr::new(10, 0, 0, 1), 80)
    }

    fn sample_trace() -> LabeledTrace {
        let mut t = LabeledTrace::new(target());
        t.packets = vec![
            pkt(1_000_000, [192, 168, 0, 1], 40000, [10, 0, 0, 1], 80, TcpFlags::SYN, 0),
            pkt(1_000_200, [10, 0, 0, 1], 80, [192, 168, 0, 1], 40000, TcpFlags::SYN | TcpFlags::ACK, 0),
            pkt(1_000_400, [192, 168, 0, 1], 40000, [10, 0, 0, 1], 80, TcpFlags::ACK, 0),
            pkt(2_000_000, [192, 168, 0, 1], 40000, [10, 0, 0, 1], 80, TcpFlags::ACK | TcpFlags::PSH, 120),
            pkt(3_500_000, [128, 10, 0, 7], 40001, [10, 0, 0, 1], 80, TcpFlags::ACK | TcpFlags::PSH, 1),
        ];
        t
    }

    #[test]
    fn round_trip_preserves_packets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let trace = sample_trace();
        write_trace(&trace, &path, PayloadMode::ZeroFilled).unwrap();
        let (back, stats) = read_pcap(&path, target()).unwrap();
        assert_eq!(back.packets, trace.packets);
        assert_eq!(stats.kept, 5);
        assert_eq!(stats.dropped(), 0);
    }

    #[test]
    fn headers_only_round_trips_payload_len() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let trace = sample_trace();
        write_trace(&trace, &path, PayloadMode::HeadersOnly).unwrap();
        let (back, _) = read_pcap(&path, target()).unwrap();
        assert_eq!(back.packets, trace.packets);

        // Independent check against the raw bytes: each record stores at most
        // the 54 header bytes but advertises the true frame length.
        let raw = std::fs::read(&path).unwrap();
        let mut off = 24;
        let mut seen = 0;
        while off < raw.len() {
            let incl = u32::from_le_bytes(raw[off + 8..off + 12].try_into().unwrap()) as usize;
            let orig = u32::from_le_bytes(raw[off + 12..off + 16].try_into().unwrap()) as usize;
            assert!(incl <= 54, "captured length {incl} exceeds the header budget");
            assert_eq!(orig, 54 + trace.packets[seen].payload_len as usize);
            // IP total length inside the stored bytes carries the payload size.
            let ip_total = u16::from_be_bytes([raw[off + 16 + 16], raw[off + 16 + 17]]) as usize;
            assert_eq!(ip_total, 40 + trace.packets[seen].payload_len as usize);
            off += 16 + incl;
            seen += 1;
        }
        assert_eq!(seen, trace.packets.len());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let mut trace = sample_trace();
        trace.attacker_ips.insert(Ipv4Addr::new(128, 10, 0, 7));
        trace.tool = Some("slowloris".into());
        write_trace(&trace, &path, PayloadMode::ZeroFilled).unwrap();

        let sidecar = read_labels(sidecar_path(&path)).unwrap();
        assert_eq!(sidecar.attacker_ips, vec!["128.10.0.7".to_string()]);
        assert_eq!(sidecar.target_port, 80);
        assert_eq!(sidecar.tool.as_deref(), Some("slowloris"));

        let (mut back, _) = read_pcap(&path, target()).unwrap();
        apply_sidecar(&mut back, &sidecar).unwrap();
        assert_eq!(back.attacker_ips, trace.attacker_ips);
        assert_eq!(back.tool, trace.tool);
    }

    #[test]
    fn non_target_and_non_tcp_dropped_with_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let mut trace = sample_trace();
        // A TCP packet between two unrelated hosts.
        trace.packets.push(pkt(4_000_000, [192, 168, 0, 9], 1234, [192, 168, 0, 10], 80, TcpFlags::ACK, 10));
        write_trace(&trace, &path, PayloadMode::ZeroFilled).unwrap();
        let (back, stats) = read_pcap(&path, target()).unwrap();
        assert_eq!(back.packets.len(), 5);
        assert_eq!(stats.dropped_non_target, 1);
        assert_eq!(stats.records, 6);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pcap");
        std::fs::write(&path, [0u8; 40]).unwrap();
        let err = read_pcap(&path, target()).unwrap_err();
        assert!(matches!(err, Error::PcapFormat { .. }), "got {err:?}");
    }

    #[test]
    fn rejects_truncated_global_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.pcap");
        std::fs::write(&path, PCAP_MAGIC_US.to_le_bytes()).unwrap();
        assert!(matches!(read_pcap(&path, target()), Err(Error::PcapFormat { .. })));
    }

    #[test]
    fn rejects_ipv6_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v6.pcap");
        let mut data = Vec::new();
        data.extend_from_slice(&PCAP_MAGIC_US.to_le_bytes());
        data.extend_from_slice(&2u16.to_le_bytes());
        data.extend_from_slice(&4u16.to_le_bytes());
        data.extend_from_slice(&[0; 8]);
        data.extend_from_slice(&65535u32.to_le_bytes());
        data.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        // One record holding a minimal IPv6 ethertype frame.
        data.extend_from_slice(&0u32.to_le_bytes());
        data.extend_from_slice(&0u32.to_le_bytes());
        data.extend_from_slice(&14u32.to_le_bytes());
        data.extend_from_slice(&14u32.to_le_bytes());
        let mut frame = [0u8; 14];
        frame[12..14].copy_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
        data.extend_from_slice(&frame);
        std::fs::write(&path, data).unwrap();
        assert!(matches!(read_pcap(&path, target()), Err(Error::Ipv6Unsupported { .. })));
    }

    #[test]
    fn reads_big_endian_captures() {
        // Write one record entirely big-endian and confirm the loader accepts
        // the swapped magic.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("be.pcap");
        let p = pkt(7_000_123, [192, 168, 0, 1], 40000, [10, 0, 0, 1], 80, TcpFlags::ACK | TcpFlags::PSH, 3);
        let mut frame = Vec::new();
        build_frame(&p, &mut frame);

        let mut data = Vec::new();
        data.extend_from_slice(&PCAP_MAGIC_US.to_be_bytes());
        data.extend_from_slice(&2u16.to_be_bytes());
        data.extend_from_slice(&4u16.to_be_bytes());
        data.extend_from_slice(&[0; 8]);
        data.extend_from_slice(&65535u32.to_be_bytes());
        data.extend_from_slice(&LINKTYPE_ETHERNET.to_be_bytes());
        data.extend_from_slice(&7u32.to_be_bytes());
        data.extend_from_slice(&123u32.to_be_bytes());
        data.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        data.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        data.extend_from_slice(&frame);
        std::fs::write(&path, data).unwrap();

        let (trace, stats) = read_pcap(&path, target()).unwrap();
        assert_eq!(stats.kept, 1);
        assert_eq!(trace.packets[0], p);
    }

    #[test]
    fn empty_trace_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pcap");
        let trace = LabeledTrace::new(target());
        write_trace(&trace, &path, PayloadMode::ZeroFilled).unwrap();
        let (back, stats) = read_pcap(&path, target()).unwrap();
        assert!(back.packets.is_empty());
        assert_eq!(stats.records, 0);
    }

    #[test]
    fn unsorted_input_is_sorted_stably() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let mut trace = sample_trace();
        trace.packets.swap(0, 4);
        write_trace(&trace, &path, PayloadMode::ZeroFilled).unwrap();
        let (back, _) = read_pcap(&path, target()).unwrap();
        let ts: Vec<_> = back.packets.iter().map(|p| p.ts).collect();
        let mut sorted = ts.clone();
        sorted.sort();
        assert_eq!(ts, sorted);
    }

    #[test]
    fn label_from_blocks_marks_attacker_range() {
        let mut trace = sample_trace();
        label_from_blocks(&mut trace, "128.10.0.0/16".parse().unwrap());
        assert_eq!(trace.attacker_ips.len(), 1);
        assert!(trace.attacker_ips.contains(&Ipv4Addr::new(128, 10, 0, 7)));

        label_from_blocks(&mut trace, "192.168.0.0/16".parse().unwrap());
        assert!(trace.attacker_ips.contains(&Ipv4Addr::new(192, 168, 0, 1)));
        assert!(!trace.attacker_ips.contains(&Ipv4Addr::new(128, 10, 0, 7)));
    }

    #[test]
    fn cidr_parse_and_contains() {
        let c: Cidr = "192.168.0.0/16".parse().unwrap();
        assert!(c.contains("192.168.255.1".parse().unwrap()));
        assert!(!c.contains("192.169.0.1".parse().unwrap()));
        assert!("10.0.0.0/33".parse::<Cidr>().is_err());
        assert!("10.0.0.0".parse::<Cidr>().is_err());
        let all: Cidr = "0.0.0.0/0".parse().unwrap();
        assert!(all.contains("255.255.255.255".parse().unwrap()));
    }

    #[test]
    fn endpoint_parse() {
        let e: Endpoint = "10.0.0.1:80".parse().unwrap();
        assert_eq!(e, target());
        assert!("10.0.0.1".parse::<Endpoint>().is_err());
        assert!("10.0.0.1:x".parse::<Endpoint>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Random traces survive a write/read cycle bit-for-bit, in both
        /// payload modes.
        #[test]
        fn prop_round_trip(
            raw in proptest::collection::vec(
                (0i64..4_000_000_000i64, 1u8..255, 1024u16..65000, 0u8..32, 0u32..2000, proptest::bool::ANY),
                0..40,
            ),
            headers_only in proptest::bool::ANY,
        ) {
            let mut trace = LabeledTrace::new(target());
            for (ts, host, port, flag_bits, len, inbound) in raw {
                let client = Ipv4Addr::new(192, 168, 1, host);
                let flags = TcpFlags::from_bits_truncate(flag_bits);
                let p = if inbound {
                    pkt(ts, client.octets(), port, [10, 0, 0, 1], 80, flags, len)
                } else {
                    pkt(ts, [10, 0, 0, 1], 80, client.octets(), port, flags, len)
                };
                trace.packets.push(p);
            }
            trace.sort_packets();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.pcap");
            let mode = if headers_only { PayloadMode::HeadersOnly } else { PayloadMode::ZeroFilled };
            write_trace(&trace, &path, mode).unwrap();
            let (back, stats) = read_pcap(&path, target()).unwrap();
            prop_assert_eq!(back.packets, trace.packets);
            prop_assert_eq!(stats.dropped(), 0);
        }
    }
}
