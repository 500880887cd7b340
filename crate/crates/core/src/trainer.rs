//! Threshold training: bisection search over a single threshold, an
//! exhaustive sweep oracle for verification, and a coordinate-alternating
//! search for the rate/distance threshold pair.
//!
//! Every candidate threshold is scored by a full detection run over the
//! training trace at one strike, so the objective is exactly the balanced
//! accuracy the evaluator would report. Bisection starts from two extremes —
//! one flags every client with a computable metric, the other flags none —
//! halves toward the better-scoring end, and returns the best candidate it
//! visited. The objective is piecewise constant with steps only at observed
//! metric values, which is what makes the sweep oracle exhaustive: probing
//! just beside every observed value visits every reachable classification.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{run_experiment, RunOptions};
use crate::flow_tracker::FlowTable;
use crate::schemes::{Scheme, SchemeConfig, Thresholds};
use crate::trace_io::LabeledTrace;

/// What to train and how hard to search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub scheme: Scheme,
    pub include_handshake: bool,
    /// Search interval; both default to bounds derived from the observed
    /// metric values (0 and twice the maximum).
    pub search_lo: Option<f64>,
    pub search_hi: Option<f64>,
    pub max_iters: u32,
    /// Relative interval-width tolerance that stops the bisection.
    pub tol: f64,
}

impl TrainingSpec {
    pub fn new(scheme: Scheme, include_handshake: bool) -> Self {
        TrainingSpec {
            scheme,
            include_handshake,
            search_lo: None,
            search_hi: None,
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

/// A trained threshold with the balanced accuracy it achieved on the
/// training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainedThreshold {
    pub threshold: f64,
    pub bacc: f64,
    /// Bisection iterations executed (0 for the oracle).
    pub iterations: u32,
}

/// A trained rate/distance pair for the conjunction scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainedPair {
    pub p: f64,
    pub delta: f64,
    pub bacc: f64,
    /// Alternating coordinate rounds executed.
    pub rounds: u32,
}

fn config_for(scheme: Scheme, include_handshake: bool, threshold: f64) -> SchemeConfig {
    match scheme {
        Scheme::Lc => SchemeConfig::lc(threshold, 1),
        Scheme::Lpr => SchemeConfig::lpr(threshold, include_handshake, 1),
        Scheme::Pdu => SchemeConfig::pdu(threshold, include_handshake, 1),
        Scheme::Mpr => SchemeConfig::mpr(threshold, include_handshake, 1),
        Scheme::Prv => SchemeConfig::prv(threshold, include_handshake, 1),
        Scheme::LprPdu => {
            unreachable!("the pair scheme trains through bisect_threshold_pair")
        }
    }
}

/// Balanced accuracy of a full one-strike detection run at `threshold`.
fn objective(trace: &LabeledTrace, scheme: Scheme, include_handshake: bool, threshold: f64) -> Result<f64> {
    let cfg = config_for(scheme, include_handshake, threshold);
    Ok(run_experiment(trace, &cfg, &RunOptions::default())?.bacc)
}

fn pair_objective(trace: &LabeledTrace, include_handshake: bool, p: f64, delta: f64) -> Result<f64> {
    let cfg = SchemeConfig::lpr_pdu(p, delta, include_handshake, 1);
    Ok(run_experiment(trace, &cfg, &RunOptions::default())?.bacc)
}

fn check_trainable(trace: &LabeledTrace, spec: &TrainingSpec) -> Result<()> {
    if spec.scheme == Scheme::LprPdu {
        return Err(Error::Training(
            "the conjunction scheme has two thresholds; use the pair search".into(),
        ));
    }
    let clients = trace.client_ips();
    let attackers = trace.attacker_ips.len();
    if attackers == 0 || attackers == clients.len() {
        return Err(Error::Training(format!(
            "training needs at least one attacker and one benign client (got {attackers} of {})",
            clients.len()
        )));
    }
    if spec.max_iters == 0 {
        return Err(Error::Training("max_iters must be at least 1".into()));
    }
    if !(spec.tol.is_finite() && spec.tol > 0.0) {
        return Err(Error::Training(format!("tol must be finite and positive, got {}", spec.tol)));
    }
    Ok(())
}

/// Every distinct value the scheme's metric takes during an instrumented run
/// of the trace, sorted ascending. These are exactly the thresholds at which
/// the detection outcome can change.
pub fn observed_metric_values(trace: &LabeledTrace, scheme: Scheme, include_handshake: bool) -> Vec<f64> {
    let policy = config_for_policy(scheme, include_handshake);
    let mut flows = FlowTable::new(trace.target, policy);
    let mut values = Vec::new();
    for snapshot in flows.ingest_trace(trace) {
        let value = match scheme {
            Scheme::Lc => snapshot.duration,
            Scheme::Lpr => snapshot.rate,
            Scheme::Pdu => snapshot.delta,
            Scheme::Mpr => snapshot.mean_rate,
            Scheme::Prv => snapshot.rate_variance,
            Scheme::LprPdu => None,
        };
        if let Some(v) = value {
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

fn config_for_policy(scheme: Scheme, include_handshake: bool) -> crate::flow_tracker::HandshakePolicy {
    if scheme.uses_handshake_policy() {
        crate::flow_tracker::HandshakePolicy { include_handshake }
    } else {
        crate::flow_tracker::HandshakePolicy::include()
    }
}

/// Candidate grid for the sweep oracle: a probe just below and just above
/// every observed metric value. Because strict comparisons only change
/// outcome when the threshold crosses an observed value, this grid reaches
/// every possible classification.
pub fn breakpoint_grid(values: &[f64]) -> Vec<f64> {
    let mut grid = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let eps = (v.abs() * 1e-9).max(1e-12);
        grid.push(v - eps);
        grid.push(v + eps);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Exhaustively evaluate `grid` (ties break toward the smaller threshold).
/// This is the trusted reference the bisection is compared against.
///
/// At one strike a client is flagged exactly when its most extreme metric
/// value beats the threshold (smallest value for below-threshold schemes,
/// largest duration for the long-connection scheme), so the whole grid can
/// be scored from one tracker pass: collect that per-client extremum, sort
/// the attacker and benign extrema, and read each candidate's confusion
/// counts off the sorted arrays. This is observably identical to running the
/// full detector per candidate, just not linear in trace size per grid point.
pub fn sweep_oracle(trace: &LabeledTrace, spec: &TrainingSpec, grid: &[f64]) -> Result<TrainedThreshold> {
    check_trainable(trace, spec)?;
    if grid.is_empty() {
        return Err(Error::Training("sweep oracle needs a non-empty candidate grid".into()));
    }

    let policy = config_for_policy(spec.scheme, spec.include_handshake);
    let suspicious_above = spec.scheme == Scheme::Lc;
    let mut flows = FlowTable::new(trace.target, policy);
    let mut extremal: BTreeMap<Ipv4Addr, f64> = BTreeMap::new();
    for snapshot in flows.ingest_trace(trace) {
        let value = match spec.scheme {
            Scheme::Lc => snapshot.duration,
            Scheme::Lpr => snapshot.rate,
            Scheme::Pdu => snapshot.delta,
            Scheme::Mpr => snapshot.mean_rate,
            Scheme::Prv => snapshot.rate_variance,
            Scheme::LprPdu => None,
        };
        if let Some(v) = value {
            extremal
                .entry(snapshot.client_ip)
                .and_modify(|e| *e = if suspicious_above { e.max(v) } else { e.min(v) })
                .or_insert(v);
        }
    }

    let universe = trace.client_ips();
    let n_pos = trace.attacker_ips.len() as u64;
    let n_neg = universe.len() as u64 - n_pos;
    let (mut att, mut ben): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for (ip, v) in &extremal {
        if trace.attacker_ips.contains(ip) {
            att.push(*v);
        } else {
            ben.push(*v);
        }
    }
    att.sort_by(f64::total_cmp);
    ben.sort_by(f64::total_cmp);
    let flagged = |sorted: &[f64], t: f64| -> u64 {
        if suspicious_above {
            (sorted.len() - sorted.partition_point(|&x| x <= t)) as u64
        } else {
            sorted.partition_point(|&x| x < t) as u64
        }
    };

    let mut best: Option<TrainedThreshold> = None;
    for &threshold in grid {
        if !(threshold.is_finite() && threshold > 0.0) {
            continue;
        }
        let tp = flagged(&att, threshold);
        let fp = flagged(&ben, threshold);
        let cm = crate::evaluator::ConfusionMatrix { tp, fp, fn_: n_pos - tp, tn: n_neg - fp };
        let bacc = crate::evaluator::balanced_accuracy(&cm)?;
        let better = match &best {
            None => true,
            Some(b) => bacc > b.bacc || (bacc == b.bacc && threshold < b.threshold),
        };
        if better {
            best = Some(TrainedThreshold { threshold, bacc, iterations: 0 });
        }
    }
    best.ok_or_else(|| Error::Training("no positive finite candidate in the grid".into()))
}

/// Default search bounds: zero (flags no client for below-threshold schemes)
/// up to twice the largest observed metric value (flags every client with a
/// computable metric). For the duration scheme the roles are mirrored — the
/// low end flags everyone — but the search itself is direction-agnostic.
fn default_bounds(trace: &LabeledTrace, spec: &TrainingSpec) -> Result<(f64, f64)> {
    let values = observed_metric_values(trace, spec.scheme, spec.include_handshake);
    let max = values.last().copied().unwrap_or(1.0);
    let hi = if max > 0.0 { max * 2.0 } else { 1.0 };
    Ok((0.0, hi))
}

/// Bisection search over one threshold, maximizing training balanced
/// accuracy. Keeps the half-interval adjacent to the better-scoring
/// endpoint and returns the best candidate evaluated anywhere along the way
/// (ties toward the smaller threshold).
pub fn bisect_threshold(trace: &LabeledTrace, spec: &TrainingSpec) -> Result<TrainedThreshold> {
    check_trainable(trace, spec)?;
    let (mut lo, mut hi) = match (spec.search_lo, spec.search_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) => {
            let (dlo, dhi) = default_bounds(trace, spec)?;
            (lo.unwrap_or(dlo), hi.unwrap_or(dhi))
        }
    };
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::Training(format!("bad search interval [{lo}, {hi}]")));
    }

    let eval = |t: f64| -> Result<f64> {
        if t > 0.0 {
            objective(trace, spec.scheme, spec.include_handshake, t)
        } else {
            // Non-positive thresholds flag nothing (flag everything for the
            // duration scheme); score the run they stand for.
            objective(trace, spec.scheme, spec.include_handshake, f64::MIN_POSITIVE)
        }
    };

    let mut best = TrainedThreshold { threshold: f64::NAN, bacc: f64::NEG_INFINITY, iterations: 0 };
    let consider = |threshold: f64, bacc: f64, best: &mut TrainedThreshold| {
        if bacc > best.bacc || (bacc == best.bacc && threshold < best.threshold) {
            best.threshold = threshold;
            best.bacc = bacc;
        }
    };

    let mut bacc_lo = eval(lo)?;
    let mut bacc_hi = eval(hi)?;
    consider(lo.max(f64::MIN_POSITIVE), bacc_lo, &mut best);
    consider(hi, bacc_hi, &mut best);

    let mut iterations = 0;
    for _ in 0..spec.max_iters {
        if (hi - lo) / hi.abs().max(f64::MIN_POSITIVE) < spec.tol {
            break;
        }
        iterations += 1;
        let mid = lo + (hi - lo) / 2.0;
        let bacc_mid = eval(mid)?;
        consider(mid, bacc_mid, &mut best);
        // Keep the half next to the better endpoint; ties walk toward the
        // smaller threshold.
        if bacc_lo >= bacc_hi {
            hi = mid;
            bacc_hi = bacc_mid;
        } else {
            lo = mid;
            bacc_lo = bacc_mid;
        }
    }

    best.iterations = iterations;
    Ok(best)
}

/// Train the rate/distance pair by coordinate alternation: train each
/// component alone, then repeatedly re-bisect one threshold with the other
/// held fixed until the score stops improving.
pub fn bisect_threshold_pair(trace: &LabeledTrace, spec: &TrainingSpec) -> Result<TrainedPair> {
    if spec.scheme != Scheme::LprPdu {
        return Err(Error::Training(format!(
            "pair search applies to the conjunction scheme, got {}",
            spec.scheme
        )));
    }
    let component = |scheme: Scheme| TrainingSpec { scheme, ..*spec };
    let p0 = bisect_threshold(trace, &component(Scheme::Lpr))?;
    let d0 = bisect_threshold(trace, &component(Scheme::Pdu))?;

    let mut best = TrainedPair {
        p: p0.threshold,
        delta: d0.threshold,
        bacc: pair_objective(trace, spec.include_handshake, p0.threshold, d0.threshold)?,
        rounds: 0,
    };

    const MAX_ROUNDS: u32 = 4;
    for round in 1..=MAX_ROUNDS {
        let before = best.bacc;

        // Bisect p with delta fixed.
        let p_best = bisect_axis(trace, spec, Axis::P, best.delta)?;
        if p_best.1 > best.bacc || (p_best.1 == best.bacc && p_best.0 < best.p) {
            best.p = p_best.0;
            best.bacc = p_best.1;
        }
        // Bisect delta with p fixed.
        let d_best = bisect_axis(trace, spec, Axis::Delta, best.p)?;
        if d_best.1 > best.bacc || (d_best.1 == best.bacc && d_best.0 < best.delta) {
            best.delta = d_best.0;
            best.bacc = d_best.1;
        }

        best.rounds = round;
        if best.bacc - before < spec.tol {
            break;
        }
    }
    Ok(best)
}

enum Axis {
    P,
    Delta,
}

/// One-dimensional bisection of the pair objective along `axis`, the other
/// threshold held at `fixed`.
fn bisect_axis(trace: &LabeledTrace, spec: &TrainingSpec, axis: Axis, fixed: f64) -> Result<(f64, f64)> {
    let values = match axis {
        Axis::P => observed_metric_values(trace, Scheme::Lpr, spec.include_handshake),
        Axis::Delta => observed_metric_values(trace, Scheme::Pdu, spec.include_handshake),
    };
    let max = values.last().copied().unwrap_or(1.0);
    let mut lo = 0.0f64;
    let mut hi = if max > 0.0 { max * 2.0 } else { 1.0 };

    let eval = |t: f64| -> Result<f64> {
        let t = t.max(f64::MIN_POSITIVE);
        match axis {
            Axis::P => pair_objective(trace, spec.include_handshake, t, fixed),
            Axis::Delta => pair_objective(trace, spec.include_handshake, fixed, t),
        }
    };

    let mut bacc_lo = eval(lo)?;
    let mut bacc_hi = eval(hi)?;
    let mut best = if bacc_lo >= bacc_hi {
        (lo.max(f64::MIN_POSITIVE), bacc_lo)
    } else {
        (hi, bacc_hi)
    };
    for _ in 0..spec.max_iters {
        if (hi - lo) / hi.abs().max(f64::MIN_POSITIVE) < spec.tol {
            break;
        }
        let mid = lo + (hi - lo) / 2.0;
        let bacc_mid = eval(mid)?;
        if bacc_mid > best.1 || (bacc_mid == best.1 && mid < best.0) {
            best = (mid, bacc_mid);
        }
        if bacc_lo >= bacc_hi {
            hi = mid;
            bacc_hi = bacc_mid;
        } else {
            lo = mid;
            bacc_lo = bacc_mid;
        }
    }
    Ok(best)
}

/// Combine per-attack threshold pairs into a single deployable pair by
/// taking the coordinate-wise maximum (the loosest of the trained bounds on
/// each axis).
pub fn combine_pairs_max(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let p = pairs.iter().map(|(p, _)| *p).fold(f64::NEG_INFINITY, f64::max);
    let delta = pairs.iter().map(|(_, d)| *d).fold(f64::NEG_INFINITY, f64::max);
    Some((p, delta))
}

fn scheme_thresholds(scheme: Scheme, value: f64) -> Thresholds {
    let mut t = Thresholds::default();
    match scheme {
        Scheme::Lc => t.d = Some(value),
        Scheme::Lpr => t.p = Some(value),
        Scheme::Pdu => t.delta = Some(value),
        Scheme::Mpr => t.pbar = Some(value),
        Scheme::Prv => t.var = Some(value),
        Scheme::LprPdu => unreachable!("pair thresholds are set explicitly"),
    }
    t
}

/// Run the full training workflow for one scheme: bisection (the pair search
/// for the conjunction scheme) plus, unless disabled, the exhaustive sweep
/// oracle for comparison. For the conjunction scheme the oracle column holds
/// the two single-axis sweep optima scored jointly — an exhaustive 2-D sweep
/// over both breakpoint grids is quadratic in trace size and not attempted.
pub fn train_report(trace: &LabeledTrace, spec: &TrainingSpec, with_oracle: bool) -> Result<TrainingReport> {
    if spec.scheme == Scheme::LprPdu {
        let pair = bisect_threshold_pair(trace, spec)?;
        let oracle = if with_oracle {
            let axis_oracle = |scheme: Scheme| -> Result<TrainedThreshold> {
                let axis_spec = TrainingSpec { scheme, ..*spec };
                let grid =
                    breakpoint_grid(&observed_metric_values(trace, scheme, spec.include_handshake));
                sweep_oracle(trace, &axis_spec, &grid)
            };
            let p = axis_oracle(Scheme::Lpr)?;
            let d = axis_oracle(Scheme::Pdu)?;
            let bacc = pair_objective(trace, spec.include_handshake, p.threshold, d.threshold)?;
            Some(OracleComparison {
                thresholds: Thresholds {
                    p: Some(p.threshold),
                    delta: Some(d.threshold),
                    ..Thresholds::default()
                },
                bacc,
            })
        } else {
            None
        };
        Ok(TrainingReport {
            scheme: spec.scheme,
            include_handshake: spec.include_handshake,
            thresholds: Thresholds { p: Some(pair.p), delta: Some(pair.delta), ..Thresholds::default() },
            bacc: pair.bacc,
            iterations: pair.rounds,
            oracle,
        })
    } else {
        let trained = bisect_threshold(trace, spec)?;
        let oracle = if with_oracle {
            let grid =
                breakpoint_grid(&observed_metric_values(trace, spec.scheme, spec.include_handshake));
            let o = sweep_oracle(trace, spec, &grid)?;
            Some(OracleComparison { thresholds: scheme_thresholds(spec.scheme, o.threshold), bacc: o.bacc })
        } else {
            None
        };
        Ok(TrainingReport {
            scheme: spec.scheme,
            include_handshake: spec.include_handshake,
            thresholds: scheme_thresholds(spec.scheme, trained.threshold),
            bacc: trained.bacc,
            iterations: trained.iterations,
            oracle,
        })
    }
}

/// The training report written by the command-line `train` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub scheme: Scheme,
    pub include_handshake: bool,
    pub thresholds: Thresholds,
    pub bacc: f64,
    pub iterations: u32,
    /// Sweep-oracle result for the same search, when it was computed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle: Option<OracleComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub thresholds: Thresholds,
    pub bacc: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_io::{Endpoint, PacketRecord, TcpFlags};
    use std::net::Ipv4Addr;

    const SEC: i64 = 1_000_000;

    /// `n_attackers` clients sending every 15 s, `n_benign` clients sending
    /// every `benign_gap_s` seconds, all starting at t = 0.
    fn two_class_trace(n_attackers: u8, n_benign: u8, benign_gap_s: f64, packets_each: i64) -> LabeledTrace {
        let target = Endpoint::new(Ipv4Addr::new(10, 0, 0, 1), 80);
        let mut trace = LabeledTrace::new(target);
        let benign_gap = (benign_gap_s * 1e6) as i64;
        for a in 0..n_attackers {
            let ip = Ipv4Addr::new(128, 10, 0, a + 1);
            for k in 0..packets_each {
                trace.packets.push(PacketRecord {
                    ts: k * 15 * SEC + a as i64,
                    src_ip: ip,
                    src_port: 40000,
                    dst_ip: target.ip,
                    dst_port: target.port,
                    flags: TcpFlags::ACK | TcpFlags::PSH,
                    payload_len: 2,
                });
            }
            trace.attacker_ips.insert(ip);
        }
        for b in 0..n_benign {
            let ip = Ipv4Addr::new(192, 168, 0, b + 1);
            for k in 0..packets_each {
                trace.packets.push(PacketRecord {
                    ts: k * benign_gap + 1000 + b as i64,
                    src_ip: ip,
                    src_port: 41000,
                    dst_ip: target.ip,
                    dst_port: target.port,
                    flags: TcpFlags::ACK | TcpFlags::PSH,
                    payload_len: 40,
                });
            }
        }
        trace.sort_packets();
        trace
    }

    #[test]
    fn separable_trace_trains_to_perfect_bacc() {
        // Attacker rates top out at 2/15 ≈ 0.133 Hz; benign rates stay at or
        // above 1 Hz. Any threshold in between is perfect, and the gap is
        // wide enough that bisection must land in it.
        let trace = two_class_trace(4, 6, 1.0, 8);
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        let trained = bisect_threshold(&trace, &spec).unwrap();
        assert!((trained.bacc - 1.0).abs() < 1e-12, "got {trained:?}");
        assert!(trained.threshold > 2.0 / 15.0 && trained.threshold < 1.0);

        let grid = breakpoint_grid(&observed_metric_values(&trace, Scheme::Lpr, true));
        let oracle = sweep_oracle(&trace, &spec, &grid).unwrap();
        assert!((oracle.bacc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_never_below_bisection() {
        for benign_gap in [0.3, 1.0, 4.0, 9.0] {
            let trace = two_class_trace(3, 5, benign_gap, 6);
            let spec = TrainingSpec::new(Scheme::Lpr, true);
            let trained = bisect_threshold(&trace, &spec).unwrap();
            let grid = breakpoint_grid(&observed_metric_values(&trace, Scheme::Lpr, true));
            let oracle = sweep_oracle(&trace, &spec, &grid).unwrap();
            assert!(
                oracle.bacc >= trained.bacc - 1e-12,
                "gap {benign_gap}: oracle {} < bisect {}",
                oracle.bacc,
                trained.bacc
            );
        }
    }

    #[test]
    fn identical_classes_score_half() {
        // Benign clients behave exactly like attackers: no threshold can
        // separate them, so every candidate scores 0.5.
        let trace = two_class_trace(3, 3, 15.0, 6);
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        let trained = bisect_threshold(&trace, &spec).unwrap();
        assert!((trained.bacc - 0.5).abs() < 1e-12);
        let grid = breakpoint_grid(&observed_metric_values(&trace, Scheme::Lpr, true));
        let oracle = sweep_oracle(&trace, &spec, &grid).unwrap();
        assert!((oracle.bacc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn training_requires_both_classes() {
        let mut trace = two_class_trace(2, 2, 1.0, 4);
        trace.attacker_ips.clear();
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        assert!(matches!(bisect_threshold(&trace, &spec), Err(Error::Training(_))));

        let mut all = two_class_trace(2, 0, 1.0, 4);
        all.attacker_ips = all.client_ips();
        assert!(matches!(bisect_threshold(&all, &spec), Err(Error::Training(_))));
    }

    #[test]
    fn lc_direction_is_handled() {
        // Attackers hold connections for 105 s of arrivals; benign clients
        // finish within 3.5 s. A duration threshold between the two is
        // perfect even though the suspicious side is "above".
        let trace = two_class_trace(3, 5, 0.5, 8);
        let spec = TrainingSpec::new(Scheme::Lc, true);
        let trained = bisect_threshold(&trace, &spec).unwrap();
        assert!((trained.bacc - 1.0).abs() < 1e-12, "{trained:?}");
        assert!(trained.threshold > 3.5 && trained.threshold < 105.0, "{trained:?}");
    }

    #[test]
    fn grid_of_one_candidate_returns_it() {
        let trace = two_class_trace(2, 3, 1.0, 5);
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        let oracle = sweep_oracle(&trace, &spec, &[0.5]).unwrap();
        assert_eq!(oracle.threshold, 0.5);
        assert!((oracle.bacc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_ties_break_toward_smaller_threshold() {
        let trace = two_class_trace(2, 3, 1.0, 5);
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        let oracle = sweep_oracle(&trace, &spec, &[0.9, 0.5, 0.3]).unwrap();
        // All three candidates sit in the perfect plateau.
        assert!((oracle.bacc - 1.0).abs() < 1e-12);
        assert_eq!(oracle.threshold, 0.3);
    }

    #[test]
    fn pair_search_beats_or_matches_components() {
        let trace = two_class_trace(4, 6, 1.0, 8);
        let spec = TrainingSpec::new(Scheme::LprPdu, true);
        let pair = bisect_threshold_pair(&trace, &spec).unwrap();
        assert!((pair.bacc - 1.0).abs() < 1e-12, "{pair:?}");

        let lpr = bisect_threshold(&trace, &TrainingSpec::new(Scheme::Lpr, true)).unwrap();
        let pdu = bisect_threshold(&trace, &TrainingSpec::new(Scheme::Pdu, true)).unwrap();
        assert!(pair.bacc >= lpr.bacc.max(pdu.bacc) - 1e-12);
    }

    #[test]
    fn pair_search_rejects_single_threshold_schemes() {
        let trace = two_class_trace(2, 2, 1.0, 4);
        let spec = TrainingSpec::new(Scheme::Lpr, true);
        assert!(matches!(bisect_threshold_pair(&trace, &spec), Err(Error::Training(_))));
        let pair_spec = TrainingSpec::new(Scheme::LprPdu, true);
        assert!(matches!(
            bisect_threshold(&trace, &pair_spec),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn combine_pairs_takes_coordinate_max() {
        let pairs = [(0.091756, 5.9e-5), (0.01739, 2.5e-5), (0.783869, 4.1e-5)];
        assert_eq!(combine_pairs_max(&pairs), Some((0.783869, 5.9e-5)));
        assert_eq!(combine_pairs_max(&[]), None);
    }

    #[test]
    fn observed_values_are_sorted_and_deduped() {
        let trace = two_class_trace(2, 2, 1.0, 6);
        let values = observed_metric_values(&trace, Scheme::Lpr, true);
        assert!(!values.is_empty());
        assert!(values.windows(2).all(|w| w[0] < w[1]));

        let grid = breakpoint_grid(&values);
        assert_eq!(grid.len(), values.len() * 2);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        // Each observed value is straddled by its two probes.
        for (i, v) in values.iter().enumerate() {
            assert!(grid[2 * i] < *v && *v < grid[2 * i + 1]);
        }
    }

    #[test]
    fn sweep_scoring_matches_full_detection_runs() {
        // The oracle scores candidates from per-client metric extrema; that
        // shortcut must agree with a full one-strike detector run at every
        // grid point, for both threshold directions.
        for scheme in [Scheme::Lpr, Scheme::Pdu, Scheme::Mpr, Scheme::Prv, Scheme::Lc] {
            let trace = two_class_trace(3, 5, 2.5, 7);
            let spec = TrainingSpec::new(scheme, true);
            let grid = breakpoint_grid(&observed_metric_values(&trace, scheme, true));
            let fast = sweep_oracle(&trace, &spec, &grid).unwrap();
            let mut slow_best: Option<(f64, f64)> = None;
            for &t in &grid {
                if !(t.is_finite() && t > 0.0) {
                    continue;
                }
                let bacc = objective(&trace, scheme, true, t).unwrap();
                let better = match slow_best {
                    None => true,
                    Some((bt, bb)) => bacc > bb || (bacc == bb && t < bt),
                };
                if better {
                    slow_best = Some((t, bacc));
                }
            }
            let (slow_t, slow_bacc) = slow_best.unwrap();
            assert_eq!(fast.threshold, slow_t, "{scheme}: thresholds differ");
            assert_eq!(fast.bacc, slow_bacc, "{scheme}: scores differ");
        }
    }

    #[test]
    fn bisection_respects_explicit_bounds() {
        let trace = two_class_trace(3, 5, 1.0, 6);
        let mut spec = TrainingSpec::new(Scheme::Lpr, true);
        spec.search_lo = Some(5.0);
        spec.search_hi = Some(10.0);
        // Everything in [5, 10] flags every client: bacc 0.5 everywhere.
        let trained = bisect_threshold(&trace, &spec).unwrap();
        assert!((trained.bacc - 0.5).abs() < 1e-12);

        spec.search_lo = Some(10.0);
        spec.search_hi = Some(5.0);
        assert!(matches!(bisect_threshold(&trace, &spec), Err(Error::Training(_))));
    }
}
