//! Detection quality measurement: confusion matrices, balanced accuracy,
//! detection-time statistics, and the end-to-end experiment runner.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::{ClassificationEvent, DetectionEngine, SchemeConfig, Scheme};
use crate::trace_io::{to_micros, LabeledTrace};

/// Classification outcome counts. `fn_` carries a trailing underscore only
/// because `fn` is reserved; it serializes as plain `"fn"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Count classification outcomes against ground truth.
///
/// `classified` must be a subset of `all_clients`; every labeled attacker in
/// `labels` counts toward recall whether or not it was ever observed.
pub fn confusion(
    classified: &BTreeSet<Ipv4Addr>,
    labels: &BTreeSet<Ipv4Addr>,
    all_clients: &BTreeSet<Ipv4Addr>,
) -> Result<ConfusionMatrix> {
    if let Some(stray) = classified.iter().find(|ip| !all_clients.contains(ip)) {
        return Err(Error::Inconsistent(format!(
            "classified client {stray} is not part of the observed client universe"
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for ip in all_clients {
        match (classified.contains(ip), labels.contains(ip)) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Balanced accuracy: the mean of the true-positive and true-negative rates,
/// `(TP/(TP+FN) + TN/(TN+FP)) / 2`. Undefined when either class is empty.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let positives = cm.tp + cm.fn_;
    let negatives = cm.tn + cm.fp;
    if positives == 0 {
        return Err(Error::DegenerateClasses("no labeled attackers (tp + fn = 0)".into()));
    }
    if negatives == 0 {
        return Err(Error::DegenerateClasses("no benign clients (tn + fp = 0)".into()));
    }
    let tpr = cm.tp as f64 / positives as f64;
    let tnr = cm.tn as f64 / negatives as f64;
    Ok((tpr + tnr) * 0.5)
}

/// Mean and population standard deviation of detection times over true
/// positives only. `None` when no labeled attacker was detected.
pub fn detection_time_stats(
    events: &[ClassificationEvent],
    labels: &BTreeSet<Ipv4Addr>,
) -> Option<(f64, f64)> {
    let times: Vec<f64> = events
        .iter()
        .filter(|e| labels.contains(&e.client_ip))
        .map(|e| e.detection_time())
        .collect();
    if times.is_empty() {
        return None;
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / times.len() as f64;
    Some((mean, var.sqrt()))
}

/// One detection in a report: who, when detected, when first seen (seconds
/// relative to the capture epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub ip: String,
    pub t_detect: f64,
    pub t_first: f64,
}

/// The result of evaluating one scheme configuration against one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: Scheme,
    /// Whether handshake segments counted toward the metrics.
    pub handshake: bool,
    pub dataset: String,
    pub attack: Option<String>,
    #[serde(flatten)]
    pub confusion: ConfusionMatrix,
    pub bacc: f64,
    pub det_mean_s: Option<f64>,
    pub det_std_s: Option<f64>,
    pub events: Vec<ReportEvent>,
}

/// Knobs for [`run_experiment`] beyond the scheme configuration itself.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run idle sweeps every this many seconds (duration checks between
    /// packet arrivals). `None` keeps evaluation purely arrival-driven.
    pub sweep_interval_s: Option<f64>,
    /// Dataset identifier for the report.
    pub dataset: Option<String>,
    /// Attack identifier for the report; defaults to the trace's tool label.
    pub attack: Option<String>,
}

/// Stream a labeled trace through the detection engine and score the result.
pub fn run_experiment(trace: &LabeledTrace, cfg: &SchemeConfig, opts: &RunOptions) -> Result<EvalReport> {
    cfg.validate()?;
    let mut engine = DetectionEngine::new(*cfg, trace.target);

    match opts.sweep_interval_s {
        Some(interval) if interval > 0.0 && !trace.packets.is_empty() => {
            let step = to_micros(interval);
            let start = trace.start_ts();
            let mut next_sweep = start + step;
            for pkt in &trace.packets {
                while next_sweep <= pkt.ts {
                    engine.sweep(next_sweep);
                    next_sweep += step;
                }
                engine.process_packet(pkt);
            }
        }
        _ => {
            for pkt in &trace.packets {
                engine.process_packet(pkt);
            }
        }
    }

    score(trace, cfg, opts, engine.events())
}

/// Build the report for an already-run engine (shared with the simulator).
pub fn score(
    trace: &LabeledTrace,
    cfg: &SchemeConfig,
    opts: &RunOptions,
    events: &[ClassificationEvent],
) -> Result<EvalReport> {
    let all_clients = trace.client_ips();
    let classified: BTreeSet<Ipv4Addr> = events.iter().map(|e| e.client_ip).collect();
    let cm = confusion(&classified, &trace.attacker_ips, &all_clients)?;
    let bacc = balanced_accuracy(&cm)?;
    let det = detection_time_stats(events, &trace.attacker_ips);

    Ok(EvalReport {
        scheme: cfg.scheme,
        handshake: cfg.effective_policy().include_handshake,
        dataset: opts.dataset.clone().unwrap_or_else(|| "synthetic".into()),
        attack: opts.attack.clone().or_else(|| trace.tool.clone()),
        confusion: cm,
        bacc,
        det_mean_s: det.map(|(m, _)| m),
        det_std_s: det.map(|(_, s)| s),
        events: events
            .iter()
            .map(|e| ReportEvent {
                ip: e.client_ip.to_string(),
                t_detect: crate::trace_io::to_secs(e.detection_ts),
                t_first: crate::trace_io::to_secs(e.first_seen_ts),
            })
            .collect(),
    })
}

/// Render reports as a fixed-width text table, one row per report:
/// scheme, handshake, dataset, attack, confusion counts, balanced accuracy
/// (3 decimals), detection-time mean/std (2 decimals).
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut rows = vec![vec![
        "scheme".to_string(),
        "hs".to_string(),
        "dataset".to_string(),
        "attack".to_string(),
        "tp".to_string(),
        "fp".to_string(),
        "fn".to_string(),
        "tn".to_string(),
        "bacc".to_string(),
        "det_mean_s".to_string(),
        "det_std_s".to_string(),
    ]];
    for r in reports {
        rows.push(vec![
            r.scheme.to_string(),
            if r.scheme.uses_handshake_policy() {
                if r.handshake { "yes" } else { "no" }.to_string()
            } else {
                "-".to_string()
            },
            r.dataset.clone(),
            r.attack.clone().unwrap_or_else(|| "-".into()),
            r.confusion.tp.to_string(),
            r.confusion.fp.to_string(),
            r.confusion.fn_.to_string(),
            r.confusion.tn.to_string(),
            format!("{:.3}", r.bacc),
            r.det_mean_s.map_or("-".into(), |v| format!("{v:.2}")),
            r.det_std_s.map_or("-".into(), |v| format!("{v:.2}")),
        ]);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> =
            row.iter().zip(&widths).map(|(cell, w)| format!("{cell:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
