//! Flow-based detection, training, and evaluation toolkit for slow-running
//! denial-of-service attacks.
//!
//! The crate is organized as a pipeline over labeled packet traces:
//!
//! * [`trace_io`] — pcap reading/writing, ground-truth label sidecars, and
//!   the packet/trace types everything else consumes.
//! * [`flow_tracker`] — per-connection TCP state with streaming metrics
//!   (duration, packet rate, inter-arrival spread, online mean/variance).
//! * [`schemes`] — the six threshold schemes over those metrics, plus the
//!   strike registry and the [`schemes::DetectionEngine`] that combines them.
//! * [`attack_synth`] — deterministic generators for three slow-attack
//!   shapes and a benign browsing workload, plus trace merging.
//! * [`trainer`] — bisection threshold search with an exhaustive sweep
//!   oracle for verification.
//! * [`evaluator`] — confusion matrices, balanced accuracy, detection-time
//!   statistics, and report rendering.
//! * [`mitigation_sim`] — a discrete-event replay of the detect → identify
//!   → mitigate control loop against a worker-pool server model.
//!
//! All computation is deterministic: ordered maps throughout, explicit RNG
//! seeding, and single-threaded replay.

pub mod attack_synth;
pub mod error;
pub mod evaluator;
pub mod flow_tracker;
pub mod mitigation_sim;
pub mod schemes;
pub mod trace_io;
pub mod trainer;

pub use error::{Error, Result};
pub use evaluator::{balanced_accuracy, run_experiment, EvalReport, RunOptions};
pub use schemes::{DetectionEngine, Scheme, SchemeConfig, Thresholds};
pub use trace_io::{Endpoint, LabeledTrace, PacketRecord, TcpFlags};
