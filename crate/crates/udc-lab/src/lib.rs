//! A deterministic simulator and verification lab for uniform distributed
//! coordination (UDC) in asynchronous crash-failure systems with fair-lossy
//! channels.
//!
//! The crate simulates the four coordination protocols (gossip nUDC, UDC
//! over reliable channels, UDC with a strong failure detector, UDC with
//! t-useful generalized detectors), records runs as cut sequences satisfying
//! the run model rules, evaluates knowledge-temporal formulas over finite
//! systems of runs with three-valued verdicts, checks failure-detector
//! accuracy/completeness classes and the DC coordination conditions, and
//! performs the run transformations that extract perfect and t-useful
//! detectors from coordination-attaining systems.

pub mod check;
pub mod fdetect;
pub mod formula;
pub mod model;
pub mod par;
pub mod protocols;
pub mod sim;
pub mod sweep;
pub mod trace;
pub mod transform;

pub use check::{Status, Verdict};
pub use formula::{Formula, TruthValue};
pub use model::{
    ActionId, Event, Point, ProcessId, Provenance, Run, RunIdx, SystemOfRuns, Time,
};
