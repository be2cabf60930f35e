//! Auditing and simulation for delayed-evaluation decision pipelines.
//!
//! The crate measures how well individuals can *access* a decision model
//! (their obstacles are absent or alleviated), whether the model's
//! *outcomes* are balanced across groups (equalized-odds violation), and
//! whether proxy-positive individuals go on to *utilize* the decision as
//! judged by an intended model. It also measures the gaps between the proxy
//! and intended models, runs the iterative equity-scoring search, and
//! simulates how curating ground truth from proxy-positives alone feeds
//! inequity back into later rounds.

pub mod casestudy;
pub mod checklist;
pub mod error;
pub mod io;
pub mod learner;
pub mod loopsim;
pub mod metrics;
pub mod obstacle;
pub mod report;
pub mod scoring;

pub use error::{EquityError, Result};
pub use obstacle::{
    apply_policy, dominates, obstacle_magnitude, reveal, Group, Individual, ObstacleModel, Policy, Population,
    RevealedPair,
};
