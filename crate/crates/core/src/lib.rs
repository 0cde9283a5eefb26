//! Procurement-VCG auctions on the supply side of a cooperative economy.
//!
//! Producers report capacity limits and cost types; the coordinator accepts
//! inputs to maximize social surplus, pays each producer its VCG payment plus
//! an adjustment that depends only on the other producers' reports, and
//! punishes any producer that cannot deliver what it claimed.

pub mod adjustment;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod learner;
pub mod model;
pub mod optimizer;
pub mod payments;
pub mod rng;

pub use adjustment::{AdjustmentModel, Interval, PriorSupport};
pub use error::{Error, Result};
pub use model::{BidProfile, Economy, Profile, ResourceVector, Technology};
pub use optimizer::{AllocationResult, Method, Solver};
pub use payments::{Mechanism, PaymentBreakdown};
