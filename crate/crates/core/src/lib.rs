//! Energy-efficient base-station switching in massive-MIMO heterogeneous
//! networks, driven by a Radio Environment Map of learned action values.
//!
//! The crate bundles a seeded system-level network model ([`net`]),
//! position-set geometry ([`geometry`]), the REM store ([`rem`]), bandit
//! learners ([`rl`]), reference policies ([`baselines`]) and the experiment
//! harness ([`scenario`], [`harness`]).

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod net;
pub mod rem;
pub mod rl;
pub mod scenario;

pub use error::{Error, Result};
pub use geometry::{hausdorff, quantize, Point, UePositionSet};
pub use net::{EpisodeContext, EpisodeOutcome, Network};
pub use rem::{ActiveSet, RemDb, RemEntry};
pub use rl::{Learner, LearnerConfig, Strategy};
pub use scenario::NetworkScenario;
