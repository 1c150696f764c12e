//! Stability analysis, optimisation and simulation of a shared cooperative
//! relay serving several TDMA sources over a multipacket-reception channel.

pub mod analytic;
pub mod channel;
pub mod error;
pub mod optimizer;
pub mod scalar;
pub mod simulator;

pub use analytic::{DemandVector, Policy, Scheme, StabilityEvaluation};
pub use channel::{ChannelVariances, LinkProbabilities, Node, PhyParams};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Links64 = LinkProbabilities<f64>;
pub type Links32 = LinkProbabilities<f32>;
pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;
pub type Demand64 = DemandVector<f64>;
