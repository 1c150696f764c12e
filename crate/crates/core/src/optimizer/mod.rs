//! Throughput maximisation over relay action matrices.

pub mod barrier;
pub mod fpp_sca;
pub mod oracle;
pub mod qcqp;
pub mod split;
pub mod sweep;

pub use barrier::{solve_convex_subproblem, BarrierOptions, ConvexProblem, ConvexQuadratic, KktResiduals};
pub use fpp_sca::{fpp_sca, fpp_sca_from, optimize, OptimizedPolicy, OptimizerOptions, ScaDiagnostics, ScaState, SolverStatus};
pub use oracle::{constrained_max_throughput, grid_oracle, ConstrainedOptimum, OracleResult, SearchGrid, ThroughputFloor};
pub use qcqp::{assemble_qcqp, AffineRates, QcqpProblem};
pub use split::split_indefinite;
pub use sweep::{
    convex_hull, default_w_grid, hull_contains, log_ratio_weights, min_delay_search, region_sweep, DelayPoint, RegionSweep,
    RegionSweepConfig, SweepPoint,
};
