//! Seeded Monte Carlo paths, discrete stochastic exponentials and the
//! verification experiments built on them.

mod demos;
mod experiments;
mod paths;
mod stats;
mod wealth;

pub use demos::{
    bessel_arbitrage_demo, bessel_target, geometric_clock_times, truncation_ladder, upbr_demo, BesselLevel,
    BesselReport, UpbrLevel, UpbrReport, BESSEL_FLOOR, BESSEL_MIN_RATIO, BESSEL_TOLERANCE,
};
pub use experiments::{
    asymptotic_deviation, checkpoints, deviation_rate, q_a, supermartingale_test, Checkpoint, DeviationCheckpoint,
    DeviationOptions, DeviationReport, DeviationVerdict, SupermartingaleReport,
};
pub use paths::{simulate_paths, step_rng, JumpEvent, PathBundle, SamplePath, Simulator, POISSON_ADVISORY};
pub use stats::{mean_se, median, normal_cdf, normal_pdf, quantile};
pub use wealth::{constant_strategy, relative_wealth_identity, wealth_from_increments, wealth_path, WealthPath};
