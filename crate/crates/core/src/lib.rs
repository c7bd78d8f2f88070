//! Normalized Wasserstein measure for mixture distributions on empirical
//! data: exact optimal transport, mixture fitting, mode counting,
//! clustering and two application demos. The guide in `book/` walks
//! through each part.

mod alternate;
pub mod applications;
pub mod clustering;
pub mod cost;
pub mod datagen;
pub mod distribution;
pub mod fitting;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod mixture;
pub mod mode_count;
pub mod nw;
pub mod ot;
pub mod simplex;

pub use cost::{cost_matrix, CostMatrix, Exponent};
pub use distribution::{DiscreteDistribution, Point};
pub use error::{Error, Result};
pub use gaussian::GaussianComponent;
pub use mixture::{MixtureComponent, MixtureModel};
pub use ot::{solve_ot, wasserstein, wasserstein_bruteforce, DualCertificate, OtSolution, TransportPlan};
pub use simplex::SimplexVector;
pub use nw::{nw_fixed_components, nw_measure, ComponentModel, NwConfig, NwResult};
pub use datagen::{preset, sample_mog, MogSpec};
pub use fitting::{evaluate_fit, fit_mixture, pi_error, regularizer_value, FitConfig, FitMetrics, FitResult};
pub use mode_count::{nw_sweep, nw_sweep_with, ModeSweepReport, SweepThresholds, ThresholdRule};
pub use clustering::{assign, cluster, score, ClusterAssignment, ClusterScores};
pub use applications::{comparative_test, da_reweight, split_by_label, ComparativeVerdict, DaReport, Verdict};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/transport.md")]
    struct Transport;
    #[doc = include_str!("../../../book/src/nw.md")]
    struct Nw;
    #[doc = include_str!("../../../book/src/fitting.md")]
    struct Fitting;
    #[doc = include_str!("../../../book/src/mode_count.md")]
    struct ModeCount;
    #[doc = include_str!("../../../book/src/clustering.md")]
    struct Clustering;
    #[doc = include_str!("../../../book/src/applications.md")]
    struct Applications;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
