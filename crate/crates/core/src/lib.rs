//! Bias repair and differentially private release of origin-destination
//! trip histograms.
//!
//! A trip dataset is generalized to a [`Histogram`]: a sparse contingency
//! table over categorical attributes (origin, destination, time of day,
//! demographic fields, ...). The crate provides
//!
//! * [`repair`]: removes a conditional dependency `X -> Y | Z` by rebuilding
//!   the counts from the factorization `P(X,Z) P(Y|Z) P(U|X,Y,Z)`;
//! * [`privacy`]: an epsilon-DP categorical histogram release over a sparse
//!   global domain (Laplace noise, thresholding and synthetic out-of-domain
//!   bins);
//! * [`metrics`]: position-weighted Kendall's tau, Hellinger distance and
//!   bootstrap variance bands;
//! * [`ingest`]: bucketization of raw taxi/bike trip files and a synthetic
//!   ride-hailing generator;
//! * [`pipeline`]: end-to-end release runs, measurement and parameter sweeps.
//!
//! Data-parallel loops (bootstrap replicates, sweep cells, per-bin noise) run
//! on rayon when the `parallel` feature is enabled, and sequentially
//! otherwise. See [`Execution`].

pub mod error;
pub mod histogram;
pub mod ingest;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod privacy;
pub mod repair;
pub mod rng;
pub mod schema;

pub use error::{Error, Result};
pub use histogram::{CountMode, Histogram, Marginal};
pub use metrics::{Band, DistanceReport, Metric, Weighting};
pub use par::Execution;
pub use privacy::{PrivacyParams, ReleaseResult};
pub use repair::{FractionalRepairResult, RepairSpec, Rounding};
pub use schema::{Attribute, AttributeSchema, BucketKey};
