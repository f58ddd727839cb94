//! Demographic-parity de-biasing of categorical data.
//!
//! A dataset over a response `Y`, protected features `S` and unprotected
//! features `X` becomes a [`CountTable`] over every joint profile
//! `(y, s, x)`. Its empirical distribution `f` is turned into a fair
//! distribution `q` by projecting a reference (regularized `f`, or uniform)
//! onto the set of distributions that satisfy
//!
//! * parity: `q(y, s) = f(y) f(s)`,
//! * utility: `q(y, x) = f(y, x)`,
//! * realism: `q(s, x) = f(s, x)`,
//!
//! minimizing the KL divergence to the reference. The projection is computed
//! by iterative proportional fitting ([`ipf::project`]). `q` can then be
//! sampled for synthetic data ([`synth::sample_counts`]) or used directly as
//! a classifier on new predictor profiles ([`synth::natural_prediction`]).
//!
//! ```
//! use std::sync::Arc;
//! use purfit::{build_constraints, project, ConstraintMode, Feature, JointTable, Schema, SolverOptions};
//!
//! let schema = Arc::new(Schema::new(
//!     Feature::new("y", ["0", "1"]),
//!     vec![Feature::new("s", ["a", "b"])],
//!     vec![Feature::new("x", ["u", "v"])],
//! )?);
//! let f = JointTable::new(schema, vec![0.05, 0.05, 0.2, 0.2, 0.2, 0.2, 0.05, 0.05])?;
//! let set = build_constraints(&f, ConstraintMode::PUR)?;
//! let (q, diag) = project(&f, &set, &SolverOptions::default())?;
//! assert!(diag.converged);
//! assert!(purfit::metrics::parity_residual(&q) < 1e-9);
//! # Ok::<(), purfit::Error>(())
//! ```

pub mod constraints;
pub mod error;
pub mod ingest;
pub mod ipf;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod reference;
pub mod schema;
pub mod synth;
pub mod table;

pub use constraints::{build_constraints, ConstraintKind, ConstraintMode, ConstraintSet, MarginalConstraint};
pub use error::{Error, Result};
pub use ipf::{project, ProjectionDiagnostics, SolverOptions};
pub use reference::{pseudo_count_regularize, RegularizationConfig, SupportMask, SupportMode};
pub use schema::{Feature, Schema};
pub use table::{CountTable, JointTable, MarginalTable};
