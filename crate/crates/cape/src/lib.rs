//! Fair binary classification under prior probability shift.
//!
//! When the fraction of positives in each demographic group changes between
//! training and deployment, a single accuracy-maximizing classifier keeps
//! predicting positives at the training rate. This crate trains, per group,
//! a quantifier that estimates the deployment prevalence and an ensemble of
//! classifiers specialized to a grid of prevalences, then picks for each
//! group the classifier whose predicted positive fraction is closest to the
//! estimate.
//!
//! ```
//! use cape::prelude::*;
//!
//! # fn main() -> cape::Result<()> {
//! let train = generate_synthetic(&SyntheticSpec::two_groups(0.5, 0.5, 2_000, 1))?;
//! let test = generate_synthetic(&SyntheticSpec::two_groups(0.2, 0.8, 1_000, 2))?;
//!
//! let ensemble = train_cape(
//!     &train,
//!     &PrevalenceGrid::default(),
//!     &ClassifierSpec::logistic(),
//!     &QuantifierSpec::default(),
//!     7,
//! )?;
//! let out = ensemble.predict_batch(&test)?;
//! let report = fairness_report(&test, &out.predictions)?;
//! assert!(report.per_group[&1].pd < 0.1);
//! # Ok(())
//! # }
//! ```
//!
//! The guide in `book/` walks through the concepts; its code listings are
//! compiled and run as doc tests of this crate.

pub mod classifier;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod quantify;
pub mod sampling;
pub mod seed;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::classifier::{train, ClassifierKind, ClassifierSpec, TrainedClassifier};
    pub use crate::dataset::{
        generate_synthetic, load_csv, CsvSchema, Dataset, Instance, SyntheticSpec,
    };
    pub use crate::ensemble::{
        check_theorem3, train_cape, train_max_acc, CapeEnsemble, PrevalenceGrid,
    };
    pub use crate::metrics::{fairness_report, MetricsReport};
    pub use crate::quantify::{build_quantifier, QuantifierKind, QuantifierSpec};
    pub use crate::sampling::{pp_sample, SampleRequest};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/prevalence.md")]
    mod prevalence {}
    #[doc = include_str!("../../../book/src/quantification.md")]
    mod quantification {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
}
