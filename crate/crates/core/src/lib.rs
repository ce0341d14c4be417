// Copyright 2026 The mosco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Convex M-estimation on truncated separable Hilbert spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: coefficient vectors, symmetric operators, Gaussian measures.
//! * [`functional`]: convex functionals with subgradient selectors and
//!   resolvents.
//! * [`mosco_diag`]: graph-metric and resolvent diagnostics, conjugates and
//!   generalized Hessians.
//! * [`estimation`]: the penalized L1 estimator and its asymptotic covariance.
//! * [`inference`]: the centered criterion process, its quadratic limit, the
//!   likelihood-ratio statistic and Monte Carlo harnesses.

pub mod error;
pub mod estimation;
pub mod functional;
pub mod hilbert;
pub mod inference;
pub mod mosco_diag;
pub mod par;
pub mod seed;
mod splitting;
pub mod stats;

pub use error::{Error, Result};
pub use estimation::{
    fit, sandwich_covariance, score_clt_statistic, simulate_dataset, Decay, FitOptions, FitResult, ModelSpec,
    Noise, Observation, SampleSet,
};
pub use functional::{empirical_objective, ConvexFunctional, ConvexSet, PenaltyForm, SelectorRule};
pub use hilbert::{apply_op, inner, sample_gaussian, solve_op, GaussianMeasure, HVec, SymOp};
pub use par::Execution;
pub use splitting::Relaxation;
