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

use thiserror::Error;

use crate::estimation::FitResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector must have at least one coefficient")]
    EmptyVector,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("operator is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("operator is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("operator is singular to tolerance: smallest eigenvalue {min_eigenvalue:e}")]
    Singular { min_eigenvalue: f64 },

    #[error("point outside the domain of the functional: {0}")]
    Domain(String),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("maximizer reached the search boundary (radius {radius}); the supremum may be unattained")]
    SearchBoundary { radius: f64, value: f64 },

    #[error("unstable difference quotients: {0}")]
    Instability(String),

    #[error("sample set is empty")]
    EmptySamples,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constrained fit failed to converge (full: converged={}, null: converged={})", .full.converged, .null.converged)]
    FitFailed {
        full: Box<FitResult>,
        null: Box<FitResult>,
    },

    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
