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

//! JSON experiment configurations. Unknown fields are rejected; every
//! command that draws random numbers requires an explicit `seed`.

use anyhow::{bail, ensure, Context, Result};
use mosco::estimation::penalty_schedule;
use mosco::{ConvexFunctional, ConvexSet, Decay, FitOptions, HVec, ModelSpec, Noise, PenaltyForm, SymOp};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub theta0: Vec<f64>,
    /// Covariance of the undecayed regressor; identity when absent.
    #[serde(default)]
    pub design: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub decay: Decay,
    pub noise: Noise,
    pub n: usize,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let theta0 = HVec::new(self.theta0.clone()).context("model.theta0")?;
        let design = match &self.design {
            Some(rows) => SymOp::from_rows(rows).context("model.design")?,
            None => SymOp::identity(theta0.dim()),
        };
        let spec = ModelSpec { theta0, design, decay: self.decay, noise: self.noise, n: self.n };
        spec.validate().context("model")?;
        Ok(spec)
    }

    /// The same block with defaults written out.
    pub fn resolved(&self) -> Result<ModelConfig> {
        let spec = self.build()?;
        let d = spec.dim();
        let design = (0..d).map(|i| (0..d).map(|j| spec.design.get(i, j)).collect()).collect();
        Ok(ModelConfig { design: Some(design), ..self.clone() })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetConfig {
    Ball { radius: f64, center: Vec<f64> },
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Whole { dim: usize },
}

impl SetConfig {
    pub fn build(&self) -> Result<ConvexSet> {
        Ok(match self {
            SetConfig::Ball { radius, center } => ConvexSet::ball(*radius, HVec::new(center.clone())?)?,
            SetConfig::HalfSpace { normal, offset } => ConvexSet::half_space(HVec::new(normal.clone())?, *offset)?,
            SetConfig::Whole { dim } => {
                ensure!(*dim > 0, "whole-space dimension must be positive");
                ConvexSet::whole(*dim)
            }
        })
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200_000
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Penalty weight at sample size `n` is `penalty_c / √n`.
    #[serde(default)]
    pub penalty_c: f64,
    #[serde(default)]
    pub penalty_form: PenaltyForm,
    #[serde(default = "one")]
    pub step_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: default_tol(),
            max_iter: default_max_iter(),
            penalty_c: 0.0,
            penalty_form: PenaltyForm::Norm,
            step_scale: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn options(&self, n: usize) -> Result<FitOptions> {
        ensure!(self.tol > 0.0, "solver.tol must be positive");
        ensure!(self.penalty_c >= 0.0, "solver.penalty_c must be nonnegative");
        ensure!(self.step_scale > 0.0, "solver.step_scale must be positive");
        let mut o = FitOptions::default().with_penalty(penalty_schedule(self.penalty_c, n), self.penalty_form);
        o.tol = self.tol;
        o.max_iter = self.max_iter;
        o.step_scale = self.step_scale;
        Ok(o)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Dataset CSV, relative to the configuration file.
    pub data: String,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub constraint: Option<SetConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalConfig {
    Zero { dim: usize },
    Quadratic {
        op: Vec<Vec<f64>>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    AbsResidual { y: f64, x: Vec<f64> },
    NormPenalty {
        dim: usize,
        weight: f64,
        #[serde(default)]
        form: PenaltyForm,
    },
    Indicator { set: SetConfig },
    Sum { dim: usize, terms: Vec<SumTerm> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumTerm {
    pub weight: f64,
    pub functional: FunctionalConfig,
}

impl FunctionalConfig {
    pub fn build(&self) -> Result<ConvexFunctional> {
        Ok(match self {
            FunctionalConfig::Zero { dim } => {
                ensure!(*dim > 0, "dimension must be positive");
                ConvexFunctional::zero(*dim)
            }
            FunctionalConfig::Quadratic { op, center } => {
                let op = SymOp::from_rows(op)?;
                let center = match center {
                    Some(c) => HVec::new(c.clone())?,
                    None => HVec::zeros(op.dim()),
                };
                ConvexFunctional::quadratic(op, center)?
            }
            FunctionalConfig::AbsResidual { y, x } => ConvexFunctional::abs_residual(*y, HVec::new(x.clone())?)?,
            FunctionalConfig::NormPenalty { dim, weight, form } => ConvexFunctional::norm_penalty(*dim, *weight, *form)?,
            FunctionalConfig::Indicator { set } => ConvexFunctional::indicator(set.build()?),
            FunctionalConfig::Sum { dim, terms } => {
                let built = terms.iter().map(|t| Ok((t.weight, t.functional.build()?))).collect::<Result<Vec<_>>>()?;
                ConvexFunctional::scaled_sum(*dim, built)?
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceConfig {
    /// `f_n = ½⟨scale·π_n θ, θ⟩` for `n = 1..=dim`, limit `½ scale ‖θ‖²`.
    Projection { scale: f64 },
    Explicit { functionals: Vec<FunctionalConfig>, limit: FunctionalConfig },
}

fn default_basis() -> usize {
    mosco::mosco_diag::DEFAULT_BASIS_POINTS
}

fn default_random() -> usize {
    mosco::mosco_diag::DEFAULT_RANDOM_POINTS
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "default_basis")]
    pub basis: usize,
    #[serde(default = "default_random")]
    pub random: usize,
    #[serde(default = "one")]
    pub lambda0: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig { basis: default_basis(), random: default_random(), lambda0: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoscoConfig {
    pub dim: usize,
    pub sequence: SequenceConfig,
    /// Resolvent parameter of the probe table.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Number of seeded Gaussian probe points.
    pub probes: usize,
    #[serde(default)]
    pub family: FamilyConfig,
    pub seed: u64,
}

impl MoscoConfig {
    pub fn build(&self) -> Result<(Vec<ConvexFunctional>, ConvexFunctional)> {
        ensure!(self.dim > 0, "dim must be positive");
        let (seq, limit) = match &self.sequence {
            SequenceConfig::Projection { scale } => {
                ensure!(*scale >= 0.0, "projection scale must be nonnegative");
                let quad = |op: SymOp| -> Result<ConvexFunctional> {
                    Ok(ConvexFunctional::quadratic(op.scaled(*scale)?, HVec::zeros(self.dim))?)
                };
                let seq = (1..=self.dim).map(|n| quad(SymOp::projection(self.dim, n))).collect::<Result<Vec<_>>>()?;
                (seq, quad(SymOp::identity(self.dim))?)
            }
            SequenceConfig::Explicit { functionals, limit } => {
                let seq = functionals.iter().map(|f| f.build()).collect::<Result<Vec<_>>>()?;
                (seq, limit.build()?)
            }
        };
        if let Some(bad) = seq.iter().position(|f| f.dim() != self.dim) {
            bail!("sequence member {bad} has dimension {}, expected {}", seq[bad].dim(), self.dim);
        }
        ensure!(limit.dim() == self.dim, "limit has dimension {}, expected {}", limit.dim(), self.dim);
        Ok((seq, limit))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanConfig {
    pub model: ModelConfig,
    pub probe: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub full: SetConfig,
    pub null: SetConfig,
    /// Local alternative `θ₀ + t/√n`; zero when absent.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

fn default_calibration_draws() -> usize {
    2000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    pub model: ModelConfig,
    pub hypothesis: HypothesisConfig,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Paired draws used to fit the scale `κ`.
    #[serde(default = "default_calibration_draws")]
    pub calibration_draws: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianPoint {
    /// The fitted `θ̂`.
    Fit,
    /// The true `θ₀`.
    Truth,
}

fn default_point() -> HessianPoint {
    HessianPoint::Fit
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianConfig {
    pub model: ModelConfig,
    pub seed: u64,
    /// Smoothing bandwidth; `n^{-1/5}` when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Difference steps; `2^{-3} … 2^{-10}` when absent.
    #[serde(default)]
    pub steps: Option<Vec<f64>>,
    #[serde(default = "default_point")]
    pub point: HessianPoint,
    #[serde(default)]
    pub solver: SolverConfig,
}
