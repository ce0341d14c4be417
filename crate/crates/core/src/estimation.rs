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

//! M-estimation for the median regression model `y = ⟨x, θ⟩ + ε`.
//!
//! The estimator minimizes `F_n(θ) = (1/n) Σ |y_i − ⟨x_i, θ⟩| + (w/2)‖θ‖`
//! (or the squared-norm penalty) over a convex constraint set. The solver
//! runs consensus Douglas–Rachford over the residual terms, the penalty and
//! the constraint, and periodically polishes the iterate: it guesses the
//! active residuals and constraint, solves the resulting stationarity system
//! exactly, and accepts the candidate only if an independent optimality
//! certificate holds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::functional::{
    abs_residual_prox, ConvexFunctional, ConvexSet, FunctionalKind, PenaltyForm, SelectorRule, SetKind,
    KINK_TOL,
};
use crate::hilbert::{dot, GaussianMeasure, HVec, SymOp};
use crate::splitting::{consensus_douglas_rachford, Control, Relaxation, SplitConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub x: HVec,
}

/// Observations `Z_i = (y_i, x_i)` sharing one truncation level.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    observations: Vec<Observation>,
    dim: usize,
}

impl SampleSet {
    pub fn new(dim: usize, observations: Vec<Observation>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        for o in &observations {
            check_dim(dim, o.x.dim())?;
            if !o.y.is_finite() {
                return Err(Error::NonFinite("response"));
            }
        }
        Ok(SampleSet { observations, dim })
    }

    pub fn from_columns(ys: &[f64], xs: &[Vec<f64>]) -> Result<Self> {
        if ys.len() != xs.len() {
            return Err(Error::InvalidArgument(format!("{} responses but {} regressors", ys.len(), xs.len())));
        }
        let dim = xs.first().map(|x| x.len()).ok_or(Error::EmptySamples)?;
        let obs = ys
            .iter()
            .zip(xs)
            .map(|(&y, x)| Ok(Observation { y, x: HVec::new(x.clone())? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, obs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Adds `c` to every response.
    pub fn shift_responses(&self, c: f64) -> SampleSet {
        SampleSet {
            observations: self.observations.iter().map(|o| Observation { y: o.y + c, x: o.x.clone() }).collect(),
            dim: self.dim,
        }
    }
}

/// Symmetric, median-zero noise laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Noise {
    Laplace { scale: f64 },
    Gaussian { sigma: f64 },
    StudentT { df: f64 },
}

impl Noise {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Noise::Laplace { scale } => scale >= 0.0 && scale.is_finite(),
            Noise::Gaussian { sigma } => sigma >= 0.0 && sigma.is_finite(),
            Noise::StudentT { df } => df > 0.0 && df.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid noise parameters {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Laplace { scale } => {
                let e: f64 = Exp1.sample(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                scale * sign * e
            }
            Noise::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            Noise::StudentT { df } => StudentT::new(df).expect("validated").sample(rng),
        }
    }

    /// Density at the median.
    pub fn density_at_zero(&self) -> Result<f64> {
        match *self {
            Noise::Laplace { scale } if scale > 0.0 => Ok(0.5 / scale),
            Noise::Gaussian { sigma } if sigma > 0.0 => Ok(1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt())),
            Noise::StudentT { df } => Ok((ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df)).exp()
                / (df * std::f64::consts::PI).sqrt()),
            _ => Err(Error::InvalidArgument("degenerate noise has no density at zero".into())),
        }
    }
}

/// Per-coordinate scaling applied to the regressors.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Decay {
    None,
    /// Coordinate `k` (one-based) scaled by `k^{-1}`.
    #[default]
    Harmonic,
    Power { exponent: f64 },
}

impl Decay {
    pub fn factor(&self, k: usize) -> f64 {
        let k = (k + 1) as f64;
        match *self {
            Decay::None => 1.0,
            Decay::Harmonic => 1.0 / k,
            Decay::Power { exponent } => k.powf(-exponent),
        }
    }
}

/// Data-generating process for the regression model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub theta0: HVec,
    /// Covariance of the undecayed regressor.
    pub design: SymOp,
    pub decay: Decay,
    pub noise: Noise,
    pub n: usize,
}

impl ModelSpec {
    /// Identity design with harmonic decay.
    pub fn standard(theta0: HVec, noise: Noise, n: usize) -> Self {
        let dim = theta0.dim();
        ModelSpec { theta0, design: SymOp::identity(dim), decay: Decay::Harmonic, noise, n }
    }

    pub fn dim(&self) -> usize {
        self.theta0.dim()
    }

    pub fn with_n(&self, n: usize) -> Self {
        ModelSpec { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim(), self.design.dim())?;
        self.noise.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(())
    }

    fn decay_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.dim(), |k, _| self.decay.factor(k)))
    }

    /// `E[x xᵀ] = D Σ D`.
    pub fn regressor_second_moment(&self) -> SymOp {
        let d = self.decay_matrix();
        SymOp::symmetrized(&(&d * self.design.entries() * &d)).expect("congruence preserves PSD")
    }

    /// Score covariance `A = E[x xᵀ]` (the score at `θ₀` is `−sgn(ε)·x`).
    pub fn score_covariance(&self) -> SymOp {
        self.regressor_second_moment()
    }

    /// Generalized Hessian `V = 2 f_ε(0) E[x xᵀ]` of the population
    /// objective at `θ₀`.
    pub fn generalized_hessian(&self) -> Result<SymOp> {
        let f0 = self.noise.density_at_zero()?;
        self.regressor_second_moment().scaled(2.0 * f0)
    }

    /// `⟨θ*, V⁻¹ A V⁻¹ θ*⟩`.
    pub fn limit_variance(&self, probe: &HVec) -> Result<f64> {
        let s = sandwich_covariance(&self.generalized_hessian()?, &self.score_covariance())?;
        let sp = crate::hilbert::apply_op(&s, probe)?;
        Ok(sp.dot(probe))
    }
}

/// Draws `spec.n` observations; deterministic in `seed`.
pub fn simulate_dataset(spec: &ModelSpec, seed: u64) -> Result<SampleSet> {
    spec.validate()?;
    let dim = spec.dim();
    let design = GaussianMeasure::centered(spec.design.clone());
    let decay: Vec<f64> = (0..dim).map(|k| spec.decay.factor(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z = design.sample_one(&mut rng);
        let x = HVec::from_fn(dim, |k| z.as_slice()[k] * decay[k]);
        let eps = spec.noise.sample(&mut rng);
        let y = x.dot(&spec.theta0) + eps;
        obs.push(Observation { y, x });
    }
    SampleSet::new(dim, obs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub penalty_weight: f64,
    pub penalty_form: PenaltyForm,
    pub constraint: Option<ConvexSet>,
    pub tol: f64,
    pub max_iter: usize,
    /// Multiplier on the automatic splitting step.
    pub step_scale: f64,
    pub relaxation: Relaxation,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            penalty_weight: 0.0,
            penalty_form: PenaltyForm::Norm,
            constraint: None,
            tol: 1e-8,
            max_iter: 200_000,
            step_scale: 1.0,
            relaxation: Relaxation::default(),
        }
    }
}

impl FitOptions {
    pub fn with_penalty(mut self, weight: f64, form: PenaltyForm) -> Self {
        self.penalty_weight = weight;
        self.penalty_form = form;
        self
    }

    pub fn with_constraint(mut self, set: ConvexSet) -> Self {
        self.constraint = Some(set);
        self
    }
}

/// Vanishing penalty schedule `λ_n = c / √n`.
pub fn penalty_schedule(c: f64, n: usize) -> f64 {
    c / (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub theta: HVec,
    pub objective_value: f64,
    /// Distance from zero to `∂F_n(θ̂) + N_A(θ̂)` under the kink tolerance.
    pub optimality_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at each accepted iterate; non-increasing.
    pub objective_trace: Vec<f64>,
}

/// Minimizes the penalized L1 objective over the optional constraint.
///
/// Never errors on non-convergence; `converged` reports whether the
/// optimality certificate met `tol`.
pub fn fit(samples: &SampleSet, opts: &FitOptions) -> Result<FitResult> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if let Some(set) = &opts.constraint {
        check_dim(samples.dim(), set.dim())?;
    }
    // Validates the penalty weight.
    ConvexFunctional::norm_penalty(samples.dim(), opts.penalty_weight, opts.penalty_form)?;
    let problem = L1Problem::new(samples, opts);
    problem.solve(opts)
}

struct L1Problem<'a> {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    xnorm2: Vec<f64>,
    inv_n: f64,
    weight: f64,
    form: PenaltyForm,
    set: Option<&'a ConvexSet>,
}

impl<'a> L1Problem<'a> {
    fn new(samples: &SampleSet, opts: &'a FitOptions) -> Self {
        let n = samples.len();
        let d = samples.dim();
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        let mut xnorm2 = Vec::with_capacity(n);
        for o in samples.observations() {
            x.extend_from_slice(o.x.as_slice());
            y.push(o.y);
            xnorm2.push(o.x.norm_squared());
        }
        L1Problem {
            n,
            d,
            x,
            y,
            xnorm2,
            inv_n: 1.0 / n as f64,
            weight: opts.penalty_weight,
            form: opts.penalty_form,
            set: opts.constraint.as_ref().filter(|s| !s.is_whole()),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn residual(&self, i: usize, theta: &[f64]) -> f64 {
        self.y[i] - dot(self.row(i), theta)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let sq: f64 = theta.iter().map(|v| v * v).sum();
        match self.form {
            PenaltyForm::Norm => 0.5 * self.weight * sq.sqrt(),
            PenaltyForm::SquaredNorm => 0.5 * self.weight * sq,
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        if let Some(set) = self.set {
            if !set.contains_slice(theta) {
                return f64::INFINITY;
            }
        }
        let loss: f64 = (0..self.n).map(|i| self.residual(i, theta).abs()).sum();
        loss * self.inv_n + self.penalty(theta)
    }

    fn least_squares_start(&self) -> Vec<f64> {
        let d = self.d;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for i in 0..self.n {
            let r = self.row(i);
            for a in 0..d {
                rhs[a] += r[a] * self.y[i];
                for b in 0..d {
                    gram[(a, b)] += r[a] * r[b];
                }
            }
        }
        let ridge = 1e-8 * (gram.trace() / d as f64).max(1e-300);
        for a in 0..d {
            gram[(a, a)] += ridge;
        }
        let mut theta = match gram.cholesky() {
            Some(c) => c.solve(&rhs).as_slice().to_vec(),
            None => vec![0.0; d],
        };
        if theta.iter().any(|v| !v.is_finite()) {
            theta = vec![0.0; d];
        }
        if let Some(set) = self.set {
            set.project_slice(&mut theta);
        }
        theta
    }

    fn solve(&self, opts: &FitOptions) -> Result<FitResult> {
        let d = self.d;
        let mean_xnorm2 = (self.xnorm2.iter().sum::<f64>() * self.inv_n).max(1e-300);
        let step = opts.step_scale * 0.1 * self.n as f64 / mean_xnorm2;
        let has_pen = self.weight > 0.0;
        let terms = self.n + has_pen as usize + self.set.is_some() as usize;
        let start = self.least_squares_start();

        let mut trace = Vec::new();
        let mut best: (Vec<f64>, f64) = (start.clone(), self.objective(&start));
        trace.push(best.1);
        if !has_pen {
            if let Some((theta, residual)) = self.vertex_descent(&start, opts.tol) {
                let value = self.objective(&theta);
                if value <= best.1 {
                    trace.push(value);
                }
                return Ok(FitResult {
                    theta: HVec::from_slice(&theta),
                    objective_value: value,
                    optimality_residual: residual,
                    iterations: 0,
                    converged: true,
                    objective_trace: trace,
                });
            }
        }
        let mut polished: Option<(Vec<f64>, f64)> = None;
        let mut next_check = 10usize;
        let mut feasible = vec![0.0; d];

        let cfg = SplitConfig { step, tol: opts.tol * 1e-4, max_iter: opts.max_iter, relaxation: opts.relaxation };
        let outcome = consensus_douglas_rachford(
            terms,
            &start,
            cfg,
            |j, step, v| {
                if j < self.n {
                    abs_residual_prox(self.y[j], self.row(j), self.xnorm2[j], step * self.inv_n, v);
                } else if has_pen && j == self.n {
                    pen_prox(self.weight, self.form, step, v);
                } else if let Some(set) = self.set {
                    set.project_slice(v);
                }
                Ok(())
            },
            |k, xbar| {
                if k < next_check {
                    return Control::Continue;
                }
                next_check = k + (k / 4).max(10);
                feasible.copy_from_slice(xbar);
                if let Some(set) = self.set {
                    set.project_slice(&mut feasible);
                }
                let value = self.objective(&feasible);
                if value <= best.1 {
                    best = (feasible.clone(), value);
                    trace.push(value);
                }
                if let Some(p) = self.polish(xbar, opts.tol) {
                    polished = Some(p);
                    return Control::Stop;
                }
                Control::Continue
            },
        )?;

        if !outcome.stopped {
            polished = self.polish(&outcome.point, opts.tol);
        }
        let (theta, residual) = match polished {
            Some(p) => p,
            None => {
                let mut theta = outcome.point.clone();
                if let Some(set) = self.set {
                    set.project_slice(&mut theta);
                }
                let value = self.objective(&theta);
                if value > best.1 {
                    theta = best.0.clone();
                }
                let cert = self.certificate(&theta);
                (theta, cert)
            }
        };
        let value = self.objective(&theta);
        if value <= best.1 + 1e-10 * best.1.abs().max(1.0) {
            trace.push(value.min(best.1));
        }
        Ok(FitResult {
            theta: HVec::from_slice(&theta),
            objective_value: value,
            optimality_residual: residual,
            iterations: outcome.iterations,
            converged: residual <= opts.tol,
            objective_trace: trace,
        })
    }

    /// Guesses the active structure at `theta`, solves the stationarity
    /// system exactly and keeps the first candidate that certifies.
    fn polish(&self, theta: &[f64], tol: f64) -> Option<(Vec<f64>, f64)> {
        let d = self.d;
        if self.weight == 0.0 {
            if let Some(found) = self.vertex_descent(theta, tol) {
                return Some(found);
            }
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        let abs_r: Vec<f64> = (0..self.n).map(|i| self.residual(i, theta).abs()).collect();
        let kmax = d.min(self.n);
        if kmax < self.n {
            order.select_nth_unstable_by(kmax, |a, b| abs_r[*a].total_cmp(&abs_r[*b]));
        }
        order.truncate(kmax + 1);
        order.sort_by(|a, b| abs_r[*a].total_cmp(&abs_r[*b]));

        let mut constraint_options = vec![false];
        if let Some(set) = self.set {
            let nrm = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            if set.signed_distance(theta) > -1e-3 * nrm {
                constraint_options.insert(0, true);
            } else {
                constraint_options.push(true);
            }
        }

        if self.weight > 0.0 && self.form == PenaltyForm::Norm {
            let nrm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm <= 1e-3 {
                let zero = vec![0.0; d];
                if self.set.is_none_or(|s| s.contains_slice(&zero)) {
                    let cert = self.certificate(&zero);
                    if cert <= tol {
                        return Some((zero, cert));
                    }
                }
            }
        }

        for &active in &constraint_options {
            let kcap = kmax.saturating_sub(active as usize);
            for k in (0..=kcap).rev() {
                let Some(candidate) = self.newton(theta, &order[..k], active) else { continue };
                if let Some(set) = self.set {
                    if !set.contains_slice(&candidate) {
                        continue;
                    }
                }
                let cert = self.certificate(&candidate);
                if cert <= tol {
                    return Some((candidate, cert));
                }
            }
        }
        None
    }

    /// Indices of the `k` smallest absolute residuals at `theta`, ascending.
    fn smallest_residuals(&self, theta: &[f64], k: usize) -> Vec<usize> {
        let abs_r: Vec<f64> = (0..self.n).map(|i| self.residual(i, theta).abs()).collect();
        let mut order: Vec<usize> = (0..self.n).collect();
        if k < self.n {
            order.select_nth_unstable_by(k, |a, b| abs_r[*a].total_cmp(&abs_r[*b]));
        }
        order.truncate(k);
        order.sort_by(|a, b| abs_r[*a].total_cmp(&abs_r[*b]));
        order
    }

    /// Exact descent over vertices of the unpenalized objective, starting
    /// from the vertex spanned by the residuals closest to zero at `theta`.
    ///
    /// A vertex pins `d` rows to equality: residual rows `y_i = ⟨x_i, θ⟩`
    /// and, for a half-space, possibly the constraint row. At each vertex the
    /// row multipliers are computed; a row whose multiplier leaves its range
    /// is released and the objective is minimized exactly along the
    /// resulting edge. Gives up (returning `None`) on singular vertices, on a
    /// ball constraint becoming active, or after a bounded number of pivots.
    fn vertex_descent(&self, theta: &[f64], tol: f64) -> Option<(Vec<f64>, f64)> {
        let d = self.d;
        if self.n < d {
            return None;
        }
        let (halfspace, ball) = match self.set.map(|s| s.kind()) {
            Some(SetKind::HalfSpace { normal, offset }) => (Some((normal.as_slice(), *offset)), None),
            Some(SetKind::Ball { radius, center }) => (None, Some((center.as_slice(), *radius))),
            _ => (None, None),
        };
        let scale = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let mut con_active =
            halfspace.is_some() && self.set.is_some_and(|s| s.signed_distance(theta) > -1e-3 * scale);
        let mut rows: Vec<usize> = self.smallest_residuals(theta, d - con_active as usize);
        let mut r = vec![0.0; self.n];
        let mut c = vec![0.0; self.n];
        let mut in_rows = vec![false; self.n];
        let mut breaks: Vec<(f64, usize)> = Vec::new();

        for _ in 0..(50 + 20 * d) {
            // Vertex: B θ = rhs.
            let mut b = DMatrix::<f64>::zeros(d, d);
            let mut rhs = DVector::<f64>::zeros(d);
            for (k, &i) in rows.iter().enumerate() {
                b.row_mut(k).copy_from_slice(self.row(i));
                rhs[k] = self.y[i];
            }
            if con_active {
                let (a, off) = halfspace?;
                b.row_mut(d - 1).copy_from_slice(a);
                rhs[d - 1] = off;
            }
            let lu = b.clone().lu();
            let th = lu.solve(&rhs)?;
            if th.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let th = th.as_slice().to_vec();
            if let Some(set) = self.set {
                if !set.contains_slice(&th) {
                    return None;
                }
            }

            in_rows.iter_mut().for_each(|f| *f = false);
            for &i in &rows {
                in_rows[i] = true;
            }
            let mut g_fixed = DVector::<f64>::zeros(d);
            for i in 0..self.n {
                r[i] = if in_rows[i] { 0.0 } else { self.residual(i, &th) };
                if !in_rows[i] && r[i] != 0.0 {
                    let s = r[i].signum();
                    for (k, xi) in self.row(i).iter().enumerate() {
                        g_fixed[k] -= self.inv_n * s * xi;
                    }
                }
            }
            // Stationarity: g_fixed − (1/n) Σ s_i x_i + μ a = 0, i.e.
            // Bᵀ w = −g_fixed with s_i = −n w_i and μ = w_a.
            let w = b.transpose().lu().solve(&(-&g_fixed))?;
            let mut worst: Option<(usize, f64)> = None;
            for k in 0..d {
                let slope = if con_active && k == d - 1 {
                    // Moving into the interior along aᵀδ = −1 changes F at rate μ.
                    w[k]
                } else {
                    let s = -(self.n as f64) * w[k];
                    (1.0 - s.abs()) * self.inv_n
                };
                if slope < -1e-12 * self.inv_n && worst.is_none_or(|(_, v)| slope < v) {
                    worst = Some((k, slope));
                }
            }
            let Some((release, _)) = worst else {
                let cert = self.certificate(&th);
                return (cert <= tol).then_some((th, cert));
            };

            // Edge direction: B δ = e with the released row moved off zero.
            let mut e = DVector::<f64>::zeros(d);
            e[release] = if con_active && release == d - 1 {
                -1.0
            } else {
                // Residual becomes σ t with σ = sgn(s_i): ⟨x_i, δ⟩ = −σ.
                let s = -(self.n as f64) * w[release];
                -s.signum()
            };
            let delta = lu.solve(&e)?;
            let delta = delta.as_slice();

            let mut slope = 0.0;
            breaks.clear();
            for i in 0..self.n {
                c[i] = dot(self.row(i), delta);
                if in_rows[i] {
                    continue;
                }
                if r[i] == 0.0 {
                    slope += c[i].abs() * self.inv_n;
                } else {
                    slope -= c[i] * r[i].signum() * self.inv_n;
                    let t = r[i] / c[i];
                    if t > 0.0 && t.is_finite() {
                        breaks.push((t, i));
                    }
                }
            }
            if !(con_active && release == d - 1) {
                slope += self.inv_n;
            }
            if slope >= 0.0 {
                return None;
            }
            let mut t_max = f64::INFINITY;
            if let (Some((a, off)), false) = (halfspace, con_active && release != d - 1) {
                if !con_active {
                    let ad = dot(a, delta);
                    if ad > 0.0 {
                        t_max = ((off - dot(a, &th)) / ad).max(0.0);
                    }
                }
            }
            if let Some((center, radius)) = ball {
                let p: Vec<f64> = th.iter().zip(center).map(|(x, c)| x - c).collect();
                let dd = dot(delta, delta);
                let pd = dot(&p, delta);
                let pp = dot(&p, &p);
                let disc = pd * pd - dd * (pp - radius * radius);
                if dd > 0.0 && disc >= 0.0 {
                    t_max = (-pd + disc.sqrt()) / dd;
                }
            }
            breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut entering: Option<usize> = None;
            for &(t, i) in &breaks {
                if t > t_max {
                    break;
                }
                slope += 2.0 * c[i].abs() * self.inv_n;
                if slope >= 0.0 {
                    entering = Some(i);
                    break;
                }
            }
            let released_constraint = con_active && release == d - 1;
            match entering {
                Some(j) => {
                    if released_constraint {
                        con_active = false;
                        rows.push(j);
                    } else {
                        rows[release] = j;
                    }
                }
                None if t_max.is_finite() && halfspace.is_some() && !con_active => {
                    // The half-space becomes active; it takes the last row.
                    rows.remove(release);
                    con_active = true;
                }
                None => return None,
            }
        }
        None
    }

    /// Newton iteration on the stationarity system with residuals in
    /// `kinks` pinned to zero, the other residual signs frozen at `theta`,
    /// and the constraint optionally active.
    fn newton(&self, theta: &[f64], kinks: &[usize], active: bool) -> Option<Vec<f64>> {
        let d = self.d;
        let k = kinks.len();
        let a = active as usize;
        let size = d + k + a;
        let mut in_k = vec![false; self.n];
        for &i in kinks {
            in_k[i] = true;
        }
        let mut g_fixed = vec![0.0; d];
        for i in 0..self.n {
            if in_k[i] {
                continue;
            }
            let s = self.residual(i, theta);
            let s = if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 };
            for (g, xi) in g_fixed.iter_mut().zip(self.row(i)) {
                *g -= self.inv_n * s * xi;
            }
        }
        let set = if active { self.set } else { None };
        let mut u = DVector::<f64>::zeros(size);
        u.rows_mut(0, d).copy_from_slice(theta);

        for _ in 0..50 {
            let th: Vec<f64> = u.rows(0, d).iter().copied().collect();
            let mut res = DVector::<f64>::zeros(size);
            let mut jac = DMatrix::<f64>::zeros(size, size);
            // Pinned residuals.
            for (r, &i) in kinks.iter().enumerate() {
                res[r] = self.residual(i, &th);
                for c in 0..d {
                    jac[(r, c)] = -self.row(i)[c];
                }
            }
            // Constraint row and its multiplier.
            let mu = if active { u[d + k] } else { 0.0 };
            let mut grad_c = vec![0.0; d];
            let mut hess_c = 0.0;
            if let Some(s) = set {
                match s.kind() {
                    SetKind::HalfSpace { normal, offset } => {
                        res[k] = dot(normal.as_slice(), &th) - offset;
                        grad_c.copy_from_slice(normal.as_slice());
                    }
                    SetKind::Ball { radius, center } => {
                        let diff: Vec<f64> = th.iter().zip(center.as_slice()).map(|(t, c)| t - c).collect();
                        res[k] = 0.5 * (diff.iter().map(|v| v * v).sum::<f64>() - radius * radius);
                        grad_c = diff;
                        hess_c = 1.0;
                    }
                    SetKind::WholeSpace => return None,
                }
                for c in 0..d {
                    jac[(k, c)] = grad_c[c];
                }
            }
            // Stationarity rows.
            let off = k + a;
            let (pen_grad, pen_hess) = self.penalty_derivatives(&th)?;
            for r in 0..d {
                let mut v = g_fixed[r] + pen_grad[r] + mu * grad_c[r];
                for (col, &i) in kinks.iter().enumerate() {
                    let s = u[d + col];
                    v -= self.inv_n * s * self.row(i)[r];
                    jac[(off + r, d + col)] = -self.inv_n * self.row(i)[r];
                }
                res[off + r] = v;
                for c in 0..d {
                    jac[(off + r, c)] = pen_hess[(r, c)] + if r == c { mu * hess_c } else { 0.0 };
                }
                if active {
                    jac[(off + r, d + k)] = grad_c[r];
                }
            }
            let svd = jac.svd(true, true);
            let eps = 1e-13 * svd.singular_values.max().max(1e-300);
            let step = svd.solve(&(-&res), eps).ok()?;
            u += &step;
            if step.norm() <= 1e-15 * (1.0 + u.norm()) {
                break;
            }
        }
        let out: Vec<f64> = u.rows(0, d).iter().copied().collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    fn penalty_derivatives(&self, th: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let d = self.d;
        let w = self.weight;
        if w == 0.0 {
            return Some((vec![0.0; d], DMatrix::zeros(d, d)));
        }
        match self.form {
            PenaltyForm::SquaredNorm => Some((th.iter().map(|v| w * v).collect(), DMatrix::identity(d, d) * w)),
            PenaltyForm::Norm => {
                let nrm = th.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm == 0.0 {
                    return None;
                }
                let u = DVector::from_column_slice(th) / nrm;
                let grad = u.iter().map(|v| 0.5 * w * v).collect();
                let hess = (DMatrix::identity(d, d) - &u * u.transpose()) * (0.5 * w / nrm);
                Some((grad, hess))
            }
        }
    }

    /// Distance from zero to `∂F_n(θ) + N_A(θ)`.
    fn certificate(&self, theta: &[f64]) -> f64 {
        let d = self.d;
        if let Some(set) = self.set {
            if !set.contains_slice(theta) {
                return f64::INFINITY;
            }
        }
        let mut g0 = vec![0.0; d];
        // Columns of the set-valued part and their feasible sets.
        let mut cols: Vec<(Vec<f64>, Piece)> = Vec::new();
        for i in 0..self.n {
            let r = self.residual(i, theta);
            if r.abs() <= KINK_TOL * self.y[i].abs().max(1.0) {
                cols.push((self.row(i).iter().map(|v| -self.inv_n * v).collect(), Piece::Interval));
            } else {
                let s = r.signum();
                for (g, xi) in g0.iter_mut().zip(self.row(i)) {
                    *g -= self.inv_n * s * xi;
                }
            }
        }
        let nrm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut ball_radius = 0.0;
        if self.weight > 0.0 {
            match self.form {
                PenaltyForm::SquaredNorm => g0.iter_mut().zip(theta).for_each(|(g, t)| *g += self.weight * t),
                PenaltyForm::Norm if nrm > 0.0 => {
                    g0.iter_mut().zip(theta).for_each(|(g, t)| *g += 0.5 * self.weight * t / nrm)
                }
                PenaltyForm::Norm => ball_radius = 0.5 * self.weight,
            }
        }
        if let Some(set) = self.set {
            if set.on_boundary_slice(theta) {
                if let Some(n) = set.outward_normal(theta) {
                    cols.push((n, Piece::Cone));
                }
            }
        }
        min_norm_element(&g0, &cols, ball_radius)
    }
}

fn pen_prox(weight: f64, form: PenaltyForm, step: f64, v: &mut [f64]) {
    match form {
        PenaltyForm::Norm => {
            let thr = 0.5 * step * weight;
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let s = if n <= thr { 0.0 } else { 1.0 - thr / n };
            v.iter_mut().for_each(|a| *a *= s);
        }
        PenaltyForm::SquaredNorm => {
            let s = 1.0 / (1.0 + step * weight);
            v.iter_mut().for_each(|a| *a *= s);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    /// Coefficient in `[−1, 1]`.
    Interval,
    /// Coefficient in `[0, ∞)`.
    Cone,
}

impl Piece {
    fn clamp(self, v: f64) -> f64 {
        match self {
            Piece::Interval => v.clamp(-1.0, 1.0),
            Piece::Cone => v.max(0.0),
        }
    }
}

/// `min ‖g0 + Σ c_j col_j + b‖` over `c_j` in each piece's range and
/// `‖b‖ ≤ ball_radius`.
///
/// Tries the unconstrained least-squares solution first (exact whenever it
/// is feasible), then falls back to accelerated projected gradient.
fn min_norm_element(g0: &[f64], cols: &[(Vec<f64>, Piece)], ball_radius: f64) -> f64 {
    let d = g0.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if cols.is_empty() {
        let n = norm(g0);
        return (n - ball_radius).max(0.0);
    }
    let m = cols.len();
    let mat = DMatrix::from_fn(d, m, |r, c| cols[c].0[r]);
    let g = DVector::from_column_slice(g0);
    let eval = |coef: &DVector<f64>| {
        let v = &g + &mat * coef;
        (v.norm() - ball_radius).max(0.0)
    };

    let mut best = f64::INFINITY;
    let svd = mat.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1e-300);
    if let Ok(c) = svd.solve(&(-&g), eps) {
        let clamped = DVector::from_fn(m, |j, _| cols[j].1.clamp(c[j]));
        best = best.min(eval(&clamped));
        if best == 0.0 || clamped == c && ball_radius == 0.0 {
            return best;
        }
    }

    // Projected gradient on ½‖g + M c + b‖², accelerated with restart.
    let lip = mat.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let mut c = DVector::<f64>::zeros(m);
    let mut b = DVector::<f64>::zeros(d);
    let (mut yc, mut yb) = (c.clone(), b.clone());
    let mut t = 1.0f64;
    let mut prev = f64::INFINITY;
    for _ in 0..20_000 {
        let resid = &g + &mat * &yc + &yb;
        let gc = mat.transpose() * &resid;
        let mut nc = &yc - gc / lip;
        for j in 0..m {
            nc[j] = cols[j].1.clamp(nc[j]);
        }
        let mut nb = &yb - &resid / lip;
        let nbn = nb.norm();
        if nbn > ball_radius {
            nb *= if nbn > 0.0 { ball_radius / nbn } else { 0.0 };
        }
        let val = (&g + &mat * &nc + &nb).norm();
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if val > prev {
            t = 1.0;
            yc = c.clone();
            yb = b.clone();
            continue;
        }
        let beta = (t - 1.0) / tn;
        yc = &nc + (&nc - &c) * beta;
        yb = &nb + (&nb - &b) * beta;
        c = nc;
        b = nb;
        t = tn;
        prev = val;
        best = best.min(val);
        if best <= 1e-15 {
            break;
        }
    }
    best
}

/// `V⁻¹ A V⁻¹`.
pub fn sandwich_covariance(v: &SymOp, a: &SymOp) -> Result<SymOp> {
    check_dim(v.dim(), a.dim())?;
    let vinv = v.inverse()?;
    SymOp::symmetrized(&(vinv.entries() * a.entries() * vinv.entries()))
}

/// `(1/√n) Σ_i ∂ρ(θ₀, Z_i)` under `rule`. No centering term is subtracted:
/// at the true parameter of the median model the population subgradient
/// mean is zero.
pub fn score_clt_statistic(samples: &SampleSet, theta0: &HVec, rule: SelectorRule) -> Result<HVec> {
    check_dim(samples.dim(), theta0.dim())?;
    let n = samples.len();
    let mut acc = HVec::zeros(samples.dim());
    for (i, o) in samples.observations().iter().enumerate() {
        let f = ConvexFunctional::abs_residual(o.y, o.x.clone())?;
        // Distinct salts keep random selections independent across terms.
        let rule = match rule {
            SelectorRule::Random { seed } => SelectorRule::Random { seed: crate::seed::derive_seed(seed, i as u64) },
            r => r,
        };
        let (g, _) = f.subgradient(theta0, rule)?;
        acc = &acc + &g;
    }
    Ok(acc.scale(1.0 / (n.max(1) as f64).sqrt()))
}

/// Bandwidth `n^{-1/5}` used by [`smoothed_subgradient`].
pub fn smoothing_bandwidth(n: usize) -> f64 {
    (n.max(1) as f64).powf(-0.2)
}

/// Gradient of the kernel-smoothed empirical L1 loss,
/// `−(1/n) Σ x_i s(r_i)` with `r_i = y_i − ⟨x_i, θ⟩`.
///
/// The sign is smoothed with the bias-reduced kernel `2φ_b − φ_{2b}`:
/// `s(r) = 2(2Φ(r/b) − 1) − (2Φ(r/(2b)) − 1)`. Its Jacobian estimates
/// `2 f_ε(0) E[x xᵀ]` with bias of order `b²` even when the noise density
/// has a kink at zero.
pub fn smoothed_subgradient(samples: &SampleSet, theta: &HVec, bandwidth: f64) -> Result<HVec> {
    check_dim(samples.dim(), theta.dim())?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let sign = |z: f64| erf(z / std::f64::consts::SQRT_2);
    let mut g = vec![0.0; samples.dim()];
    for o in samples.observations() {
        let r = o.y - o.x.dot(theta);
        let s = 2.0 * sign(r / bandwidth) - sign(r / (2.0 * bandwidth));
        for (gk, xk) in g.iter_mut().zip(o.x.as_slice()) {
            *gk -= s * xk;
        }
    }
    let inv_n = 1.0 / samples.len() as f64;
    Ok(HVec::from_fn(samples.dim(), |k| g[k] * inv_n))
}

/// `F_n(θ)` for the penalized L1 objective, evaluated directly.
pub fn objective_value(samples: &SampleSet, theta: &HVec, penalty_weight: f64, form: PenaltyForm) -> Result<f64> {
    check_dim(samples.dim(), theta.dim())?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let pen = ConvexFunctional::norm_penalty(samples.dim(), penalty_weight, form)?;
    let sum: f64 = samples.observations().iter().map(|o| (o.y - o.x.dot(theta)).abs()).sum();
    Ok(sum / samples.len() as f64 + pen.eval(theta)?)
}

/// Options for [`minimize`].
#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub start: Option<HVec>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { step: 1.0, tol: 1e-12, max_iter: 100_000, start: None }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub theta: HVec,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f(θ) − ⟨tilt, θ⟩` over `constraint` by consensus splitting
/// over the members of `f`.
pub fn minimize(
    f: &ConvexFunctional,
    tilt: Option<&HVec>,
    constraint: Option<&ConvexSet>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let dim = f.dim();
    if let Some(t) = tilt {
        check_dim(dim, t.dim())?;
    }
    let mut members: Vec<(f64, &ConvexFunctional)> = Vec::new();
    flatten(f, 1.0, &mut members);
    let indicator;
    if let Some(set) = constraint {
        check_dim(dim, set.dim())?;
        indicator = ConvexFunctional::indicator(set.clone());
        members.push((1.0, &indicator));
    }
    let zero = ConvexFunctional::zero(dim);
    if members.is_empty() {
        members.push((1.0, &zero));
    }
    let m = members.len();
    let share: Vec<f64> = tilt.map(|t| t.as_slice().iter().map(|v| v / m as f64).collect()).unwrap_or_else(|| vec![0.0; dim]);
    let start = match &opts.start {
        Some(s) => {
            check_dim(dim, s.dim())?;
            s.to_vec()
        }
        None => vec![0.0; dim],
    };
    let cfg = SplitConfig { step: opts.step, tol: opts.tol, max_iter: opts.max_iter, relaxation: Relaxation::NONE };
    let out = consensus_douglas_rachford(
        m,
        &start,
        cfg,
        |j, step, v| {
            for (vi, si) in v.iter_mut().zip(&share) {
                *vi += step * si;
            }
            let (c, g) = members[j];
            g.prox_slice(step * c, v)
        },
        |_, _| Control::Continue,
    )?;
    let mut theta = out.point;
    if let Some(set) = constraint {
        set.project_slice(&mut theta);
    }
    let theta = HVec::from_slice(&theta);
    let value = f.eval(&theta)? - tilt.map(|t| t.dot(&theta)).unwrap_or(0.0);
    Ok(MinimizeResult { theta, value, iterations: out.iterations, converged: out.converged })
}

fn flatten<'f>(f: &'f ConvexFunctional, scale: f64, out: &mut Vec<(f64, &'f ConvexFunctional)>) {
    match f.kind() {
        FunctionalKind::ScaledSum(terms) => {
            for (c, g) in terms {
                if *c > 0.0 {
                    flatten(g, scale * c, out);
                }
            }
        }
        _ => out.push((scale, f)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> HVec {
        HVec::new(c.to_vec()).unwrap()
    }

    fn one_d(ys: &[f64]) -> SampleSet {
        SampleSet::from_columns(ys, &vec![vec![1.0]; ys.len()]).unwrap()
    }

    #[test]
    fn median_of_three() {
        let s = one_d(&[-1.0, 0.0, 3.0]);
        let r = fit(&s, &FitOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.theta.as_slice()[0].abs() < 1e-12);
        assert!((r.objective_value - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_interpolation() {
        let spec = ModelSpec::standard(v(&[1.0, -2.0]), Noise::Laplace { scale: 0.0 }, 10);
        let s = simulate_dataset(&spec, 3).unwrap();
        for o in s.observations() {
            assert_eq!(o.y, o.x.dot(&spec.theta0));
        }
        let r = fit(&s, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.objective_value < 1e-12);
        assert!(r.theta.distance(&spec.theta0) < 1e-10, "{r:?}");
    }

    #[test]
    fn empty_samples_rejected() {
        let s = SampleSet::new(2, vec![]).unwrap();
        assert!(matches!(fit(&s, &FitOptions::default()), Err(Error::EmptySamples)));
        assert!(crate::functional::empirical_objective(&s, 0.0, PenaltyForm::Norm).is_err());
    }

    #[test]
    fn half_space_constraint_binds() {
        // Data favour θ₁ ≈ 2; the constraint θ₁ ≤ 0 forces the boundary.
        let spec = ModelSpec::standard(v(&[2.0, 0.5]), Noise::Laplace { scale: 0.3 }, 200);
        let s = simulate_dataset(&spec, 8).unwrap();
        let set = ConvexSet::half_space(HVec::basis(2, 0), 0.0).unwrap();
        let opts = FitOptions::default().with_constraint(set.clone());
        let r = fit(&s, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        let t1 = r.theta.as_slice()[0];
        assert!((-opts.tol..=0.0).contains(&t1) || t1.abs() < 1e-12, "θ₁ = {t1}");
    }

    #[test]
    fn score_examples() {
        let s = SampleSet::from_columns(&[2.0], &[vec![1.0, 3.0]]).unwrap();
        let g = score_clt_statistic(&s, &HVec::zeros(2), SelectorRule::Midpoint).unwrap();
        assert_eq!(g, v(&[-1.0, -3.0]));

        let spec = ModelSpec::standard(v(&[0.5, 1.0]), Noise::Laplace { scale: 0.0 }, 20);
        let s = simulate_dataset(&spec, 1).unwrap();
        let g = score_clt_statistic(&s, &spec.theta0, SelectorRule::Midpoint).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn sandwich_examples() {
        let a = SymOp::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let s = sandwich_covariance(&SymOp::identity(2), &a).unwrap();
        assert!((s.entries() - a.entries()).amax() < 1e-14);
        let s = sandwich_covariance(&a, &a).unwrap();
        assert!((s.entries() - a.inverse().unwrap().entries()).amax() < 1e-12);
        let s = sandwich_covariance(&SymOp::diagonal(&[2.0, 2.0]).unwrap(), &SymOp::identity(2)).unwrap();
        assert!((s.entries() - DMatrix::identity(2, 2) * 0.25).amax() < 1e-15);
        assert!(sandwich_covariance(&SymOp::diagonal(&[1.0, 0.0]).unwrap(), &a).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = ModelSpec::standard(v(&[0.1, 0.2, 0.3]), Noise::StudentT { df: 3.0 }, 50);
        assert_eq!(simulate_dataset(&spec, 5).unwrap(), simulate_dataset(&spec, 5).unwrap());
        assert_ne!(simulate_dataset(&spec, 5).unwrap(), simulate_dataset(&spec, 6).unwrap());
    }

    #[test]
    fn noise_densities() {
        assert_eq!(Noise::Laplace { scale: 1.0 }.density_at_zero().unwrap(), 0.5);
        let g = Noise::Gaussian { sigma: 1.0 }.density_at_zero().unwrap();
        assert!((g - 0.398_942_280_401_432_7).abs() < 1e-15);
        // t₁ is Cauchy: 1/π.
        let c = Noise::StudentT { df: 1.0 }.density_at_zero().unwrap();
        assert!((c - std::f64::consts::FRAC_1_PI).abs() < 1e-14);
        assert!(Noise::Laplace { scale: 0.0 }.density_at_zero().is_err());
    }

    #[test]
    fn minimize_quadratic_with_tilt() {
        let f = ConvexFunctional::quadratic(SymOp::diagonal(&[2.0, 4.0]).unwrap(), HVec::zeros(2)).unwrap();
        let r = minimize(&f, Some(&v(&[2.0, 2.0])), None, &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.theta.distance(&v(&[1.0, 0.5])) < 1e-10);
        assert!((r.value + 1.5).abs() < 1e-10);
    }
}
