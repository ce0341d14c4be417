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

//! The centered criterion process, its quadratic limit, the
//! likelihood-ratio statistic and Monte Carlo harnesses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::estimation::{
    fit, minimize, penalty_schedule, score_clt_statistic, simulate_dataset, FitOptions, MinimizeOptions, ModelSpec,
    SampleSet,
};
use crate::functional::{ConvexFunctional, ConvexSet, PenaltyForm, SelectorRule, SetKind};
use crate::hilbert::{apply_op, solve_op, GaussianMeasure, HVec, SymOp, SINGULAR_TOL};
use crate::par::Execution;
use crate::seed::derive_seed;
use crate::stats::{self, Summary};

/// Minimum replications for the Monte Carlo harnesses.
pub const MIN_REPLICATIONS: usize = 50;

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// `Λ` values at or below this count as zero.
pub const ZERO_TOL: f64 = 1e-6;

/// The limit experiment `Q₀(t) = ⟨t, W⟩ + ½⟨V t, t⟩`, `W ~ N(0, A)`.
#[derive(Clone, Debug)]
pub struct LanLimit {
    v: SymOp,
    w_law: GaussianMeasure,
}

impl LanLimit {
    pub fn new(v: SymOp, a: SymOp) -> Result<Self> {
        check_dim(v.dim(), a.dim())?;
        let min = v.min_eigenvalue();
        if min <= SINGULAR_TOL * v.max_eigenvalue().max(1.0) {
            return Err(Error::Singular { min_eigenvalue: min });
        }
        Ok(LanLimit { v, w_law: GaussianMeasure::centered(a) })
    }

    /// Closed-form `V` and `A` of the regression model.
    pub fn from_model(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec.generalized_hessian()?, spec.score_covariance())
    }

    pub fn v(&self) -> &SymOp {
        &self.v
    }

    pub fn w_law(&self) -> &GaussianMeasure {
        &self.w_law
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }
}

/// Full and null parameter sets with a local direction for alternatives
/// `θ₀ + t/√n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisSpec {
    full_set: ConvexSet,
    null_set: ConvexSet,
    direction: HVec,
}

impl HypothesisSpec {
    /// Checks `null ⊆ full` on seeded probe points projected onto the null.
    pub fn new(full_set: ConvexSet, null_set: ConvexSet, direction: HVec) -> Result<Self> {
        check_dim(full_set.dim(), null_set.dim())?;
        check_dim(full_set.dim(), direction.dim())?;
        let dim = full_set.dim();
        let anchor = null_set.anchor();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0A11_5E75);
        for i in 0..64 {
            let scale = 10f64.powi(i % 4 - 1);
            let z = HVec::from_fn(dim, |k| anchor.as_slice()[k] + scale * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let p = null_set.project(&z)?;
            if !full_set.contains(&p) {
                return Err(Error::InvalidArgument(format!("null set point {:?} lies outside the full set", p.as_slice())));
            }
        }
        Ok(HypothesisSpec { full_set, null_set, direction })
    }

    pub fn full_set(&self) -> &ConvexSet {
        &self.full_set
    }

    pub fn null_set(&self) -> &ConvexSet {
        &self.null_set
    }

    pub fn direction(&self) -> &HVec {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.full_set.dim()
    }

    /// Both sets shifted by `v`.
    pub fn translated(&self, v: &HVec) -> Result<Self> {
        Ok(HypothesisSpec {
            full_set: self.full_set.translated(v)?,
            null_set: self.null_set.translated(v)?,
            direction: self.direction.clone(),
        })
    }
}

/// Tangent cones representable by the limit sampler.
#[derive(Clone, Debug, PartialEq)]
pub enum TangentCone {
    Whole,
    /// `{t : ⟨a, t⟩ ≤ 0}`.
    HalfSpace(HVec),
}

/// Tangent cone of `set` at `θ₀`.
pub fn tangent_cone(set: &ConvexSet, theta0: &HVec) -> Result<TangentCone> {
    check_dim(set.dim(), theta0.dim())?;
    if !set.contains(theta0) {
        return Err(Error::Domain("θ₀ lies outside the constraint set".into()));
    }
    if !set.on_boundary(theta0) {
        return Ok(TangentCone::Whole);
    }
    match set.kind() {
        SetKind::WholeSpace => Ok(TangentCone::Whole),
        SetKind::HalfSpace { normal, .. } => Ok(TangentCone::HalfSpace(normal.clone())),
        SetKind::Ball { .. } => Err(Error::Unsupported(
            "the tangent cone of a ball at a boundary point is not a half-space through θ₀ in the limit; \
             only interior points of a ball are supported"
                .into(),
        )),
    }
}

/// `H_n(θ, t) = n [F_n(θ + t/√n) − F_n(θ)]`, summed term by term.
pub fn lan_process(samples: &SampleSet, theta: &HVec, t: &HVec, penalty_weight: f64, form: PenaltyForm) -> Result<f64> {
    check_dim(samples.dim(), theta.dim())?;
    check_dim(samples.dim(), t.dim())?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let root = n.sqrt();
    let mut acc = 0.0;
    for o in samples.observations() {
        let r = o.y - o.x.dot(theta);
        let s = o.x.dot(t) / root;
        acc += (r - s).abs() - r.abs();
    }
    if penalty_weight > 0.0 {
        let pen = ConvexFunctional::norm_penalty(samples.dim(), penalty_weight, form)?;
        let moved = theta + &t.scale(1.0 / root);
        acc += n * (pen.eval(&moved)? - pen.eval(theta)?);
    }
    Ok(acc)
}

/// `Q₀(t) = ⟨t, W⟩ + ½⟨V t, t⟩`.
pub fn quadratic_limit_eval(lim: &LanLimit, w: &HVec, t: &HVec) -> Result<f64> {
    check_dim(lim.dim(), w.dim())?;
    check_dim(lim.dim(), t.dim())?;
    Ok(t.dot(w) + 0.5 * apply_op(&lim.v, t)?.dot(t))
}

/// Closed-form minimizer `−V⁻¹W` and minimum `−½⟨W, V⁻¹W⟩`.
pub fn quadratic_limit_argmin(lim: &LanLimit, w: &HVec) -> Result<(HVec, f64)> {
    check_dim(lim.dim(), w.dim())?;
    let s = solve_op(&lim.v, w, 0.0)?;
    let value = -0.5 * s.dot(w);
    Ok((-&s, value))
}

#[derive(Clone, Debug)]
pub struct MultiStart {
    pub minimizers: Vec<HVec>,
    /// Minimizer with the smallest value.
    pub best: HVec,
    /// Largest distance between any minimizer and `best`.
    pub spread: f64,
}

/// Minimizes `Q₀` numerically from `starts` seeded starting points.
pub fn quadratic_limit_minimize(lim: &LanLimit, w: &HVec, starts: usize, seed: u64) -> Result<MultiStart> {
    check_dim(lim.dim(), w.dim())?;
    if starts == 0 {
        return Err(Error::InvalidArgument("at least one start is needed".into()));
    }
    let dim = lim.dim();
    let f = ConvexFunctional::quadratic(lim.v.clone(), HVec::zeros(dim))?;
    let tilt = -w;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<(HVec, f64)> = Vec::with_capacity(starts);
    for _ in 0..starts {
        let start = HVec::from_fn(dim, |_| 10.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let opts = MinimizeOptions { start: Some(start), tol: 1e-14, max_iter: 1_000_000, ..Default::default() };
        let r = minimize(&f, Some(&tilt), None, &opts)?;
        if !r.converged {
            return Err(Error::Convergence { iterations: r.iterations, residual: f64::NAN });
        }
        found.push((r.theta, r.value));
    }
    let best = found.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0.clone()).expect("nonempty");
    let spread = found.iter().map(|(p, _)| p.distance(&best)).fold(0.0, f64::max);
    Ok(MultiStart { minimizers: found.into_iter().map(|p| p.0).collect(), best, spread })
}

/// `Λ_n = n [F_n(θ̂^{H₀}) − F_n(θ̂)]`, clipped at zero.
///
/// `opts` supplies the penalty and solver settings; its constraint is
/// replaced by the full and null sets in turn.
pub fn lr_statistic(samples: &SampleSet, hyp: &HypothesisSpec, theta0: &HVec, opts: &FitOptions) -> Result<f64> {
    check_dim(samples.dim(), hyp.dim())?;
    check_dim(samples.dim(), theta0.dim())?;
    let constrained = |set: &ConvexSet| {
        let mut o = opts.clone();
        o.constraint = (!set.is_whole()).then(|| set.clone());
        fit(samples, &o)
    };
    let full = constrained(&hyp.full_set)?;
    let null = if hyp.null_set == hyp.full_set { full.clone() } else { constrained(&hyp.null_set)? };
    if !full.converged || !null.converged {
        return Err(Error::FitFailed { full: Box::new(full), null: Box::new(null) });
    }
    let n = samples.len() as f64;
    Ok((n * (null.objective_value - full.objective_value)).max(0.0))
}

struct LimitCones {
    /// Normals of the transformed half-space cones, `None` for the whole
    /// space.
    null: Option<HVec>,
    full: Option<HVec>,
    shift: HVec,
    inv_sqrt: SymOp,
}

impl LimitCones {
    fn new(lim: &LanLimit, hyp: &HypothesisSpec, theta0: &HVec) -> Result<Self> {
        check_dim(lim.dim(), hyp.dim())?;
        let inv_sqrt = lim.v.inv_sqrt()?;
        let map = |c: TangentCone| -> Result<Option<HVec>> {
            Ok(match c {
                TangentCone::Whole => None,
                // V^{1/2}{⟨a, t⟩ ≤ 0} = {⟨V^{-1/2} a, s⟩ ≤ 0}.
                TangentCone::HalfSpace(a) => Some(apply_op(&inv_sqrt, &a)?),
            })
        };
        let null = map(tangent_cone(&hyp.null_set, theta0)?)?;
        let full = map(tangent_cone(&hyp.full_set, theta0)?)?;
        let shift = apply_op(&lim.v.sqrt(), &hyp.direction)?;
        Ok(LimitCones { null, full, shift, inv_sqrt })
    }

    fn draw(&self, w: &HVec) -> Result<f64> {
        let u = &self.shift - &apply_op(&self.inv_sqrt, w)?;
        let dist2 = |n: &Option<HVec>| match n {
            None => 0.0,
            Some(n) => u.dot(n).max(0.0).powi(2) / n.norm_squared(),
        };
        Ok(dist2(&self.null) - dist2(&self.full))
    }
}

/// Draws from the limit law of `Λ_n / κ` under `θ₀ + t/√n`:
/// `dist²(u, V^{1/2} T₀) − dist²(u, V^{1/2} T)` with
/// `u = V^{1/2} t − V^{-1/2} W`. (`W` is symmetric, so the sign in front of
/// it does not change the law; this one pairs each draw with the minimum
/// of `Q₀`.)
pub fn lr_limit_sampler(lim: &LanLimit, hyp: &HypothesisSpec, theta0: &HVec, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let cones = LimitCones::new(lim, hyp, theta0)?;
    lim.w_law.sample(draws, seed)?.iter().map(|w| cones.draw(w)).collect()
}

/// Exact CDF of the limit law when the full cone is the whole space.
pub fn lr_limit_cdf(lim: &LanLimit, hyp: &HypothesisSpec, theta0: &HVec) -> Result<Option<Box<dyn Fn(f64) -> f64>>> {
    let cones = LimitCones::new(lim, hyp, theta0)?;
    if cones.full.is_some() {
        return Ok(None);
    }
    let Some((m, s)) = null_projection_law(lim, &cones)? else {
        return Ok(Some(Box::new(|x| if x >= 0.0 { 1.0 } else { 0.0 })));
    };
    Ok(Some(Box::new(stats::positive_part_squared_cdf(m, s))))
}

/// Mean and standard deviation of `⟨n̂, u⟩` for the null cone normal.
fn null_projection_law(lim: &LanLimit, cones: &LimitCones) -> Result<Option<(f64, f64)>> {
    let Some(n) = &cones.null else { return Ok(None) };
    let nhat = n.scale(1.0 / n.norm());
    let m = nhat.dot(&cones.shift);
    let b = apply_op(&cones.inv_sqrt, &nhat)?;
    let s2 = apply_op(lim.w_law.covariance(), &b)?.dot(&b);
    Ok(Some((m, s2.max(0.0).sqrt())))
}

/// Scale `κ` relating `Λ_n` to the limit sampler, fitted by least squares
/// through the origin on paired draws at dimension one: full space versus
/// `{t ≤ 0}`, `V = A = 1`, with `inf Q₀` over each cone found by
/// golden-section search.
pub fn calibrate_lr_scale(draws: usize, seed: u64) -> Result<f64> {
    let one = SymOp::identity(1);
    let lim = LanLimit::new(one.clone(), one)?;
    let zero = HVec::zeros(1);
    let hyp = HypothesisSpec::new(ConvexSet::whole(1), ConvexSet::half_space(HVec::basis(1, 0), 0.0)?, zero.clone())?;
    let sampled = lr_limit_sampler(&lim, &hyp, &zero, draws, seed)?;
    let ws = lim.w_law.sample(draws, seed)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (w, s) in ws.iter().zip(&sampled) {
        let w = w.as_slice()[0];
        let q = |t: f64| t * w + 0.5 * t * t;
        let reach = w.abs() + 10.0;
        let brute = golden_min(&q, -reach, 0.0) - golden_min(&q, -reach, reach);
        num += brute * s;
        den += s * s;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("calibration draws are all zero; increase draws".into()));
    }
    Ok(num / den)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    [a, b, 0.5 * (a + b)].iter().map(|&t| f(t)).fold(f64::INFINITY, f64::min)
}

/// Replication output shared by the Monte Carlo harnesses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub replications: usize,
    /// One entry per replication; `NaN` marks a failed replication.
    pub statistics: Vec<f64>,
    pub summary: Summary,
    pub ks_distance: Option<f64>,
    pub variance_ratio: Option<f64>,
    /// Variance of the limit law when it is known in closed form.
    pub limit_variance: Option<f64>,
    pub failures: usize,
    pub seed: u64,
}

impl McReport {
    fn build(statistics: Vec<f64>, seed: u64, limit_cdf: Option<&dyn Fn(f64) -> f64>, limit_variance: Option<f64>) -> Self {
        let ok: Vec<f64> = statistics.iter().copied().filter(|v| v.is_finite()).collect();
        let summary = Summary::of(&ok);
        let ks_distance = limit_cdf.map(|cdf| stats::ks_distance(&ok, cdf));
        let variance_ratio = limit_variance.filter(|v| *v > 0.0).map(|v| summary.variance / v);
        McReport {
            replications: statistics.len(),
            failures: statistics.len() - ok.len(),
            statistics,
            summary,
            ks_distance,
            variance_ratio,
            limit_variance,
            seed,
        }
    }
}

/// Solver and execution settings for the harnesses. The penalty weight
/// used at sample size `n` is `penalty_c / √n`; `solver.penalty_weight` is
/// ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub solver: FitOptions,
    pub penalty_c: f64,
    pub exec: Execution,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { solver: FitOptions::default(), penalty_c: 0.0, exec: Execution::default() }
    }
}

impl McOptions {
    fn fit_options(&self, n: usize) -> FitOptions {
        let mut o = self.solver.clone();
        o.penalty_weight = penalty_schedule(self.penalty_c, n);
        o
    }
}

fn check_replications(replications: usize) -> Result<()> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_REPLICATIONS} replications are required, got {replications}"
        )));
    }
    Ok(())
}

/// Errors when more than 5% of `stats` are `NaN`.
pub fn check_failures(stats: &[f64]) -> Result<()> {
    let failed = stats.iter().filter(|v| !v.is_finite()).count();
    if failed as f64 > MAX_FAILURE_RATE * stats.len() as f64 {
        return Err(Error::TooManyFailures { failed, total: stats.len() });
    }
    Ok(())
}

/// Replicates simulate → fit and compares `√n⟨θ̂ − θ₀, θ*⟩` with its
/// normal limit of variance `⟨θ*, V⁻¹AV⁻¹θ*⟩`. More than 5% failed
/// replications is an error.
pub fn monte_carlo_lan(spec: &ModelSpec, probe: &HVec, replications: usize, seed: u64, opts: &McOptions) -> Result<McReport> {
    let report = run_lan_replications(spec, probe, replications, seed, opts)?;
    check_failures(&report.statistics)?;
    Ok(report)
}

/// [`monte_carlo_lan`] without the failure-rate check.
pub fn run_lan_replications(
    spec: &ModelSpec,
    probe: &HVec,
    replications: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<McReport> {
    spec.validate()?;
    check_dim(spec.dim(), probe.dim())?;
    check_replications(replications)?;
    let fo = opts.fit_options(spec.n);
    let root = (spec.n as f64).sqrt();
    let stats = opts.exec.map_indexed(replications, |r| {
        let samples = simulate_dataset(spec, derive_seed(seed, r as u64)).ok()?;
        let f = fit(&samples, &fo).ok().filter(|f| f.converged)?;
        Some(root * (&f.theta - &spec.theta0).dot(probe))
    });
    let stats: Vec<f64> = stats.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    let var = spec.limit_variance(probe)?;
    let cdf = stats::centered_normal_cdf(var.sqrt());
    Ok(McReport::build(stats, seed, Some(&cdf), Some(var)))
}

/// Loss used by [`monte_carlo_lan_quadraticity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `|y − ⟨x, θ⟩|`, compared against the closed-form `V`.
    Absolute,
    /// `½(y − ⟨x, θ⟩)²`, compared against its empirical Hessian, for which
    /// the expansion is exact.
    Squared,
}

/// Per replication, `sup_t |H_n(θ₀, t) − ⟨t, √n ∂F_n(θ₀)⟩ − ½⟨V t, t⟩|`
/// over `grid`.
pub fn monte_carlo_lan_quadraticity(
    spec: &ModelSpec,
    grid: &[HVec],
    replications: usize,
    seed: u64,
    loss: Loss,
    exec: Execution,
) -> Result<McReport> {
    spec.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("the t-grid is empty".into()));
    }
    for t in grid {
        check_dim(spec.dim(), t.dim())?;
    }
    check_replications(replications)?;
    let v = match loss {
        Loss::Absolute => Some(spec.generalized_hessian()?),
        Loss::Squared => None,
    };
    let stats = exec.map_indexed(replications, |r| -> Result<f64> {
        let samples = simulate_dataset(spec, derive_seed(seed, r as u64))?;
        let mut sup: f64 = 0.0;
        match loss {
            Loss::Absolute => {
                let score = score_clt_statistic(&samples, &spec.theta0, SelectorRule::Midpoint)?;
                let v = v.as_ref().expect("set for absolute loss");
                for t in grid {
                    let h = lan_process(&samples, &spec.theta0, t, 0.0, PenaltyForm::Norm)?;
                    let g = t.dot(&score) + 0.5 * apply_op(v, t)?.dot(t);
                    sup = sup.max((h - g).abs());
                }
            }
            Loss::Squared => {
                let n = samples.len() as f64;
                let root = n.sqrt();
                let dim = samples.dim();
                let mut score = vec![0.0; dim];
                let mut hess = nalgebra::DMatrix::<f64>::zeros(dim, dim);
                for o in samples.observations() {
                    let r = o.y - o.x.dot(&spec.theta0);
                    let x = o.x.as_dvector();
                    for k in 0..dim {
                        score[k] -= r * x[k] / root;
                    }
                    hess += x * x.transpose() / n;
                }
                for t in grid {
                    let mut h = 0.0;
                    for o in samples.observations() {
                        let r = o.y - o.x.dot(&spec.theta0);
                        let s = o.x.dot(t) / root;
                        h += 0.5 * ((r - s) * (r - s) - r * r);
                    }
                    let tv = t.as_dvector();
                    let g = crate::hilbert::dot(t.as_slice(), &score) + 0.5 * tv.dot(&(&hess * tv));
                    sup = sup.max((h - g).abs());
                }
            }
        }
        Ok(sup)
    });
    let stats: Vec<f64> = stats.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    check_failures(&stats)?;
    Ok(McReport::build(stats, seed, None, None))
}

/// Monte Carlo output for the likelihood-ratio statistic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrReport {
    /// Statistics are `Λ_n / κ`.
    #[serde(flatten)]
    pub report: McReport,
    /// Uncalibrated `Λ_n`, `NaN` for failed replications.
    pub raw: Vec<f64>,
    pub kappa: f64,
    /// Fraction of successful replications with `Λ_n ≤ ZERO_TOL`.
    pub mass_at_zero: f64,
    /// KS distance of the positive values to the limit law conditioned on
    /// being positive, when that law is known.
    pub ks_positive: Option<f64>,
}

/// Replicates `Λ_n` with data drawn at `θ₀ + t/√n`. More than 5% failed
/// replications is an error.
pub fn monte_carlo_lr(
    spec: &ModelSpec,
    hyp: &HypothesisSpec,
    replications: usize,
    seed: u64,
    kappa: f64,
    opts: &McOptions,
) -> Result<LrReport> {
    let report = run_lr_replications(spec, hyp, replications, seed, kappa, opts)?;
    check_failures(&report.raw)?;
    Ok(report)
}

/// [`monte_carlo_lr`] without the failure-rate check.
pub fn run_lr_replications(
    spec: &ModelSpec,
    hyp: &HypothesisSpec,
    replications: usize,
    seed: u64,
    kappa: f64,
    opts: &McOptions,
) -> Result<LrReport> {
    spec.validate()?;
    check_dim(spec.dim(), hyp.dim())?;
    check_replications(replications)?;
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("κ must be positive, got {kappa}")));
    }
    let root = (spec.n as f64).sqrt();
    let mut local = spec.clone();
    local.theta0 = &spec.theta0 + &hyp.direction.scale(1.0 / root);
    let fo = opts.fit_options(spec.n);
    let raw = opts.exec.map_indexed(replications, |r| {
        let samples = simulate_dataset(&local, derive_seed(seed, r as u64)).ok()?;
        lr_statistic(&samples, hyp, &spec.theta0, &fo).ok()
    });
    let raw: Vec<f64> = raw.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    let calibrated: Vec<f64> = raw.iter().map(|v| v / kappa).collect();

    let lim = LanLimit::from_model(spec)?;
    let cones = LimitCones::new(&lim, hyp, &spec.theta0)?;
    let exact = lr_limit_cdf(&lim, hyp, &spec.theta0)?;
    let ok: Vec<f64> = calibrated.iter().copied().filter(|v| v.is_finite()).collect();
    let zeros = ok.iter().filter(|v| **v <= ZERO_TOL).count();
    let mass_at_zero = zeros as f64 / ok.len().max(1) as f64;
    let ks_positive = match (&cones.full, null_projection_law(&lim, &cones)?) {
        (None, Some((m, s))) if s > 0.0 => {
            let pos: Vec<f64> = ok.iter().copied().filter(|v| *v > ZERO_TOL).collect();
            (!pos.is_empty()).then(|| stats::ks_distance(&pos, stats::positive_part_conditional_cdf(m, s)))
        }
        _ => None,
    };
    let report = McReport::build(calibrated, seed, exact.as_deref(), None);
    Ok(LrReport { report, raw, kappa, mass_at_zero, ks_positive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{Noise, Observation};

    fn v(c: &[f64]) -> HVec {
        HVec::new(c.to_vec()).unwrap()
    }

    #[test]
    fn lan_process_examples() {
        let s = SampleSet::new(1, vec![Observation { y: 0.0, x: v(&[1.0]) }]).unwrap();
        assert_eq!(lan_process(&s, &v(&[0.0]), &v(&[0.0]), 0.0, PenaltyForm::Norm).unwrap(), 0.0);
        assert_eq!(lan_process(&s, &v(&[0.0]), &v(&[1.0]), 0.0, PenaltyForm::Norm).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_limit_examples() {
        let lim = LanLimit::new(SymOp::identity(2), SymOp::identity(2)).unwrap();
        let w = v(&[2.0, 0.0]);
        assert_eq!(quadratic_limit_eval(&lim, &w, &HVec::zeros(2)).unwrap(), 0.0);
        let (t, m) = quadratic_limit_argmin(&lim, &w).unwrap();
        assert!(t.distance(&v(&[-2.0, 0.0])) < 1e-15);
        assert!((m + 2.0).abs() < 1e-15);
        let ms = quadratic_limit_minimize(&lim, &w, 2, 3).unwrap();
        assert!(ms.spread < 1e-8);
        assert!(ms.best.distance(&t) < 1e-8);
        assert!(LanLimit::new(SymOp::diagonal(&[1.0, 0.0]).unwrap(), SymOp::identity(2)).is_err());
    }

    #[test]
    fn tangent_cones() {
        let e1 = HVec::basis(2, 0);
        let hs = ConvexSet::half_space(e1.clone(), 0.0).unwrap();
        assert_eq!(tangent_cone(&hs, &HVec::zeros(2)).unwrap(), TangentCone::HalfSpace(e1.clone()));
        assert_eq!(tangent_cone(&hs, &v(&[-1.0, 0.0])).unwrap(), TangentCone::Whole);
        assert!(tangent_cone(&hs, &v(&[1.0, 0.0])).is_err());
        let ball = ConvexSet::ball(1.0, HVec::zeros(2)).unwrap();
        assert_eq!(tangent_cone(&ball, &HVec::zeros(2)).unwrap(), TangentCone::Whole);
        assert!(matches!(tangent_cone(&ball, &e1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn limit_sampler_examples() {
        let one = SymOp::identity(1);
        let lim = LanLimit::new(one.clone(), one).unwrap();
        let z = HVec::zeros(1);
        let whole = ConvexSet::whole(1);
        let same = HypothesisSpec::new(whole.clone(), whole.clone(), z.clone()).unwrap();
        assert!(lr_limit_sampler(&lim, &same, &z, 100, 1).unwrap().iter().all(|&d| d == 0.0));
        let half = ConvexSet::half_space(HVec::basis(1, 0), 0.0).unwrap();
        let hyp = HypothesisSpec::new(whole, half, z.clone()).unwrap();
        let draws = lr_limit_sampler(&lim, &hyp, &z, 20_000, 2).unwrap();
        assert!(draws.iter().all(|&d| d >= 0.0));
        let zero_mass = draws.iter().filter(|&&d| d == 0.0).count() as f64 / draws.len() as f64;
        assert!((zero_mass - 0.5).abs() < 0.02);
        let cdf = lr_limit_cdf(&lim, &hyp, &z).unwrap().unwrap();
        assert!(stats::ks_distance(&draws, cdf) < 0.015);
    }

    #[test]
    fn calibration_is_one_half() {
        let k = calibrate_lr_scale(2000, 9).unwrap();
        assert!((k - 0.5).abs() < 1e-9, "{k}");
    }

    #[test]
    fn hypothesis_requires_nesting() {
        let z = HVec::zeros(2);
        let ball = ConvexSet::ball(1.0, z.clone()).unwrap();
        let half = ConvexSet::half_space(HVec::basis(2, 0), 0.0).unwrap();
        assert!(HypothesisSpec::new(ball, half, z).is_err());
    }

    #[test]
    fn identical_sets_give_zero() {
        let spec = ModelSpec::standard(v(&[0.5, -0.5]), Noise::Laplace { scale: 1.0 }, 200);
        let s = simulate_dataset(&spec, 4).unwrap();
        let half = ConvexSet::half_space(HVec::basis(2, 0), 0.5).unwrap();
        let hyp = HypothesisSpec::new(half.clone(), half, HVec::zeros(2)).unwrap();
        assert_eq!(lr_statistic(&s, &hyp, &spec.theta0, &FitOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn zero_probe_gives_zero_statistics() {
        let spec = ModelSpec::standard(v(&[0.5, -0.5]), Noise::Laplace { scale: 1.0 }, 100);
        let r = monte_carlo_lan(&spec, &HVec::zeros(2), 50, 1, &McOptions::default()).unwrap();
        assert!(r.statistics.iter().all(|&s| s == 0.0));
        assert_eq!(r.variance_ratio, None);
        assert_eq!(r.ks_distance, Some(0.0));
    }

    #[test]
    fn squared_loss_expansion_is_exact() {
        let spec = ModelSpec::standard(v(&[0.5, -0.5, 1.0]), Noise::Gaussian { sigma: 1.0 }, 300);
        let grid: Vec<HVec> = (0..3).map(|k| HVec::basis(3, k)).chain([HVec::zeros(3)]).collect();
        let r = monte_carlo_lan_quadraticity(&spec, &grid, 50, 2, Loss::Squared, Execution::Sequential).unwrap();
        assert!(r.summary.quantiles.iter().all(|(_, q)| *q < 1e-9), "{:?}", r.summary);
    }
}
