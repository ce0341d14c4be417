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

//! Proper lower semicontinuous convex functionals on the truncated space.
//!
//! Every built-in kind has a closed-form proximal map except sums of several
//! terms, whose resolvent is computed by consensus splitting over the
//! members' closed forms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimation::SampleSet;
use crate::hilbert::{dot, HVec, SymOp};
use crate::seed::derive_seed;
use crate::splitting::{consensus_douglas_rachford, Control, Relaxation, SplitConfig};

/// A residual `|r|` with `|r| ≤ KINK_TOL · max(1, |y|)` sits on the kink.
pub const KINK_TOL: f64 = 1e-9;

/// Relative slack for set membership and boundary tests.
pub const SET_TOL: f64 = 1e-10;

/// Stopping tolerance of the inner splitting loop for sums.
pub const SUM_PROX_TOL: f64 = 1e-9;
pub const SUM_PROX_MAX_ITER: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyForm {
    /// `(w/2)‖θ‖`
    #[default]
    Norm,
    /// `(w/2)‖θ‖²`
    SquaredNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SetKind {
    Ball { radius: f64, center: HVec },
    /// `{θ : ⟨normal, θ⟩ ≤ offset}`
    HalfSpace { normal: HVec, offset: f64 },
    WholeSpace,
}

/// Closed convex constraint set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexSet {
    kind: SetKind,
    dim: usize,
}

impl ConvexSet {
    pub fn ball(radius: f64, center: HVec) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        let dim = center.dim();
        Ok(ConvexSet { kind: SetKind::Ball { radius, center }, dim })
    }

    pub fn half_space(normal: HVec, offset: f64) -> Result<Self> {
        if normal.is_zero() {
            return Err(Error::InvalidArgument("half-space normal must be nonzero".into()));
        }
        if !offset.is_finite() {
            return Err(Error::NonFinite("half-space offset"));
        }
        let dim = normal.dim();
        Ok(ConvexSet { kind: SetKind::HalfSpace { normal, offset }, dim })
    }

    pub fn whole(dim: usize) -> Self {
        assert!(dim > 0);
        ConvexSet { kind: SetKind::WholeSpace, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn is_whole(&self) -> bool {
        matches!(self.kind, SetKind::WholeSpace)
    }

    /// A point known to lie in the set.
    pub fn anchor(&self) -> HVec {
        match &self.kind {
            SetKind::Ball { center, .. } => center.clone(),
            SetKind::HalfSpace { normal, offset } => normal.scale(offset / normal.norm_squared()),
            SetKind::WholeSpace => HVec::zeros(self.dim),
        }
    }

    /// Signed distance to the boundary (negative inside); `-∞` for the
    /// whole space.
    pub(crate) fn signed_distance(&self, v: &[f64]) -> f64 {
        match &self.kind {
            SetKind::Ball { radius, center } => {
                let d2: f64 = v.iter().zip(center.as_slice()).map(|(a, c)| (a - c) * (a - c)).sum();
                d2.sqrt() - radius
            }
            SetKind::HalfSpace { normal, offset } => (dot(normal.as_slice(), v) - offset) / normal.norm(),
            SetKind::WholeSpace => f64::NEG_INFINITY,
        }
    }

    fn slack_tol(v: &[f64]) -> f64 {
        SET_TOL * v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0)
    }

    pub fn contains(&self, v: &HVec) -> bool {
        v.dim() == self.dim && self.contains_slice(v.as_slice())
    }

    pub(crate) fn contains_slice(&self, v: &[f64]) -> bool {
        self.signed_distance(v) <= Self::slack_tol(v)
    }

    pub fn on_boundary(&self, v: &HVec) -> bool {
        self.on_boundary_slice(v.as_slice())
    }

    pub(crate) fn on_boundary_slice(&self, v: &[f64]) -> bool {
        self.signed_distance(v).abs() <= Self::slack_tol(v)
    }

    /// Unit outward normal at a boundary point.
    pub(crate) fn outward_normal(&self, v: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            SetKind::Ball { center, .. } => {
                let d: Vec<f64> = v.iter().zip(center.as_slice()).map(|(a, c)| a - c).collect();
                let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                (n > 0.0).then(|| d.iter().map(|x| x / n).collect())
            }
            SetKind::HalfSpace { normal, .. } => {
                let n = normal.norm();
                Some(normal.as_slice().iter().map(|x| x / n).collect())
            }
            SetKind::WholeSpace => None,
        }
    }

    /// The set shifted by `v`.
    pub fn translated(&self, v: &HVec) -> Result<Self> {
        check_dim(self.dim, v.dim())?;
        Ok(match &self.kind {
            SetKind::Ball { radius, center } => ConvexSet::ball(*radius, center + v)?,
            SetKind::HalfSpace { normal, offset } => ConvexSet::half_space(normal.clone(), offset + normal.dot(v))?,
            SetKind::WholeSpace => self.clone(),
        })
    }

    /// Metric projection.
    pub fn project(&self, v: &HVec) -> Result<HVec> {
        check_dim(self.dim, v.dim())?;
        let mut out = v.to_vec();
        self.project_slice(&mut out);
        Ok(HVec::from_slice(&out))
    }

    pub(crate) fn project_slice(&self, v: &mut [f64]) {
        match &self.kind {
            SetKind::Ball { radius, center } => {
                let c = center.as_slice();
                let d2: f64 = v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = d2.sqrt();
                if d > *radius {
                    let s = radius / d;
                    for (a, b) in v.iter_mut().zip(c) {
                        *a = b + (*a - b) * s;
                    }
                }
            }
            SetKind::HalfSpace { normal, offset } => {
                let a = normal.as_slice();
                let excess = dot(a, v) - offset;
                if excess > 0.0 {
                    let s = excess / normal.norm_squared();
                    for (x, ai) in v.iter_mut().zip(a) {
                        *x -= s * ai;
                    }
                }
            }
            SetKind::WholeSpace => {}
        }
    }
}

/// Which element of a set-valued subdifferential to return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectorRule {
    #[default]
    Midpoint,
    Lower,
    Upper,
    Random { seed: u64 },
}

impl SelectorRule {
    /// Coefficient in `[−1, 1]` selecting from the interval `[−1, 1]`.
    pub(crate) fn interval(&self, salt: u64) -> f64 {
        match self {
            SelectorRule::Midpoint => 0.0,
            SelectorRule::Lower => -1.0,
            SelectorRule::Upper => 1.0,
            SelectorRule::Random { seed } => {
                ChaCha8Rng::seed_from_u64(derive_seed(*seed, salt)).random_range(-1.0..=1.0)
            }
        }
    }

    /// Multiplier in `[0, 1]` scaling the unit outward normal of a cone.
    pub(crate) fn cone(&self, salt: u64) -> f64 {
        match self {
            SelectorRule::Midpoint | SelectorRule::Lower => 0.0,
            SelectorRule::Upper => 1.0,
            SelectorRule::Random { seed } => {
                ChaCha8Rng::seed_from_u64(derive_seed(*seed, salt)).random_range(0.0..=1.0)
            }
        }
    }

    /// Element of the closed unit ball.
    pub(crate) fn ball(&self, dim: usize, salt: u64) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        match self {
            SelectorRule::Midpoint => {}
            SelectorRule::Lower => out[0] = -1.0,
            SelectorRule::Upper => out[0] = 1.0,
            SelectorRule::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, salt));
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
                let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
                let r: f64 = rng.random_range(0.0..=1.0);
                if n > 0.0 {
                    out.iter_mut().for_each(|o| *o *= r / n);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionalKind {
    /// `|y − ⟨x, θ⟩|`
    AbsResidual { y: f64, x: HVec },
    NormPenalty { weight: f64, form: PenaltyForm },
    Indicator(ConvexSet),
    /// `½⟨op(θ − center), θ − center⟩`
    Quadratic { op: SymOp, center: HVec },
    /// `Σ c_j f_j`; the empty sum is the zero functional.
    ScaledSum(Vec<(f64, ConvexFunctional)>),
}

/// Evaluable proper l.s.c. convex functional.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexFunctional {
    kind: FunctionalKind,
    dim: usize,
}

impl ConvexFunctional {
    pub fn abs_residual(y: f64, x: HVec) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::NonFinite("response"));
        }
        let dim = x.dim();
        Ok(ConvexFunctional { kind: FunctionalKind::AbsResidual { y, x }, dim })
    }

    pub fn norm_penalty(dim: usize, weight: f64, form: PenaltyForm) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("penalty weight must be nonnegative, got {weight}")));
        }
        assert!(dim > 0);
        Ok(ConvexFunctional { kind: FunctionalKind::NormPenalty { weight, form }, dim })
    }

    pub fn indicator(set: ConvexSet) -> Self {
        let dim = set.dim();
        ConvexFunctional { kind: FunctionalKind::Indicator(set), dim }
    }

    pub fn quadratic(op: SymOp, center: HVec) -> Result<Self> {
        check_dim(op.dim(), center.dim())?;
        let dim = op.dim();
        Ok(ConvexFunctional { kind: FunctionalKind::Quadratic { op, center }, dim })
    }

    pub fn scaled_sum(dim: usize, terms: Vec<(f64, ConvexFunctional)>) -> Result<Self> {
        assert!(dim > 0);
        for (c, f) in &terms {
            if !(*c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("sum coefficients must be nonnegative, got {c}")));
            }
            check_dim(dim, f.dim)?;
        }
        Ok(ConvexFunctional { kind: FunctionalKind::ScaledSum(terms), dim })
    }

    pub fn zero(dim: usize) -> Self {
        ConvexFunctional { kind: FunctionalKind::ScaledSum(Vec::new()), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// `self + c·other` as a flat sum.
    pub fn plus(&self, c: f64, other: ConvexFunctional) -> Result<Self> {
        let mut terms = match &self.kind {
            FunctionalKind::ScaledSum(t) => t.clone(),
            _ => vec![(1.0, self.clone())],
        };
        terms.push((c, other));
        Self::scaled_sum(self.dim, terms)
    }

    pub fn eval(&self, theta: &HVec) -> Result<f64> {
        check_dim(self.dim, theta.dim())?;
        Ok(self.eval_slice(theta.as_slice()))
    }

    pub(crate) fn eval_slice(&self, t: &[f64]) -> f64 {
        match &self.kind {
            FunctionalKind::AbsResidual { y, x } => (y - dot(x.as_slice(), t)).abs(),
            FunctionalKind::NormPenalty { weight, form } => {
                let sq: f64 = t.iter().map(|v| v * v).sum();
                match form {
                    PenaltyForm::Norm => 0.5 * weight * sq.sqrt(),
                    PenaltyForm::SquaredNorm => 0.5 * weight * sq,
                }
            }
            FunctionalKind::Indicator(set) => {
                if set.contains_slice(t) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::Quadratic { op, center } => {
                let d: Vec<f64> = t.iter().zip(center.as_slice()).map(|(a, c)| a - c).collect();
                let mut acc = 0.0;
                for i in 0..d.len() {
                    let mut row = 0.0;
                    for j in 0..d.len() {
                        row += op.get(i, j) * d[j];
                    }
                    acc += d[i] * row;
                }
                0.5 * acc
            }
            FunctionalKind::ScaledSum(terms) => terms
                .iter()
                .filter(|(c, _)| *c > 0.0)
                .map(|(c, f)| c * f.eval_slice(t))
                .sum(),
        }
    }

    /// A rule-selected subgradient and whether `θ` sits at a point where the
    /// subdifferential is not a singleton.
    pub fn subgradient(&self, theta: &HVec, rule: SelectorRule) -> Result<(HVec, bool)> {
        check_dim(self.dim, theta.dim())?;
        let mut g = vec![0.0; self.dim];
        let kink = self.subgradient_into(theta.as_slice(), rule, 0, 1.0, &mut g)?;
        Ok((HVec::from_slice(&g), kink))
    }

    /// Adds `scale · g` to `out`; `salt` distinguishes members for the
    /// random rule.
    fn subgradient_into(&self, t: &[f64], rule: SelectorRule, salt: u64, scale: f64, out: &mut [f64]) -> Result<bool> {
        match &self.kind {
            FunctionalKind::AbsResidual { y, x } => {
                let r = y - dot(x.as_slice(), t);
                let (s, kink) = if r.abs() <= KINK_TOL * y.abs().max(1.0) {
                    (rule.interval(salt), true)
                } else {
                    (r.signum(), false)
                };
                // ∂|y − ⟨x,θ⟩| = −sgn(r)·x, with sgn(0) = [−1, 1].
                for (o, xi) in out.iter_mut().zip(x.as_slice()) {
                    *o -= scale * s * xi;
                }
                Ok(kink)
            }
            FunctionalKind::NormPenalty { weight, form } => {
                let nrm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                match form {
                    PenaltyForm::SquaredNorm => {
                        for (o, v) in out.iter_mut().zip(t) {
                            *o += scale * weight * v;
                        }
                        Ok(false)
                    }
                    PenaltyForm::Norm if nrm > 0.0 => {
                        for (o, v) in out.iter_mut().zip(t) {
                            *o += scale * 0.5 * weight * v / nrm;
                        }
                        Ok(false)
                    }
                    PenaltyForm::Norm => {
                        let b = rule.ball(t.len(), salt);
                        for (o, v) in out.iter_mut().zip(b) {
                            *o += scale * 0.5 * weight * v;
                        }
                        Ok(*weight > 0.0)
                    }
                }
            }
            FunctionalKind::Indicator(set) => {
                if !set.contains_slice(t) {
                    return Err(Error::Domain(format!(
                        "point lies outside the constraint set (signed distance {:e})",
                        set.signed_distance(t)
                    )));
                }
                if set.on_boundary_slice(t) {
                    if let Some(n) = set.outward_normal(t) {
                        let mu = rule.cone(salt);
                        for (o, ni) in out.iter_mut().zip(n) {
                            *o += scale * mu * ni;
                        }
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            FunctionalKind::Quadratic { op, center } => {
                let d: Vec<f64> = t.iter().zip(center.as_slice()).map(|(a, c)| a - c).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut row = 0.0;
                    for (j, dj) in d.iter().enumerate() {
                        row += op.get(i, j) * dj;
                    }
                    *o += scale * row;
                }
                Ok(false)
            }
            FunctionalKind::ScaledSum(terms) => {
                let mut kink = false;
                let mut member = vec![0.0; t.len()];
                for (j, (c, f)) in terms.iter().enumerate() {
                    if *c > 0.0 {
                        member.iter_mut().for_each(|m| *m = 0.0);
                        kink |= f.subgradient_into(t, rule, derive_seed(salt, j as u64), 1.0, &mut member)?;
                        let w = scale * c;
                        for (o, m) in out.iter_mut().zip(&member) {
                            *o += w * m;
                        }
                    }
                }
                Ok(kink)
            }
        }
    }

    /// Resolvent `J_λ = (I + λ∂f)^{-1}`, i.e. the minimizer of
    /// `f(z) + ‖z − θ‖²/(2λ)`.
    pub fn prox(&self, lambda: f64, theta: &HVec) -> Result<HVec> {
        check_dim(self.dim, theta.dim())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("prox step must be positive, got {lambda}")));
        }
        let mut v = theta.to_vec();
        self.prox_slice(lambda, &mut v)?;
        Ok(HVec::from_slice(&v))
    }

    pub(crate) fn prox_slice(&self, step: f64, v: &mut [f64]) -> Result<()> {
        match &self.kind {
            FunctionalKind::AbsResidual { y, x } => {
                abs_residual_prox(*y, x.as_slice(), x.norm_squared(), step, v);
                Ok(())
            }
            FunctionalKind::NormPenalty { weight, form } => {
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
                Ok(())
            }
            FunctionalKind::Indicator(set) => {
                set.project_slice(v);
                Ok(())
            }
            FunctionalKind::Quadratic { op, center } => {
                quadratic_prox(&[(1.0, op, center)], step, v);
                Ok(())
            }
            FunctionalKind::ScaledSum(terms) => sum_prox(self.dim, terms, step, v),
        }
    }
}

/// Residual soft-threshold along `x`.
#[inline]
pub(crate) fn abs_residual_prox(y: f64, x: &[f64], xnorm2: f64, step: f64, v: &mut [f64]) {
    if xnorm2 == 0.0 {
        return;
    }
    let r = y - dot(x, v);
    let tau = if r.abs() <= step * xnorm2 { r / xnorm2 } else { step * r.signum() };
    for (a, xi) in v.iter_mut().zip(x) {
        *a += tau * xi;
    }
}

/// Prox of `Σ c_j ½⟨V_j(θ−m_j), θ−m_j⟩`: solves
/// `(I + λ Σ c_j V_j) z = v + λ Σ c_j V_j m_j`.
fn quadratic_prox(terms: &[(f64, &SymOp, &HVec)], step: f64, v: &mut [f64]) {
    let dim = v.len();
    let mut m = DMatrix::<f64>::identity(dim, dim);
    let mut rhs = nalgebra::DVector::from_column_slice(v);
    for (c, op, center) in terms {
        m += op.entries() * (step * c);
        rhs += op.entries() * center.as_dvector() * (step * c);
    }
    let z = m.cholesky().expect("I + λV is positive definite").solve(&rhs);
    v.copy_from_slice(z.as_slice());
}

fn sum_prox(dim: usize, terms: &[(f64, ConvexFunctional)], lambda: f64, v: &mut [f64]) -> Result<()> {
    let active: Vec<(f64, &ConvexFunctional)> =
        terms.iter().filter(|(c, _)| *c > 0.0).map(|(c, f)| (*c, f)).collect();
    match active.len() {
        0 => return Ok(()),
        1 => return active[0].1.prox_slice(active[0].0 * lambda, v),
        _ => {}
    }
    let quads: Option<Vec<(f64, &SymOp, &HVec)>> = active
        .iter()
        .map(|(c, f)| match &f.kind {
            FunctionalKind::Quadratic { op, center } => Some((*c, op, center)),
            _ => None,
        })
        .collect();
    if let Some(q) = quads {
        quadratic_prox(&q, lambda, v);
        return Ok(());
    }

    // Split the proximity term evenly: g_j(z) = c_j f_j(z) + ‖z − θ‖²/(2λm).
    // With step γ = λm, prox_{γ g_j}(u) = prox_{(λm/2) c_j f_j}((θ + u)/2).
    let m = active.len();
    let theta = v.to_vec();
    let gamma = lambda * m as f64;
    let cfg = SplitConfig {
        step: gamma,
        tol: SUM_PROX_TOL,
        max_iter: SUM_PROX_MAX_ITER,
        relaxation: Relaxation::NONE,
    };
    debug_assert_eq!(theta.len(), dim);
    let out = consensus_douglas_rachford(
        m,
        &theta,
        cfg,
        |j, step, u| {
            for (ui, ti) in u.iter_mut().zip(&theta) {
                *ui = 0.5 * (*ui + ti);
            }
            let (c, f) = active[j];
            f.prox_slice(0.5 * step * c, u)
        },
        |_, _| Control::Continue,
    )?;
    if !out.converged {
        return Err(Error::Convergence { iterations: out.iterations, residual: out.last_change });
    }
    v.copy_from_slice(&out.point);
    // The consensus point is only feasible up to the stopping tolerance;
    // land it inside any constraint so the value stays finite.
    for (_, f) in &active {
        if let FunctionalKind::Indicator(set) = &f.kind {
            set.project_slice(v);
        }
    }
    Ok(())
}

/// `F_n(θ) = (1/n) Σ |y_i − ⟨x_i, θ⟩| + penalty(θ)`.
pub fn empirical_objective(samples: &SampleSet, penalty_weight: f64, form: PenaltyForm) -> Result<ConvexFunctional> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let dim = samples.dim();
    let w = 1.0 / samples.len() as f64;
    let mut terms = Vec::with_capacity(samples.len() + 1);
    for obs in samples.observations() {
        terms.push((w, ConvexFunctional::abs_residual(obs.y, obs.x.clone())?));
    }
    terms.push((1.0, ConvexFunctional::norm_penalty(dim, penalty_weight, form)?));
    ConvexFunctional::scaled_sum(dim, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> HVec {
        HVec::new(c.to_vec()).unwrap()
    }

    fn e(dim: usize, k: usize) -> HVec {
        HVec::basis(dim, k)
    }

    #[test]
    fn eval_examples() {
        let f = ConvexFunctional::abs_residual(1.0, e(2, 0)).unwrap();
        assert_eq!(f.eval(&HVec::zeros(2)).unwrap(), 1.0);

        let ball = ConvexFunctional::indicator(ConvexSet::ball(1.0, HVec::zeros(2)).unwrap());
        assert_eq!(ball.eval(&v(&[0.0, 2.0])).unwrap(), f64::INFINITY);
        assert_eq!(ball.eval(&v(&[0.6, 0.8])).unwrap(), 0.0);

        let pen = ConvexFunctional::norm_penalty(2, 2.0, PenaltyForm::Norm).unwrap();
        assert_eq!(pen.eval(&v(&[3.0, 4.0])).unwrap(), 5.0);
        let pen2 = ConvexFunctional::norm_penalty(2, 2.0, PenaltyForm::SquaredNorm).unwrap();
        assert_eq!(pen2.eval(&v(&[3.0, 4.0])).unwrap(), 25.0);

        assert!(f.eval(&HVec::zeros(3)).is_err());
    }

    #[test]
    fn abs_residual_subgradients() {
        // Residual 1 > 0: the derivative of |1 − θ₁| is −e₁.
        let f = ConvexFunctional::abs_residual(1.0, e(2, 0)).unwrap();
        let (g, kink) = f.subgradient(&HVec::zeros(2), SelectorRule::Midpoint).unwrap();
        assert_eq!(g, v(&[-1.0, 0.0]));
        assert!(!kink);

        let f = ConvexFunctional::abs_residual(0.0, e(2, 0)).unwrap();
        let (g, kink) = f.subgradient(&HVec::zeros(2), SelectorRule::Midpoint).unwrap();
        assert!(g.is_zero());
        assert!(kink);
        let (lo, _) = f.subgradient(&HVec::zeros(2), SelectorRule::Lower).unwrap();
        let (hi, _) = f.subgradient(&HVec::zeros(2), SelectorRule::Upper).unwrap();
        assert_eq!(lo, v(&[1.0, 0.0]));
        assert_eq!(hi, v(&[-1.0, 0.0]));
        let (r1, _) = f.subgradient(&HVec::zeros(2), SelectorRule::Random { seed: 9 }).unwrap();
        let (r2, _) = f.subgradient(&HVec::zeros(2), SelectorRule::Random { seed: 9 }).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.as_slice()[0].abs() <= 1.0);
    }

    #[test]
    fn quadratic_subgradient_matches_finite_differences() {
        let f = ConvexFunctional::quadratic(SymOp::identity(2), HVec::zeros(2)).unwrap();
        let theta = v(&[1.0, 2.0]);
        let (g, kink) = f.subgradient(&theta, SelectorRule::Midpoint).unwrap();
        assert_eq!(g, theta);
        assert!(!kink);
        let h = 1e-6;
        for k in 0..2 {
            let step = e(2, k).scale(h);
            let fd = (f.eval(&(&theta + &step)).unwrap() - f.eval(&(&theta - &step)).unwrap()) / (2.0 * h);
            assert!((fd - g.as_slice()[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn indicator_subgradients() {
        let set = ConvexSet::half_space(e(2, 0), 0.0).unwrap();
        let f = ConvexFunctional::indicator(set);
        let (g, kink) = f.subgradient(&v(&[0.0, 3.0]), SelectorRule::Midpoint).unwrap();
        assert!(g.is_zero() && kink);
        let (g, _) = f.subgradient(&v(&[0.0, 3.0]), SelectorRule::Upper).unwrap();
        assert_eq!(g, v(&[1.0, 0.0]));
        let (g, kink) = f.subgradient(&v(&[-1.0, 3.0]), SelectorRule::Upper).unwrap();
        assert!(g.is_zero() && !kink);
        assert!(matches!(f.subgradient(&v(&[1.0, 0.0]), SelectorRule::Midpoint), Err(Error::Domain(_))));
    }

    #[test]
    fn prox_examples() {
        let q = ConvexFunctional::quadratic(SymOp::identity(2), HVec::zeros(2)).unwrap();
        assert!(q.prox(1.0, &v(&[2.0, 0.0])).unwrap().distance(&v(&[1.0, 0.0])) < 1e-15);

        let a = ConvexFunctional::abs_residual(0.0, e(2, 0)).unwrap();
        assert_eq!(a.prox(1.0, &v(&[0.3, 0.0])).unwrap(), v(&[0.0, 0.0]));
        let z = a.prox(1.0, &v(&[3.0, 0.5])).unwrap();
        assert_eq!(z, v(&[2.0, 0.5]));

        let ball = ConvexFunctional::indicator(ConvexSet::ball(1.0, HVec::zeros(2)).unwrap());
        for lambda in [0.1, 1.0, 50.0] {
            let z = ball.prox(lambda, &v(&[3.0, 4.0])).unwrap();
            assert!((z.as_slice()[0] - 0.6).abs() < 1e-15 && (z.as_slice()[1] - 0.8).abs() < 1e-15);
        }

        let pen = ConvexFunctional::norm_penalty(2, 2.0, PenaltyForm::Norm).unwrap();
        assert_eq!(pen.prox(1.0, &v(&[0.6, 0.8])).unwrap(), v(&[0.0, 0.0]));
        let z = pen.prox(1.0, &v(&[3.0, 4.0])).unwrap();
        assert!((z.as_slice()[0] - 2.4).abs() < 1e-15);

        assert!(q.prox(0.0, &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn sum_prox_matches_optimality() {
        let dim = 2;
        let f = ConvexFunctional::scaled_sum(
            dim,
            vec![
                (0.5, ConvexFunctional::abs_residual(1.0, v(&[1.0, 1.0])).unwrap()),
                (0.5, ConvexFunctional::abs_residual(-2.0, v(&[1.0, -1.0])).unwrap()),
                (1.0, ConvexFunctional::norm_penalty(dim, 0.4, PenaltyForm::Norm).unwrap()),
            ],
        )
        .unwrap();
        let theta = v(&[2.0, -1.0]);
        let lambda = 0.7;
        let z = f.prox(lambda, &theta).unwrap();
        let g = (&theta - &z).scale(1.0 / lambda);
        let fz = f.eval(&z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let zeta = HVec::from_fn(dim, |_| rng.random_range(-3.0..3.0));
            let lhs = f.eval(&zeta).unwrap();
            assert!(lhs >= fz + (&zeta - &z).dot(&g) - 1e-7);
        }
    }

    #[test]
    fn set_projection_and_containment() {
        let h = ConvexSet::half_space(v(&[1.0, 2.0]), 1.0).unwrap();
        let p = h.project(&v(&[5.0, 5.0])).unwrap();
        assert!(h.contains(&p) && h.on_boundary(&p));
        assert_eq!(h.project(&v(&[-5.0, 0.0])).unwrap(), v(&[-5.0, 0.0]));
        assert!(ConvexSet::half_space(HVec::zeros(2), 1.0).is_err());
        assert!(ConvexSet::ball(0.0, HVec::zeros(2)).is_err());
        let w = ConvexSet::whole(3);
        assert!(w.contains(&v(&[1e300, 0.0, 0.0])));
        assert!(h.contains(&h.anchor()));
    }

    #[test]
    fn distributive_law_is_exact() {
        let dim = 3;
        let members = vec![
            (0.3, ConvexFunctional::abs_residual(0.0, v(&[1.0, 0.0, 0.0])).unwrap()),
            (2.0, ConvexFunctional::norm_penalty(dim, 1.0, PenaltyForm::Norm).unwrap()),
            (1.5, ConvexFunctional::quadratic(SymOp::diagonal(&[1.0, 2.0, 3.0]).unwrap(), v(&[1.0, 1.0, 1.0])).unwrap()),
        ];
        let f = ConvexFunctional::scaled_sum(dim, members.clone()).unwrap();
        for theta in [v(&[0.0, 1.0, 2.0]), HVec::zeros(3), v(&[0.5, -1.0, 0.0])] {
            for rule in [SelectorRule::Midpoint, SelectorRule::Lower, SelectorRule::Upper] {
                let (g, _) = f.subgradient(&theta, rule).unwrap();
                let mut sum = HVec::zeros(dim);
                for (c, m) in &members {
                    sum = &sum + &m.subgradient(&theta, rule).unwrap().0.scale(*c);
                }
                assert_eq!(g, sum);
            }
        }
    }
}
