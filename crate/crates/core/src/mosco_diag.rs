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

//! Numerical surrogates for Mosco convergence: the graph metric `d_G`,
//! resolvent probes, conjugates, second difference quotients and
//! generalized Hessians.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::estimation::{minimize, MinimizeOptions};
use crate::functional::{ConvexFunctional, ConvexSet, SelectorRule};
use crate::hilbert::{apply_op, HVec, SymOp};
use crate::par::Execution;

pub const DEFAULT_BASIS_POINTS: usize = 16;
pub const DEFAULT_RANDOM_POINTS: usize = 16;
pub const DEFAULT_FAMILY_SEED: u64 = 0x5EED_0FD6;
pub const DEFAULT_LAMBDA0: f64 = 1.0;
pub const DEFAULT_SEARCH_RADIUS: f64 = 1e3;

/// Finite stand-in for a dense subset, with the resolvent parameter `λ₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFamily {
    points: Vec<HVec>,
    lambda0: f64,
}

impl DenseFamily {
    pub fn new(points: Vec<HVec>, lambda0: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("dense family needs at least one point".into()));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ₀ must be positive, got {lambda0}")));
        }
        let dim = points[0].dim();
        for (i, p) in points.iter().enumerate() {
            check_dim(dim, p.dim())?;
            if points[..i].contains(p) {
                return Err(Error::InvalidArgument(format!("dense family point {i} is repeated")));
            }
        }
        Ok(DenseFamily { points, lambda0 })
    }

    /// The first `k` coordinate vectors.
    pub fn basis(dim: usize, k: usize, lambda0: f64) -> Result<Self> {
        if k > dim {
            return Err(Error::InvalidArgument(format!("{k} basis vectors requested in dimension {dim}")));
        }
        Self::new((0..k).map(|i| HVec::basis(dim, i)).collect(), lambda0)
    }

    /// `basis` coordinate vectors followed by `random` seeded unit vectors.
    pub fn with_random(dim: usize, basis: usize, random: usize, seed: u64, lambda0: f64) -> Result<Self> {
        let mut points: Vec<HVec> = (0..basis.min(dim)).map(|i| HVec::basis(dim, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while points.len() < basis.min(dim) + random {
            let g = HVec::from_fn(dim, |_| StandardNormal.sample(&mut rng));
            let n = g.norm();
            if n > 1e-12 {
                let u = g.scale(1.0 / n);
                if !points.contains(&u) {
                    points.push(u);
                }
            }
        }
        Self::new(points, lambda0)
    }

    /// Default family: up to 16 coordinate vectors plus 16 random unit
    /// vectors, `λ₀ = 1`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::with_random(dim, DEFAULT_BASIS_POINTS, DEFAULT_RANDOM_POINTS, DEFAULT_FAMILY_SEED, DEFAULT_LAMBDA0)
    }

    pub fn points(&self) -> &[HVec] {
        &self.points
    }

    /// Number of retained terms `K`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Bound `2^{-K}` on the discarded tail of the series.
    pub fn tail_bound(&self) -> f64 {
        0.5f64.powi(self.len() as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GraphDistance {
    pub value: f64,
    pub tail_bound: f64,
}

/// Truncated `d_G(∂f, ∂g) = Σ_k 2^{-k} min(1, ‖J^f θ_k − J^g θ_k‖)`.
pub fn mosco_distance(f: &ConvexFunctional, g: &ConvexFunctional, fam: &DenseFamily) -> Result<GraphDistance> {
    mosco_distance_with(f, g, fam, Execution::default())
}

pub fn mosco_distance_with(
    f: &ConvexFunctional,
    g: &ConvexFunctional,
    fam: &DenseFamily,
    exec: Execution,
) -> Result<GraphDistance> {
    check_dim(f.dim(), g.dim())?;
    check_dim(f.dim(), fam.dim())?;
    let lambda = fam.lambda0();
    let gaps = exec.map_slice(fam.points(), |p| -> Result<f64> {
        if f == g {
            return Ok(0.0);
        }
        Ok(f.prox(lambda, p)?.distance(&g.prox(lambda, p)?))
    });
    let mut value = 0.0;
    let mut w = 1.0;
    for gap in gaps {
        w *= 0.5;
        value += w * gap?.min(1.0);
    }
    Ok(GraphDistance { value, tail_bound: fam.tail_bound() })
}

/// `table[n][p] = ‖J_λ^{∂f_n} θ_p − J_λ^{∂f} θ_p‖`.
pub fn resolvent_convergence_probe(
    seq: &[ConvexFunctional],
    limit: &ConvexFunctional,
    probes: &[HVec],
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    resolvent_convergence_probe_with(seq, limit, probes, lambda, Execution::default())
}

pub fn resolvent_convergence_probe_with(
    seq: &[ConvexFunctional],
    limit: &ConvexFunctional,
    probes: &[HVec],
    lambda: f64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
    }
    for f in seq {
        check_dim(limit.dim(), f.dim())?;
    }
    for p in probes {
        check_dim(limit.dim(), p.dim())?;
    }
    let targets: Vec<HVec> = exec.map_slice(probes, |p| limit.prox(lambda, p)).into_iter().collect::<Result<_>>()?;
    exec.map_slice(seq, |f| {
        probes
            .iter()
            .zip(&targets)
            .map(|(p, t)| if f == limit { Ok(0.0) } else { Ok(f.prox(lambda, p)?.distance(t)) })
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect()
}

/// `|⟨argmin f_n − argmin f, h⟩|` for each member of `seq` and each probe
/// `h`, where every functional carries the same linear tilt `−⟨tilt, ·⟩`.
pub fn argmin_convergence_probe(
    seq: &[ConvexFunctional],
    limit: &ConvexFunctional,
    tilt: &HVec,
    probes: &[HVec],
) -> Result<Vec<Vec<f64>>> {
    let opts = MinimizeOptions::default();
    let solve = |f: &ConvexFunctional| -> Result<HVec> {
        let r = minimize(f, Some(tilt), None, &opts)?;
        if !r.converged {
            return Err(Error::Convergence { iterations: r.iterations, residual: f64::NAN });
        }
        Ok(r.theta)
    };
    let target = solve(limit)?;
    seq.iter()
        .map(|f| {
            let a = solve(f)?;
            let d = &a - &target;
            probes.iter().map(|h| crate::hilbert::inner(&d, h).map(f64::abs)).collect()
        })
        .collect()
}

/// `f*(η) = sup_θ ⟨η, θ⟩ − f(θ)`, maximized over the ball of
/// `search_radius` around the origin.
///
/// A maximizer on the search boundary means the supremum may be larger
/// (or infinite); that is reported as [`Error::SearchBoundary`].
pub fn conjugate_eval(f: &ConvexFunctional, eta: &HVec, search_radius: f64) -> Result<f64> {
    check_dim(f.dim(), eta.dim())?;
    if !(search_radius > 0.0) {
        return Err(Error::InvalidArgument(format!("search radius must be positive, got {search_radius}")));
    }
    let ball = ConvexSet::ball(search_radius, HVec::zeros(f.dim()))?;
    let r = minimize(f, Some(eta), Some(&ball), &MinimizeOptions::default())?;
    let value = -r.value;
    if r.theta.norm() >= search_radius * (1.0 - 1e-6) {
        return Err(Error::SearchBoundary { radius: search_radius, value });
    }
    if !r.converged {
        return Err(Error::Convergence { iterations: r.iterations, residual: f64::NAN });
    }
    Ok(value)
}

/// `Δ(h) = (f(θ + t h) − f(θ) − t⟨η, h⟩) / t²`.
///
/// `η` is first checked against the subgradient inequality on coordinate
/// probes around `θ` and along `h`.
pub fn second_difference_quotient(f: &ConvexFunctional, theta: &HVec, eta: &HVec, t: f64, h: &HVec) -> Result<f64> {
    check_dim(f.dim(), theta.dim())?;
    check_dim(f.dim(), eta.dim())?;
    check_dim(f.dim(), h.dim())?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let f0 = f.eval(theta)?;
    if !f0.is_finite() {
        return Err(Error::Domain("θ is outside the domain of f".into()));
    }
    verify_subgradient(f, theta, eta, f0, h)?;
    let ft = f.eval(&(theta + &h.scale(t)))?;
    if ft == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok((ft - f0 - t * eta.dot(h)) / (t * t))
}

fn verify_subgradient(f: &ConvexFunctional, theta: &HVec, eta: &HVec, f0: f64, h: &HVec) -> Result<()> {
    let dim = f.dim();
    let mut dirs: Vec<HVec> = (0..dim).map(|k| HVec::basis(dim, k)).collect();
    if !h.is_zero() {
        dirs.push(h.scale(1.0 / h.norm()));
    }
    for d in &dirs {
        for s in [1e-3, 1e-1, 1.0] {
            for sign in [1.0, -1.0] {
                let step = d.scale(sign * s);
                let z = theta + &step;
                let fz = f.eval(&z)?;
                let bound = f0 + eta.dot(&step);
                if fz < bound - 1e-9 * (1.0 + f0.abs() + bound.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "η is not a subgradient at θ: f(θ+δ) = {fz} < {bound}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Step schedule `k_n = 2^{-n}`, `n = 3..=10`.
pub fn default_steps() -> Vec<f64> {
    (3..=10).map(|n| 0.5f64.powi(n)).collect()
}

#[derive(Clone, Debug)]
pub struct HessianEstimate {
    pub op: SymOp,
    /// Operator norm of `(V̂ − V̂ᵀ)/2` before symmetrization.
    pub asymmetry: f64,
    /// Extrapolated columns `V̂h` before assembly.
    pub columns: Vec<HVec>,
}

/// Estimates the generalized Hessian at `θ̂` from a subgradient oracle.
///
/// For each direction `h` the difference quotients
/// `(F(θ̂ + k h) − F(θ̂)) / k` are formed along `steps` and extrapolated
/// to `k = 0` through the last three. The columns are mapped back through
/// the pseudo-inverse of the direction matrix and symmetrized.
pub fn estimate_generalized_hessian<F>(oracle: F, theta_hat: &HVec, steps: &[f64], directions: &[HVec]) -> Result<HessianEstimate>
where
    F: Fn(&HVec) -> Result<HVec>,
{
    let dim = theta_hat.dim();
    if steps.len() < 3 {
        return Err(Error::InvalidArgument("at least three steps are needed for extrapolation".into()));
    }
    if steps.iter().any(|k| !(*k > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("steps must be positive and strictly decreasing".into()));
    }
    for h in directions {
        check_dim(dim, h.dim())?;
    }
    let hmat = DMatrix::from_fn(dim, directions.len(), |i, j| directions[j].as_slice()[i]);
    if directions.len() < dim || hmat.rank(1e-10) < dim {
        return Err(Error::InvalidArgument("directions must span the space".into()));
    }
    let base = oracle(theta_hat)?;
    check_dim(dim, base.dim())?;

    let mut columns = Vec::with_capacity(directions.len());
    for (j, h) in directions.iter().enumerate() {
        let mut quotients = Vec::with_capacity(steps.len());
        for &k in steps {
            let g = oracle(&(theta_hat + &h.scale(k)))?;
            check_dim(dim, g.dim())?;
            quotients.push((&g - &base).scale(1.0 / k));
        }
        check_monotone(&quotients, j)?;
        let m = steps.len();
        columns.push(extrapolate_to_zero(&steps[m - 3..], &quotients[m - 3..]));
    }

    let cmat = DMatrix::from_fn(dim, directions.len(), |i, j| columns[j].as_slice()[i]);
    let pinv = hmat
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(format!("direction pseudo-inverse failed: {e}")))?;
    let raw = cmat * pinv;
    let skew = (&raw - raw.transpose()) * 0.5;
    let asymmetry = skew.singular_values().max();
    let op = SymOp::symmetrized(&raw)?;
    Ok(HessianEstimate { op, asymmetry, columns })
}

/// Relative growth allowed between successive quotient increments. Smooth
/// oracles can wobble at this level while the steps are still comparable to
/// their curvature scale; jumps push the increments up like `1/k`.
const SETTLE_TOL: f64 = 1e-2;

fn check_monotone(q: &[HVec], direction: usize) -> Result<()> {
    let scale = q.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let tol = SETTLE_TOL * scale;
    let inc: Vec<f64> = q.windows(2).map(|w| w[1].distance(&w[0])).collect();
    for (i, w) in inc.windows(2).enumerate() {
        if w[1] > w[0] + tol {
            return Err(Error::Instability(format!(
                "difference quotients along direction {direction} are not settling \
                 (increment {:.3e} after {:.3e} at step {}); use a larger sample or a smoother oracle",
                w[1],
                w[0],
                i + 2
            )));
        }
    }
    Ok(())
}

/// Value at zero of the quadratic through `(k_i, q_i)`.
fn extrapolate_to_zero(k: &[f64], q: &[HVec]) -> HVec {
    let dim = q[0].dim();
    let mut out = HVec::zeros(dim);
    for i in 0..k.len() {
        let mut w = 1.0;
        for j in 0..k.len() {
            if i != j {
                w *= k[j] / (k[j] - k[i]);
            }
        }
        out = &out + &q[i].scale(w);
    }
    out
}

#[derive(Clone, Debug)]
pub struct DualityReport {
    /// Second-difference Hessian of `f*` at `η = ∇f(θ)`.
    pub conjugate_hessian: DMatrix<f64>,
    pub inverse: SymOp,
    /// `‖∇²f* − V⁻¹‖ / ‖V⁻¹‖` in operator norm.
    pub relative_error: f64,
}

/// Compares the numerical Hessian of `f*` at `∇f(θ)` with `V⁻¹`.
pub fn hessian_duality_check(v: &SymOp, f: &ConvexFunctional, theta: &HVec, radius: f64) -> Result<DualityReport> {
    check_dim(v.dim(), f.dim())?;
    check_dim(v.dim(), theta.dim())?;
    let inverse = v.inverse()?;
    let (eta, _) = f.subgradient(theta, SelectorRule::Midpoint)?;
    let dim = v.dim();
    let s = 1e-2 * eta.norm().max(1.0);
    let conj = |shift: &[(usize, f64)]| -> Result<f64> {
        let mut e = eta.to_vec();
        for &(i, c) in shift {
            e[i] += c;
        }
        conjugate_eval(f, &HVec::new(e)?, radius)
    };
    let c0 = conj(&[])?;
    let mut hess = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        hess[(i, i)] = (conj(&[(i, s)])? - 2.0 * c0 + conj(&[(i, -s)])?) / (s * s);
        for j in 0..i {
            let pp = conj(&[(i, s), (j, s)])?;
            let pm = conj(&[(i, s), (j, -s)])?;
            let mp = conj(&[(i, -s), (j, s)])?;
            let mm = conj(&[(i, -s), (j, -s)])?;
            let hij = (pp - pm - mp + mm) / (4.0 * s * s);
            hess[(i, j)] = hij;
            hess[(j, i)] = hij;
        }
    }
    let diff = &hess - inverse.entries();
    let relative_error = diff.singular_values().max() / inverse.operator_norm();
    Ok(DualityReport { conjugate_hessian: hess, inverse, relative_error })
}

/// Purely quadratic form `q(h) = ½⟨V h, h⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    op: SymOp,
}

impl QuadraticForm {
    pub fn new(op: SymOp) -> Self {
        QuadraticForm { op }
    }

    pub fn op(&self) -> &SymOp {
        &self.op
    }

    pub fn eval(&self, h: &HVec) -> Result<f64> {
        Ok(0.5 * apply_op(&self.op, h)?.dot(h))
    }

    pub fn to_functional(&self) -> ConvexFunctional {
        ConvexFunctional::quadratic(self.op.clone(), HVec::zeros(self.op.dim())).expect("dimensions agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::PenaltyForm;

    fn v(c: &[f64]) -> HVec {
        HVec::new(c.to_vec()).unwrap()
    }

    fn quad(op: SymOp) -> ConvexFunctional {
        let d = op.dim();
        ConvexFunctional::quadratic(op, HVec::zeros(d)).unwrap()
    }

    #[test]
    fn family_invariants() {
        let fam = DenseFamily::standard(4).unwrap();
        assert_eq!(fam.len(), 4 + 16);
        assert_eq!(fam.lambda0(), 1.0);
        assert_eq!(DenseFamily::standard(4).unwrap(), fam);
        assert_eq!(DenseFamily::standard(32).unwrap().len(), 32);
        assert!(DenseFamily::new(vec![v(&[1.0]), v(&[1.0])], 1.0).is_err());
        assert!(DenseFamily::new(vec![v(&[1.0])], 0.0).is_err());
        assert_eq!(DenseFamily::basis(16, 16, 1.0).unwrap().tail_bound(), 2f64.powi(-16));
    }

    #[test]
    fn distance_examples() {
        let fam = DenseFamily::basis(10, 10, 1.0).unwrap();
        let f = quad(SymOp::identity(10));
        let g = ConvexFunctional::zero(10);
        let d = mosco_distance(&f, &g, &fam).unwrap();
        assert!((d.value - 0.5 * (1.0 - 2f64.powi(-10))).abs() < 1e-12);
        assert_eq!(mosco_distance(&f, &f, &fam).unwrap().value, 0.0);
        assert_eq!(d.value, mosco_distance(&g, &f, &fam).unwrap().value);
        let h = ConvexFunctional::norm_penalty(10, 50.0, PenaltyForm::Norm).unwrap();
        assert!(mosco_distance(&h, &g, &fam).unwrap().value <= 1.0);
    }

    #[test]
    fn projection_family_resolvents() {
        let dim = 6;
        let seq: Vec<_> = (1..=dim + 2).map(|n| quad(SymOp::projection(dim, n).scaled(2.0).unwrap())).collect();
        let limit = quad(SymOp::identity(dim).scaled(2.0).unwrap());
        let probe = HVec::from_fn(dim, |k| 0.5f64.powi(k as i32));
        let table = resolvent_convergence_probe(&seq, &limit, &[probe.clone()], 1.0).unwrap();
        for n in 1..seq.len() {
            if n < dim {
                assert!(table[n][0] < table[n - 1][0]);
            }
        }
        for row in &table[dim - 1..] {
            assert_eq!(row[0], 0.0);
        }
        // Closed form: (I + 2π_n)⁻¹θ differs from θ/3 by (2/3) of the tail.
        let tail: f64 = (2..dim).map(|k| 0.25f64.powi(k as i32)).sum::<f64>().sqrt();
        assert!((table[1][0] - 2.0 / 3.0 * tail).abs() < 1e-14);
        let constant = vec![limit.clone(); 3];
        let zeros = resolvent_convergence_probe(&constant, &limit, &[probe], 1.0).unwrap();
        assert!(zeros.iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn conjugate_examples() {
        let f = quad(SymOp::identity(2));
        assert!((conjugate_eval(&f, &v(&[1.0, 0.0]), 1e3).unwrap() - 0.5).abs() < 1e-9);
        let ball = ConvexFunctional::indicator(ConvexSet::ball(1.0, HVec::zeros(2)).unwrap());
        assert!((conjugate_eval(&ball, &v(&[0.0, 2.0]), 1e3).unwrap() - 2.0).abs() < 1e-9);
        let abs = ConvexFunctional::abs_residual(0.0, v(&[1.0])).unwrap();
        assert!(conjugate_eval(&abs, &v(&[0.5]), 1e3).unwrap().abs() < 1e-9);
        assert!(matches!(conjugate_eval(&abs, &v(&[1.5]), 1e3), Err(Error::SearchBoundary { .. })));
    }

    #[test]
    fn second_difference_examples() {
        let op = SymOp::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let f = quad(op.clone());
        let h = v(&[0.3, -1.2]);
        let q = QuadraticForm::new(op).eval(&h).unwrap();
        for t in default_steps() {
            let d = second_difference_quotient(&f, &HVec::zeros(2), &HVec::zeros(2), t, &h).unwrap();
            assert_eq!(d, q);
        }
        let abs = ConvexFunctional::abs_residual(0.0, v(&[1.0, 0.0])).unwrap();
        let d = second_difference_quotient(&abs, &v(&[0.0, 1.0]), &HVec::zeros(2), 0.1, &v(&[1.0, 0.0])).unwrap();
        assert!((d - 10.0).abs() < 1e-12);
        // Not a subgradient.
        assert!(second_difference_quotient(&f, &HVec::zeros(2), &v(&[1.0, 0.0]), 0.1, &h).is_err());
        let ind = ConvexFunctional::indicator(ConvexSet::ball(1.0, HVec::zeros(2)).unwrap());
        let d = second_difference_quotient(&ind, &HVec::zeros(2), &HVec::zeros(2), 5.0, &v(&[1.0, 0.0])).unwrap();
        assert_eq!(d, f64::INFINITY);
    }

    #[test]
    fn linear_oracle_recovers_operator() {
        let op = SymOp::from_rows(&[vec![3.0, 1.0, 0.0], vec![1.0, 2.0, 0.5], vec![0.0, 0.5, 1.0]]).unwrap();
        let dirs: Vec<HVec> = (0..3).map(|k| HVec::basis(3, k)).collect();
        let est = estimate_generalized_hessian(|t| apply_op(&op, t), &v(&[0.1, 0.2, 0.3]), &default_steps(), &dirs).unwrap();
        assert!((est.op.entries() - op.entries()).abs().max() < 1e-12);
        assert!(est.asymmetry < 1e-12);
    }

    #[test]
    fn rough_oracle_is_flagged() {
        // A jump at the base point keeps the quotients from settling.
        let oracle = |t: &HVec| Ok(HVec::from_fn(1, |_| if t.as_slice()[0] > 0.0 { 1.0 } else { 0.0 }));
        let err = estimate_generalized_hessian(oracle, &v(&[0.0]), &default_steps(), &[v(&[1.0])]).unwrap_err();
        assert!(matches!(err, Error::Instability(_)));
    }

    #[test]
    fn duality_examples() {
        let f = quad(SymOp::diagonal(&[2.0, 4.0]).unwrap());
        let rep = hessian_duality_check(&SymOp::diagonal(&[2.0, 4.0]).unwrap(), &f, &v(&[0.3, -0.2]), 1e3).unwrap();
        assert!(rep.relative_error <= 5e-3, "{rep:?}");
        let id = quad(SymOp::identity(2));
        let rep = hessian_duality_check(&SymOp::identity(2), &id, &v(&[0.1, 0.1]), 1e3).unwrap();
        assert!(rep.relative_error <= 5e-3);
        let near = SymOp::diagonal(&[1.0, 1e-10]).unwrap();
        assert!(hessian_duality_check(&near, &quad(near.clone()), &v(&[0.0, 0.0]), 1e3).is_err());
    }

    #[test]
    fn argmin_diagnostic_reaches_limit() {
        let dim = 4;
        let c = v(&[1.0, -1.0, 0.5, 2.0]);
        let seq: Vec<_> = (1..=dim)
            .map(|n| {
                let p = SymOp::projection(dim, n);
                let rest = (SymOp::identity(dim).entries() - p.entries()) / (n + 1) as f64;
                let op = SymOp::new(p.entries() + rest).unwrap();
                ConvexFunctional::quadratic(op, c.clone()).unwrap()
            })
            .collect();
        let limit = ConvexFunctional::quadratic(SymOp::identity(dim), c).unwrap();
        let tilt = v(&[0.2, 0.0, -0.1, 0.3]);
        let probes: Vec<HVec> = (0..dim).map(|k| HVec::basis(dim, k)).collect();
        let table = argmin_convergence_probe(&seq, &limit, &tilt, &probes).unwrap();
        assert!(table[dim - 1].iter().all(|&d| d <= 1e-6), "{table:?}");
        assert!(table[0].iter().any(|&d| d > 1e-3));
    }
}
