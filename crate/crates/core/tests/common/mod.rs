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

#![allow(dead_code)]

use mosco::{ConvexFunctional, ConvexSet, HVec, PenaltyForm, SymOp};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [&str; 9] =
    ["zero", "quadratic", "abs-residual", "norm", "squared-norm", "ball", "half-space", "whole", "sum"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vector(rng: &mut impl Rng, dim: usize, scale: f64) -> HVec {
    HVec::from_fn(dim, |_| rng.random_range(-scale..scale))
}

pub fn psd(rng: &mut impl Rng, dim: usize) -> SymOp {
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    SymOp::symmetrized(&(&b * b.transpose())).unwrap()
}

pub fn pd(rng: &mut impl Rng, dim: usize) -> SymOp {
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    SymOp::symmetrized(&(&b * b.transpose() + DMatrix::identity(dim, dim) * 0.5)).unwrap()
}

fn set(rng: &mut impl Rng, kind: &str, dim: usize) -> ConvexSet {
    match kind {
        "ball" => ConvexSet::ball(rng.random_range(0.5..2.0), vector(rng, dim, 1.0)).unwrap(),
        "half-space" => {
            let mut a = vector(rng, dim, 1.0);
            if a.norm() < 1e-3 {
                a = HVec::basis(dim, 0);
            }
            ConvexSet::half_space(a, rng.random_range(-1.0..1.0)).unwrap()
        }
        _ => ConvexSet::whole(dim),
    }
}

/// A random member of the named kind together with a set containing its
/// effective domain (the whole space for finite functionals).
pub fn functional(rng: &mut impl Rng, kind: &str, dim: usize) -> (ConvexFunctional, ConvexSet) {
    let whole = ConvexSet::whole(dim);
    match kind {
        "zero" => (ConvexFunctional::zero(dim), whole),
        "quadratic" => (ConvexFunctional::quadratic(psd(rng, dim), vector(rng, dim, 1.0)).unwrap(), whole),
        "abs-residual" => {
            let x = vector(rng, dim, 1.0);
            (ConvexFunctional::abs_residual(rng.random_range(-1.0..1.0), x).unwrap(), whole)
        }
        "norm" => (ConvexFunctional::norm_penalty(dim, rng.random_range(0.0..2.0), PenaltyForm::Norm).unwrap(), whole),
        "squared-norm" => (
            ConvexFunctional::norm_penalty(dim, rng.random_range(0.0..2.0), PenaltyForm::SquaredNorm).unwrap(),
            whole,
        ),
        "ball" | "half-space" | "whole" => {
            let s = set(rng, kind, dim);
            (ConvexFunctional::indicator(s.clone()), s)
        }
        "sum" => {
            let which = if rng.random_bool(0.5) { "ball" } else { "half-space" };
            let s = set(rng, which, dim);
            let mut terms = vec![(1.0, ConvexFunctional::indicator(s.clone()))];
            for _ in 0..3 {
                let x = vector(rng, dim, 1.0);
                terms.push((rng.random_range(0.1..1.0), ConvexFunctional::abs_residual(rng.random_range(-1.0..1.0), x).unwrap()));
            }
            terms.push((1.0, ConvexFunctional::quadratic(psd(rng, dim), vector(rng, dim, 1.0)).unwrap()));
            terms.push((0.5, ConvexFunctional::norm_penalty(dim, 1.0, PenaltyForm::Norm).unwrap()));
            (ConvexFunctional::scaled_sum(dim, terms).unwrap(), s)
        }
        other => panic!("unknown kind {other}"),
    }
}

/// A point of `set`, sometimes placed exactly on its boundary.
pub fn point_in(rng: &mut impl Rng, set: &ConvexSet, dim: usize) -> HVec {
    let v = vector(rng, dim, 3.0);
    set.project(&v).unwrap()
}

/// Minimizes a strongly convex `obj` over the box `center ± radius` (dim ≤
/// 3): a grid of step `radius/40`, nested grids refined tenfold down to step
/// 1e-3, then a random-direction pattern search, which can slide along curved
/// constraint boundaries where coordinate moves stall.
pub fn grid_minimize(obj: impl Fn(&HVec) -> f64, center: &HVec, radius: f64) -> HVec {
    let dim = center.dim();
    assert!(dim <= 3);
    let mut best = center.clone();
    let mut best_val = obj(&best);
    let mut half = radius;
    let mut step = radius / 40.0;
    while step >= 1e-3 {
        let m = (half / step).round() as i64;
        let c = best.clone();
        let mut idx = vec![-m; dim];
        loop {
            let p = HVec::from_fn(dim, |k| c.as_slice()[k] + idx[k] as f64 * step);
            let v = obj(&p);
            if v < best_val {
                best_val = v;
                best = p;
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] <= m {
                    break;
                }
                idx[k] = -m;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        half = 2.0 * step;
        step /= 10.0;
    }
    // Fresh directions every sweep; the scale only shrinks after a run of
    // failed sweeps, since near a curved boundary the improving directions
    // form a thin band.
    let mut r = rng(0x5eed);
    let mut s = 1e-2;
    let mut misses = 0;
    while s > 1e-9 {
        let mut moved = false;
        for _ in 0..64 * dim {
            let d = vector(&mut r, dim, 1.0);
            let p = &best + &d.scale(s / d.norm().max(1e-12));
            let v = obj(&p);
            if v < best_val {
                best_val = v;
                best = p;
                moved = true;
            }
        }
        misses = if moved { 0 } else { misses + 1 };
        if misses == 20 {
            s /= 2.0;
            misses = 0;
        }
    }
    best
}
