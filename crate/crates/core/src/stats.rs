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

//! Summary statistics and one-sample goodness of fit.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Probabilities reported by [`Summary`].
pub const REPORT_PROBS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance; zero for fewer than two values.
    pub variance: f64,
    /// `(p, q_p)` pairs at [`REPORT_PROBS`].
    pub quantiles: Vec<(f64, f64)>,
}

impl Summary {
    /// Summarizes the finite entries of `values`.
    pub fn of(values: &[f64]) -> Summary {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        Summary {
            count: v.len(),
            mean: mean(&v),
            variance: variance(&v),
            quantiles: REPORT_PROBS.iter().map(|&p| (p, quantile_sorted(&v, p))).collect(),
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Kolmogorov–Smirnov distance `sup_x |F̂(x) − F(x)|`. `cdf` must be
/// right-continuous; atoms are handled by evaluating just left of each
/// sample point.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        let below = cdf_left(&cdf, v[i]);
        d = d.max((f - (j + 1) as f64 / n).abs()).max((below - i as f64 / n).abs());
        i = j + 1;
    }
    d
}

fn cdf_left(cdf: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let below = if x == 0.0 { -f64::MIN_POSITIVE } else { x - x.abs() * 1e-15 };
    cdf(below)
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// CDF of `N(0, σ²)`; `σ = 0` gives the point mass at zero.
pub fn centered_normal_cdf(sigma: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        if sigma > 0.0 {
            normal_cdf(x / sigma)
        } else if x >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// CDF of `(Z ∨ 0)²` with `Z ~ N(m, s²)`.
pub fn positive_part_squared_cdf(m: f64, s: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        if x < 0.0 {
            0.0
        } else if s > 0.0 {
            normal_cdf((x.sqrt() - m) / s)
        } else if m <= 0.0 || m * m <= x {
            1.0
        } else {
            0.0
        }
    }
}

/// CDF of `(Z ∨ 0)²` given that it is positive, `Z ~ N(m, s²)`, `s > 0`.
pub fn positive_part_conditional_cdf(m: f64, s: f64) -> impl Fn(f64) -> f64 {
    let p0 = normal_cdf(-m / s);
    move |x| {
        if x <= 0.0 {
            0.0
        } else {
            ((normal_cdf((x.sqrt() - m) / s) - p0) / (1.0 - p0)).clamp(0.0, 1.0)
        }
    }
}

/// CDF of `W²` for standard normal `W`: the law of `(W ∨ 0)²` given that
/// it is positive.
pub fn chi_square1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 * normal_cdf(x.sqrt()) - 1.0
    }
}
