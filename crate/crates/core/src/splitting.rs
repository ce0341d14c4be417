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

//! Product-space consensus Douglas–Rachford splitting.
//!
//! Minimizes `Σ_j f_j(θ)` given only the proximal maps of the `f_j`. Each
//! term owns a copy `z_j`; the consensus point is their average. All state
//! is local to a call.

use crate::error::Result;

/// Relaxation schedule `ρ_k = 1 + (initial − 1) / (1 + k / half_life)`,
/// diminishing towards plain Douglas–Rachford.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation {
    pub initial: f64,
    pub half_life: f64,
}

impl Relaxation {
    pub const NONE: Relaxation = Relaxation { initial: 1.0, half_life: 1.0 };

    pub fn at(&self, k: usize) -> f64 {
        1.0 + (self.initial - 1.0) / (1.0 + k as f64 / self.half_life)
    }
}

impl Default for Relaxation {
    fn default() -> Self {
        Relaxation { initial: 1.5, half_life: 200.0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SplitConfig {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: Relaxation,
}

pub(crate) enum Control {
    Continue,
    Stop,
}

#[derive(Debug)]
pub(crate) struct SplitOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// Root-mean-square gap `‖prox_j − x̄‖` of the last iteration.
    pub last_change: f64,
    pub converged: bool,
    pub stopped: bool,
}

/// Runs the splitting loop.
///
/// `prox(j, step, v)` must overwrite `v` with `prox_{step·f_j}(v)`.
/// `monitor(k, x̄)` is called after every iteration and may stop the loop
/// early; `stopped` is then set in the outcome.
pub(crate) fn consensus_douglas_rachford<P, M>(
    terms: usize,
    init: &[f64],
    cfg: SplitConfig,
    mut prox: P,
    mut monitor: M,
) -> Result<SplitOutcome>
where
    P: FnMut(usize, f64, &mut [f64]) -> Result<()>,
    M: FnMut(usize, &[f64]) -> Control,
{
    let dim = init.len();
    assert!(terms > 0 && dim > 0);
    let mut z = Vec::with_capacity(terms * dim);
    for _ in 0..terms {
        z.extend_from_slice(init);
    }
    let mut xbar = init.to_vec();
    let mut next_sum = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let inv_m = 1.0 / terms as f64;
    let mut last_change = f64::INFINITY;

    for k in 0..cfg.max_iter {
        let rho = cfg.relaxation.at(k);
        next_sum.iter_mut().for_each(|s| *s = 0.0);
        let mut change_sq = 0.0;
        for (j, zj) in z.chunks_exact_mut(dim).enumerate() {
            for i in 0..dim {
                buf[i] = 2.0 * xbar[i] - zj[i];
            }
            prox(j, cfg.step, &mut buf)?;
            for i in 0..dim {
                let gap = buf[i] - xbar[i];
                change_sq += gap * gap;
                zj[i] += rho * gap;
                next_sum[i] += zj[i];
            }
        }
        let mut norm_sq = 0.0;
        for i in 0..dim {
            let next = next_sum[i] * inv_m;
            norm_sq += next * next;
            xbar[i] = next;
        }
        last_change = (change_sq * inv_m).sqrt();
        let converged = last_change <= cfg.tol * norm_sq.sqrt().max(1.0);
        if let Control::Stop = monitor(k + 1, &xbar) {
            return Ok(SplitOutcome { point: xbar, iterations: k + 1, last_change, converged, stopped: true });
        }
        if converged {
            return Ok(SplitOutcome { point: xbar, iterations: k + 1, last_change, converged: true, stopped: false });
        }
    }
    Ok(SplitOutcome {
        point: xbar,
        iterations: cfg.max_iter,
        last_change,
        converged: false,
        stopped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxation_diminishes_to_one() {
        let r = Relaxation::default();
        assert_eq!(r.at(0), 1.5);
        assert!(r.at(100) < r.at(10));
        assert!((r.at(1_000_000) - 1.0).abs() < 1e-3);
        assert_eq!(Relaxation::NONE.at(7), 1.0);
    }

    #[test]
    fn averages_two_quadratics() {
        // f_1 = ½(θ−1)², f_2 = ½(θ+3)²: minimizer −1.
        let centers = [1.0, -3.0];
        let cfg = SplitConfig { step: 1.0, tol: 1e-13, max_iter: 10_000, relaxation: Relaxation::default() };
        let out = consensus_douglas_rachford(
            2,
            &[10.0],
            cfg,
            |j, step, v| {
                v[0] = (v[0] + step * centers[j]) / (1.0 + step);
                Ok(())
            },
            |_, _| Control::Continue,
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.point[0] + 1.0).abs() < 1e-10, "{:?}", out.point);
    }

    #[test]
    fn l1_median_of_three() {
        // Σ |θ − a_j| is minimized at the median.
        let pts = [-1.0, 0.0, 3.0];
        let cfg = SplitConfig { step: 0.5, tol: 1e-12, max_iter: 100_000, relaxation: Relaxation::default() };
        let out = consensus_douglas_rachford(
            3,
            &[2.0],
            cfg,
            |j, step, v| {
                let r = v[0] - pts[j];
                v[0] = pts[j] + r.signum() * (r.abs() - step).max(0.0);
                Ok(())
            },
            |_, _| Control::Continue,
        )
        .unwrap();
        assert!(out.point[0].abs() < 1e-8, "{:?}", out);
    }

    #[test]
    fn monitor_can_stop() {
        let cfg = SplitConfig { step: 1.0, tol: 0.0, max_iter: 100, relaxation: Relaxation::NONE };
        let out = consensus_douglas_rachford(1, &[1.0], cfg, |_, _, v| {
            v[0] *= 0.5;
            Ok(())
        }, |k, _| {
            if k == 3 { Control::Stop } else { Control::Continue }
        })
        .unwrap();
        assert!(out.stopped);
        assert_eq!(out.iterations, 3);
    }
}
