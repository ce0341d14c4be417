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

//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use mosco::estimation::{smoothed_subgradient, smoothing_bandwidth};
use mosco::inference::{self, calibrate_lr_scale, lr_limit_sampler, HypothesisSpec, LanLimit, McOptions};
use mosco::mosco_diag::{self, DenseFamily};
use mosco::seed::derive_seed;
use mosco::{fit, sample_gaussian, simulate_dataset, Execution, GaussianMeasure, HVec, SymOp};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::config::*;
use crate::output::{num, read_dataset, write_csv, write_dataset, write_summary};

pub struct Ctx {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
    pub exec: Execution,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Outputs were written but a numerical step did not converge.
    NonConvergence,
}

impl Ctx {
    fn load<T: DeserializeOwned>(&self) -> Result<T> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("cannot read {}", self.config.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid configuration {}", self.config.display()))
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn seed(&self, configured: u64) -> u64 {
        self.seed.unwrap_or(configured)
    }

    fn relative(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        self.config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Success
    } else {
        Status::NonConvergence
    }
}

fn hvec(v: &[f64], what: &str) -> Result<HVec> {
    HVec::new(v.to_vec()).with_context(|| what.to_string())
}

pub fn simulate(ctx: &Ctx) -> Result<Status> {
    let mut cfg: SimulateConfig = ctx.load()?;
    cfg.seed = ctx.seed(cfg.seed);
    let spec = cfg.model.build()?;
    let samples = simulate_dataset(&spec, cfg.seed)?;
    let path = ctx.out("dataset.csv")?;
    write_dataset(&path, &samples, &spec.theta0)?;
    let echo = SimulateConfig { model: cfg.model.resolved()?, seed: cfg.seed };
    write_summary(&ctx.out("simulate.json")?, "simulate", &echo, json!({ "rows": samples.len(), "seed": cfg.seed }))?;
    ctx.say(format!("wrote {} rows to {}", samples.len(), path.display()));
    Ok(Status::Success)
}

pub fn fit_cmd(ctx: &Ctx) -> Result<Status> {
    let cfg: FitConfig = ctx.load()?;
    let samples = read_dataset(&ctx.relative(&cfg.data))?;
    let mut opts = cfg.solver.options(samples.len())?;
    let set = cfg.constraint.as_ref().map(SetConfig::build).transpose()?;
    if let Some(s) = &set {
        ensure!(s.dim() == samples.dim(), "constraint dimension {} does not match data dimension {}", s.dim(), samples.dim());
        opts.constraint = Some(s.clone());
    }
    let r = fit(&samples, &opts)?;
    let feasible = set.as_ref().map(|s| s.contains(&r.theta));
    write_csv(
        &ctx.out("coefficients.csv")?,
        &["index", "value"],
        r.theta.as_slice().iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), num(*v)]),
    )?;
    write_summary(
        &ctx.out("fit.json")?,
        "fit",
        &cfg,
        json!({
            "n": samples.len(),
            "penalty_weight": opts.penalty_weight,
            "coefficients": r.theta.as_slice(),
            "objective": r.objective_value,
            "optimality_residual": r.optimality_residual,
            "iterations": r.iterations,
            "converged": r.converged,
            "feasible": feasible,
        }),
    )?;
    ctx.say(format!(
        "objective {:.6e}, optimality residual {:.3e}, converged {}",
        r.objective_value, r.optimality_residual, r.converged
    ));
    Ok(status(r.converged))
}

pub fn mosco(ctx: &Ctx) -> Result<Status> {
    let mut cfg: MoscoConfig = ctx.load()?;
    cfg.seed = ctx.seed(cfg.seed);
    let (seq, limit) = cfg.build()?;
    let fam = DenseFamily::with_random(
        cfg.dim,
        cfg.family.basis,
        cfg.family.random,
        derive_seed(cfg.seed, 1),
        cfg.family.lambda0,
    )?;
    let probes = sample_gaussian(&GaussianMeasure::centered(SymOp::identity(cfg.dim)), cfg.probes, derive_seed(cfg.seed, 0))?;
    let table = mosco_diag::resolvent_convergence_probe_with(&seq, &limit, &probes, cfg.lambda, ctx.exec)?;
    let mut rows = Vec::new();
    for (n, row) in table.iter().enumerate() {
        for (p, d) in row.iter().enumerate() {
            rows.push(vec![(n + 1).to_string(), (p + 1).to_string(), num(*d)]);
        }
    }
    write_csv(&ctx.out("resolvent.csv")?, &["n", "probe", "distance"], rows)?;
    let dg = seq
        .iter()
        .map(|f| mosco_diag::mosco_distance_with(f, &limit, &fam, ctx.exec))
        .collect::<mosco::Result<Vec<_>>>()?;
    write_csv(
        &ctx.out("d_g.csv")?,
        &["n", "d_g", "tail_bound"],
        dg.iter().enumerate().map(|(n, d)| vec![(n + 1).to_string(), num(d.value), num(d.tail_bound)]),
    )?;
    let last = table.last().map(|r| r.iter().copied().fold(0.0, f64::max));
    write_summary(
        &ctx.out("mosco.json")?,
        "mosco",
        &cfg,
        json!({
            "family_size": fam.len(),
            "tail_bound": fam.tail_bound(),
            "d_g_last": dg.last().map(|d| d.value),
            "max_distance_last": last,
            "seed": cfg.seed,
        }),
    )?;
    ctx.say(format!("{} functionals × {} probes; d_G tail bound {:e}", seq.len(), probes.len(), fam.tail_bound()));
    Ok(Status::Success)
}

fn mc_options(solver: &SolverConfig, exec: Execution, n: usize) -> Result<McOptions> {
    let mut fo = solver.options(n)?;
    fo.penalty_weight = 0.0;
    Ok(McOptions { solver: fo, penalty_c: solver.penalty_c, exec })
}

pub fn lan(ctx: &Ctx) -> Result<Status> {
    let mut cfg: LanConfig = ctx.load()?;
    cfg.seed = ctx.seed(cfg.seed);
    let spec = cfg.model.build()?;
    let probe = hvec(&cfg.probe, "probe")?;
    let opts = mc_options(&cfg.solver, ctx.exec, spec.n)?;
    let report = inference::run_lan_replications(&spec, &probe, cfg.replications, cfg.seed, &opts)?;
    write_csv(
        &ctx.out("statistics.csv")?,
        &["replication", "statistic"],
        report.statistics.iter().enumerate().map(|(r, s)| vec![(r + 1).to_string(), num(*s)]),
    )?;
    let failed = inference::check_failures(&report.statistics).is_err();
    let echo = LanConfig { model: cfg.model.resolved()?, ..cfg.clone() };
    write_summary(
        &ctx.out("lan.json")?,
        "lan",
        &echo,
        json!({
            "mean": report.summary.mean,
            "variance": report.summary.variance,
            "quantiles": report.summary.quantiles,
            "ks_distance": report.ks_distance,
            "variance_ratio": report.variance_ratio,
            "limit_variance": report.limit_variance,
            "failures": report.failures,
            "aborted": failed,
            "seed": cfg.seed,
        }),
    )?;
    ctx.say(format!(
        "{} replications, variance ratio {:?}, KS {:?}, failures {}",
        report.replications, report.variance_ratio, report.ks_distance, report.failures
    ));
    Ok(status(!failed))
}

pub fn lr(ctx: &Ctx) -> Result<Status> {
    let mut cfg: LrConfig = ctx.load()?;
    cfg.seed = ctx.seed(cfg.seed);
    let spec = cfg.model.build()?;
    let dir = match &cfg.hypothesis.direction {
        Some(d) => hvec(d, "hypothesis.direction")?,
        None => HVec::zeros(spec.dim()),
    };
    let hyp = HypothesisSpec::new(cfg.hypothesis.full.build()?, cfg.hypothesis.null.build()?, dir.clone())?;
    let kappa = calibrate_lr_scale(cfg.calibration_draws, derive_seed(cfg.seed, u64::MAX))?;
    let opts = mc_options(&cfg.solver, ctx.exec, spec.n)?;
    let report = inference::run_lr_replications(&spec, &hyp, cfg.replications, cfg.seed, kappa, &opts)?;
    write_csv(
        &ctx.out("statistics.csv")?,
        &["replication", "lambda_raw", "lambda"],
        report
            .raw
            .iter()
            .zip(&report.report.statistics)
            .enumerate()
            .map(|(r, (a, b))| vec![(r + 1).to_string(), num(*a), num(*b)]),
    )?;
    let lim = LanLimit::from_model(&spec)?;
    let draws = lr_limit_sampler(&lim, &hyp, &spec.theta0, cfg.replications, derive_seed(cfg.seed, u64::MAX - 1))?;
    write_csv(
        &ctx.out("limit.csv")?,
        &["draw", "value"],
        draws.iter().enumerate().map(|(r, d)| vec![(r + 1).to_string(), num(*d)]),
    )?;
    let failed = inference::check_failures(&report.raw).is_err();
    let mut echo = cfg.clone();
    echo.model = cfg.model.resolved()?;
    echo.hypothesis.direction = Some(dir.to_vec());
    let s = &report.report.summary;
    write_summary(
        &ctx.out("lr.json")?,
        "lr",
        &echo,
        json!({
            "kappa": kappa,
            "mean": s.mean,
            "variance": s.variance,
            "quantiles": s.quantiles,
            "mass_at_zero": report.mass_at_zero,
            "ks_distance": report.report.ks_distance,
            "ks_positive": report.ks_positive,
            "failures": report.report.failures,
            "aborted": failed,
            "seed": cfg.seed,
        }),
    )?;
    ctx.say(format!(
        "{} replications, κ = {kappa:.6}, mass at zero {:.3}, failures {}",
        report.report.replications, report.mass_at_zero, report.report.failures
    ));
    Ok(status(!failed))
}

pub fn hessian(ctx: &Ctx) -> Result<Status> {
    let mut cfg: HessianConfig = ctx.load()?;
    cfg.seed = ctx.seed(cfg.seed);
    let spec = cfg.model.build()?;
    let samples = simulate_dataset(&spec, cfg.seed)?;
    let bandwidth = cfg.bandwidth.unwrap_or_else(|| smoothing_bandwidth(samples.len()));
    let steps = cfg.steps.clone().unwrap_or_else(mosco_diag::default_steps);
    let (point, converged) = match cfg.point {
        HessianPoint::Truth => (spec.theta0.clone(), true),
        HessianPoint::Fit => {
            let r = fit(&samples, &cfg.solver.options(samples.len())?)?;
            (r.theta, r.converged)
        }
    };
    let dim = spec.dim();
    let dirs: Vec<HVec> = (0..dim).map(|k| HVec::basis(dim, k)).collect();
    let est = mosco_diag::estimate_generalized_hessian(|t| smoothed_subgradient(&samples, t, bandwidth), &point, &steps, &dirs)?;
    let truth = spec.generalized_hessian()?;
    let diff = est.op.entries() - truth.entries();
    let rel = diff.singular_values().max() / truth.operator_norm();
    let mut rows = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            rows.push(vec![(i + 1).to_string(), (j + 1).to_string(), num(est.op.get(i, j)), num(truth.get(i, j))]);
        }
    }
    write_csv(&ctx.out("hessian.csv")?, &["row", "col", "estimate", "closed_form"], rows)?;
    let mut echo = cfg.clone();
    echo.model = cfg.model.resolved()?;
    echo.bandwidth = Some(bandwidth);
    echo.steps = Some(steps);
    write_summary(
        &ctx.out("hessian.json")?,
        "hessian",
        &echo,
        json!({
            "point": point.as_slice(),
            "fit_converged": converged,
            "asymmetry": est.asymmetry,
            "relative_error": rel,
            "seed": cfg.seed,
        }),
    )?;
    ctx.say(format!("relative operator-norm error {rel:.4}, asymmetry {:.3e}", est.asymmetry));
    Ok(status(converged))
}
