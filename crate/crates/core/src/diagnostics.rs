//! A priori estimate channels, paired-run stability experiments and
//! Lipschitz probes for the uniqueness regime.
//!
//! Norm conventions: L^∞ in time is the maximum over snapshot times, L² in
//! time is the trapezoid rule on snapshots, spatial L^∞ is the grid maximum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AbstractModel, FieldFormula, ModelData};
use crate::regularize::ScalarNonlinearity;
use crate::solver::{run, trajectory_distance, GalerkinSystem, SolverConfig, Trajectory};
use crate::spectral::{GridFunction, TimeSeriesField};

/// Discrete versions of the norms in the a priori estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateReport {
    /// (∫₀ᵀ ‖φ‖² + ‖∂tφ‖²)^{1/2}
    pub phi_h1: f64,
    /// max_t ‖φ‖_{A,ρ}
    pub phi_linf_v: f64,
    pub sigma_h1: f64,
    pub sigma_linf_v: f64,
    /// max_t ∫ β̂_ε(φ)
    pub beta_linf_l1: f64,
    /// ∫₀ᵀ ‖∂tφ‖²
    pub phi_dissipation: f64,
    pub sigma_dissipation: f64,
    /// max_t ‖φ‖_H
    pub phi_linf_h: f64,
    pub sigma_linf_h: f64,
    /// max_t of the energy-identity defects.
    pub phi_residual: f64,
    pub sigma_residual: f64,
}

impl EstimateReport {
    /// The bounded quantities, excluding the discretization residuals.
    pub fn bound_channels(&self) -> [(&'static str, f64); 9] {
        [
            ("phi_h1", self.phi_h1),
            ("phi_linf_v", self.phi_linf_v),
            ("sigma_h1", self.sigma_h1),
            ("sigma_linf_v", self.sigma_linf_v),
            ("beta_linf_l1", self.beta_linf_l1),
            ("phi_dissipation", self.phi_dissipation),
            ("sigma_dissipation", self.sigma_dissipation),
            ("phi_linf_h", self.phi_linf_h),
            ("sigma_linf_h", self.sigma_linf_h),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.bound_channels().iter().all(|(_, v)| v.is_finite())
            && self.phi_residual.is_finite()
            && self.sigma_residual.is_finite()
    }
}

fn trapezoid(times: &[f64], v: &[f64]) -> f64 {
    (1..times.len())
        .map(|k| 0.5 * (times[k] - times[k - 1]) * (v[k] + v[k - 1]))
        .sum()
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn estimate_report(traj: &Trajectory) -> EstimateReport {
    let t = &traj.times;
    let col = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..t.len()).map(f).collect() };
    let phi_sq = col(&|k| sum_sq(&traj.y[k]) + sum_sq(&traj.dy[k]));
    let sigma_sq = col(&|k| sum_sq(&traj.z[k]) + sum_sq(&traj.dz[k]));
    let max = |f: &dyn Fn(&crate::solver::MonitorRow) -> f64| traj.monitors.iter().map(f).fold(0.0, f64::max);
    let last = traj.monitors.last();
    EstimateReport {
        phi_h1: trapezoid(t, &phi_sq).sqrt(),
        phi_linf_v: max(&|m| m.phi_graph),
        sigma_h1: trapezoid(t, &sigma_sq).sqrt(),
        sigma_linf_v: max(&|m| m.sigma_graph),
        beta_linf_l1: max(&|m| m.beta_energy),
        phi_dissipation: last.map_or(0.0, |m| m.phi_dissipation),
        sigma_dissipation: last.map_or(0.0, |m| m.sigma_dissipation),
        phi_linf_h: max(&|m| m.phi_h),
        sigma_linf_h: max(&|m| m.sigma_h),
        phi_residual: traj.max_phi_residual(),
        sigma_residual: traj.max_sigma_residual(),
    }
}

/// Relative spread (max − min)/max of every bound channel across reports.
pub fn channel_spread(reports: &[EstimateReport]) -> Vec<(&'static str, f64)> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .bound_channels()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let vals: Vec<f64> = reports.iter().map(|r| r.bound_channels()[i].1).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = if hi == 0.0 && lo == 0.0 { 0.0 } else { (hi - lo) / hi.abs() };
            (*name, spread)
        })
        .collect()
}

/// Solution and data differences of two runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    /// ‖u₁ − u₂‖_{L²(0,T;L^∞)}
    pub u_difference: f64,
    pub s_difference: f64,
    /// ‖φ₀₁ − φ₀₂‖_H
    pub phi0_difference: f64,
    pub phi_linf_h: f64,
    pub phi_l2_v: f64,
    pub sigma_linf_h: f64,
    pub sigma_l2_v: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs/rhs, 0 when both vanish.
    pub ratio: f64,
    /// Largest of the data and solution norms bounded in the hypothesis.
    pub bound_m: f64,
}

fn h_distance(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .zip(a.weights())
        .map(|((p, q), w)| w * (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn same_grid_values(a: &GridFunction, b: &GridFunction) -> bool {
    a.quadrature().as_ref() == b.quadrature().as_ref() && a.values() == b.values()
}

/// Runs both data sets with the same model and configuration and compares.
pub fn stability_experiment(
    model: &AbstractModel,
    data1: &ModelData,
    data2: &ModelData,
    cfg: &SolverConfig,
) -> Result<StabilityReport> {
    if !same_grid_values(&data1.sigma0, &data2.sigma0) {
        return Err(Error::input("both runs must share sigma0"));
    }
    let sys1 = GalerkinSystem::new(model, data1, cfg)?;
    let sys2 = GalerkinSystem::new(model, data2, cfg)?;
    let (_, t1) = run(&sys1, data1, cfg)?;
    let (_, t2) = run(&sys2, data2, cfg)?;
    stability_from_runs(data1, data2, &t1, &t2, cfg.horizon)
}

fn stability_from_runs(
    data1: &ModelData,
    data2: &ModelData,
    t1: &Trajectory,
    t2: &Trajectory,
    horizon: f64,
) -> Result<StabilityReport> {
    let d = trajectory_distance(t1, t2)?;
    let u_difference = data1.u.combine(1.0, &data2.u, -1.0)?.l2_linf_norm(horizon);
    let s_difference = data1.s.combine(1.0, &data2.s, -1.0)?.l2_linf_norm(horizon);
    let phi0_difference = h_distance(&data1.phi0, &data2.phi0);
    let lhs = d.phi_linf_h + d.phi_l2_v + d.sigma_linf_h + d.sigma_l2_v;
    let rhs = u_difference + s_difference + phi0_difference;
    let ratio = match (lhs == 0.0, rhs == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        (false, false) => lhs / rhs,
    };
    let graph_max = |t: &Trajectory| {
        t.monitors
            .iter()
            .map(|m| m.phi_graph.max(m.sigma_graph))
            .fold(0.0, f64::max)
    };
    let bound_m = [
        data1.u.l2_linf_norm(horizon),
        data2.u.l2_linf_norm(horizon),
        data1.s.l2_linf_norm(horizon),
        data2.s.l2_linf_norm(horizon),
        graph_max(t1),
        graph_max(t2),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(StabilityReport {
        u_difference,
        s_difference,
        phi0_difference,
        phi_linf_h: d.phi_linf_h,
        phi_l2_v: d.phi_l2_v,
        sigma_linf_h: d.sigma_linf_h,
        sigma_l2_v: d.sigma_l2_v,
        lhs,
        rhs,
        ratio,
        bound_m,
    })
}

/// A fixed perturbation direction, constant in time for u and S.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    #[serde(default = "zero_field")]
    pub phi0: FieldFormula,
    #[serde(default = "zero_field")]
    pub u: FieldFormula,
    #[serde(default = "zero_field")]
    pub s: FieldFormula,
}

fn zero_field() -> FieldFormula {
    FieldFormula::Zero
}

impl Perturbation {
    /// `data` shifted by `scale` times this direction.
    pub fn apply(&self, model: &AbstractModel, data: &ModelData, scale: f64) -> Result<ModelData> {
        let quad = data.phi0.quadrature().clone();
        let shift = |f: &FieldFormula| f.sample(&quad);
        let dphi = shift(&self.phi0)?;
        let phi0 = GridFunction::new(
            quad.clone(),
            data.phi0.values().iter().zip(&dphi).map(|(a, b)| a + scale * b).collect(),
        )?;
        let series = |base: &TimeSeriesField, f: &FieldFormula| -> Result<TimeSeriesField> {
            let g = GridFunction::new(quad.clone(), shift(f)?)?;
            base.combine(1.0, &TimeSeriesField::constant(&g), scale)
        };
        let out = ModelData {
            u: series(&data.u, &self.u)?,
            s: series(&data.s, &self.s)?,
            phi0_energy: crate::model::phi0_energy(&phi0, &model.potential)?,
            phi0,
            sigma0: data.sigma0.clone(),
            horizon: data.horizon,
        };
        out.validate(&model.potential)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSweep {
    pub scales: Vec<f64>,
    pub reports: Vec<StabilityReport>,
    pub ratios: Vec<f64>,
    /// max/min of the ratios, 0 when every ratio vanishes.
    pub ratio_spread: f64,
}

/// Paired runs of `data` against `data + s·direction` for every scale s.
pub fn scale_sweep(
    model: &AbstractModel,
    data: &ModelData,
    direction: &Perturbation,
    scales: &[f64],
    cfg: &SolverConfig,
) -> Result<ScaleSweep> {
    let sys = GalerkinSystem::new(model, data, cfg)?;
    let (_, base) = run(&sys, data, cfg)?;
    let mut reports = Vec::with_capacity(scales.len());
    for s in scales {
        let other = direction.apply(model, data, *s)?;
        let sys2 = GalerkinSystem::new(model, &other, cfg)?;
        let (_, t2) = run(&sys2, &other, cfg)?;
        reports.push(stability_from_runs(data, &other, &base, &t2, cfg.horizon)?);
    }
    let ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_spread = if hi == 0.0 { 0.0 } else { hi / lo };
    Ok(ScaleSweep {
        scales: scales.to_vec(),
        reports,
        ratios,
        ratio_spread,
    })
}

/// Outcome of checking |ψ(r) − ψ(s)| ≤ (C₀′ max{|r|,|s|}^{α−1} + C₁′)|r − s|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub name: String,
    pub pairs: usize,
    pub passed: bool,
    /// Smallest rhs − lhs over the probes.
    pub worst_slack: f64,
    /// A violating pair (r, s), if any.
    pub witness: Option<(f64, f64)>,
}

pub fn lipschitz_probe(
    name: &str,
    psi: &ScalarNonlinearity,
    alpha: f64,
    c0_prime: f64,
    c1_prime: f64,
    pairs: usize,
    seed: u64,
) -> LipschitzReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for _ in 0..pairs {
        let r: f64 = rng.random_range(-5.0..5.0);
        let s: f64 = rng.random_range(-5.0..5.0);
        let lhs = (psi.eval(r) - psi.eval(s)).abs();
        let rhs = (c0_prime * r.abs().max(s.abs()).powf(alpha - 1.0) + c1_prime) * (r - s).abs();
        let slack = rhs * (1.0 + 1e-12) + 1e-12 - lhs;
        if slack < worst {
            worst = slack;
        }
        if slack < 0.0 && witness.is_none() {
            witness = Some((r, s));
        }
    }
    LipschitzReport {
        name: name.to_string(),
        pairs,
        passed: witness.is_none(),
        worst_slack: worst,
        witness,
    }
}

/// Probes h, γ, κ of `model` against its declared derivative bounds.
pub fn model_lipschitz_probe(model: &AbstractModel, pairs: usize, seed: u64) -> Result<Vec<LipschitzReport>> {
    let hy = &model.hypotheses;
    let u = hy
        .uniqueness
        .as_ref()
        .ok_or_else(|| Error::config("uniqueness exponents are not declared"))?;
    let (c0, c1) = match (u.c0_prime, u.c1_prime) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::config("c0_prime and c1_prime must be declared")),
    };
    let set = &model.nonlinearities;
    Ok(vec![
        lipschitz_probe("h", &set.h, hy.alpha_h, c0, c1, pairs, seed),
        lipschitz_probe("gamma", &set.gamma, hy.alpha_gamma, c0, c1, pairs, seed.wrapping_add(1)),
        lipschitz_probe("kappa", &set.kappa, hy.alpha_kappa, c0, c1, pairs, seed.wrapping_add(2)),
    ])
}
