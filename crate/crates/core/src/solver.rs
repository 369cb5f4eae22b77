//! Faedo–Galerkin approximation at regularization level ε.
//!
//! With φ_n = Σ y_j e_j and σ_n = Σ z_j e′_j the discrete problem is the ODE
//!
//! ```text
//! y′_i = −λ_i^{2ρ} y_i − ∫(β_ε + π)(φ_n) e_i + ∫h_ε(φ_n)(m_ε(σ_n) − m₀u_ε) e_i
//! z′_i = −λ′_i^{2τ} z_i − ∫γ_ε(φ_n)σ_n e′_i + ∫κ_ε(φ_n) e′_i − ∫S_ε φ_n e′_i
//! ```
//!
//! whose integrals are evaluated pseudo-spectrally: synthesize on the
//! quadrature grid, apply the nonlinearity pointwise, integrate against the
//! modes. The stiff diagonal part is integrated exactly by ETDRK4.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{synthesize_data, AbstractModel, DataSpec, ModelData};
use crate::potentials::ConvexSplitPotential;
use crate::regularize::{regularize_set, truncate_data, RegularizedSet};
use crate::spectral::{
    eigen_power, graph_norm_coeffs, project, EigenBasis, GridFunction, ModeTable, Quadrature, TimeSeriesField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exponential time differencing RK4 (Cox–Matthews).
    #[default]
    EtdRk4,
    /// Classical RK4 on the full right-hand side.
    Rk4Oracle,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n: usize,
    pub eps: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Quadrature nodes per dimension; defaults to max(64, 4n).
    #[serde(default)]
    pub quadrature: Option<usize>,
    /// Save every `stride`-th step.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps and the step actually used, so that steps · dt = T.
    pub fn steps(&self) -> (usize, f64) {
        let k = ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (k, self.horizon / k as f64)
    }
}

/// The regularized Galerkin ODE of one run.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    basis_a: Arc<EigenBasis>,
    basis_b: Arc<EigenBasis>,
    rho: f64,
    tau: f64,
    decay_a: Vec<f64>,
    decay_b: Vec<f64>,
    quad: Arc<Quadrature>,
    table_a: ModeTable,
    table_b: ModeTable,
    potential: ConvexSplitPotential,
    reg: RegularizedSet,
    m0: f64,
    u_eps: TimeSeriesField,
    s_eps: TimeSeriesField,
}

/// Grid values of every pointwise term at one state.
#[derive(Debug, Clone)]
struct PointwiseTerms {
    phi: Vec<f64>,
    sigma: Vec<f64>,
    /// (β_ε + π)(φ)
    force: Vec<f64>,
    /// π(φ)
    pi: Vec<f64>,
    /// h_ε(φ)(m_ε(σ) − m₀u_ε)
    source: Vec<f64>,
    /// γ_ε(φ)σ
    uptake: Vec<f64>,
    /// κ_ε(φ) − S_εφ
    supply: Vec<f64>,
    /// β̂_ε(φ)
    beta_hat: Vec<f64>,
}

impl GalerkinSystem {
    pub fn new(model: &AbstractModel, data: &ModelData, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (a, b) = model.bases(cfg.n)?;
        let quad = data.phi0.quadrature().clone();
        if quad.domain() != model.domain {
            return Err(Error::input("data grid and model live on different domains"));
        }
        let need = a.min_resolution().max(b.min_resolution());
        if quad.nodes_per_dim() < need {
            return Err(Error::config(format!(
                "quadrature has {} nodes per dimension, {n} modes need at least {need}",
                quad.nodes_per_dim(),
                n = cfg.n
            )));
        }
        for (name, f) in [("u", &data.u), ("S", &data.s)] {
            if f.quadrature().as_ref() != quad.as_ref() {
                return Err(Error::input(format!("{name} is sampled on a different grid than phi0")));
            }
        }
        let reg = regularize_set(&model.nonlinearities, &model.potential, cfg.eps, None)?;
        Self::assemble(
            a,
            b,
            model.rho,
            model.tau,
            quad,
            model.potential.clone(),
            reg,
            model.m0,
            truncate_data(&data.u, cfg.eps)?,
            truncate_data(&data.s, cfg.eps)?,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        a: EigenBasis,
        b: EigenBasis,
        rho: f64,
        tau: f64,
        quad: Arc<Quadrature>,
        potential: ConvexSplitPotential,
        reg: RegularizedSet,
        m0: f64,
        u_eps: TimeSeriesField,
        s_eps: TimeSeriesField,
    ) -> Result<Self> {
        if a.domain() != b.domain() {
            return Err(Error::input("both bases must share one domain"));
        }
        let decay_a = a.eigenvalues().iter().map(|l| eigen_power(*l, 2.0 * rho)).collect();
        let decay_b = b.eigenvalues().iter().map(|l| eigen_power(*l, 2.0 * tau)).collect();
        Ok(GalerkinSystem {
            table_a: ModeTable::new(&a, &quad),
            table_b: ModeTable::new(&b, &quad),
            basis_a: Arc::new(a),
            basis_b: Arc::new(b),
            rho,
            tau,
            decay_a,
            decay_b,
            quad,
            potential,
            reg,
            m0,
            u_eps,
            s_eps,
        })
    }

    pub fn basis_a(&self) -> &Arc<EigenBasis> {
        &self.basis_a
    }

    pub fn basis_b(&self) -> &Arc<EigenBasis> {
        &self.basis_b
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eps(&self) -> f64 {
        self.reg.eps
    }

    pub fn quadrature(&self) -> &Arc<Quadrature> {
        &self.quad
    }

    pub fn regularized(&self) -> &RegularizedSet {
        &self.reg
    }

    pub fn potential(&self) -> &ConvexSplitPotential {
        &self.potential
    }

    /// λ_i^{2ρ} and λ′_i^{2τ}.
    pub fn decay_rates(&self) -> (&[f64], &[f64]) {
        (&self.decay_a, &self.decay_b)
    }

    pub fn modes(&self) -> usize {
        self.basis_a.len()
    }

    fn pointwise(&self, t: f64, y: &[f64], z: &[f64]) -> Result<PointwiseTerms> {
        let q = self.quad.len();
        let mut phi = vec![0.0; q];
        let mut sigma = vec![0.0; q];
        self.table_a.synthesize_into(y, &mut phi);
        self.table_b.synthesize_into(z, &mut sigma);
        let mut u = vec![0.0; q];
        let mut s = vec![0.0; q];
        self.u_eps.value_at(t, &mut u);
        self.s_eps.value_at(t, &mut s);
        let eps = self.reg.eps;
        let mut out = PointwiseTerms {
            force: vec![0.0; q],
            pi: vec![0.0; q],
            source: vec![0.0; q],
            uptake: vec![0.0; q],
            supply: vec![0.0; q],
            beta_hat: vec![0.0; q],
            phi,
            sigma,
        };
        for k in 0..q {
            let (p, sg) = (out.phi[k], out.sigma[k]);
            let yp = self.potential.yosida_pair(p, eps)?;
            let pi = self.potential.pi(p);
            out.force[k] = yp.slope + pi;
            out.pi[k] = pi;
            out.beta_hat[k] = yp.value;
            out.source[k] = self.reg.h.eval(p)? * (self.reg.m.eval(sg)? - self.m0 * u[k]);
            out.uptake[k] = self.reg.gamma.eval(p)? * sg;
            out.supply[k] = self.reg.kappa.eval(p)? - s[k] * p;
        }
        let named = [
            ("(beta_eps + pi)(phi)", &out.force),
            ("h_eps(phi)(m_eps(sigma) - m0 u_eps)", &out.source),
            ("gamma_eps(phi) sigma", &out.uptake),
            ("kappa_eps(phi) - S_eps phi", &out.supply),
        ];
        for (name, v) in named {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure {
                    what: format!("non-finite values in {name}"),
                    time: Some(t),
                });
            }
        }
        Ok(out)
    }

    /// The nonlinear part: (−Ψ₁ + Ψ₂, −Ψ₃ + Ψ₄).
    pub fn nonlinear(&self, t: f64, y: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.pointwise(t, y, z)?;
        self.project_terms(&p)
    }

    fn project_terms(&self, p: &PointwiseTerms) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = self.quad.weights();
        let fa: Vec<f64> = (0..w.len()).map(|k| w[k] * (p.source[k] - p.force[k])).collect();
        let fb: Vec<f64> = (0..w.len()).map(|k| w[k] * (p.supply[k] - p.uptake[k])).collect();
        let mut ny = vec![0.0; self.basis_a.len()];
        let mut nz = vec![0.0; self.basis_b.len()];
        self.table_a.analyze_into(&fa, &mut ny);
        self.table_b.analyze_into(&fb, &mut nz);
        Ok((ny, nz))
    }

    /// The individual Galerkin integrals Ψ₁ … Ψ₄.
    pub fn psi_integrals(&self, t: f64, y: &[f64], z: &[f64]) -> Result<[Vec<f64>; 4]> {
        let p = self.pointwise(t, y, z)?;
        let w = self.quad.weights();
        let weighted = |v: &[f64]| -> Vec<f64> { v.iter().zip(w).map(|(a, b)| a * b).collect() };
        let mut out: [Vec<f64>; 4] = Default::default();
        for (k, (vals, table)) in [
            (&p.force, &self.table_a),
            (&p.source, &self.table_a),
            (&p.uptake, &self.table_b),
            (&p.supply, &self.table_b),
        ]
        .into_iter()
        .enumerate()
        {
            let mut o = vec![0.0; table.modes()];
            table.analyze_into(&weighted(vals), &mut o);
            out[k] = o;
        }
        Ok(out)
    }

    /// (dy, dz) at time t.
    pub fn assemble_rhs(&self, t: f64, y: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_lengths(y, z)?;
        let (mut dy, mut dz) = self.nonlinear(t, y, z)?;
        for i in 0..dy.len() {
            dy[i] -= self.decay_a[i] * y[i];
        }
        for i in 0..dz.len() {
            dz[i] -= self.decay_b[i] * z[i];
        }
        Ok((dy, dz))
    }

    fn check_lengths(&self, y: &[f64], z: &[f64]) -> Result<()> {
        if y.len() != self.basis_a.len() || z.len() != self.basis_b.len() {
            return Err(Error::input(format!(
                "state has {} + {} coefficients, system has {} + {}",
                y.len(),
                z.len(),
                self.basis_a.len(),
                self.basis_b.len()
            )));
        }
        Ok(())
    }

    /// Energy quantities at one state, with the time derivatives (dy, dz).
    fn monitor_point(&self, t: f64, y: &[f64], z: &[f64], dy: &[f64], dz: &[f64]) -> Result<MonitorPoint> {
        let p = self.pointwise(t, y, z)?;
        let q = self.quad.len();
        let mut dphi = vec![0.0; q];
        let mut dsigma = vec![0.0; q];
        self.table_a.synthesize_into(dy, &mut dphi);
        self.table_b.synthesize_into(dz, &mut dsigma);
        let w = self.quad.weights();
        let mut power_phi = 0.0;
        let mut power_sigma = 0.0;
        let mut beta = 0.0;
        for k in 0..q {
            power_phi += w[k] * (p.phi[k] - p.pi[k] + p.source[k]) * dphi[k];
            power_sigma += w[k] * (p.sigma[k] - p.uptake[k] + p.supply[k]) * dsigma[k];
            beta += w[k] * p.beta_hat[k];
        }
        let ea: &[f64] = self.basis_a.eigenvalues();
        let eb: &[f64] = self.basis_b.eigenvalues();
        Ok(MonitorPoint {
            t,
            phi_h: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
            sigma_h: z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            phi_graph: graph_norm_coeffs(y, ea, self.rho),
            sigma_graph: graph_norm_coeffs(z, eb, self.tau),
            beta_energy: beta,
            phi_rate_sq: dy.iter().map(|v| v * v).sum(),
            sigma_rate_sq: dz.iter().map(|v| v * v).sum(),
            power_phi,
            power_sigma,
        })
    }

    /// Numerical Lipschitz estimate of the right-hand side on the ball of
    /// radius `radius` around (y, z): the largest difference quotient over
    /// `samples` deterministic pairs.
    pub fn rhs_lipschitz_estimate(&self, y: &[f64], z: &[f64], radius: f64, samples: usize, seed: u64) -> Result<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let mut pick = |base: &[f64]| -> Vec<f64> { base.iter().map(|v| v + rng.random_range(-radius..radius)).collect() };
            let (y1, z1, y2, z2) = (pick(y), pick(z), pick(y), pick(z));
            let (a1, b1) = self.assemble_rhs(0.0, &y1, &z1)?;
            let (a2, b2) = self.assemble_rhs(0.0, &y2, &z2)?;
            let num: f64 = a1.iter().zip(&a2).chain(b1.iter().zip(&b2)).map(|(p, q)| (p - q).powi(2)).sum();
            let den: f64 = y1.iter().zip(&y2).chain(z1.iter().zip(&z2)).map(|(p, q)| (p - q).powi(2)).sum();
            if den > 0.0 {
                best = best.max((num / den).sqrt());
            }
        }
        Ok(best)
    }
}

/// Builds the system for `model` with data synthesized on the quadrature the
/// configuration asks for.
pub fn build_run(model: &AbstractModel, spec: &DataSpec, cfg: &SolverConfig) -> Result<(GalerkinSystem, ModelData)> {
    cfg.validate()?;
    let (a, _) = model.bases(cfg.n)?;
    let nodes = cfg.quadrature.unwrap_or_else(|| a.default_resolution());
    let quad = Arc::new(Quadrature::new(model.domain, nodes)?);
    let data = synthesize_data(spec, &model.potential, quad, cfg.horizon)?;
    let sys = GalerkinSystem::new(model, &data, cfg)?;
    Ok((sys, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct MonitorPoint {
    t: f64,
    phi_h: f64,
    sigma_h: f64,
    phi_graph: f64,
    sigma_graph: f64,
    beta_energy: f64,
    phi_rate_sq: f64,
    sigma_rate_sq: f64,
    power_phi: f64,
    power_sigma: f64,
}

/// Per-snapshot monitor channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorRow {
    pub t: f64,
    /// ‖φ_n‖_H
    pub phi_h: f64,
    pub sigma_h: f64,
    /// ‖φ_n‖_{A,ρ}
    pub phi_graph: f64,
    /// ‖σ_n‖_{B,τ}
    pub sigma_graph: f64,
    /// ∫ β̂_ε(φ_n)
    pub beta_energy: f64,
    /// ∫₀ᵗ ‖∂tφ_n‖²
    pub phi_dissipation: f64,
    pub sigma_dissipation: f64,
    /// Defect of the φ energy identity at t.
    pub phi_residual: f64,
    /// Defect of the σ energy identity at t.
    pub sigma_residual: f64,
}

impl MonitorRow {
    pub const COLUMNS: [&'static str; 10] = [
        "t",
        "phi_h",
        "sigma_h",
        "phi_graph",
        "sigma_graph",
        "beta_energy",
        "phi_dissipation",
        "sigma_dissipation",
        "phi_residual",
        "sigma_residual",
    ];

    fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.phi_h,
            self.sigma_h,
            self.phi_graph,
            self.sigma_graph,
            self.beta_energy,
            self.phi_dissipation,
            self.sigma_dissipation,
            self.phi_residual,
            self.sigma_residual,
        ]
    }
}

/// Saved states of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub dz: Vec<Vec<f64>>,
    pub monitors: Vec<MonitorRow>,
    /// Eigenvalue powers λ^{2ρ} used for V-norms of differences.
    pub eigenvalues_a: Vec<f64>,
    pub eigenvalues_b: Vec<f64>,
    pub rho: f64,
    pub tau: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> (&[f64], &[f64]) {
        (self.y.last().expect("nonempty"), self.z.last().expect("nonempty"))
    }

    pub fn max_phi_residual(&self) -> f64 {
        self.monitors.iter().map(|m| m.phi_residual.abs()).fold(0.0, f64::max)
    }

    pub fn max_sigma_residual(&self) -> f64 {
        self.monitors.iter().map(|m| m.sigma_residual.abs()).fold(0.0, f64::max)
    }

    /// CSV with header `t, y_1…y_n, z_1…z_n`, then the monitor columns.
    pub fn to_csv(&self) -> String {
        let n = self.y.first().map_or(0, |v| v.len());
        let m = self.z.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",y_{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",z_{i}"));
        }
        for c in &MonitorRow::COLUMNS[1..] {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for k in 0..self.times.len() {
            out.push_str(&csv_number(self.times[k]));
            for v in self.y[k].iter().chain(&self.z[k]).chain(&self.monitors[k].values()[1..]) {
                out.push(',');
                out.push_str(&csv_number(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip form, in exponent notation for very small or large
/// magnitudes.
fn csv_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn monitors_from_points(points: &[MonitorPoint]) -> Vec<MonitorRow> {
    let p0 = points[0];
    let mut rows = Vec::with_capacity(points.len());
    let (mut dis_phi, mut dis_sigma, mut work_phi, mut work_sigma) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..points.len() {
        let p = points[k];
        if k > 0 {
            let q = points[k - 1];
            let h = 0.5 * (p.t - q.t);
            dis_phi += h * (p.phi_rate_sq + q.phi_rate_sq);
            dis_sigma += h * (p.sigma_rate_sq + q.sigma_rate_sq);
            work_phi += h * (p.power_phi + q.power_phi);
            work_sigma += h * (p.power_sigma + q.power_sigma);
        }
        let phi_residual = dis_phi + 0.5 * p.phi_graph.powi(2) + p.beta_energy
            - 0.5 * p0.phi_graph.powi(2)
            - p0.beta_energy
            - work_phi;
        let sigma_residual = dis_sigma + 0.5 * p.sigma_graph.powi(2) - 0.5 * p0.sigma_graph.powi(2) - work_sigma;
        rows.push(MonitorRow {
            t: p.t,
            phi_h: p.phi_h,
            sigma_h: p.sigma_h,
            phi_graph: p.phi_graph,
            sigma_graph: p.sigma_graph,
            beta_energy: p.beta_energy,
            phi_dissipation: dis_phi,
            sigma_dissipation: dis_sigma,
            phi_residual,
            sigma_residual,
        });
    }
    rows
}

/// φ₁ … φ₃ at z, by Taylor series near 0 and the recurrence
/// φ_{k+1} = (φ_k − 1/k!)/z elsewhere.
pub fn phi_functions(z: f64) -> [f64; 3] {
    if z.abs() < 1.0 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            // Σ_m z^m/(m+k+1)!
            let mut term = 1.0 / (1..=k + 1).map(|i| i as f64).product::<f64>();
            let mut acc = term;
            for m in 1..30 {
                term *= z / (m + k + 1) as f64;
                acc += term;
                if term.abs() < 1e-18 * acc.abs() {
                    break;
                }
            }
            *o = acc;
        }
        out
    } else {
        let p1 = z.exp_m1() / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        [p1, p2, p3]
    }
}

/// ETDRK4 coefficients for one decay rate c (linear part −c) and step h.
#[derive(Debug, Clone, Copy)]
struct EtdCoefficients {
    e: f64,
    e2: f64,
    q: f64,
    f1: f64,
    f2: f64,
    f3: f64,
}

impl EtdCoefficients {
    fn new(c: f64, h: f64) -> Self {
        let z = -c * h;
        let [p1, p2, p3] = phi_functions(z);
        let [h1, _, _] = phi_functions(0.5 * z);
        EtdCoefficients {
            e: z.exp(),
            e2: (0.5 * z).exp(),
            q: 0.5 * h * h1,
            f1: h * (p1 - 3.0 * p2 + 4.0 * p3),
            f2: h * (p2 - 2.0 * p3),
            f3: h * (4.0 * p3 - p2),
        }
    }
}

#[derive(Debug, Clone)]
struct State {
    y: Vec<f64>,
    z: Vec<f64>,
}

fn finite(s: &State) -> bool {
    s.y.iter().chain(&s.z).all(|v| v.is_finite())
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

impl GalerkinSystem {
    fn etd_step(&self, t: f64, h: f64, s: &State, ca: &[EtdCoefficients], cb: &[EtdCoefficients]) -> Result<State> {
        let (ny, nz) = self.nonlinear(t, &s.y, &s.z)?;
        let half = |c: &[EtdCoefficients], x: &[f64], n: &[f64]| -> Vec<f64> {
            c.iter().zip(x).zip(n).map(|((c, x), n)| c.e2 * x + c.q * n).collect()
        };
        let a = State {
            y: half(ca, &s.y, &ny),
            z: half(cb, &s.z, &nz),
        };
        let (nay, naz) = self.nonlinear(t + 0.5 * h, &a.y, &a.z)?;
        let b = State {
            y: half(ca, &s.y, &nay),
            z: half(cb, &s.z, &naz),
        };
        let (nby, nbz) = self.nonlinear(t + 0.5 * h, &b.y, &b.z)?;
        let third = |c: &[EtdCoefficients], a: &[f64], nb: &[f64], n0: &[f64]| -> Vec<f64> {
            (0..c.len()).map(|i| c[i].e2 * a[i] + c[i].q * (2.0 * nb[i] - n0[i])).collect()
        };
        let cst = State {
            y: third(ca, &a.y, &nby, &ny),
            z: third(cb, &a.z, &nbz, &nz),
        };
        let (ncy, ncz) = self.nonlinear(t + h, &cst.y, &cst.z)?;
        let fin = |c: &[EtdCoefficients], x: &[f64], n0: &[f64], na: &[f64], nb: &[f64], nc: &[f64]| -> Vec<f64> {
            (0..c.len())
                .map(|i| c[i].e * x[i] + c[i].f1 * n0[i] + 2.0 * c[i].f2 * (na[i] + nb[i]) + c[i].f3 * nc[i])
                .collect()
        };
        Ok(State {
            y: fin(ca, &s.y, &ny, &nay, &nby, &ncy),
            z: fin(cb, &s.z, &nz, &naz, &nbz, &ncz),
        })
    }

    fn rk4_step(&self, t: f64, h: f64, s: &State) -> Result<State> {
        let (k1y, k1z) = self.assemble_rhs(t, &s.y, &s.z)?;
        let (k2y, k2z) = self.assemble_rhs(t + 0.5 * h, &axpy(&s.y, 0.5 * h, &k1y), &axpy(&s.z, 0.5 * h, &k1z))?;
        let (k3y, k3z) = self.assemble_rhs(t + 0.5 * h, &axpy(&s.y, 0.5 * h, &k2y), &axpy(&s.z, 0.5 * h, &k2z))?;
        let (k4y, k4z) = self.assemble_rhs(t + h, &axpy(&s.y, h, &k3y), &axpy(&s.z, h, &k3z))?;
        let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        Ok(State {
            y: comb(&s.y, &k1y, &k2y, &k3y, &k4y),
            z: comb(&s.z, &k1z, &k2z, &k3z, &k4z),
        })
    }
}

/// Integrates from (y0, z0) over [0, T] with the configured scheme.
pub fn integrate(sys: &GalerkinSystem, cfg: &SolverConfig, y0: &[f64], z0: &[f64]) -> Result<Trajectory> {
    cfg.validate()?;
    sys.check_lengths(y0, z0)?;
    let (steps, h) = cfg.steps();
    let ca: Vec<EtdCoefficients> = sys.decay_a.iter().map(|c| EtdCoefficients::new(*c, h)).collect();
    let cb: Vec<EtdCoefficients> = sys.decay_b.iter().map(|c| EtdCoefficients::new(*c, h)).collect();
    let mut state = State {
        y: y0.to_vec(),
        z: z0.to_vec(),
    };
    let mut traj = Trajectory {
        times: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        dy: Vec::new(),
        dz: Vec::new(),
        monitors: Vec::new(),
        eigenvalues_a: sys.basis_a.eigenvalues().to_vec(),
        eigenvalues_b: sys.basis_b.eigenvalues().to_vec(),
        rho: sys.rho,
        tau: sys.tau,
    };
    let mut points = Vec::new();
    let mut save = |t: f64, s: &State, traj: &mut Trajectory| -> Result<()> {
        let (dy, dz) = sys.assemble_rhs(t, &s.y, &s.z)?;
        points.push(sys.monitor_point(t, &s.y, &s.z, &dy, &dz)?);
        traj.times.push(t);
        traj.y.push(s.y.clone());
        traj.z.push(s.z.clone());
        traj.dy.push(dy);
        traj.dz.push(dz);
        Ok(())
    };
    save(0.0, &state, &mut traj)?;
    for k in 0..steps {
        let t = k as f64 * h;
        let next = match cfg.integrator {
            Integrator::EtdRk4 => sys.etd_step(t, h, &state, &ca, &cb),
            Integrator::Rk4Oracle => sys.rk4_step(t, h, &state),
        };
        let next = match next {
            Ok(s) if finite(&s) => s,
            Ok(_) => {
                return Err(Error::NumericalFailure {
                    what: "state became non-finite".into(),
                    time: Some(t),
                })
            }
            Err(Error::NumericalFailure { what, .. }) => return Err(Error::NumericalFailure { what, time: Some(t) }),
            Err(e) => return Err(e),
        };
        state = next;
        if (k + 1) % cfg.stride == 0 || k + 1 == steps {
            let t1 = if k + 1 == steps { cfg.horizon } else { (k + 1) as f64 * h };
            save(t1, &state, &mut traj)?;
        }
    }
    traj.monitors = monitors_from_points(&points);
    Ok(traj)
}

/// Largest coefficient change at T when the step is halved.
pub fn step_halving_defect(sys: &GalerkinSystem, cfg: &SolverConfig, y0: &[f64], z0: &[f64]) -> Result<f64> {
    let coarse = integrate(sys, cfg, y0, z0)?;
    let fine_cfg = SolverConfig {
        dt: cfg.steps().1 / 2.0,
        ..cfg.clone()
    };
    let fine = integrate(sys, &fine_cfg, y0, z0)?;
    let (a, b) = (coarse.final_state(), fine.final_state());
    Ok(a.0
        .iter()
        .zip(b.0)
        .chain(a.1.iter().zip(b.1))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max))
}

/// Initial coefficients and the projection bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialProjection {
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    /// ‖φ₀ − Π_nφ₀‖_H
    pub phi_truncation: f64,
    pub sigma_truncation: f64,
    /// ‖Π_nφ₀‖_{A,ρ}
    pub phi_graph: f64,
    /// ‖φ₀‖_{A,ρ} measured in a richer reference basis.
    pub phi_graph_reference: f64,
    pub sigma_graph: f64,
    pub sigma_graph_reference: f64,
    pub nonexpansive: bool,
}

fn residual_norm(g: &GridFunction, table: &ModeTable, coeffs: &[f64]) -> f64 {
    let mut synth = vec![0.0; g.values().len()];
    table.synthesize_into(coeffs, &mut synth);
    g.values()
        .iter()
        .zip(&synth)
        .zip(g.weights())
        .map(|((a, b), w)| w * (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn reference_graph(g: &GridFunction, basis: &EigenBasis, exponent: f64) -> Result<f64> {
    let per_dim = g.quadrature().nodes_per_dim();
    let m = (4 * basis.len()).min(per_dim.saturating_sub(2) / 2).max(basis.len());
    let rich = match basis.with_modes(m) {
        Ok(b) => Arc::new(b),
        Err(_) => Arc::new(basis.clone()),
    };
    let v = project(g, rich.clone())?;
    Ok(graph_norm_coeffs(v.coeffs(), rich.eigenvalues(), exponent))
}

/// φ_n(0) = Σ (φ₀, e_j) e_j and σ_n(0) = Σ (σ₀, e′_j) e′_j.
pub fn project_initial(data: &ModelData, sys: &GalerkinSystem) -> Result<InitialProjection> {
    let a = project(&data.phi0, sys.basis_a.clone())?;
    let b = project(&data.sigma0, sys.basis_b.clone())?;
    let ta = ModeTable::new(&sys.basis_a, data.phi0.quadrature());
    let tb = ModeTable::new(&sys.basis_b, data.sigma0.quadrature());
    let phi_graph = graph_norm_coeffs(a.coeffs(), sys.basis_a.eigenvalues(), sys.rho);
    let sigma_graph = graph_norm_coeffs(b.coeffs(), sys.basis_b.eigenvalues(), sys.tau);
    let phi_graph_reference = reference_graph(&data.phi0, &sys.basis_a, sys.rho)?;
    let sigma_graph_reference = reference_graph(&data.sigma0, &sys.basis_b, sys.tau)?;
    let nonexpansive = phi_graph <= phi_graph_reference + 1e-10 && sigma_graph <= sigma_graph_reference + 1e-10;
    Ok(InitialProjection {
        phi_truncation: residual_norm(&data.phi0, &ta, a.coeffs()),
        sigma_truncation: residual_norm(&data.sigma0, &tb, b.coeffs()),
        y0: a.coeffs().to_vec(),
        z0: b.coeffs().to_vec(),
        phi_graph,
        phi_graph_reference,
        sigma_graph,
        sigma_graph_reference,
        nonexpansive,
    })
}

/// Projects the data and integrates.
pub fn run(sys: &GalerkinSystem, data: &ModelData, cfg: &SolverConfig) -> Result<(InitialProjection, Trajectory)> {
    let init = project_initial(data, sys)?;
    let traj = integrate(sys, cfg, &init.y0, &init.z0)?;
    Ok((init, traj))
}

/// One refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub n: usize,
    pub eps: f64,
    pub dt: f64,
}

/// Differences between two runs at their common snapshot times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryDistance {
    /// max_t ‖φ₁ − φ₂‖_H
    pub phi_linf_h: f64,
    pub sigma_linf_h: f64,
    /// (∫₀ᵀ ‖φ₁ − φ₂‖²_{A,ρ})^{1/2}
    pub phi_l2_v: f64,
    pub sigma_l2_v: f64,
    /// Number of common snapshot times compared.
    pub samples: usize,
}

impl TrajectoryDistance {
    /// φ and σ combined in L^∞(0,T;H).
    pub fn linf_h(&self) -> f64 {
        self.phi_linf_h + self.sigma_linf_h
    }

    pub fn l2_v(&self) -> f64 {
        self.phi_l2_v + self.sigma_l2_v
    }
}

fn padded_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// Distances between two trajectories, coefficients zero-padded to the
/// larger basis; snapshot times of `a` must also be snapshot times of `b`.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryDistance> {
    let (big_a, big_b) = if a.eigenvalues_a.len() >= b.eigenvalues_a.len() {
        (&a.eigenvalues_a, &a.eigenvalues_b)
    } else {
        (&b.eigenvalues_a, &b.eigenvalues_b)
    };
    let horizon = a.times.last().copied().unwrap_or(0.0).max(1e-300);
    let mut times = Vec::new();
    let mut phi_h = Vec::new();
    let mut sigma_h = Vec::new();
    let mut phi_v = Vec::new();
    let mut sigma_v = Vec::new();
    let mut j = 0;
    for (k, t) in a.times.iter().enumerate() {
        while j < b.times.len() && b.times[j] < t - 1e-9 * horizon {
            j += 1;
        }
        if j == b.times.len() || (b.times[j] - t).abs() > 1e-9 * horizon {
            continue;
        }
        let dy = padded_diff(&a.y[k], &b.y[j]);
        let dz = padded_diff(&a.z[k], &b.z[j]);
        times.push(*t);
        phi_h.push(dy.iter().map(|v| v * v).sum::<f64>().sqrt());
        sigma_h.push(dz.iter().map(|v| v * v).sum::<f64>().sqrt());
        phi_v.push(graph_norm_coeffs(&dy, &big_a[..dy.len()], a.rho));
        sigma_v.push(graph_norm_coeffs(&dz, &big_b[..dz.len()], a.tau));
    }
    if times.is_empty() {
        return Err(Error::input("trajectories share no snapshot times"));
    }
    let trap = |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for k in 1..times.len() {
            acc += 0.5 * (times[k] - times[k - 1]) * (v[k].powi(2) + v[k - 1].powi(2));
        }
        acc.sqrt()
    };
    Ok(TrajectoryDistance {
        phi_linf_h: phi_h.iter().copied().fold(0.0, f64::max),
        sigma_linf_h: sigma_h.iter().copied().fold(0.0, f64::max),
        phi_l2_v: trap(&phi_v),
        sigma_l2_v: trap(&sigma_v),
        samples: times.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub levels: Vec<Level>,
    /// Distances between levels k and k+1.
    pub differences: Vec<TrajectoryDistance>,
    /// Successive ratios of the L^∞(0,T;H) differences.
    pub cauchy_ratios: Vec<f64>,
    /// Successive differences strictly decrease.
    pub monotone: bool,
}

/// Runs every level and compares consecutive ones.
pub fn refine_study(model: &AbstractModel, spec: &DataSpec, base: &SolverConfig, levels: &[Level]) -> Result<RefineReport> {
    if levels.len() < 2 {
        return Err(Error::config("a refinement study needs at least two levels"));
    }
    for w in levels.windows(2) {
        if w[1].n < w[0].n || w[1].eps > w[0].eps || w[1].dt > w[0].dt {
            return Err(Error::config(format!(
                "levels must refine: n nondecreasing, eps and dt nonincreasing ({:?} -> {:?})",
                w[0], w[1]
            )));
        }
    }
    let n_max = levels.iter().map(|l| l.n).max().unwrap_or(1);
    let mut trajs = Vec::new();
    for l in levels {
        let cfg = SolverConfig {
            n: l.n,
            eps: l.eps,
            dt: l.dt,
            quadrature: Some(base.quadrature.unwrap_or(64.max(4 * n_max))),
            ..base.clone()
        };
        let (sys, data) = build_run(model, spec, &cfg)?;
        trajs.push(run(&sys, &data, &cfg)?.1);
    }
    let differences = trajs
        .windows(2)
        .map(|w| trajectory_distance(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let cauchy_ratios: Vec<f64> = differences
        .windows(2)
        .map(|w| {
            if w[0].linf_h() == 0.0 {
                if w[1].linf_h() == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                w[1].linf_h() / w[0].linf_h()
            }
        })
        .collect();
    let monotone = differences.windows(2).all(|w| w[1].linf_h() < w[0].linf_h());
    Ok(RefineReport {
        levels: levels.to_vec(),
        differences,
        cauchy_ratios,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{prostate_to_abstract, FieldFormula, OperatorSpec, ProstateInstance, SpaceTimeFormula, StructuralHypotheses};
    use crate::potentials::{CustomParts, EffectiveDomain};
    use crate::regularize::{EnergyBound, NonlinearityFormula, NonlinearitySet, ScalarNonlinearity};
    use crate::spectral::{BoundaryCondition, Domain};
    use approx::assert_relative_eq;

    fn quadratic_potential(pi_slope: f64) -> ConvexSplitPotential {
        ConvexSplitPotential::custom(CustomParts {
            beta_hat: Arc::new(|_| 0.0),
            beta: Arc::new(|_| 0.0),
            domain: EffectiveDomain::REAL_LINE,
            pi_hat: Arc::new(move |r| 0.5 * pi_slope * r * r),
            pi: Arc::new(move |r| pi_slope * r),
            pi_lipschitz: pi_slope.abs(),
        })
        .unwrap()
    }

    fn hyp() -> StructuralHypotheses {
        StructuralHypotheses {
            alpha_h: 1.0,
            alpha_gamma: 1.0,
            alpha_kappa: 1.0,
            p_h: 2.0,
            p_gamma: 4.0,
            q_gamma: 4.0,
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            embedding_a: None,
            embedding_b: None,
            uniqueness: None,
        }
    }

    fn zero_set() -> NonlinearitySet {
        NonlinearitySet {
            h: ScalarNonlinearity::zero(),
            m: ScalarNonlinearity::zero(),
            gamma: ScalarNonlinearity::zero(),
            kappa: ScalarNonlinearity::zero(),
        }
    }

    fn linear_model(pi_slope: f64, set: NonlinearitySet) -> AbstractModel {
        AbstractModel {
            domain: Domain::interval(1.0),
            operator_a: OperatorSpec {
                boundary: BoundaryCondition::Dirichlet,
                diffusivity: 0.05,
            },
            operator_b: OperatorSpec {
                boundary: BoundaryCondition::Neumann,
                diffusivity: 0.05,
            },
            rho: 0.5,
            tau: 0.5,
            potential: quadratic_potential(pi_slope),
            nonlinearities: set,
            m0: 0.0,
            hypotheses: hyp(),
        }
    }

    fn zero_spec() -> DataSpec {
        DataSpec {
            phi0: FieldFormula::Zero,
            sigma0: FieldFormula::Zero,
            u: SpaceTimeFormula::zero(),
            s: SpaceTimeFormula::zero(),
            time_slices: 2,
        }
    }

    fn cfg(n: usize, dt: f64, horizon: f64) -> SolverConfig {
        SolverConfig {
            n,
            eps: 0.01,
            dt,
            horizon,
            integrator: Integrator::EtdRk4,
            quadrature: None,
            stride: 1,
        }
    }

    #[test]
    fn phi_functions_agree_across_branches() {
        for z in [-0.999_999, -1.0, 0.999_999, 1.0] {
            let a = phi_functions(z);
            let b = phi_functions(z * (1.0 + 1e-9));
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
        assert_eq!(phi_functions(0.0), [1.0, 0.5, 1.0 / 6.0]);
        let z = -3.0_f64;
        assert_relative_eq!(phi_functions(z)[0], (z.exp() - 1.0) / z, epsilon = 1e-15);
        assert_relative_eq!(phi_functions(z)[2], (z.exp() - 1.0 - z - z * z / 2.0) / z.powi(3), epsilon = 1e-14);
    }

    #[test]
    fn pure_decay_single_mode() {
        let model = linear_model(0.0, zero_set());
        let c = cfg(1, 0.1, 1.0);
        let (sys, _) = build_run(&model, &zero_spec(), &c).unwrap();
        let (dy, dz) = sys.assemble_rhs(0.0, &[2.0], &[3.0]).unwrap();
        let lam = sys.decay_rates().0[0];
        assert_relative_eq!(lam, 0.05 * std::f64::consts::PI.powi(2), epsilon = 1e-14);
        assert_relative_eq!(dy[0], -lam * 2.0, epsilon = 1e-14);
        assert_eq!(dz[0], 0.0);
    }

    #[test]
    fn identity_force_projects_to_coefficients() {
        let model = linear_model(1.0, zero_set());
        let (sys, _) = build_run(&model, &zero_spec(), &cfg(6, 0.1, 1.0)).unwrap();
        let y = [0.3, -1.0, 0.25, 0.0, 0.7, -0.1];
        let z = [0.0; 6];
        let psi = sys.psi_integrals(0.0, &y, &z).unwrap();
        for i in 0..6 {
            assert!((psi[0][i] - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_kappa_excites_only_the_constant_mode() {
        let mut set = zero_set();
        set.kappa = ScalarNonlinearity::from_formula(NonlinearityFormula::Constant { value: 1.0 }).unwrap();
        let model = linear_model(0.0, set);
        let (sys, _) = build_run(&model, &zero_spec(), &cfg(5, 0.1, 1.0)).unwrap();
        let psi = sys.psi_integrals(0.0, &[0.0; 5], &[0.0; 5]).unwrap();
        assert!((psi[3][0] - 1.0).abs() < 1e-12);
        for v in &psi[3][1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn exact_linear_decay() {
        let model = linear_model(0.0, zero_set());
        let mut spec = zero_spec();
        spec.phi0 = FieldFormula::Affine {
            offset: 0.0,
            terms: (0..8)
                .map(|j| crate::model::FieldTerm {
                    coeff: 1.0 / (j + 1) as f64,
                    field: FieldFormula::Mode {
                        boundary: BoundaryCondition::Dirichlet,
                        index: j,
                        amplitude: 1.0,
                    },
                })
                .collect(),
        };
        let c = cfg(8, 0.01, 1.0);
        let (sys, data) = build_run(&model, &spec, &c).unwrap();
        let (init, traj) = run(&sys, &data, &c).unwrap();
        let rates = sys.decay_rates().0;
        for ((y0, rate), y) in init.y0.iter().zip(rates).zip(traj.final_state().0) {
            let exact = y0 * (-rate).exp();
            assert!(((y - exact) / exact).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let inst = ProstateInstance::default();
        let mut map = prostate_to_abstract(&inst).unwrap();
        map.model.nonlinearities.kappa = ScalarNonlinearity::zero();
        map.model.nonlinearities.h = ScalarNonlinearity::zero().with_energy(EnergyBound { c2: 1.0, c3: 1.0 });
        let c = cfg(4, 0.01, 0.2);
        let (sys, data) = build_run(&map.model, &zero_spec(), &c).unwrap();
        let (_, traj) = run(&sys, &data, &c).unwrap();
        assert!(traj.y.iter().chain(&traj.z).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_examples() {
        let model = linear_model(0.0, zero_set());
        let mut spec = zero_spec();
        spec.phi0 = FieldFormula::Mode {
            boundary: BoundaryCondition::Dirichlet,
            index: 0,
            amplitude: 1.0,
        };
        spec.sigma0 = FieldFormula::Mode {
            boundary: BoundaryCondition::Neumann,
            index: 4,
            amplitude: 1.0,
        };
        let (sys, data) = build_run(&model, &spec, &cfg(4, 0.1, 1.0)).unwrap();
        let p = project_initial(&data, &sys).unwrap();
        assert!((p.y0[0] - 1.0).abs() < 1e-13);
        assert!(p.y0[1..].iter().all(|v| v.abs() < 1e-13));
        assert!(p.z0.iter().all(|v| v.abs() < 1e-13));
        assert!((p.sigma_truncation - 1.0).abs() < 1e-12);
        assert!(p.phi_truncation < 1e-12);
        assert!(p.nonexpansive);
    }

    #[test]
    fn quadrature_doubling_leaves_psi_unchanged() {
        let map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        let mut spec = zero_spec();
        spec.u = SpaceTimeFormula::constant(0.3);
        spec.s = SpaceTimeFormula::constant(map.s_value);
        let y = [0.4, -0.2, 0.1, 0.05];
        let z = [0.8, 0.1, -0.05, 0.02];
        let mut base = cfg(4, 0.1, 1.0);
        base.quadrature = Some(64);
        let (s1, _) = build_run(&map.model, &spec, &base).unwrap();
        base.quadrature = Some(128);
        let (s2, _) = build_run(&map.model, &spec, &base).unwrap();
        let (a, b) = (s1.psi_integrals(0.0, &y, &z).unwrap(), s2.psi_integrals(0.0, &y, &z).unwrap());
        for k in 0..4 {
            for i in 0..4 {
                assert!((a[k][i] - b[k][i]).abs() < 1e-8, "psi{} {i}", k + 1);
            }
        }
    }

    #[test]
    fn rhs_is_lipschitz_on_balls() {
        let map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        let (sys, _) = build_run(&map.model, &zero_spec(), &cfg(4, 0.1, 1.0)).unwrap();
        let l = sys.rhs_lipschitz_estimate(&[0.1; 4], &[0.5; 4], 0.5, 200, 3).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn band_limited_refinement_is_exact() {
        let model = linear_model(0.0, zero_set());
        let mut spec = zero_spec();
        spec.phi0 = FieldFormula::Mode {
            boundary: BoundaryCondition::Dirichlet,
            index: 1,
            amplitude: 0.5,
        };
        let base = cfg(4, 0.1, 0.5);
        let levels = [
            Level { n: 4, eps: 0.1, dt: 0.01 },
            Level { n: 8, eps: 0.1, dt: 0.01 },
            Level { n: 16, eps: 0.1, dt: 0.01 },
        ];
        let r = refine_study(&model, &spec, &base, &levels).unwrap();
        assert!(r.differences.iter().all(|d| d.linf_h() < 1e-13));
        let same = refine_study(&model, &spec, &base, &[levels[0], levels[0]]).unwrap();
        assert_eq!(same.differences[0].linf_h(), 0.0);
        assert!(refine_study(&model, &spec, &base, &[levels[1], levels[0]]).is_err());
    }

    #[test]
    fn csv_layout() {
        let model = linear_model(0.0, zero_set());
        let c = cfg(2, 0.25, 0.5);
        let (sys, data) = build_run(&model, &zero_spec(), &c).unwrap();
        let (_, traj) = run(&sys, &data, &c).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,y_1,y_2,z_1,z_2,phi_h,sigma_h,phi_graph,sigma_graph,beta_energy,phi_dissipation,sigma_dissipation,phi_residual,sigma_residual"
        );
        assert_eq!(lines.count(), 3);
        assert_eq!(traj.times, vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn energy_residual_is_second_order() {
        let map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        let mut spec = zero_spec();
        spec.phi0 = FieldFormula::Sine {
            amplitude: 0.8,
            kx: 1,
            ky: None,
        };
        spec.sigma0 = FieldFormula::Constant { value: 0.5 };
        spec.u = SpaceTimeFormula::constant(0.2);
        spec.s = SpaceTimeFormula::constant(map.s_value);
        let mut res = Vec::new();
        for dt in [0.02, 0.01] {
            let c = cfg(6, dt, 0.4);
            let (sys, data) = build_run(&map.model, &spec, &c).unwrap();
            let (_, traj) = run(&sys, &data, &c).unwrap();
            res.push((traj.max_phi_residual(), traj.max_sigma_residual()));
        }
        assert!(res[0].0 / res[1].0 > 3.5, "{res:?}");
        assert!(res[0].1 / res[1].1 > 3.5, "{res:?}");
    }

    #[test]
    fn etd_matches_rk4_oracle() {
        let map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        let mut spec = zero_spec();
        spec.phi0 = FieldFormula::Sine {
            amplitude: 0.8,
            kx: 1,
            ky: None,
        };
        spec.sigma0 = FieldFormula::Constant { value: 0.5 };
        let c = cfg(4, 1e-3, 0.05);
        let (sys, data) = build_run(&map.model, &spec, &c).unwrap();
        let (init, etd) = run(&sys, &data, &c).unwrap();
        let oracle_cfg = SolverConfig {
            dt: 1e-4,
            integrator: Integrator::Rk4Oracle,
            ..c.clone()
        };
        let oracle = integrate(&sys, &oracle_cfg, &init.y0, &init.z0).unwrap();
        let (a, b) = (etd.final_state(), oracle.final_state());
        for (p, q) in a.0.iter().zip(b.0).chain(a.1.iter().zip(b.1)) {
            assert!((p - q).abs() < 1e-7);
        }
        assert!(step_halving_defect(&sys, &c, &init.y0, &init.z0).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_configs() {
        let model = linear_model(0.0, zero_set());
        for c in [cfg(0, 0.1, 1.0), cfg(2, -0.1, 1.0), cfg(2, 0.1, 0.0)] {
            assert!(matches!(build_run(&model, &zero_spec(), &c), Err(Error::InvalidConfiguration(_))));
        }
        let mut c = cfg(40, 0.1, 1.0);
        c.quadrature = Some(32);
        assert!(build_run(&model, &zero_spec(), &c).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn rhs_without_nonlinearities_is_diagonal(
            y in proptest::collection::vec(-5.0f64..5.0, 5),
            z in proptest::collection::vec(-5.0f64..5.0, 5),
            t in 0.0f64..1.0,
        ) {
            let model = linear_model(0.0, zero_set());
            let (sys, _) = build_run(&model, &zero_spec(), &cfg(5, 0.1, 1.0)).unwrap();
            let (dy, dz) = sys.assemble_rhs(t, &y, &z).unwrap();
            let (ra, rb) = sys.decay_rates();
            for i in 0..5 {
                proptest::prop_assert_eq!(dy[i], -ra[i] * y[i]);
                proptest::prop_assert_eq!(dz[i], -rb[i] * z[i]);
            }
        }
    }
}
