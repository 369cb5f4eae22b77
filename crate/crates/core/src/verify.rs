//! Named verification suites with fixed tolerances.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{model_lipschitz_probe, scale_sweep, stability_experiment, Perturbation};
use crate::error::{Error, Result};
use crate::model::{prostate_to_abstract, AbstractModel, DataSpec, FieldFormula, ProstateInstance, SpaceTimeFormula};
use crate::potentials::{brute_force_prox, make_potential, ExtendedReal, PotentialKind};
use crate::regularize::{
    clamp_to_energy, mollified_growth, mollify, pick_constants, EnergyBound, NonlinearityFormula, ScalarNonlinearity,
};
use crate::solver::{build_run, run, Integrator, SolverConfig};
use crate::spectral::{
    apply_fractional, build_basis, graph_norm_coeffs, orthonormality_defect, project, BoundaryCondition, Domain,
    EigenBasis, GridFunction, ModeTable, Quadrature, SpectralField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::AtLeast,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const SUITES: [&str; 5] = ["yosida", "lemma41", "spectral", "energy", "stability"];

/// Options for every suite; the defaults are the documented settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteOptions {
    pub yosida: YosidaOptions,
    pub lemma41: Lemma41Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YosidaOptions {
    pub potentials: Vec<PotentialKind>,
    pub points: usize,
}

impl Default for YosidaOptions {
    fn default() -> Self {
        YosidaOptions {
            potentials: vec![
                PotentialKind::Regular { c0: 1.0 },
                PotentialKind::Logarithmic { c1: 2.0 },
                PotentialKind::SingularReciprocal { c2: 1.0, d: 1.0 },
                PotentialKind::DoubleObstacle { c3: 1.0 },
            ],
            points: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lemma41Options {
    pub potential: PotentialKind,
    /// h with |h|² ≤ c2 β̂ + c3 on dom β̂.
    pub h: NonlinearityFormula,
    pub c2: f64,
    pub c3: f64,
    /// Replaces the computed K₃ when set.
    pub k3: Option<f64>,
    pub random_points: usize,
}

impl Default for Lemma41Options {
    fn default() -> Self {
        Lemma41Options {
            potential: PotentialKind::DoubleObstacle { c3: 1.0 },
            h: NonlinearityFormula::Polynomial { coeffs: vec![0.5, 1.0] },
            c2: 1.0,
            c3: 2.25,
            k3: None,
            random_points: 100_000,
        }
    }
}

pub fn run_suite(name: &str, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    match name {
        "yosida" => yosida_suite(&opts.yosida),
        "lemma41" => lemma41_suite(&opts.lemma41, seed),
        "spectral" => spectral_suite(seed),
        "energy" => energy_suite(),
        "stability" => stability_suite(seed),
        other => Err(Error::config(format!(
            "unknown suite '{other}', expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// Ordering 0 ≤ β̂_{1e-2} ≤ β̂_{1e-3} ≤ β̂ and prox against a brute-force
/// minimizer, on `points` grid points of [−2, 2].
pub fn yosida_suite(opts: &YosidaOptions) -> Result<SuiteReport> {
    if opts.points < 2 {
        return Err(Error::config("yosida.points must be at least 2"));
    }
    let mut checks = Vec::new();
    for kind in &opts.potentials {
        let pot = make_potential(*kind)?;
        let label = kind_label(kind);
        let (mut order, mut prox_err) = (0.0_f64, 0.0_f64);
        for i in 0..opts.points {
            let r = -2.0 + 4.0 * i as f64 / (opts.points - 1) as f64;
            let coarse = pot.yosida_pair(r, 1e-2)?.value;
            let fine = pot.yosida_pair(r, 1e-3)?.value;
            order = order.max(-coarse).max(coarse - fine);
            if let ExtendedReal::Finite(b) = pot.beta_hat(r) {
                order = order.max(fine - b);
            }
            for eps in [1e-2, 1e-3] {
                prox_err = prox_err.max((pot.prox(r, eps)? - brute_force_prox(&pot, r, eps)).abs());
            }
        }
        checks.push(Check::at_most(format!("{label}: ordering violation"), order, 1e-9));
        checks.push(Check::at_most(format!("{label}: prox vs brute force"), prox_err, 1e-5));
    }
    Ok(SuiteReport::new("yosida", checks))
}

fn kind_label(kind: &PotentialKind) -> &'static str {
    match kind {
        PotentialKind::Regular { .. } => "regular",
        PotentialKind::Logarithmic { .. } => "logarithmic",
        PotentialKind::SingularReciprocal { .. } => "singular",
        PotentialKind::DoubleObstacle { .. } => "double_obstacle",
    }
}

fn arctan_law() -> NonlinearityFormula {
    NonlinearityFormula::ArctanLaw {
        m_ref: 1.0,
        rho: 1.0,
        apoptosis: 0.5,
        sigma_l: 0.5,
        sigma_r: 0.25,
    }
}

/// Uniform convergence of the mollified functions, preserved growth, and
/// the energy clamp for h.
pub fn lemma41_suite(opts: &Lemma41Options, seed: u64) -> Result<SuiteReport> {
    let epsilons = [1e-1, 1e-2, 1e-3];
    let mut checks = Vec::new();
    let lipschitz_tests = [
        ("arctan law", arctan_law()),
        ("affine", NonlinearityFormula::Polynomial { coeffs: vec![0.5, -2.0] }),
        ("h", opts.h.clone()),
    ];
    let grid: Vec<f64> = (0..=400).map(|i| -2.0 + 0.01 * i as f64).collect();
    for (name, f) in &lipschitz_tests {
        let psi = ScalarNonlinearity::from_formula(f.clone())?;
        let Some(lip) = psi.lipschitz() else { continue };
        for eps in epsilons {
            let s = mollify(&psi, eps)?;
            let mut err = 0.0_f64;
            for r in &grid {
                err = err.max((s.eval(*r)? - psi.eval(*r)).abs());
            }
            checks.push(Check::at_most(
                format!("{name}: sup|psi_eps - psi| on [-2,2], eps={eps}"),
                err,
                lip * eps + 1e-12,
            ));
        }
    }
    for (name, f) in [
        ("cubic", NonlinearityFormula::Polynomial { coeffs: vec![1.0, -3.0, 0.0, 0.5] }),
        ("arctan law", arctan_law()),
    ] {
        let psi = ScalarNonlinearity::from_formula(f)?;
        let g = mollified_growth(psi.growth().ok_or_else(|| Error::config("growth not available"))?);
        for eps in epsilons {
            let s = mollify(&psi, eps)?;
            let mut excess = f64::NEG_INFINITY;
            for i in 0..=2000 {
                let r = -100.0 + 0.1 * i as f64;
                excess = excess.max(s.eval(r)?.abs() / g.bound(r) - 1.0);
            }
            checks.push(Check::at_most(format!("{name}: growth bound on [-100,100], eps={eps}"), excess, 1e-12));
        }
    }

    let pot = make_potential(opts.potential)?;
    let h = ScalarNonlinearity::from_formula(opts.h.clone())?.with_energy(EnergyBound {
        c2: opts.c2,
        c3: opts.c3,
    });
    let computed = pick_constants(&h, &pot, crate::regularize::default_delta(&pot))?;
    let k2 = computed.k2;
    let k3 = opts.k3.unwrap_or(computed.k3);
    checks.push(Check::at_least("K3 covers |h|^2 near the endpoints of dom beta_hat", k3, computed.k3));
    let lip_h = h.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = pot.domain();
    for eps in epsilons {
        let clamped = clamp_to_energy(&mollify(&h, eps)?, &pot, k2, k3)?;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.random_points {
            let r: f64 = rng.random_range(-10.0..10.0);
            let v = clamped.eval(r)?;
            let b = pot.yosida_pair(r, eps)?.value;
            worst = worst.max(v * v - (k2 * b + k3));
        }
        checks.push(Check::at_most(format!("clamp |h_eps|^2 <= K2 beta_eps + K3, eps={eps}"), worst, 1e-12));
        if let Some(lip) = lip_h {
            let (lo, hi) = (dom.lower.max(-2.0), dom.upper.min(2.0));
            let mut err = 0.0_f64;
            for i in 0..=400 {
                let r = lo + (hi - lo) * i as f64 / 400.0;
                if dom.closure_contains(r) {
                    err = err.max((clamped.eval(r)? - h.eval(r)).abs());
                }
            }
            checks.push(Check::at_most(
                format!("clamped h_eps converges to h on dom beta_hat, eps={eps}"),
                err,
                lip * eps + 1e-12,
            ));
        }
    }
    Ok(SuiteReport::new("lemma41", checks))
}

fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|j| rng.random_range(-1.0..1.0) / (1.0 + j as f64)).collect()
}

/// Orthonormality, Parseval, the fractional semigroup law, and
/// non-expansion of the spectral projection.
pub fn spectral_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let domains = [
        ("interval", Domain::interval(1.0)),
        ("interval L=2.5", Domain::interval(2.5)),
        ("rectangle", Domain::rectangle(1.0, 2.0)),
    ];
    for (dname, domain) in domains {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let label = format!("{dname} {bc:?}");
            let basis = build_basis(domain, bc, 64)?;
            let quad = Quadrature::new(domain, basis.default_resolution())?;
            checks.push(Check::at_most(
                format!("{label}: orthonormality n=64"),
                orthonormality_defect(&basis, &quad),
                1e-10,
            ));

            let basis = Arc::new(basis);
            let quad = Arc::new(quad);
            let table = ModeTable::new(&basis, &quad);
            let c = random_coeffs(&mut rng, basis.len());
            let mut vals = vec![0.0; quad.len()];
            table.synthesize_into(&c, &mut vals);
            let grid_sq: f64 = vals.iter().zip(quad.weights()).map(|(v, w)| w * v * v).sum();
            let coeff_sq: f64 = c.iter().map(|v| v * v).sum();
            checks.push(Check::at_most(
                format!("{label}: Parseval"),
                (grid_sq - coeff_sq).abs() / coeff_sq,
                1e-8,
            ));

            let v = SpectralField::new(basis.clone(), c.clone())?;
            let (a, b) = (0.3, 0.45);
            let two = apply_fractional(&apply_fractional(&v, a)?, b)?;
            let one = apply_fractional(&v, a + b)?;
            let rel = two
                .coeffs()
                .iter()
                .zip(one.coeffs())
                .map(|(x, y)| if *y == 0.0 { (x - y).abs() } else { ((x - y) / y).abs() })
                .fold(0.0, f64::max);
            checks.push(Check::at_most(format!("{label}: semigroup A^a A^b = A^(a+b)"), rel, 1e-12));

            let (h_excess, g_excess) = projection_excess(&basis, &quad, &mut rng)?;
            checks.push(Check::at_most(format!("{label}: projection non-expansion in H"), h_excess, 1e-10));
            checks.push(Check::at_most(
                format!("{label}: projection non-expansion in graph norm"),
                g_excess,
                1e-10,
            ));
        }
    }
    Ok(SuiteReport::new("spectral", checks))
}

/// ‖Π_n f‖ − ‖f‖ in H and in the graph norm, with ‖f‖_{A,1/2} taken in a
/// 4n-mode reference basis; f is a random smooth field.
fn projection_excess(basis: &Arc<EigenBasis>, quad: &Arc<Quadrature>, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let n = 8.min(basis.len());
    let small = Arc::new(basis.with_modes(n)?);
    let reference = Arc::new(basis.with_modes(4 * n)?);
    let c = random_coeffs(rng, reference.len());
    let table = ModeTable::new(&reference, quad);
    let mut vals = vec![0.0; quad.len()];
    table.synthesize_into(&c, &mut vals);
    let f = GridFunction::new(quad.clone(), vals)?;
    let p = project(&f, small.clone())?;
    let full = project(&f, reference.clone())?;
    let h = p.h_norm() - f.map(|v| v * v).integral().sqrt();
    let g = graph_norm_coeffs(p.coeffs(), small.eigenvalues(), 0.5)
        - graph_norm_coeffs(full.coeffs(), reference.eigenvalues(), 0.5);
    Ok((h, g))
}

/// The prostate instance with smooth data used by the energy, refinement,
/// stability and ε-uniformity experiments.
pub fn smooth_instance() -> Result<(AbstractModel, DataSpec)> {
    let map = prostate_to_abstract(&ProstateInstance::default())?;
    let spec = DataSpec {
        phi0: FieldFormula::Sine {
            amplitude: 0.5,
            kx: 1,
            ky: None,
        },
        sigma0: FieldFormula::Constant { value: 0.5 },
        u: SpaceTimeFormula::constant(0.2),
        s: SpaceTimeFormula::constant(map.s_value),
        time_slices: 2,
    };
    Ok((map.model, spec))
}

fn smooth_config(n: usize, eps: f64, dt: f64, horizon: f64) -> SolverConfig {
    SolverConfig {
        n,
        eps,
        dt,
        horizon,
        integrator: Integrator::EtdRk4,
        quadrature: None,
        stride: 1,
    }
}

/// Second-order decay of both energy-identity residuals under step halving.
pub fn energy_suite() -> Result<SuiteReport> {
    let (model, spec) = smooth_instance()?;
    let mut res = Vec::new();
    for dt in [2e-3, 1e-3] {
        let cfg = smooth_config(8, 0.01, dt, 0.5);
        let (sys, data) = build_run(&model, &spec, &cfg)?;
        let (_, traj) = run(&sys, &data, &cfg)?;
        res.push((traj.max_phi_residual(), traj.max_sigma_residual()));
    }
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::INFINITY } else { a / b };
    Ok(SuiteReport::new(
        "energy",
        vec![
            Check::at_least("phi energy residual ratio under dt halving", ratio(res[0].0, res[1].0), 3.5),
            Check::at_least("sigma energy residual ratio under dt halving", ratio(res[0].1, res[1].1), 3.5),
        ],
    ))
}

/// Exact zero for identical data, stable ratios for a φ₀ perturbation
/// along e₁, and the declared derivative bounds of h, γ, κ.
pub fn stability_suite(seed: u64) -> Result<SuiteReport> {
    let (model, spec) = smooth_instance()?;
    let cfg = smooth_config(8, 0.01, 0.01, 1.0);
    let (_, data) = build_run(&model, &spec, &cfg)?;
    let same = stability_experiment(&model, &data, &data, &cfg)?;
    let dir = Perturbation {
        phi0: FieldFormula::Mode {
            boundary: BoundaryCondition::Dirichlet,
            index: 0,
            amplitude: 1.0,
        },
        u: FieldFormula::Zero,
        s: FieldFormula::Zero,
    };
    let sweep = scale_sweep(&model, &data, &dir, &[1e-2, 1e-3, 1e-4], &cfg)?;
    let mut checks = vec![
        Check::at_most("identical data: solution difference", same.lhs, 0.0),
        Check::at_most("perturbation ratio max/min over scales", sweep.ratio_spread, 3.0),
    ];
    for r in model_lipschitz_probe(&model, 100_000, seed)? {
        checks.push(Check::at_least(
            format!("{}: derivative-bound probe slack", r.name),
            r.worst_slack,
            0.0,
        ));
    }
    Ok(SuiteReport::new("stability", checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_a_configuration_error() {
        assert!(matches!(
            run_suite("nope", &SuiteOptions::default(), 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn spectral_suite_passes() {
        let r = spectral_suite(1).unwrap();
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn lemma41_fails_with_zero_k3() {
        let opts = Lemma41Options {
            k3: Some(0.0),
            random_points: 1000,
            ..Default::default()
        };
        let r = lemma41_suite(&opts, 3).unwrap();
        assert!(!r.passed);
        assert!(r.failures().any(|c| c.name.starts_with("K3")));
        assert!(r.failures().any(|c| c.name.contains("converges")));
        // the clamp inequality itself holds by construction
        assert!(r.checks.iter().filter(|c| c.name.starts_with("clamp |")).all(|c| c.passed));
    }

    #[test]
    fn lemma41_passes_with_computed_constants() {
        let opts = Lemma41Options {
            random_points: 2000,
            ..Default::default()
        };
        let r = lemma41_suite(&opts, 3).unwrap();
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn yosida_suite_on_obstacle() {
        let opts = YosidaOptions {
            potentials: vec![PotentialKind::DoubleObstacle { c3: 1.0 }],
            points: 101,
        };
        assert!(yosida_suite(&opts).unwrap().passed);
    }

    #[test]
    fn options_parse_from_toml() {
        let o: SuiteOptions = toml::from_str("[lemma41]\nk3 = 0.0\n").unwrap();
        assert_eq!(o.lemma41.k3, Some(0.0));
        assert!(toml::from_str::<SuiteOptions>("[lemma41]\nbogus = 1\n").is_err());
    }
}
