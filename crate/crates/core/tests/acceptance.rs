//! The ten acceptance criteria, one pass/fail line each.

use std::sync::Arc;
use std::time::{Duration, Instant};

use fracphase::diagnostics::{channel_spread, estimate_report, scale_sweep, stability_experiment, Perturbation};
use fracphase::model::{
    prostate_to_abstract, validate_hypotheses, AbstractModel, DataSpec, FieldFormula, FieldTerm, OperatorSpec,
    ProstateInstance, SpaceTimeFormula, StructuralHypotheses, UniquenessExponents,
};
use fracphase::potentials::{ConvexSplitPotential, CustomParts, EffectiveDomain};
use fracphase::regularize::{NonlinearitySet, ScalarNonlinearity};
use fracphase::solver::{build_run, integrate, refine_study, run, Integrator, Level, SolverConfig};
use fracphase::spectral::{BoundaryCondition, Domain};
use fracphase::verify::{energy_suite, lemma41_suite, smooth_instance, spectral_suite, yosida_suite, SuiteReport};

type Outcome = fracphase::Result<(bool, String)>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn cfg(n: usize, eps: f64, dt: f64, horizon: f64) -> SolverConfig {
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

fn suite(r: SuiteReport) -> Outcome {
    let worst: Vec<String> = r.failures().map(|c| format!("{} = {:e}", c.name, c.value)).collect();
    let detail = if worst.is_empty() {
        format!("{} checks", r.checks.len())
    } else {
        worst.join("; ")
    };
    Ok((r.passed, detail))
}

fn yosida() -> Outcome {
    suite(yosida_suite(&Default::default())?)
}

fn lemma41() -> Outcome {
    suite(lemma41_suite(&Default::default(), 41)?)
}

fn spectral() -> Outcome {
    suite(spectral_suite(3)?)
}

fn zero_potential() -> ConvexSplitPotential {
    ConvexSplitPotential::custom(CustomParts {
        beta_hat: Arc::new(|_| 0.0),
        beta: Arc::new(|_| 0.0),
        domain: EffectiveDomain::REAL_LINE,
        pi_hat: Arc::new(|_| 0.0),
        pi: Arc::new(|_| 0.0),
        pi_lipschitz: 0.0,
    })
    .expect("zero potential is valid")
}

fn linear_oracle() -> Outcome {
    let hyp = StructuralHypotheses {
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
    };
    let model = AbstractModel {
        domain: Domain::interval(1.0),
        operator_a: OperatorSpec {
            boundary: BoundaryCondition::Dirichlet,
            diffusivity: 0.05,
        },
        operator_b: OperatorSpec {
            boundary: BoundaryCondition::Neumann,
            diffusivity: 0.05,
        },
        rho: 0.75,
        tau: 0.5,
        potential: zero_potential(),
        nonlinearities: NonlinearitySet {
            h: ScalarNonlinearity::zero(),
            m: ScalarNonlinearity::zero(),
            gamma: ScalarNonlinearity::zero(),
            kappa: ScalarNonlinearity::zero(),
        },
        m0: 0.0,
        hypotheses: hyp,
    };
    let modes = |bc| FieldFormula::Affine {
        offset: 0.0,
        terms: (0..8)
            .map(|j| FieldTerm {
                coeff: 1.0 / (j + 1) as f64,
                field: FieldFormula::Mode {
                    boundary: bc,
                    index: j,
                    amplitude: 1.0,
                },
            })
            .collect(),
    };
    let spec = DataSpec {
        phi0: modes(BoundaryCondition::Dirichlet),
        sigma0: modes(BoundaryCondition::Neumann),
        u: SpaceTimeFormula::zero(),
        s: SpaceTimeFormula::zero(),
        time_slices: 2,
    };
    let c = cfg(8, 0.01, 0.01, 1.0);
    let (sys, data) = build_run(&model, &spec, &c)?;
    let (init, traj) = run(&sys, &data, &c)?;
    let (ra, rb) = sys.decay_rates();
    // independent closed form: λ_j = 0.05 (jπ)², λ′_j = 0.05 ((j−1)π)²
    let pi = std::f64::consts::PI;
    let mut worst = 0.0_f64;
    for j in 0..8 {
        let la = (0.05 * ((j + 1) as f64 * pi).powi(2)).powf(1.5);
        let lb = 0.05 * (j as f64 * pi).powi(2);
        assert!((ra[j] - la).abs() <= 1e-12 * la && (rb[j] - lb).abs() <= 1e-12 * lb.max(1.0));
        let ey = init.y0[j] * (-la).exp();
        let ez = init.z0[j] * (-lb).exp();
        worst = worst
            .max(((traj.final_state().0[j] - ey) / ey).abs())
            .max(((traj.final_state().1[j] - ez) / ez).abs());
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:e}")))
}

fn prostate_spec(s_value: f64) -> DataSpec {
    DataSpec {
        phi0: FieldFormula::Sine {
            amplitude: 0.8,
            kx: 1,
            ky: None,
        },
        sigma0: FieldFormula::Cosine {
            amplitude: 0.3,
            kx: 1,
            ky: None,
        },
        u: SpaceTimeFormula::constant(0.4),
        s: SpaceTimeFormula::constant(s_value),
        time_slices: 2,
    }
}

fn oracle_equivalence() -> Outcome {
    let map = prostate_to_abstract(&ProstateInstance::default())?;
    let c = cfg(4, 0.01, 1e-3, 0.1);
    let (sys, data) = build_run(&map.model, &prostate_spec(map.s_value), &c)?;
    let (init, etd) = run(&sys, &data, &c)?;
    let oracle_cfg = SolverConfig {
        dt: 1e-5,
        integrator: Integrator::Rk4Oracle,
        ..c
    };
    let oracle = integrate(&sys, &oracle_cfg, &init.y0, &init.z0)?;
    let (a, b) = (etd.final_state(), oracle.final_state());
    let diff = a
        .0
        .iter()
        .zip(b.0)
        .chain(a.1.iter().zip(b.1))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok((diff < 1e-6, format!("max coefficient difference {diff:e}")))
}

fn energy() -> Outcome {
    suite(energy_suite()?)
}

fn double_limit() -> Outcome {
    let (model, spec) = smooth_instance()?;
    let levels = [
        Level { n: 8, eps: 0.1, dt: 0.01 },
        Level { n: 16, eps: 0.05, dt: 0.01 },
        Level { n: 32, eps: 0.025, dt: 0.01 },
    ];
    let r = refine_study(&model, &spec, &cfg(8, 0.1, 0.01, 1.0), &levels)?;
    let d: Vec<f64> = r.differences.iter().map(|d| d.linf_h()).collect();
    let ratio = d[1] / d[0];
    Ok((
        d[1] < d[0] && ratio <= 0.75,
        format!("differences {:e}, {:e}; ratio {ratio:.4}", d[0], d[1]),
    ))
}

fn continuous_dependence() -> Outcome {
    let (model, spec) = smooth_instance()?;
    let c = cfg(8, 0.01, 0.01, 1.0);
    let (_, data) = build_run(&model, &spec, &c)?;
    let same = stability_experiment(&model, &data, &data, &c)?;
    let dir = Perturbation {
        phi0: FieldFormula::Mode {
            boundary: BoundaryCondition::Dirichlet,
            index: 0,
            amplitude: 1.0,
        },
        u: FieldFormula::Zero,
        s: FieldFormula::Zero,
    };
    let sweep = scale_sweep(&model, &data, &dir, &[1e-2, 1e-3, 1e-4], &c)?;
    let positive = sweep.reports.iter().all(|r| r.lhs > 0.0 && r.rhs > 0.0);
    Ok((
        same.lhs == 0.0 && positive && sweep.ratio_spread <= 3.0,
        format!(
            "identical-data difference {:e}; ratios {:?}; max/min {:.4}",
            same.lhs, sweep.ratios, sweep.ratio_spread
        ),
    ))
}

fn validator() -> Outcome {
    let ex = StructuralHypotheses {
        alpha_h: 3.0,
        alpha_gamma: 1.25,
        alpha_kappa: 2.5,
        p_h: 4.0 / 3.0,
        p_gamma: 4.0,
        q_gamma: 4.0,
        c0: 1.0,
        c1: 1.0,
        c2: 1.0,
        c3: 1.0,
        embedding_a: Some(5.0),
        embedding_b: Some(4.0),
        uniqueness: None,
    };
    let cubic = validate_hypotheses(&ex);
    let laplacian = validate_hypotheses(&StructuralHypotheses {
        alpha_h: 2.0,
        alpha_gamma: 1.0,
        alpha_kappa: 1.0,
        p_h: 2.0,
        embedding_a: Some(6.0),
        embedding_b: Some(6.0),
        ..ex.clone()
    });
    let mut u = UniquenessExponents::uniform(4.0);
    u.p_gamma1 = 7.5;
    u.q_gamma1 = 5.0;
    u.r_gamma1 = 6.0;
    let uniq = validate_hypotheses(&StructuralHypotheses {
        alpha_h: 1.25,
        alpha_gamma: 1.25,
        alpha_kappa: 1.25,
        p_h: 2.0,
        embedding_a: Some(5.0),
        embedding_b: Some(6.0),
        uniqueness: Some(u),
        ..ex.clone()
    });
    let counter = validate_hypotheses(&StructuralHypotheses {
        p_gamma: 3.0,
        q_gamma: 3.0,
        ..ex
    });
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let ok = cubic.accepted
        && close(cubic.p0, 1.25)
        && laplacian.accepted
        && close(laplacian.p0, 4.0 / 3.0)
        && uniq.accepted
        && uniq.p_star.is_some_and(|p| close(p, 5.0))
        && uniq.q_star.is_some_and(|q| close(q, 6.0))
        && !counter.accepted;
    Ok((
        ok,
        format!(
            "p0 = {}, {}; p_* = {:?}, q_* = {:?}; 1/3 + 1/3 rejected: {}",
            cubic.p0, laplacian.p0, uniq.p_star, uniq.q_star, !counter.accepted
        ),
    ))
}

fn eps_uniform() -> Outcome {
    let (model, spec) = smooth_instance()?;
    let mut reports = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3] {
        let c = cfg(16, eps, 0.01, 1.0);
        let (sys, data) = build_run(&model, &spec, &c)?;
        reports.push(estimate_report(&run(&sys, &data, &c)?.1));
    }
    let spread = channel_spread(&reports);
    let (name, worst) = spread
        .iter()
        .copied()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok((
        worst < 0.2 && reports.iter().all(|r| r.is_finite()),
        format!("largest relative spread {worst:.4} ({name})"),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Moreau-Yosida ordering and prox", Duration::from_secs(10), yosida),
        ("mollification, growth and energy clamp", Duration::from_secs(30), lemma41),
        ("spectral basis and projection", Duration::from_secs(10), spectral),
        ("exact linear decay", Duration::from_secs(1), linear_oracle),
        ("ETDRK4 vs RK4 oracle", Duration::from_secs(60), oracle_equivalence),
        ("energy-identity residual order", Duration::from_secs(60), energy),
        ("double-limit Cauchy behaviour", Duration::from_secs(300), double_limit),
        ("continuous dependence", Duration::from_secs(300), continuous_dependence),
        ("hypothesis validator", Duration::from_secs(1), validator),
        ("eps-uniform estimate channels", Duration::from_secs(300), eps_uniform),
    ];
    let mut failed = 0;
    for (k, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && elapsed < *budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {name}: {detail} [{:.2}s of {}s]",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
