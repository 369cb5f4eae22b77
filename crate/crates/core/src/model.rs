//! Structural data of the phase-field/nutrient system
//!
//! ```text
//! ∂tφ + A^{2ρ}φ + F′(φ) = h(φ)(m(σ) − m₀u)
//! ∂tσ + B^{2τ}σ + γ(φ)σ = κ(φ) − Sφ
//! ```
//!
//! with the exponent bookkeeping that makes it well posed, the prostate
//! tumour instance, and synthetic data generation.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{make_potential, ConvexSplitPotential, ExtendedReal, PotentialKind};
use crate::regularize::{EnergyBound, GrowthBound, NonlinearityFormula, NonlinearitySet, ScalarNonlinearity};
use crate::spectral::{build_basis, BoundaryCondition, Domain, EigenBasis, GridFunction, Quadrature, TimeSeriesField};

const HARMONIC_TOL: f64 = 1e-12;

/// Exponents for uniqueness and continuous dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessExponents {
    pub p_h1: f64,
    pub q_h1: f64,
    pub p_h2: f64,
    pub q_h2: f64,
    pub p_gamma1: f64,
    pub q_gamma1: f64,
    pub r_gamma1: f64,
    pub p_gamma2: f64,
    pub q_gamma2: f64,
    pub p_kappa: f64,
    pub q_kappa: f64,
    /// |ψ′(r)| ≤ C₀′ |r|^{α−1} + C₁′ for ψ = h, γ, κ.
    #[serde(default)]
    pub c0_prime: Option<f64>,
    #[serde(default)]
    pub c1_prime: Option<f64>,
    #[serde(default)]
    pub m_lipschitz: Option<f64>,
}

impl UniquenessExponents {
    /// Every exponent equal to `p`.
    pub fn uniform(p: f64) -> Self {
        UniquenessExponents {
            p_h1: p,
            q_h1: p,
            p_h2: p,
            q_h2: p,
            p_gamma1: p,
            q_gamma1: p,
            r_gamma1: p,
            p_gamma2: p,
            q_gamma2: p,
            p_kappa: p,
            q_kappa: p,
            c0_prime: None,
            c1_prime: None,
            m_lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralHypotheses {
    pub alpha_h: f64,
    pub alpha_gamma: f64,
    pub alpha_kappa: f64,
    pub p_h: f64,
    pub p_gamma: f64,
    pub q_gamma: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// V_A^ρ ⊂ L^a, checked when given.
    #[serde(default)]
    pub embedding_a: Option<f64>,
    /// V_B^τ ⊂ L^b, checked when given.
    #[serde(default)]
    pub embedding_b: Option<f64>,
    #[serde(default)]
    pub uniqueness: Option<UniquenessExponents>,
}

impl StructuralHypotheses {
    pub fn p_h_conjugate(&self) -> f64 {
        self.p_h / (self.p_h - 1.0)
    }

    /// p₀ = max{α_γ p_γ, 2α_κ} / (α_h + 1).
    pub fn p0(&self) -> f64 {
        (self.alpha_gamma * self.p_gamma).max(2.0 * self.alpha_kappa) / (self.alpha_h + 1.0)
    }

    pub fn p_star(&self) -> Option<f64> {
        self.uniqueness.as_ref().map(|u| {
            [
                u.p_h1 * (self.alpha_h - 1.0),
                u.q_h1,
                self.alpha_h * u.p_h2,
                u.p_gamma1 * (self.alpha_gamma - 1.0),
                u.q_gamma1,
                self.alpha_gamma * u.p_gamma2,
                u.p_kappa,
                u.q_kappa,
            ]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    pub fn q_star(&self) -> Option<f64> {
        self.uniqueness
            .as_ref()
            .map(|u| u.q_h2.max(u.r_gamma1).max(u.q_gamma2))
    }
}

/// One checked condition; `residual` is the signed slack (≥ 0 when an
/// inequality holds) or the absolute defect of an identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub accepted: bool,
    pub p0: f64,
    pub p_star: Option<f64>,
    pub q_star: Option<f64>,
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.holds)
    }
}

pub fn validate_hypotheses(h: &StructuralHypotheses) -> ValidationReport {
    let mut conds = Vec::new();
    let mut at_least = |name: &str, v: f64, lo: f64| {
        conds.push(Condition {
            name: format!("{name} >= {lo}"),
            holds: v >= lo,
            residual: v - lo,
        })
    };
    at_least("alpha_h", h.alpha_h, 1.0);
    at_least("alpha_gamma", h.alpha_gamma, 1.0);
    at_least("alpha_kappa", h.alpha_kappa, 1.0);
    at_least("p_gamma", h.p_gamma, 2.0);
    at_least("q_gamma", h.q_gamma, 2.0);
    if let Some(u) = &h.uniqueness {
        for (n, v) in [
            ("p_h1", u.p_h1),
            ("q_h1", u.q_h1),
            ("p_h2", u.p_h2),
            ("q_h2", u.q_h2),
            ("p_gamma1", u.p_gamma1),
            ("q_gamma1", u.q_gamma1),
            ("r_gamma1", u.r_gamma1),
            ("p_gamma2", u.p_gamma2),
            ("q_gamma2", u.q_gamma2),
            ("p_kappa", u.p_kappa),
            ("q_kappa", u.q_kappa),
        ] {
            at_least(n, v, 2.0);
        }
    }
    let mut positive = |name: &str, v: f64| {
        conds.push(Condition {
            name: format!("{name} > 0"),
            holds: v > 0.0,
            residual: v,
        })
    };
    positive("C0", h.c0);
    positive("C1", h.c1);
    positive("C2", h.c2);
    positive("C3", h.c3);
    conds.push(Condition {
        name: "p_h > 1".into(),
        holds: h.p_h > 1.0 && h.p_h.is_finite(),
        residual: h.p_h - 1.0,
    });

    let harmonic = |name: &str, parts: &[f64]| {
        let defect = (parts.iter().map(|p| 1.0 / p).sum::<f64>() - 0.5).abs();
        Condition {
            name: name.into(),
            holds: defect <= HARMONIC_TOL,
            residual: defect,
        }
    };
    conds.push(harmonic("1/p_gamma + 1/q_gamma = 1/2", &[h.p_gamma, h.q_gamma]));
    let p0 = h.p0();
    conds.push(Condition {
        name: "p0 = max{alpha_gamma p_gamma, 2 alpha_kappa}/(alpha_h + 1) > 1".into(),
        holds: p0 > 1.0,
        residual: p0 - 1.0,
    });

    let embed = |name: String, need: f64, have: f64| Condition {
        name,
        holds: need <= have,
        residual: have - need,
    };
    if let Some(a) = h.embedding_a {
        for (n, v) in [
            ("alpha_h p_h", h.alpha_h * h.p_h),
            ("p_h'", h.p_h_conjugate()),
            ("alpha_gamma p_gamma", h.alpha_gamma * h.p_gamma),
            ("2 alpha_kappa", 2.0 * h.alpha_kappa),
        ] {
            conds.push(embed(format!("V_A embeds in L^({n})"), v, a));
        }
    }
    if let Some(b) = h.embedding_b {
        conds.push(embed("V_B embeds in L^(q_gamma)".into(), h.q_gamma, b));
    }

    if let Some(u) = &h.uniqueness {
        conds.push(harmonic("1/p_h1 + 1/q_h1 = 1/2", &[u.p_h1, u.q_h1]));
        conds.push(harmonic("1/p_h2 + 1/q_h2 = 1/2", &[u.p_h2, u.q_h2]));
        conds.push(harmonic(
            "1/p_gamma1 + 1/q_gamma1 + 1/r_gamma1 = 1/2",
            &[u.p_gamma1, u.q_gamma1, u.r_gamma1],
        ));
        conds.push(harmonic("1/p_gamma2 + 1/q_gamma2 = 1/2", &[u.p_gamma2, u.q_gamma2]));
        conds.push(harmonic("1/p_kappa + 1/q_kappa = 1/2", &[u.p_kappa, u.q_kappa]));
        if let (Some(a), Some(ps)) = (h.embedding_a, h.p_star()) {
            conds.push(embed("V_A embeds in L^(p_*)".into(), ps, a));
        }
        if let (Some(b), Some(qs)) = (h.embedding_b, h.q_star()) {
            conds.push(embed("V_B embeds in L^(q_*)".into(), qs, b));
        }
    }

    ValidationReport {
        accepted: conds.iter().all(|c| c.holds),
        p0,
        p_star: h.p_star(),
        q_star: h.q_star(),
        conditions: conds,
    }
}

/// A selfadjoint operator given by a Laplacian with boundary condition and
/// a positive diffusivity multiplying its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub boundary: BoundaryCondition,
    #[serde(default = "unit")]
    pub diffusivity: f64,
}

fn unit() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn basis(&self, domain: Domain, n: usize) -> Result<EigenBasis> {
        build_basis(domain, self.boundary, n)?.scaled(self.diffusivity)
    }
}

/// Catalog formulas for h, m, γ, κ together with the energy bound of h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySetSpec {
    pub h: NonlinearityFormula,
    pub m: NonlinearityFormula,
    pub gamma: NonlinearityFormula,
    pub kappa: NonlinearityFormula,
    /// |h|² ≤ c2 β̂ + c3 on dom β̂.
    pub h_energy: EnergyBound,
}

impl NonlinearitySetSpec {
    pub fn build(&self) -> Result<NonlinearitySet> {
        Ok(NonlinearitySet {
            h: ScalarNonlinearity::from_formula(self.h.clone())?.with_energy(self.h_energy),
            m: ScalarNonlinearity::from_formula(self.m.clone())?,
            gamma: ScalarNonlinearity::from_formula(self.gamma.clone())?,
            kappa: ScalarNonlinearity::from_formula(self.kappa.clone())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AbstractModel {
    pub domain: Domain,
    pub operator_a: OperatorSpec,
    pub operator_b: OperatorSpec,
    pub rho: f64,
    pub tau: f64,
    pub potential: ConvexSplitPotential,
    pub nonlinearities: NonlinearitySet,
    pub m0: f64,
    pub hypotheses: StructuralHypotheses,
}

impl AbstractModel {
    /// Bases for A and B with `n` modes each.
    pub fn bases(&self, n: usize) -> Result<(EigenBasis, EigenBasis)> {
        Ok((
            self.operator_a.basis(self.domain, n)?,
            self.operator_b.basis(self.domain, n)?,
        ))
    }

    /// Probes the declared growth of h, γ, κ against (α, C₀, C₁), the
    /// energy bound |h|² ≤ C₂β̂ + C₃ on dom β̂, and boundedness of m.
    pub fn check_structure(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.tau > 0.0 && self.rho.is_finite() && self.tau.is_finite()) {
            return Err(Error::config(format!(
                "exponents rho, tau must be positive, got {}, {}",
                self.rho, self.tau
            )));
        }
        if !self.m0.is_finite() {
            return Err(Error::config("m0 must be finite"));
        }
        let hy = &self.hypotheses;
        let grid: Vec<f64> = (0..=4000).map(|i| -20.0 + 0.01 * i as f64).collect();
        for (name, psi, alpha) in [
            ("h", &self.nonlinearities.h, hy.alpha_h),
            ("gamma", &self.nonlinearities.gamma, hy.alpha_gamma),
            ("kappa", &self.nonlinearities.kappa, hy.alpha_kappa),
        ] {
            let g = GrowthBound {
                alpha,
                k0: hy.c0,
                k1: hy.c1,
            };
            if let Some(r) = grid.iter().find(|r| psi.eval(**r).abs() > g.bound(**r) * (1.0 + 1e-12) + 1e-12) {
                return Err(Error::config(format!(
                    "{name} violates |{name}(r)| <= C0 |r|^{alpha} + C1 at r = {r}"
                )));
            }
        }
        for r in &grid {
            if let ExtendedReal::Finite(b) = self.potential.beta_hat(*r) {
                let v = self.nonlinearities.h.eval(*r);
                if v * v > (hy.c2 * b + hy.c3) * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::config(format!("|h|^2 <= C2 beta_hat + C3 fails at r = {r}")));
                }
            }
        }
        let m = &self.nonlinearities.m;
        let sup = grid.iter().map(|r| m.eval(*r).abs()).fold(0.0, f64::max);
        let far = [-1e6, -1e3, 1e3, 1e6].map(|r| m.eval(r).abs());
        if !sup.is_finite() || far.iter().any(|v| !v.is_finite() || *v > 10.0 * (sup + 1.0)) {
            return Err(Error::config("m must be bounded"));
        }
        Ok(())
    }
}

/// The prostate tumour model in its physical variables, with φ̃ ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProstateInstance {
    pub domain: Domain,
    pub mobility: f64,
    pub m_ref: f64,
    pub proliferation: f64,
    pub apoptosis: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub s_h: f64,
    pub s_c: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Antiangiogenic supply reduction, constant in space and time.
    #[serde(default)]
    pub antiangiogenic: f64,
}

impl Default for ProstateInstance {
    fn default() -> Self {
        ProstateInstance {
            domain: Domain::interval(1.0),
            mobility: 1.0,
            m_ref: 1.0,
            proliferation: 1.0,
            apoptosis: 0.5,
            sigma_l: 0.5,
            sigma_r: 0.25,
            gamma_h: 1.0,
            gamma_c: 2.0,
            s_h: 1.0,
            s_c: 1.5,
            lambda: 0.1,
            eta: 0.1,
            antiangiogenic: 0.2,
        }
    }
}

/// φ = 2φ̃ − 1.
pub fn to_abstract_phase(physical: f64) -> f64 {
    2.0 * physical - 1.0
}

/// φ̃ = (1 + φ)/2.
pub fn to_physical_phase(abstract_phase: f64) -> f64 {
    0.5 * (1.0 + abstract_phase)
}

impl ProstateInstance {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let named = [
            ("mobility", self.mobility),
            ("m_ref", self.m_ref),
            ("proliferation", self.proliferation),
            ("apoptosis", self.apoptosis),
            ("gamma_h", self.gamma_h),
            ("gamma_c", self.gamma_c),
            ("s_h", self.s_h),
            ("s_c", self.s_c),
            ("antiangiogenic", self.antiangiogenic),
        ];
        for (n, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{n} must be nonnegative, got {v}")));
            }
        }
        for (n, v) in [("mobility", self.mobility), ("m_ref", self.m_ref)] {
            if v <= 0.0 {
                return Err(Error::config(format!("{n} must be positive, got {v}")));
            }
        }
        for (n, v) in [("sigma_r", self.sigma_r), ("lambda", self.lambda), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{n} must be positive, got {v}")));
            }
        }
        if !self.sigma_l.is_finite() {
            return Err(Error::config("sigma_l must be finite"));
        }
        if self.antiangiogenic > self.s_c {
            return Err(Error::config(format!(
                "antiangiogenic reduction {} exceeds S_c = {}",
                self.antiangiogenic, self.s_c
            )));
        }
        Ok(())
    }

    /// m(σ) = m_ref((ρ+A)/2 + (ρ−A)/π arctan((σ − σ_l)/σ_r)).
    pub fn m_law(&self) -> NonlinearityFormula {
        NonlinearityFormula::ArctanLaw {
            m_ref: self.m_ref,
            rho: self.proliferation,
            apoptosis: self.apoptosis,
            sigma_l: self.sigma_l,
            sigma_r: self.sigma_r,
        }
    }

    /// 2φ̃(1 − φ̃) f(φ̃, σ, u) in physical variables.
    pub fn physical_phase_reaction(&self, phi: f64, sigma: f64, u: f64) -> f64 {
        let m = ScalarNonlinearity::from_formula(self.m_law()).map_or(f64::NAN, |m| m.eval(sigma));
        let f = self.mobility * (1.0 - 2.0 * phi - 3.0 * (m - self.m_ref * u));
        2.0 * phi * (1.0 - phi) * f
    }

    /// −γ_hσ − (γ_c − γ_h)σφ̃ + S_h + (S_c − S_h)φ̃ − sφ̃ in physical variables.
    pub fn physical_nutrient_reaction(&self, phi: f64, sigma: f64) -> f64 {
        -self.gamma_h * sigma - (self.gamma_c - self.gamma_h) * sigma * phi + self.s_h + (self.s_c - self.s_h) * phi
            - self.antiangiogenic * phi
    }
}

/// The abstract model of a prostate instance together with the constant
/// value of its S field.
#[derive(Debug, Clone)]
pub struct ProstateMapping {
    pub model: AbstractModel,
    pub s_value: f64,
}

/// Rewrites the instance in φ = 2φ̃ − 1 (equations multiplied by 2):
/// F(φ) = M(φ² − 1)²/4, h = 3M(1 − φ²), m₀ = m_ref,
/// γ = γ_h + (γ_c − γ_h)(1+φ)/2, κ = S_h + (S_c − S_h)(1+φ)/2 − s/2, S = s/2,
/// A = λ(−Δ_D), B = η(−Δ_N), ρ = τ = 1/2.
pub fn prostate_to_abstract(inst: &ProstateInstance) -> Result<ProstateMapping> {
    inst.validate()?;
    let mm = inst.mobility;
    let potential = make_potential(PotentialKind::Regular { c0: mm / 4.0 })?;
    let dg = 0.5 * (inst.gamma_c - inst.gamma_h);
    let g0 = inst.gamma_h + dg;
    let dk = 0.5 * (inst.s_c - inst.s_h);
    let s_value = 0.5 * inst.antiangiogenic;
    let k0 = inst.s_h + dk - s_value;
    let (c2, c3) = (36.0 * mm, 9.0 * mm * mm);
    let h = ScalarNonlinearity::from_formula(NonlinearityFormula::Polynomial {
        coeffs: vec![3.0 * mm, 0.0, -3.0 * mm],
    })?
    .with_energy(EnergyBound { c2, c3 });
    let gamma = ScalarNonlinearity::from_formula(NonlinearityFormula::Polynomial { coeffs: vec![g0, dg] })?;
    let kappa = ScalarNonlinearity::from_formula(NonlinearityFormula::Polynomial { coeffs: vec![k0, dk] })?;
    let m = ScalarNonlinearity::from_formula(inst.m_law())?;
    let c0 = (3.0 * mm).max(dg.abs()).max(dk.abs());
    let c1 = (3.0 * mm).max(g0.abs()).max(k0.abs());
    let m_lipschitz = m.lipschitz();
    let hypotheses = StructuralHypotheses {
        alpha_h: 2.0,
        alpha_gamma: 1.0,
        alpha_kappa: 1.0,
        p_h: 2.0,
        p_gamma: 4.0,
        q_gamma: 4.0,
        c0,
        c1,
        c2,
        c3,
        embedding_a: Some(6.0),
        embedding_b: Some(6.0),
        uniqueness: Some(UniquenessExponents {
            p_h1: 4.0,
            q_h1: 4.0,
            p_h2: 3.0,
            q_h2: 6.0,
            p_gamma1: 6.0,
            q_gamma1: 6.0,
            r_gamma1: 6.0,
            p_gamma2: 4.0,
            q_gamma2: 4.0,
            p_kappa: 4.0,
            q_kappa: 4.0,
            c0_prime: Some(6.0 * mm),
            c1_prime: Some(dg.abs().max(dk.abs())),
            m_lipschitz,
        }),
    };
    let model = AbstractModel {
        domain: inst.domain,
        operator_a: OperatorSpec {
            boundary: BoundaryCondition::Dirichlet,
            diffusivity: inst.lambda,
        },
        operator_b: OperatorSpec {
            boundary: BoundaryCondition::Neumann,
            diffusivity: inst.eta,
        },
        rho: 0.5,
        tau: 0.5,
        potential,
        nonlinearities: NonlinearitySet { h, m, gamma, kappa },
        m0: inst.m_ref,
        hypotheses,
    };
    model.check_structure()?;
    Ok(ProstateMapping { model, s_value })
}

/// Spatial profiles from a fixed catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldFormula {
    Zero,
    Constant {
        value: f64,
    },
    /// amplitude · e_index for the Laplacian eigenbasis with `boundary`.
    Mode {
        boundary: BoundaryCondition,
        index: usize,
        amplitude: f64,
    },
    /// amplitude · sin(kx π x / Lx) [· sin(ky π y / Ly)].
    Sine {
        amplitude: f64,
        kx: u32,
        #[serde(default)]
        ky: Option<u32>,
    },
    /// amplitude · cos(kx π x / Lx) [· cos(ky π y / Ly)].
    Cosine {
        amplitude: f64,
        kx: u32,
        #[serde(default)]
        ky: Option<u32>,
    },
    /// offset + Σ coeff · field.
    Affine {
        #[serde(default)]
        offset: f64,
        terms: Vec<FieldTerm>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldTerm {
    pub coeff: f64,
    pub field: FieldFormula,
}

impl FieldFormula {
    /// Samples the profile at every node of `quad`.
    pub fn sample(&self, quad: &Arc<Quadrature>) -> Result<Vec<f64>> {
        let domain = quad.domain();
        let (lx, ly) = match domain {
            Domain::Interval { length } => (length, 1.0),
            Domain::Rectangle { lx, ly } => (lx, ly),
        };
        let pts = quad.points();
        let out: Vec<f64> = match self {
            FieldFormula::Zero => vec![0.0; pts.len()],
            FieldFormula::Constant { value } => vec![*value; pts.len()],
            FieldFormula::Mode {
                boundary,
                index,
                amplitude,
            } => {
                let b = build_basis(domain, *boundary, index + 1)?;
                pts.iter().map(|p| amplitude * b.eval(*index, *p)).collect()
            }
            FieldFormula::Sine { amplitude, kx, ky } | FieldFormula::Cosine { amplitude, kx, ky } => {
                let trig: fn(f64) -> f64 = if matches!(self, FieldFormula::Sine { .. }) {
                    f64::sin
                } else {
                    f64::cos
                };
                pts.iter()
                    .map(|p| {
                        let fy = ky.map_or(1.0, |k| trig(k as f64 * PI * p[1] / ly));
                        amplitude * trig(*kx as f64 * PI * p[0] / lx) * fy
                    })
                    .collect()
            }
            FieldFormula::Affine { offset, terms } => {
                let mut acc = vec![*offset; pts.len()];
                for t in terms {
                    for (a, v) in acc.iter_mut().zip(t.field.sample(quad)?) {
                        *a += t.coeff * v;
                    }
                }
                acc
            }
        };
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("field formula produced a non-finite value {v}")));
        }
        Ok(out)
    }
}

/// Time modulation of a space profile.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    #[default]
    Constant,
    /// 1 + rate · t
    Ramp { rate: f64 },
    /// cos(2π frequency t)
    Oscillating { frequency: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp { rate } => 1.0 + rate * t,
            TimeProfile::Oscillating { frequency } => (2.0 * PI * frequency * t).cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeFormula {
    pub space: FieldFormula,
    #[serde(default)]
    pub time: TimeProfile,
}

impl SpaceTimeFormula {
    pub fn zero() -> Self {
        SpaceTimeFormula {
            space: FieldFormula::Zero,
            time: TimeProfile::Constant,
        }
    }

    pub fn constant(value: f64) -> Self {
        SpaceTimeFormula {
            space: FieldFormula::Constant { value },
            time: TimeProfile::Constant,
        }
    }
}

fn default_slices() -> usize {
    33
}

/// Analytic description of the data of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub phi0: FieldFormula,
    pub sigma0: FieldFormula,
    #[serde(default = "SpaceTimeFormula::zero")]
    pub u: SpaceTimeFormula,
    #[serde(default = "SpaceTimeFormula::zero")]
    pub s: SpaceTimeFormula,
    /// Stored time slices for time-dependent u, S.
    #[serde(default = "default_slices")]
    pub time_slices: usize,
}

#[derive(Debug, Clone)]
pub struct ModelData {
    pub u: TimeSeriesField,
    pub s: TimeSeriesField,
    pub phi0: GridFunction,
    pub sigma0: GridFunction,
    pub horizon: f64,
    /// ∫ β̂(φ₀)
    pub phi0_energy: f64,
}

impl ModelData {
    /// Checks φ₀ against dom β̂ and the data norms for finiteness.
    pub fn validate(&self, potential: &ConvexSplitPotential) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {}", self.horizon)));
        }
        phi0_energy(&self.phi0, potential)?;
        if let Some(v) = self.sigma0.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInitialDatum(format!("sigma0 has non-finite value {v}")));
        }
        for (name, f) in [("u", &self.u), ("S", &self.s)] {
            let n = f.l2_linf_norm(self.horizon);
            if !n.is_finite() {
                return Err(Error::input(format!("{name} has infinite L2(0,T;Linf) norm")));
            }
        }
        Ok(())
    }
}

/// ∫ β̂(φ₀), rejecting samples outside the closure of dom β̂.
pub fn phi0_energy(phi0: &GridFunction, potential: &ConvexSplitPotential) -> Result<f64> {
    let mut acc = 0.0;
    for (v, w) in phi0.values().iter().zip(phi0.weights()) {
        match potential.beta_hat(*v) {
            ExtendedReal::Finite(b) => acc += w * b,
            ExtendedReal::PosInfinity => {
                return Err(Error::InvalidInitialDatum(format!(
                    "phi0 takes the value {v} where the convex part is infinite"
                )))
            }
        }
    }
    if !acc.is_finite() {
        return Err(Error::InvalidInitialDatum("integral of the convex part at phi0 is not finite".into()));
    }
    Ok(acc)
}

fn time_series(f: &SpaceTimeFormula, quad: &Arc<Quadrature>, horizon: f64, slices: usize) -> Result<TimeSeriesField> {
    let base = f.space.sample(quad)?;
    if matches!(f.time, TimeProfile::Constant) {
        return TimeSeriesField::new(quad.clone(), vec![0.0], vec![base]);
    }
    if slices < 2 {
        return Err(Error::config("time-dependent data needs at least 2 time slices"));
    }
    let times: Vec<f64> = (0..slices).map(|k| horizon * k as f64 / (slices - 1) as f64).collect();
    let data = times
        .iter()
        .map(|t| {
            let a = f.time.eval(*t);
            base.iter().map(|v| a * v).collect()
        })
        .collect();
    TimeSeriesField::new(quad.clone(), times, data)
}

/// Samples the data formulas on `quad` over [0, horizon] and validates the
/// result.
pub fn synthesize_data(
    spec: &DataSpec,
    potential: &ConvexSplitPotential,
    quad: Arc<Quadrature>,
    horizon: f64,
) -> Result<ModelData> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config(format!("horizon must be positive, got {horizon}")));
    }
    let phi0 = GridFunction::new(quad.clone(), spec.phi0.sample(&quad)?)?;
    let sigma0 = GridFunction::new(quad.clone(), spec.sigma0.sample(&quad)?)?;
    let phi0_energy = phi0_energy(&phi0, potential)?;
    let data = ModelData {
        u: time_series(&spec.u, &quad, horizon, spec.time_slices)?,
        s: time_series(&spec.s, &quad, horizon, spec.time_slices)?,
        phi0,
        sigma0,
        horizon,
        phi0_energy,
    };
    data.validate(potential)?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example_2_3() -> StructuralHypotheses {
        StructuralHypotheses {
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
        }
    }

    #[test]
    fn validator_accepts_cubic_h_example() {
        let h = example_2_3();
        let r = validate_hypotheses(&h);
        assert!(r.accepted, "{:?}", r.violations().collect::<Vec<_>>());
        assert_relative_eq!(r.p0, 1.25, epsilon = 1e-15);
        assert_relative_eq!(h.alpha_h * h.p_h, 4.0, epsilon = 1e-14);
        assert_relative_eq!(h.p_h_conjugate(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn validator_accepts_laplacian_case() {
        let h = StructuralHypotheses {
            alpha_h: 2.0,
            alpha_gamma: 1.0,
            alpha_kappa: 1.0,
            p_h: 2.0,
            embedding_a: Some(6.0),
            embedding_b: Some(6.0),
            ..example_2_3()
        };
        let r = validate_hypotheses(&h);
        assert!(r.accepted);
        assert_relative_eq!(r.p0, 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn validator_accepts_uniqueness_example() {
        let mut u = UniquenessExponents::uniform(4.0);
        u.p_gamma1 = 7.5;
        u.q_gamma1 = 5.0;
        u.r_gamma1 = 6.0;
        let h = StructuralHypotheses {
            alpha_h: 1.25,
            alpha_gamma: 1.25,
            alpha_kappa: 1.25,
            p_h: 2.0,
            embedding_a: Some(5.0),
            embedding_b: Some(6.0),
            uniqueness: Some(u),
            ..example_2_3()
        };
        let r = validate_hypotheses(&h);
        assert!(r.accepted, "{:?}", r.violations().collect::<Vec<_>>());
        assert_relative_eq!(r.p_star.unwrap(), 5.0, epsilon = 1e-14);
        assert_relative_eq!(r.q_star.unwrap(), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn validator_rejects_bad_harmonic_sum() {
        let h = StructuralHypotheses {
            p_gamma: 3.0,
            q_gamma: 3.0,
            ..example_2_3()
        };
        let r = validate_hypotheses(&h);
        assert!(!r.accepted);
        let bad: Vec<_> = r.violations().collect();
        let harm = bad.iter().find(|c| c.name.starts_with("1/p_gamma")).unwrap();
        assert_relative_eq!(harm.residual, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn validator_flags_embedding_and_p0() {
        let h = StructuralHypotheses {
            alpha_h: 10.0,
            embedding_a: Some(3.0),
            ..example_2_3()
        };
        let r = validate_hypotheses(&h);
        assert!(r.violations().any(|c| c.name.starts_with("p0")));
        assert!(r.violations().any(|c| c.name.contains("alpha_h p_h")));
        let mut u = UniquenessExponents::uniform(4.0);
        u.r_gamma1 = 3.0;
        let r = validate_hypotheses(&StructuralHypotheses {
            uniqueness: Some(u),
            ..example_2_3()
        });
        assert!(r.violations().any(|c| c.name.contains("r_gamma1 = 1/2")));
    }

    #[test]
    fn prostate_functions() {
        let inst = ProstateInstance::default();
        let map = prostate_to_abstract(&inst).unwrap();
        let nl = &map.model.nonlinearities;
        assert_relative_eq!(
            nl.m.eval(inst.sigma_l),
            inst.m_ref * (inst.proliferation + inst.apoptosis) / 2.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(nl.gamma.eval(-1.0), inst.gamma_h, epsilon = 1e-15);
        assert_relative_eq!(nl.gamma.eval(1.0), inst.gamma_c, epsilon = 1e-15);
        assert_eq!(nl.h.eval(1.0), 0.0);
        assert_eq!(nl.h.eval(-1.0), 0.0);
        // d/dφ̃ [Mφ̃²(1−φ̃)²] vanishes at φ̃ = 1/2, i.e. φ = 0
        let p = &map.model.potential;
        assert_eq!(p.beta(0.0).unwrap() + p.pi(0.0), 0.0);
        let old = 0.5_f64;
        assert_eq!(2.0 * old * (1.0 - old) * inst.mobility * (1.0 - 2.0 * old), 0.0);
        assert!(validate_hypotheses(&map.model.hypotheses).accepted);
        assert_relative_eq!(map.s_value, inst.antiangiogenic / 2.0);
    }

    #[test]
    fn prostate_rejects_excess_therapy() {
        let inst = ProstateInstance {
            antiangiogenic: 2.0,
            ..Default::default()
        };
        assert!(matches!(prostate_to_abstract(&inst), Err(Error::InvalidConfiguration(_))));
        let neg = ProstateInstance {
            gamma_c: -1.0,
            ..Default::default()
        };
        assert!(prostate_to_abstract(&neg).is_err());
    }

    proptest! {
        #[test]
        fn prostate_reactions_match_physical_system(
            old in -0.5f64..1.5, sigma in -2.0f64..3.0, u in -1.0f64..1.0
        ) {
            let inst = ProstateInstance::default();
            let map = prostate_to_abstract(&inst).unwrap();
            let md = &map.model;
            let nl = &md.nonlinearities;
            let phi = to_abstract_phase(old);
            prop_assert!((to_physical_phase(phi) - old).abs() < 1e-15);
            // phase: ∂tφ = 2 ∂tφ̃
            let abstract_phase = -(md.potential.beta(phi).unwrap() + md.potential.pi(phi))
                + nl.h.eval(phi) * (nl.m.eval(sigma) - md.m0 * u);
            let physical = -2.0 * inst.physical_phase_reaction(old, sigma, u);
            prop_assert!((abstract_phase - physical).abs() <= 1e-12 * (1.0 + physical.abs()));
            // nutrient
            let abstract_nutrient = -nl.gamma.eval(phi) * sigma + nl.kappa.eval(phi) - map.s_value * phi;
            let physical = inst.physical_nutrient_reaction(old, sigma);
            prop_assert!((abstract_nutrient - physical).abs() <= 1e-12 * (1.0 + physical.abs()));
        }
    }

    fn unit_quad(n: usize) -> Arc<Quadrature> {
        Arc::new(Quadrature::new(Domain::interval(1.0), n).unwrap())
    }

    fn spec(phi0: FieldFormula) -> DataSpec {
        DataSpec {
            phi0,
            sigma0: FieldFormula::Zero,
            u: SpaceTimeFormula::zero(),
            s: SpaceTimeFormula::zero(),
            time_slices: 2,
        }
    }

    #[test]
    fn data_synthesis_examples() {
        let obs = make_potential(PotentialKind::DoubleObstacle { c3: 1.0 }).unwrap();
        let d = synthesize_data(&spec(FieldFormula::Constant { value: 0.5 }), &obs, unit_quad(64), 1.0).unwrap();
        assert_eq!(d.phi0_energy, 0.0);
        let e = synthesize_data(&spec(FieldFormula::Constant { value: 1.5 }), &obs, unit_quad(64), 1.0);
        assert!(matches!(e, Err(Error::InvalidInitialDatum(_))));

        let log = make_potential(PotentialKind::Logarithmic { c1: 1.0 }).unwrap();
        let sine = FieldFormula::Sine {
            amplitude: 1.0,
            kx: 1,
            ky: None,
        };
        let d = synthesize_data(&spec(sine), &log, unit_quad(256), 1.0).unwrap();
        assert!(d.phi0_energy.is_finite() && d.phi0_energy > 0.0 && d.phi0_energy <= 2.0 * 2f64.ln());
        // Simpson oracle for ∫₀¹ β̂(sin πx)
        let n = 20_000;
        let f = |x: f64| log.beta_hat((PI * x).sin()).finite().unwrap();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += f(i as f64 / n as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((d.phi0_energy - s / (3.0 * n as f64)).abs() < 1e-6);
    }

    #[test]
    fn time_dependent_data() {
        let reg = make_potential(PotentialKind::Regular { c0: 1.0 }).unwrap();
        let mut sp = spec(FieldFormula::Zero);
        sp.u = SpaceTimeFormula {
            space: FieldFormula::Constant { value: 2.0 },
            time: TimeProfile::Ramp { rate: 1.0 },
        };
        sp.time_slices = 11;
        let d = synthesize_data(&sp, &reg, unit_quad(16), 1.0).unwrap();
        let mut buf = vec![0.0; 16];
        d.u.value_at(0.55, &mut buf);
        assert_relative_eq!(buf[3], 2.0 * 1.55, epsilon = 1e-12);
        // ∫₀¹ (2(1+t))² dt = 28/3, trapezoid on 11 slices of a quadratic
        let exact = (28.0f64 / 3.0).sqrt();
        assert!((d.u.l2_linf_norm(1.0) - exact).abs() < 1e-2);
        sp.time_slices = 1;
        assert!(synthesize_data(&sp, &reg, unit_quad(16), 1.0).is_err());
    }

    #[test]
    fn affine_and_mode_formulas() {
        let q = unit_quad(64);
        let f = FieldFormula::Affine {
            offset: 1.0,
            terms: vec![FieldTerm {
                coeff: 2.0,
                field: FieldFormula::Mode {
                    boundary: BoundaryCondition::Dirichlet,
                    index: 0,
                    amplitude: 1.0,
                },
            }],
        };
        let v = f.sample(&q).unwrap();
        for (p, x) in q.points().iter().zip(&v) {
            assert_relative_eq!(*x, 1.0 + 2.0 * 2f64.sqrt() * (PI * p[0]).sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn structure_check_catches_understated_constants() {
        let mut map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        map.model.hypotheses.c3 = 0.1;
        map.model.hypotheses.c2 = 0.1;
        assert!(map.model.check_structure().is_err());
        let mut map = prostate_to_abstract(&ProstateInstance::default()).unwrap();
        map.model.hypotheses.c0 = 0.01;
        assert!(map.model.check_structure().is_err());
    }

    #[test]
    fn hypotheses_parse_and_name_missing_fields() {
        let text = "alpha_h = 2.0\nalpha_gamma = 1.0\nalpha_kappa = 1.0\np_h = 2.0\nq_gamma = 4.0\nc0 = 1.0\nc1 = 1.0\nc2 = 1.0\nc3 = 1.0\n";
        let e = toml::from_str::<StructuralHypotheses>(text).unwrap_err();
        assert!(e.to_string().contains("p_gamma"));
    }
}
