//! Regularization of the scalar nonlinearities at level ε: truncation at
//! ±1/ε, window-average mollification, and the energy clamp that keeps
//! |h̃_ε|² ≤ K₂ β̂_ε + K₃.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{ConvexSplitPotential, ScalarFn};
use crate::spectral::TimeSeriesField;

/// Absolute tolerance on the window average.
const MOLLIFY_TOL: f64 = 1e-10;
const MAX_SUBINTERVALS: usize = 500;
const OVERFLOW_GUARD: f64 = 1e150;

/// |ψ(r)| ≤ K₀ |r|^α + K₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthBound {
    pub alpha: f64,
    pub k0: f64,
    pub k1: f64,
}

impl GrowthBound {
    pub fn bound(&self, r: f64) -> f64 {
        self.k0 * r.abs().powf(self.alpha) + self.k1
    }
}

/// |ψ(r)|² ≤ C₂ β̂(r) + C₃ on the domain of β̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBound {
    pub c2: f64,
    pub c3: f64,
}

/// Closed-form nonlinearities that configs can name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityFormula {
    Zero,
    Constant { value: f64 },
    /// Σ coeffs[k] r^k.
    Polynomial { coeffs: Vec<f64> },
    /// m_ref ((ρ+A)/2 + (ρ−A)/π · arctan((r − σ_l)/σ_r)).
    ArctanLaw {
        m_ref: f64,
        rho: f64,
        apoptosis: f64,
        sigma_l: f64,
        sigma_r: f64,
    },
}

impl NonlinearityFormula {
    fn eval(&self, r: f64) -> f64 {
        match self {
            NonlinearityFormula::Zero => 0.0,
            NonlinearityFormula::Constant { value } => *value,
            NonlinearityFormula::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c),
            NonlinearityFormula::ArctanLaw {
                m_ref,
                rho,
                apoptosis,
                sigma_l,
                sigma_r,
            } => m_ref * (0.5 * (rho + apoptosis) + (rho - apoptosis) / PI * ((r - sigma_l) / sigma_r).atan()),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be finite, got {v}")))
            }
        };
        match self {
            NonlinearityFormula::Zero => Ok(()),
            NonlinearityFormula::Constant { value } => finite("value", *value),
            NonlinearityFormula::Polynomial { coeffs } => {
                for c in coeffs {
                    finite("polynomial coefficient", *c)?;
                }
                Ok(())
            }
            NonlinearityFormula::ArctanLaw {
                m_ref,
                rho,
                apoptosis,
                sigma_l,
                sigma_r,
            } => {
                for (n, v) in [("m_ref", m_ref), ("rho", rho), ("apoptosis", apoptosis), ("sigma_l", sigma_l)] {
                    finite(n, *v)?;
                }
                if !(sigma_r.is_finite() && *sigma_r > 0.0) {
                    return Err(Error::config(format!("sigma_r must be positive, got {sigma_r}")));
                }
                Ok(())
            }
        }
    }

    fn growth(&self) -> GrowthBound {
        match self {
            NonlinearityFormula::Zero => GrowthBound { alpha: 1.0, k0: 0.0, k1: 0.0 },
            NonlinearityFormula::Constant { value } => GrowthBound {
                alpha: 1.0,
                k0: 0.0,
                k1: value.abs(),
            },
            NonlinearityFormula::Polynomial { coeffs } => {
                // |r|^k ≤ |r|^α + 1 for 1 ≤ k ≤ α
                let degree = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
                let tail: f64 = coeffs.iter().skip(1).map(|c| c.abs()).sum();
                let head = coeffs.first().map_or(0.0, |c| c.abs());
                GrowthBound {
                    alpha: degree.max(1) as f64,
                    k0: tail,
                    k1: head + tail,
                }
            }
            NonlinearityFormula::ArctanLaw { .. } => GrowthBound {
                alpha: 1.0,
                k0: 0.0,
                k1: self.sup_abs(f64::INFINITY),
            },
        }
    }

    /// Upper bound for sup_{|r| ≤ b} |ψ(r)|.
    fn sup_abs(&self, b: f64) -> f64 {
        match self {
            NonlinearityFormula::Zero => 0.0,
            NonlinearityFormula::Constant { value } => value.abs(),
            NonlinearityFormula::Polynomial { coeffs } => {
                coeffs.iter().enumerate().map(|(k, c)| c.abs() * b.powi(k as i32)).sum()
            }
            NonlinearityFormula::ArctanLaw {
                m_ref, rho, apoptosis, ..
            } => m_ref.abs() * (0.5 * (rho + apoptosis).abs() + 0.5 * (rho - apoptosis).abs()),
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        match self {
            NonlinearityFormula::Zero | NonlinearityFormula::Constant { .. } => Some(0.0),
            NonlinearityFormula::Polynomial { coeffs } => {
                if coeffs.iter().skip(2).all(|c| *c == 0.0) {
                    Some(coeffs.get(1).map_or(0.0, |c| c.abs()))
                } else {
                    None
                }
            }
            NonlinearityFormula::ArctanLaw {
                m_ref,
                rho,
                apoptosis,
                sigma_r,
                ..
            } => Some((m_ref * (rho - apoptosis)).abs() / (PI * sigma_r)),
        }
    }

    /// Derivative, for Lipschitz probes.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            NonlinearityFormula::Zero | NonlinearityFormula::Constant { .. } => 0.0,
            NonlinearityFormula::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * r + k as f64 * c),
            NonlinearityFormula::ArctanLaw {
                m_ref,
                rho,
                apoptosis,
                sigma_l,
                sigma_r,
            } => {
                let x = (r - sigma_l) / sigma_r;
                m_ref * (rho - apoptosis) / (PI * sigma_r * (1.0 + x * x))
            }
        }
    }
}

#[derive(Clone)]
enum Rule {
    Formula(NonlinearityFormula),
    Closure(ScalarFn),
    Truncated { base: Arc<ScalarNonlinearity>, bound: f64 },
}

/// A continuous ψ: ℝ → ℝ with optional declared bounds.
#[derive(Clone)]
pub struct ScalarNonlinearity {
    rule: Rule,
    growth: Option<GrowthBound>,
    energy: Option<EnergyBound>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for ScalarNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::Formula(x) => write!(f, "ScalarNonlinearity({x:?})"),
            Rule::Closure(_) => write!(f, "ScalarNonlinearity(<closure>)"),
            Rule::Truncated { base, bound } => write!(f, "Truncated({base:?}, ±{bound})"),
        }
    }
}

impl ScalarNonlinearity {
    /// Growth and Lipschitz descriptors are derived from the formula.
    pub fn from_formula(formula: NonlinearityFormula) -> Result<Self> {
        formula.validate()?;
        Ok(ScalarNonlinearity {
            growth: Some(formula.growth()),
            lipschitz: formula.lipschitz(),
            energy: None,
            rule: Rule::Formula(formula),
        })
    }

    pub fn zero() -> Self {
        ScalarNonlinearity {
            rule: Rule::Formula(NonlinearityFormula::Zero),
            growth: Some(GrowthBound { alpha: 1.0, k0: 0.0, k1: 0.0 }),
            energy: Some(EnergyBound { c2: 0.0, c3: 0.0 }),
            lipschitz: Some(0.0),
        }
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarNonlinearity {
            rule: Rule::Closure(Arc::new(f)),
            growth: None,
            energy: None,
            lipschitz: None,
        }
    }

    pub fn with_growth(mut self, g: GrowthBound) -> Self {
        self.growth = Some(g);
        self
    }

    pub fn with_energy(mut self, e: EnergyBound) -> Self {
        self.energy = Some(e);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn growth(&self) -> Option<GrowthBound> {
        self.growth
    }

    pub fn energy(&self) -> Option<EnergyBound> {
        self.energy
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn formula(&self) -> Option<&NonlinearityFormula> {
        match &self.rule {
            Rule::Formula(f) => Some(f),
            _ => None,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.rule {
            Rule::Formula(f) => f.eval(r),
            Rule::Closure(f) => f(r),
            Rule::Truncated { base, bound } => base.eval(r.clamp(-bound, *bound)),
        }
    }

    /// The constant value, when ψ is constant by construction.
    fn constant_value(&self) -> Option<f64> {
        match &self.rule {
            Rule::Formula(NonlinearityFormula::Zero) => Some(0.0),
            Rule::Formula(NonlinearityFormula::Constant { value }) => Some(*value),
            Rule::Truncated { base, .. } => base.constant_value(),
            _ => None,
        }
    }

    /// sup_{|r| ≤ b} |ψ(r)|: a bound for formulas, a dense sample otherwise.
    pub fn sup_abs(&self, b: f64) -> f64 {
        match &self.rule {
            Rule::Formula(f) => f.sup_abs(b),
            Rule::Truncated { base, bound } => base.sup_abs(b.min(*bound)),
            Rule::Closure(_) => {
                let n = 20_000;
                (0..=n)
                    .map(|i| self.eval(-b + 2.0 * b * i as f64 / n as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Checks the declared growth bound on `points` evenly spaced samples of
    /// [lo, hi].
    pub fn check_growth(&self, lo: f64, hi: f64, points: usize) -> Result<()> {
        let Some(g) = self.growth else {
            return Ok(());
        };
        for i in 0..=points {
            let r = lo + (hi - lo) * i as f64 / points as f64;
            let v = self.eval(r).abs();
            if v > g.bound(r) * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::config(format!(
                    "growth bound {} |r|^{} + {} violated at r = {r}: |psi| = {v}",
                    g.k0, g.alpha, g.k1
                )));
            }
        }
        Ok(())
    }

    /// Samples [lo, hi] for jumps: the largest grid increment is followed by
    /// bisection, and a discontinuity is reported if the increment survives
    /// down to a width of 1e-9 (hi − lo).
    pub fn probe_continuity(&self, lo: f64, hi: f64) -> Result<()> {
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        let mut worst = (0.0, lo);
        let mut prev = self.eval(lo);
        for i in 1..=n {
            let r = lo + h * i as f64;
            let v = self.eval(r);
            if !v.is_finite() {
                return Err(Error::config(format!("nonlinearity is not finite at {r}")));
            }
            if (v - prev).abs() > worst.0 {
                worst = ((v - prev).abs(), r - h);
            }
            prev = v;
        }
        let (mut a, mut b) = (worst.1, worst.1 + h);
        while b - a > 1e-9 * (hi - lo) {
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (self.eval(a), self.eval(m), self.eval(b));
            if (fm - fa).abs() >= (fb - fm).abs() {
                b = m;
            } else {
                a = m;
            }
        }
        let jump = (self.eval(b) - self.eval(a)).abs();
        if jump > 1e-6 * (1.0 + self.eval(a).abs()) {
            return Err(Error::config(format!("nonlinearity jumps by {jump} near r = {a}")));
        }
        Ok(())
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("regularization level must lie in (0, 1), got {eps}")))
    }
}

/// ψ^ε: ψ on [−1/ε, 1/ε], frozen at ψ(±1/ε) outside.
pub fn truncate(psi: &ScalarNonlinearity, eps: f64) -> Result<ScalarNonlinearity> {
    check_eps(eps)?;
    Ok(ScalarNonlinearity {
        rule: Rule::Truncated {
            base: Arc::new(psi.clone()),
            bound: 1.0 / eps,
        },
        growth: psi.growth,
        energy: None,
        lipschitz: psi.lipschitz,
    })
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on [a, b]: (estimate, error estimate).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod: bisects the worst subinterval until the
/// summed error estimate meets `tol`.
fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    loop {
        let (sum, err) = parts
            .iter()
            .fold((0.0, 0.0), |(s, e), (_, _, (v, er))| (s + v, e + er));
        if !sum.is_finite() {
            return Err(Error::numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= tol {
            return Ok(sum);
        }
        if parts.len() >= MAX_SUBINTERVALS {
            return Err(Error::numerical(format!(
                "window quadrature did not reach tolerance on [{a}, {b}] (error {err})"
            )));
        }
        let k = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let (lo, hi, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(sum);
        }
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
}

/// Constants (K₂, K₃) of the energy clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampConstants {
    pub k2: f64,
    pub k3: f64,
}

#[derive(Debug, Clone)]
struct EnergyClamp {
    potential: ConvexSplitPotential,
    constants: ClampConstants,
}

/// ψ_ε(r) = (1/2ε) ∫_{r−ε}^{r+ε} ψ^ε, optionally clamped into
/// [−(K₂β̂_ε + K₃)^{1/2}, (K₂β̂_ε + K₃)^{1/2}].
#[derive(Debug, Clone)]
pub struct SmoothedNonlinearity {
    truncated: ScalarNonlinearity,
    eps: f64,
    clamp: Option<EnergyClamp>,
}

/// Window average of ψ^ε, exact outside [−1/ε, 1/ε].
pub fn mollify(psi: &ScalarNonlinearity, eps: f64) -> Result<SmoothedNonlinearity> {
    Ok(SmoothedNonlinearity {
        truncated: truncate(psi, eps)?,
        eps,
        clamp: None,
    })
}

/// Applies the energy clamp with constants (K₂, K₃) to a mollified function.
pub fn clamp_to_energy(
    psi_eps: &SmoothedNonlinearity,
    pot: &ConvexSplitPotential,
    k2: f64,
    k3: f64,
) -> Result<SmoothedNonlinearity> {
    if !(k2.is_finite() && k2 >= 1.0) {
        return Err(Error::config(format!("K2 must be at least 1, got {k2}")));
    }
    if !(k3.is_finite() && k3 >= 0.0) {
        return Err(Error::config(format!("K3 must be nonnegative, got {k3}")));
    }
    Ok(SmoothedNonlinearity {
        truncated: psi_eps.truncated.clone(),
        eps: psi_eps.eps,
        clamp: Some(EnergyClamp {
            potential: pot.clone(),
            constants: ClampConstants { k2, k3 },
        }),
    })
}

impl SmoothedNonlinearity {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn clamp_constants(&self) -> Option<ClampConstants> {
        self.clamp.as_ref().map(|c| c.constants)
    }

    /// ψ^ε, the truncated function being averaged.
    pub fn truncated(&self) -> &ScalarNonlinearity {
        &self.truncated
    }

    /// ψ_ε(r) before any clamp.
    pub fn eval_mollified(&self, r: f64) -> Result<f64> {
        if let Some(c) = self.truncated.constant_value() {
            return Ok(c);
        }
        let eps = self.eps;
        let bound = 1.0 / eps;
        let (a, b) = (r - eps, r + eps);
        let psi = |s: f64| self.truncated.eval(s);
        let mut total = 0.0;
        if a < -bound {
            total += (b.min(-bound) - a) * psi(-bound);
        }
        if b > bound {
            total += (b - a.max(bound)) * psi(bound);
        }
        let (lo, hi) = (a.max(-bound), b.min(bound));
        if hi > lo {
            total += adaptive(&psi, lo, hi, MOLLIFY_TOL * 2.0 * eps)?;
        }
        Ok(total / (2.0 * eps))
    }

    /// ψ_ε(r), or h̃_ε(r) when clamped.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let v = self.eval_mollified(r)?;
        match &self.clamp {
            None => Ok(v),
            Some(c) => {
                let env = energy_envelope(&c.potential, c.constants, r, self.eps)?;
                Ok(v.clamp(-env, env))
            }
        }
    }

    /// sup |ψ_ε| ≤ sup_{|s| ≤ 1/ε} |ψ(s)|.
    pub fn sup_bound(&self) -> f64 {
        self.truncated.sup_abs(1.0 / self.eps)
    }

    /// Lipschitz constant of the unclamped ψ_ε: the smaller of Lip(ψ) and
    /// sup|ψ^ε| / ε.
    pub fn lipschitz_bound(&self) -> f64 {
        let window = self.sup_bound() / self.eps;
        self.truncated.lipschitz.map_or(window, |l| l.min(window))
    }
}

/// (K₂ β̂_ε(r) + K₃)^{1/2}, rounded down so that its square never exceeds the
/// radicand.
pub fn energy_envelope(pot: &ConvexSplitPotential, k: ClampConstants, r: f64, eps: f64) -> Result<f64> {
    let x = k.k2 * pot.yosida_pair(r, eps)?.value + k.k3;
    let mut env = x.sqrt();
    while env > 0.0 && env * env > x {
        env = env.next_down();
    }
    Ok(env)
}

/// Default δ: a tenth of the domain length, at most 1.
pub fn default_delta(pot: &ConvexSplitPotential) -> f64 {
    (0.1 * pot.domain().length()).min(1.0)
}

/// K₂ = max{C₂, 1}; K₃ = max{C₃, sup of |h|² over δ-neighbourhoods of the
/// finite endpoints of dom β̂}, or max{C₃, 1} when dom β̂ = ℝ.
pub fn pick_constants(h: &ScalarNonlinearity, pot: &ConvexSplitPotential, delta: f64) -> Result<ClampConstants> {
    let e = h
        .energy
        .ok_or_else(|| Error::config("h needs declared energy constants C2, C3"))?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::config(format!("delta must be positive, got {delta}")));
    }
    let k2 = e.c2.max(1.0);
    let dom = pot.domain();
    if dom.is_real_line() {
        return Ok(ClampConstants { k2, k3: e.c3.max(1.0) });
    }
    let mut k3 = e.c3;
    let n = 20_000;
    for r0 in dom.endpoints() {
        for i in 0..=n {
            let r = r0 - delta + 2.0 * delta * i as f64 / n as f64;
            let v = h.eval(r);
            let sq = v * v;
            if sq.is_nan() || sq > OVERFLOW_GUARD {
                return Err(Error::config(format!(
                    "h is unbounded near the endpoint {r0} (|h({r})|^2 = {sq})"
                )));
            }
            k3 = k3.max(sq);
        }
    }
    Ok(ClampConstants { k2, k3 })
}

/// u_ε = max{−1/ε, min{u, 1/ε}} pointwise.
pub fn truncate_data(field: &TimeSeriesField, eps: f64) -> Result<TimeSeriesField> {
    check_eps(eps)?;
    let b = 1.0 / eps;
    Ok(field.map(|v| v.clamp(-b, b)))
}

/// sup_{r ≥ 0} (r + 1)^α / (r^α + 1), maximized on a grid containing r = 1.
pub fn growth_factor(alpha: f64) -> f64 {
    let n = 100_000;
    (0..=n)
        .map(|i| {
            let r = 100.0 * i as f64 / n as f64;
            (r + 1.0).powf(alpha) / (r.powf(alpha) + 1.0)
        })
        .fold(0.0, f64::max)
}

/// Growth constants (K̂₀, K̂₁) = (K₀ M_α, K₀ M_α + K₁) of the mollified function.
pub fn mollified_growth(g: GrowthBound) -> GrowthBound {
    let m = growth_factor(g.alpha);
    GrowthBound {
        alpha: g.alpha,
        k0: g.k0 * m,
        k1: g.k0 * m + g.k1,
    }
}

/// The nonlinearities h, m, γ, κ of the model.
#[derive(Debug, Clone)]
pub struct NonlinearitySet {
    pub h: ScalarNonlinearity,
    pub m: ScalarNonlinearity,
    pub gamma: ScalarNonlinearity,
    pub kappa: ScalarNonlinearity,
}

/// Level-ε versions: h clamped, m, γ, κ only mollified.
#[derive(Debug, Clone)]
pub struct RegularizedSet {
    pub eps: f64,
    pub h: SmoothedNonlinearity,
    pub m: SmoothedNonlinearity,
    pub gamma: SmoothedNonlinearity,
    pub kappa: SmoothedNonlinearity,
    pub constants: ClampConstants,
}

pub fn regularize_set(
    set: &NonlinearitySet,
    pot: &ConvexSplitPotential,
    eps: f64,
    delta: Option<f64>,
) -> Result<RegularizedSet> {
    let constants = pick_constants(&set.h, pot, delta.unwrap_or_else(|| default_delta(pot)))?;
    let h = clamp_to_energy(&mollify(&set.h, eps)?, pot, constants.k2, constants.k3)?;
    Ok(RegularizedSet {
        eps,
        h,
        m: mollify(&set.m, eps)?,
        gamma: mollify(&set.gamma, eps)?,
        kappa: mollify(&set.kappa, eps)?,
        constants,
    })
}
