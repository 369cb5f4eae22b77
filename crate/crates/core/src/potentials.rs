//! Double-well potentials split as F = β̂ + π̂ with β̂ convex, lower
//! semicontinuous, β̂ ≥ 0 = β̂(0), and π̂ smooth with Lipschitz derivative.
//!
//! The nonsmooth part is handled through its proximal map
//! `prox(r) = argmin_s β̂(s) + (s − r)² / (2ε)`, from which the Moreau–Yosida
//! envelope β̂_ε and its derivative β_ε = (r − prox(r)) / ε follow.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 200;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A value in (−∞, +∞]. Convex parts are +∞ outside their effective domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }
}

/// Interval of finiteness of β̂, endpoints possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDomain {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl EffectiveDomain {
    pub const REAL_LINE: EffectiveDomain = EffectiveDomain {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        lower_closed: false,
        upper_closed: false,
    };

    pub fn contains(&self, r: f64) -> bool {
        let above = if self.lower_closed { r >= self.lower } else { r > self.lower };
        let below = if self.upper_closed { r <= self.upper } else { r < self.upper };
        above && below
    }

    pub fn closure_contains(&self, r: f64) -> bool {
        r >= self.lower && r <= self.upper
    }

    pub fn is_real_line(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    /// The finite endpoints.
    pub fn endpoints(&self) -> Vec<f64> {
        [self.lower, self.upper]
            .into_iter()
            .filter(|e| e.is_finite())
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Which potential of the catalog, with its shape constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    /// c₀ (r² − 1)², split as β̂ = c₀ r⁴ and π̂ = c₀ (1 − 2r²).
    Regular { c0: f64 },
    /// (1+r)ln(1+r) + (1−r)ln(1−r) − c₁ r² on [−1, 1].
    Logarithmic { c1: f64 },
    /// r²/(1−r) − c₂ r² on (−∞, 1), split with β̂ = d r² + r²/(1−r).
    SingularReciprocal {
        c2: f64,
        #[serde(default = "default_d")]
        d: f64,
    },
    /// I_[0,1](r) − c₃ r².
    DoubleObstacle { c3: f64 },
}

fn default_d() -> f64 {
    1.0
}

/// User-supplied convex part and smooth perturbation.
#[derive(Clone)]
pub struct CustomParts {
    pub beta_hat: ScalarFn,
    /// Derivative of β̂ on the interior of the domain.
    pub beta: ScalarFn,
    pub domain: EffectiveDomain,
    pub pi_hat: ScalarFn,
    pub pi: ScalarFn,
    pub pi_lipschitz: f64,
}

#[derive(Clone)]
enum Parts {
    Catalog(PotentialKind),
    Custom(CustomParts),
}

#[derive(Clone)]
pub struct ConvexSplitPotential {
    parts: Parts,
}

impl fmt::Debug for ConvexSplitPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.parts {
            Parts::Catalog(k) => write!(f, "ConvexSplitPotential({k:?})"),
            Parts::Custom(c) => write!(f, "ConvexSplitPotential(Custom on {:?})", c.domain),
        }
    }
}

/// Outcome of a Moreau–Yosida evaluation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaPair {
    /// β̂_ε(r)
    pub value: f64,
    /// β_ε(r)
    pub slope: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

/// Builds a catalog potential after checking its constants.
pub fn make_potential(kind: PotentialKind) -> Result<ConvexSplitPotential> {
    match kind {
        PotentialKind::Regular { c0 } => positive("c0", c0)?,
        PotentialKind::Logarithmic { c1 } => positive("c1", c1)?,
        PotentialKind::SingularReciprocal { c2, d } => {
            positive("c2", c2)?;
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::config(format!("d must be nonnegative, got {d}")));
            }
        }
        PotentialKind::DoubleObstacle { c3 } => positive("c3", c3)?,
    }
    Ok(ConvexSplitPotential {
        parts: Parts::Catalog(kind),
    })
}

/// x ln x extended by continuity to x = 0.
fn xlogx_1p(s: f64) -> f64 {
    // (1+s) ln(1+s)
    if s == -1.0 {
        0.0
    } else {
        (1.0 + s) * s.ln_1p()
    }
}

impl ConvexSplitPotential {
    /// A potential with user-supplied parts. β̂ is checked for β̂(0) = 0,
    /// nonnegativity and midpoint convexity on a grid over its domain, and π
    /// for the declared Lipschitz constant.
    pub fn custom(parts: CustomParts) -> Result<Self> {
        let dom = parts.domain;
        if !dom.contains(0.0) {
            return Err(Error::InvalidPotential("0 must lie in the domain of the convex part".into()));
        }
        let b0 = (parts.beta_hat)(0.0);
        if b0.abs() > 1e-12 {
            return Err(Error::InvalidPotential(format!("convex part must vanish at 0, got {b0}")));
        }
        let lo = if dom.lower.is_finite() { dom.lower } else { -10.0 };
        let hi = if dom.upper.is_finite() { dom.upper } else { 10.0 };
        let n = 2000;
        let grid: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .filter(|r| dom.contains(*r))
            .collect();
        for &r in &grid {
            let v = (parts.beta_hat)(r);
            if v.is_nan() || v < -1e-12 {
                return Err(Error::InvalidPotential(format!("convex part is negative at {r}: {v}")));
            }
        }
        for w in grid.windows(3) {
            let (a, m, b) = ((parts.beta_hat)(w[0]), (parts.beta_hat)(w[1]), (parts.beta_hat)(w[2]));
            if m > 0.5 * (a + b) + 1e-12 * (1.0 + a.abs() + b.abs()) {
                return Err(Error::InvalidPotential(format!("convex part fails the secant test near {}", w[1])));
            }
        }
        // deterministic probe pairs for π
        let lip = parts.pi_lipschitz;
        for i in 0..500 {
            let r = -5.0 + 10.0 * ((i as f64 * 0.618_033_988_749_895) % 1.0);
            let s = -5.0 + 10.0 * ((i as f64 * 0.414_213_562_373_095 + 0.5) % 1.0);
            let d = ((parts.pi)(r) - (parts.pi)(s)).abs();
            if d > lip * (r - s).abs() * (1.0 + 1e-10) + 1e-12 {
                return Err(Error::InvalidPotential(format!(
                    "derivative of the smooth part exceeds Lipschitz constant {lip} between {r} and {s}"
                )));
            }
        }
        Ok(ConvexSplitPotential {
            parts: Parts::Custom(parts),
        })
    }

    pub fn kind(&self) -> Option<PotentialKind> {
        match &self.parts {
            Parts::Catalog(k) => Some(*k),
            Parts::Custom(_) => None,
        }
    }

    pub fn domain(&self) -> EffectiveDomain {
        match &self.parts {
            Parts::Catalog(PotentialKind::Regular { .. }) => EffectiveDomain::REAL_LINE,
            Parts::Catalog(PotentialKind::Logarithmic { .. }) => EffectiveDomain {
                lower: -1.0,
                upper: 1.0,
                lower_closed: true,
                upper_closed: true,
            },
            Parts::Catalog(PotentialKind::SingularReciprocal { .. }) => EffectiveDomain {
                lower: f64::NEG_INFINITY,
                upper: 1.0,
                lower_closed: false,
                upper_closed: false,
            },
            Parts::Catalog(PotentialKind::DoubleObstacle { .. }) => EffectiveDomain {
                lower: 0.0,
                upper: 1.0,
                lower_closed: true,
                upper_closed: true,
            },
            Parts::Custom(c) => c.domain,
        }
    }

    /// The convex part β̂.
    pub fn beta_hat(&self, r: f64) -> ExtendedReal {
        if !self.domain().contains(r) {
            return ExtendedReal::PosInfinity;
        }
        let v = match &self.parts {
            Parts::Catalog(PotentialKind::Regular { c0 }) => c0 * r.powi(4),
            Parts::Catalog(PotentialKind::Logarithmic { .. }) => xlogx_1p(r) + xlogx_1p(-r),
            Parts::Catalog(PotentialKind::SingularReciprocal { d, .. }) => d * r * r + r * r / (1.0 - r),
            Parts::Catalog(PotentialKind::DoubleObstacle { .. }) => 0.0,
            Parts::Custom(c) => (c.beta_hat)(r),
        };
        ExtendedReal::Finite(v)
    }

    /// Derivative of β̂ on the interior of its domain (the single-valued part
    /// of the subdifferential); `None` outside the open domain.
    pub fn beta(&self, r: f64) -> Option<f64> {
        let dom = self.domain();
        if !(r > dom.lower && r < dom.upper) {
            return None;
        }
        Some(match &self.parts {
            Parts::Catalog(PotentialKind::Regular { c0 }) => 4.0 * c0 * r.powi(3),
            Parts::Catalog(PotentialKind::Logarithmic { .. }) => r.ln_1p() - (-r).ln_1p(),
            Parts::Catalog(PotentialKind::SingularReciprocal { d, .. }) => {
                2.0 * d * r + 1.0 / ((1.0 - r) * (1.0 - r)) - 1.0
            }
            Parts::Catalog(PotentialKind::DoubleObstacle { .. }) => 0.0,
            Parts::Custom(c) => (c.beta)(r),
        })
    }

    /// The smooth part π̂.
    pub fn pi_hat(&self, r: f64) -> f64 {
        match &self.parts {
            Parts::Catalog(PotentialKind::Regular { c0 }) => c0 * (1.0 - 2.0 * r * r),
            Parts::Catalog(PotentialKind::Logarithmic { c1 }) => -c1 * r * r,
            Parts::Catalog(PotentialKind::SingularReciprocal { c2, d }) => -(c2 + d) * r * r,
            Parts::Catalog(PotentialKind::DoubleObstacle { c3 }) => -c3 * r * r,
            Parts::Custom(c) => (c.pi_hat)(r),
        }
    }

    /// π = π̂′.
    pub fn pi(&self, r: f64) -> f64 {
        match &self.parts {
            Parts::Catalog(PotentialKind::Regular { c0 }) => -4.0 * c0 * r,
            Parts::Catalog(PotentialKind::Logarithmic { c1 }) => -2.0 * c1 * r,
            Parts::Catalog(PotentialKind::SingularReciprocal { c2, d }) => -2.0 * (c2 + d) * r,
            Parts::Catalog(PotentialKind::DoubleObstacle { c3 }) => -2.0 * c3 * r,
            Parts::Custom(c) => (c.pi)(r),
        }
    }

    pub fn pi_lipschitz(&self) -> f64 {
        match &self.parts {
            Parts::Catalog(PotentialKind::Regular { c0 }) => 4.0 * c0,
            Parts::Catalog(PotentialKind::Logarithmic { c1 }) => 2.0 * c1,
            Parts::Catalog(PotentialKind::SingularReciprocal { c2, d }) => 2.0 * (c2 + d),
            Parts::Catalog(PotentialKind::DoubleObstacle { c3 }) => 2.0 * c3,
            Parts::Custom(c) => c.pi_lipschitz,
        }
    }

    /// The full potential F = β̂ + π̂.
    pub fn value(&self, r: f64) -> ExtendedReal {
        match self.beta_hat(r) {
            ExtendedReal::Finite(b) => ExtendedReal::Finite(b + self.pi_hat(r)),
            ExtendedReal::PosInfinity => ExtendedReal::PosInfinity,
        }
    }

    /// Proximal point of β̂ with parameter `eps`.
    pub fn prox(&self, r: f64, eps: f64) -> Result<f64> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::input(format!("prox parameter must be positive, got {eps}")));
        }
        if !r.is_finite() {
            return Err(Error::numerical(format!("prox evaluated at non-finite point {r}")));
        }
        match &self.parts {
            Parts::Catalog(PotentialKind::DoubleObstacle { .. }) => Ok(r.clamp(0.0, 1.0)),
            Parts::Catalog(PotentialKind::Regular { c0 }) => Ok(prox_quartic(*c0, r, eps)),
            Parts::Catalog(PotentialKind::Logarithmic { .. }) => {
                let deriv = |s: f64| 2.0 / ((1.0 - s) * (1.0 + s));
                self.safeguarded_newton(r, eps, deriv)
            }
            Parts::Catalog(PotentialKind::SingularReciprocal { d, .. }) => {
                let d = *d;
                let deriv = move |s: f64| 2.0 * d + 2.0 / (1.0 - s).powi(3);
                self.safeguarded_newton(r, eps, deriv)
            }
            Parts::Custom(_) => self.bisection(r, eps),
        }
    }

    /// Bracket for the root of s + ε β(s) − r: the root lies between 0 and r
    /// because β(s) has the sign of s, and strictly inside an open endpoint.
    fn bracket(&self, r: f64) -> (f64, f64) {
        let dom = self.domain();
        let (mut lo, mut hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
        if lo <= dom.lower {
            lo = if dom.lower_closed { dom.lower } else { dom.lower.next_up() };
        }
        if hi >= dom.upper {
            hi = if dom.upper_closed { dom.upper } else { dom.upper.next_down() };
        }
        (lo, hi)
    }

    /// s + ε β(s) − r, with β extended by ∓∞ at closed endpoints.
    fn optimality(&self, s: f64, r: f64, eps: f64) -> f64 {
        match self.beta(s) {
            Some(b) => s + eps * b - r,
            None if s >= self.domain().upper => f64::INFINITY,
            None => f64::NEG_INFINITY,
        }
    }

    fn safeguarded_newton(&self, r: f64, eps: f64, deriv: impl Fn(f64) -> f64) -> Result<f64> {
        let (mut lo, mut hi) = self.bracket(r);
        if lo == hi {
            return Ok(lo);
        }
        // the root may sit beyond the last representable interior point
        if self.optimality(hi, r, eps) <= 0.0 {
            return Ok(hi);
        }
        if self.optimality(lo, r, eps) >= 0.0 {
            return Ok(lo);
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..PROX_MAX_ITER {
            let g = self.optimality(s, r, eps);
            if g == 0.0 {
                return Ok(s);
            }
            if g < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - g / (1.0 + eps * deriv(s));
            let next = if newton > lo && newton < hi && newton.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - s).abs();
            s = next;
            if step <= PROX_TOL * 1e-3 * s.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1e-300) {
                return Ok(s);
            }
        }
        Err(Error::numerical(format!(
            "prox solver did not converge at r = {r}, eps = {eps} (bracket [{lo}, {hi}])"
        )))
    }

    fn bisection(&self, r: f64, eps: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.bracket(r);
        if self.optimality(hi, r, eps) <= 0.0 {
            return Ok(hi);
        }
        if self.optimality(lo, r, eps) >= 0.0 {
            return Ok(lo);
        }
        for _ in 0..PROX_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= PROX_TOL * 1e-2 || mid == lo || mid == hi {
                return Ok(mid);
            }
            if self.optimality(mid, r, eps) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::numerical(format!("prox bisection did not converge at r = {r}")))
    }

    /// Moreau–Yosida envelope β̂_ε(r) and its derivative β_ε(r).
    pub fn yosida_pair(&self, r: f64, eps: f64) -> Result<YosidaPair> {
        let s = self.prox(r, eps)?;
        let b = self.beta_hat(s).finite().ok_or_else(|| {
            Error::numerical(format!("prox of {r} left the domain of the convex part ({s})"))
        })?;
        let d = r - s;
        Ok(YosidaPair {
            value: b + d * d / (2.0 * eps),
            slope: d / eps,
        })
    }
}

/// Real root of 4 c₀ ε s³ + s − r = 0 (Cardano), polished by Newton.
fn prox_quartic(c0: f64, r: f64, eps: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let a = 4.0 * c0 * eps;
    // s³ + p s + q = 0
    let p = 1.0 / a;
    let q = -r / a;
    let t = -0.5 * q;
    let disc = (t * t + (p / 3.0).powi(3)).sqrt();
    let big = (t + t.signum() * disc).cbrt();
    let mut s = if big == 0.0 { 0.0 } else { big - p / (3.0 * big) };
    for _ in 0..3 {
        let g = a * s * s * s + s - r;
        let dg = 3.0 * a * s * s + 1.0;
        let ds = g / dg;
        s -= ds;
        if ds.abs() <= f64::EPSILON * s.abs() {
            break;
        }
    }
    s
}

/// Minimizer of β̂(s) + (s − r)²/(2ε) by scanning: a 1e-3 grid over the
/// bracket, then a 1e-6 grid around the coarse winner.
pub fn brute_force_prox(pot: &ConvexSplitPotential, r: f64, eps: f64) -> f64 {
    let dom = pot.domain();
    let obj = |s: f64| match pot.beta_hat(s) {
        ExtendedReal::Finite(b) => b + (s - r) * (s - r) / (2.0 * eps),
        ExtendedReal::PosInfinity => f64::INFINITY,
    };
    let lo = (r.min(0.0) - 0.1).max(dom.lower);
    let hi = (r.max(0.0) + 0.1).min(dom.upper);
    let scan = |a: f64, b: f64, h: f64| {
        let n = ((b - a) / h).ceil() as usize;
        (0..=n)
            .map(|i| (a + i as f64 * h).min(b))
            .min_by(|x, y| obj(*x).total_cmp(&obj(*y)))
            .expect("scan grid is nonempty")
    };
    let c = scan(lo, hi, 1e-3);
    scan((c - 2e-3).max(lo), (c + 2e-3).min(hi), 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog() -> Vec<ConvexSplitPotential> {
        vec![
            make_potential(PotentialKind::Regular { c0: 1.0 }).unwrap(),
            make_potential(PotentialKind::Logarithmic { c1: 2.0 }).unwrap(),
            make_potential(PotentialKind::SingularReciprocal { c2: 1.0, d: 1.0 }).unwrap(),
            make_potential(PotentialKind::DoubleObstacle { c3: 1.0 }).unwrap(),
        ]
    }


    #[test]
    fn logarithmic_endpoint_value() {
        let p = make_potential(PotentialKind::Logarithmic { c1: 1.0 }).unwrap();
        for r in [-1.0, 1.0] {
            assert_relative_eq!(p.beta_hat(r).finite().unwrap(), 2.0 * 2f64.ln(), max_relative = 1e-15);
        }
        assert_eq!(p.beta_hat(1.5), ExtendedReal::PosInfinity);
    }

    #[test]
    fn regular_split_and_singular_value() {
        let p = make_potential(PotentialKind::Regular { c0: 0.7 }).unwrap();
        assert_eq!(p.beta_hat(0.0), ExtendedReal::Finite(0.0));
        assert_eq!(p.pi_hat(0.0), 0.7);
        // F = c0 (r² − 1)²
        let r = 1.3;
        assert_relative_eq!(
            p.value(r).finite().unwrap(),
            0.7 * (r * r - 1.0f64).powi(2),
            max_relative = 1e-14
        );
        let s = make_potential(PotentialKind::SingularReciprocal { c2: 1.0, d: 1.0 }).unwrap();
        assert_relative_eq!(s.beta_hat(0.5).finite().unwrap(), 0.75, max_relative = 1e-15);
        assert_eq!(s.beta_hat(1.0), ExtendedReal::PosInfinity);
    }

    #[test]
    fn singular_split_recovers_potential() {
        let (c2, d) = (0.4, 2.5);
        let p = make_potential(PotentialKind::SingularReciprocal { c2, d }).unwrap();
        for r in [-3.0, -0.2, 0.3, 0.9] {
            let f = r * r / (1.0 - r) - c2 * r * r;
            assert_relative_eq!(p.value(r).finite().unwrap(), f, max_relative = 1e-13);
        }
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(make_potential(PotentialKind::Regular { c0: 0.0 }).is_err());
        assert!(make_potential(PotentialKind::SingularReciprocal { c2: 1.0, d: -1.0 }).is_err());
        assert!(make_potential(PotentialKind::DoubleObstacle { c3: f64::NAN }).is_err());
    }

    #[test]
    fn prox_examples() {
        let obs = make_potential(PotentialKind::DoubleObstacle { c3: 1.0 }).unwrap();
        for eps in [1e-3, 0.1, 10.0] {
            assert_eq!(obs.prox(1.5, eps).unwrap(), 1.0);
        }
        let log = make_potential(PotentialKind::Logarithmic { c1: 1.0 }).unwrap();
        assert_eq!(log.prox(0.0, 0.3).unwrap(), 0.0);
        let reg = make_potential(PotentialKind::Regular { c0: 1.0 }).unwrap();
        let s = reg.prox(1.0, 0.5).unwrap();
        assert!((s - brute_force_prox(&reg, 1.0, 0.5)).abs() < 1e-5);
        assert!(obs.prox(0.2, 0.0).is_err());
    }

    #[test]
    fn yosida_examples() {
        let obs = make_potential(PotentialKind::DoubleObstacle { c3: 1.0 }).unwrap();
        let y = obs.yosida_pair(1.5, 0.1).unwrap();
        assert_relative_eq!(y.slope, 5.0, max_relative = 1e-14);
        assert_relative_eq!(y.value, 1.25, max_relative = 1e-14);
        let s = brute_force_prox(&obs, 1.5, 0.1);
        assert!(((1.5 - s) / 0.1 - 5.0).abs() < 1e-4);
        assert_eq!(obs.yosida_pair(0.5, 0.37).unwrap(), YosidaPair { value: 0.0, slope: 0.0 });
        for p in catalog() {
            let y = p.yosida_pair(0.0, 0.01).unwrap();
            assert_eq!((y.value, y.slope), (0.0, 0.0));
        }
    }

    #[test]
    fn prox_matches_brute_force() {
        for p in catalog() {
            for eps in [0.1, 0.01, 0.001] {
                for i in 0..=40 {
                    let r = -2.0 + 0.1 * i as f64;
                    let s = p.prox(r, eps).unwrap();
                    let b = brute_force_prox(&p, r, eps);
                    assert!((s - b).abs() < 1e-5, "{p:?} r={r} eps={eps}: {s} vs {b}");
                }
            }
        }
    }

    #[test]
    fn prox_of_far_points_stays_in_closure() {
        let log = make_potential(PotentialKind::Logarithmic { c1: 1.0 }).unwrap();
        let s = log.prox(5.0, 1e-3).unwrap();
        assert!(s <= 1.0 && s > 0.999);
        let y = log.yosida_pair(5.0, 1e-3).unwrap();
        assert!(y.value.is_finite() && y.value > 1e3);
        let sing = make_potential(PotentialKind::SingularReciprocal { c2: 1.0, d: 1.0 }).unwrap();
        let s = sing.prox(1e6, 1e-6).unwrap();
        assert!(s < 1.0);
    }

    #[test]
    fn moreau_yosida_ordering_and_limits() {
        for p in catalog() {
            let dom = p.domain();
            for i in 0..=400 {
                let r = -2.0 + 0.01 * i as f64;
                let coarse = p.yosida_pair(r, 1e-2).unwrap().value;
                let fine = p.yosida_pair(r, 1e-3).unwrap().value;
                assert!(coarse >= -1e-9);
                assert!(coarse <= fine + 1e-9, "{p:?} r={r}");
                if let ExtendedReal::Finite(b) = p.beta_hat(r) {
                    assert!(fine <= b + 1e-9, "{p:?} r={r}");
                }
                let interior = r > dom.lower + 0.1 && r < dom.upper - 0.1;
                if interior {
                    let b = p.beta_hat(r).finite().unwrap();
                    assert!((p.yosida_pair(r, 1e-6).unwrap().value - b).abs() < 1e-2, "{p:?} r={r}");
                }
                if !dom.closure_contains(r) && (r - dom.upper.min(r)).max(dom.lower.max(r) - r) >= 0.1 {
                    assert!(p.yosida_pair(r, 1e-6).unwrap().value >= 1e3, "{p:?} r={r}");
                }
            }
        }
    }

    #[test]
    fn custom_potential_validation() {
        let convex = CustomParts {
            beta_hat: Arc::new(|r| r * r),
            beta: Arc::new(|r| 2.0 * r),
            domain: EffectiveDomain::REAL_LINE,
            pi_hat: Arc::new(|r| -r * r),
            pi: Arc::new(|r| -2.0 * r),
            pi_lipschitz: 2.0,
        };
        let p = ConvexSplitPotential::custom(convex.clone()).unwrap();
        // prox of s² is r / (1 + 2ε)
        assert!((p.prox(1.0, 0.5).unwrap() - 0.5).abs() < 1e-12);

        let mut bad = convex.clone();
        bad.beta_hat = Arc::new(|r: f64| r.abs().sqrt());
        assert!(matches!(ConvexSplitPotential::custom(bad), Err(Error::InvalidPotential(_))));

        let mut bad_pi = convex;
        bad_pi.pi_lipschitz = 1.0;
        assert!(matches!(ConvexSplitPotential::custom(bad_pi), Err(Error::InvalidPotential(_))));
    }

    proptest! {
        #[test]
        fn yosida_slope_monotone_and_lipschitz(r1 in -3.0f64..3.0, r2 in -3.0f64..3.0, k in 0usize..4, e in 1usize..4) {
            let p = &catalog()[k];
            let eps = 10f64.powi(-(e as i32));
            let (a, b) = (p.yosida_pair(r1, eps).unwrap().slope, p.yosida_pair(r2, eps).unwrap().slope);
            let slack = 1e-9 / eps;
            prop_assert!((a - b) * (r1 - r2) >= -slack * (r1 - r2).abs());
            prop_assert!((a - b).abs() <= (r1 - r2).abs() / eps + slack);
        }

        #[test]
        fn prox_is_nonexpansive(r1 in -3.0f64..3.0, r2 in -3.0f64..3.0, k in 0usize..4) {
            let p = &catalog()[k];
            let (a, b) = (p.prox(r1, 0.05).unwrap(), p.prox(r2, 0.05).unwrap());
            prop_assert!((a - b).abs() <= (r1 - r2).abs() + 1e-11);
        }
    }
}
