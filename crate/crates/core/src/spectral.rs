//! Eigenbases of selfadjoint nonnegative operators with compact resolvent,
//! their fractional powers, graph norms, and the grid/coefficient transforms.
//!
//! Intervals and axis-aligned rectangles carry closed-form sine (Dirichlet)
//! and cosine (Neumann) eigenpairs. Any other operator enters through
//! [`EigenBasis::custom`], which takes an eigenvalue list together with a
//! pointwise evaluation rule for the eigenfunctions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Gauss–Legendre panel used by the composite rule.
const MAX_PANEL_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl Domain {
    pub fn interval(length: f64) -> Self {
        Domain::Interval { length }
    }

    pub fn rectangle(lx: f64, ly: f64) -> Self {
        Domain::Rectangle { lx, ly }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| l.is_finite() && l > 0.0;
        match *self {
            Domain::Interval { length } if ok(length) => Ok(()),
            Domain::Rectangle { lx, ly } if ok(lx) && ok(ly) => Ok(()),
            _ => Err(Error::config(format!(
                "domain lengths must be positive and finite, got {self:?}"
            ))),
        }
    }

    /// Lebesgue measure |Ω|.
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { length } => length,
            Domain::Rectangle { lx, ly } => lx * ly,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Normalized 1-D eigenfunction with index `j` on (0, length).
fn factor(bc: BoundaryCondition, j: usize, x: f64, length: f64) -> f64 {
    match bc {
        BoundaryCondition::Dirichlet => (2.0 / length).sqrt() * (j as f64 * PI * x / length).sin(),
        BoundaryCondition::Neumann if j == 0 => 1.0 / length.sqrt(),
        BoundaryCondition::Neumann => (2.0 / length).sqrt() * (j as f64 * PI * x / length).cos(),
    }
}

fn first_index(bc: BoundaryCondition) -> usize {
    match bc {
        BoundaryCondition::Dirichlet => 1,
        BoundaryCondition::Neumann => 0,
    }
}

pub type ModeFn = Arc<dyn Fn(usize, [f64; 2]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum ModeRule {
    /// Tensor indices (j, k); k is unused on intervals.
    Analytic {
        bc: BoundaryCondition,
        indices: Vec<(usize, usize)>,
    },
    Custom(ModeFn),
}

/// The first `n` eigenpairs of an operator, eigenvalues ascending.
#[derive(Clone)]
pub struct EigenBasis {
    domain: Domain,
    eigenvalues: Vec<f64>,
    scale: f64,
    rule: ModeRule,
}

impl fmt::Debug for EigenBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match &self.rule {
            ModeRule::Analytic { bc, .. } => format!("{bc:?}"),
            ModeRule::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("EigenBasis")
            .field("domain", &self.domain)
            .field("rule", &rule)
            .field("eigenvalues", &self.eigenvalues)
            .finish()
    }
}

/// Builds the first `n` analytic eigenpairs of the Laplacian with the given
/// boundary condition. Ties on rectangles are broken by lexicographic (j, k).
pub fn build_basis(domain: Domain, bc: BoundaryCondition, n: usize) -> Result<EigenBasis> {
    domain.validate()?;
    if n == 0 {
        return Err(Error::config("mode count n must be at least 1"));
    }
    let j0 = first_index(bc);
    let (indices, eigenvalues) = match domain {
        Domain::Interval { length } => {
            let idx: Vec<_> = (j0..j0 + n).map(|j| (j, 0)).collect();
            let ev = idx
                .iter()
                .map(|&(j, _)| (j as f64 * PI / length).powi(2))
                .collect();
            (idx, ev)
        }
        Domain::Rectangle { lx, ly } => {
            // every mode among the first n has both indices below j0 + n
            let mut cand = Vec::with_capacity(n * n);
            for j in j0..j0 + n {
                for k in j0..j0 + n {
                    let lam = (j as f64 * PI / lx).powi(2) + (k as f64 * PI / ly).powi(2);
                    cand.push((lam, j, k));
                }
            }
            cand.sort_by(|a, b| {
                let tol = 1e-12 * a.0.abs().max(b.0.abs()).max(1.0);
                if (a.0 - b.0).abs() <= tol {
                    (a.1, a.2).cmp(&(b.1, b.2))
                } else {
                    a.0.total_cmp(&b.0)
                }
            });
            cand.truncate(n);
            let idx = cand.iter().map(|c| (c.1, c.2)).collect();
            let ev = cand.iter().map(|c| c.0).collect();
            (idx, ev)
        }
    };
    Ok(EigenBasis {
        domain,
        eigenvalues,
        scale: 1.0,
        rule: ModeRule::Analytic { bc, indices },
    })
}

impl EigenBasis {
    /// A basis for an operator known only through its eigenpairs. The caller
    /// is responsible for orthonormality; see [`orthonormality_defect`].
    pub fn custom(domain: Domain, eigenvalues: Vec<f64>, modes: ModeFn) -> Result<Self> {
        domain.validate()?;
        if eigenvalues.is_empty() {
            return Err(Error::config("custom basis needs at least one eigenpair"));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::config("eigenvalues must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("eigenvalues must be nondecreasing"));
        }
        Ok(EigenBasis {
            domain,
            eigenvalues,
            scale: 1.0,
            rule: ModeRule::Custom(modes),
        })
    }

    /// Multiplies every eigenvalue by `factor`, i.e. the basis of `factor * A`.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::config(format!(
                "operator scale must be positive, got {factor}"
            )));
        }
        for l in &mut self.eigenvalues {
            *l *= factor;
        }
        self.scale *= factor;
        Ok(self)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn boundary_condition(&self) -> Option<BoundaryCondition> {
        match &self.rule {
            ModeRule::Analytic { bc, .. } => Some(*bc),
            ModeRule::Custom(_) => None,
        }
    }

    /// Tensor indices of analytic modes, `None` for custom bases.
    pub fn mode_indices(&self) -> Option<&[(usize, usize)]> {
        match &self.rule {
            ModeRule::Analytic { indices, .. } => Some(indices),
            ModeRule::Custom(_) => None,
        }
    }

    /// Evaluates e_i (zero-based position in the basis) at a point.
    pub fn eval(&self, i: usize, p: [f64; 2]) -> f64 {
        match &self.rule {
            ModeRule::Analytic { bc, indices } => {
                let (j, k) = indices[i];
                match self.domain {
                    Domain::Interval { length } => factor(*bc, j, p[0], length),
                    Domain::Rectangle { lx, ly } => factor(*bc, j, p[0], lx) * factor(*bc, k, p[1], ly),
                }
            }
            ModeRule::Custom(f) => f(i, p),
        }
    }

    /// Default quadrature nodes per dimension: max(64, 4n).
    pub fn default_resolution(&self) -> usize {
        64.max(4 * self.len())
    }

    /// Fewest nodes per dimension accepted by [`to_grid`].
    pub fn min_resolution(&self) -> usize {
        2 * self.len() + 2
    }

    /// Same family and domain with `n` modes. Custom bases cannot be resized.
    pub fn with_modes(&self, n: usize) -> Result<Self> {
        match &self.rule {
            ModeRule::Analytic { bc, .. } => build_basis(self.domain, *bc, n)?.scaled(self.scale),
            ModeRule::Custom(_) => Err(Error::config("custom bases cannot be resized")),
        }
    }
}

/// Composite Gauss–Legendre rule on the domain, tensorized on rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    domain: Domain,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    per_dim: usize,
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the three-term recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    // (P_m(z), P_{m-1}(z))
    let legendre = |z: f64| {
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=m {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    let mf = m as f64;
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        for _ in 0..100 {
            let (p, pm1) = legendre(z);
            let dz = p / (mf * (z * p - pm1) / (z * z - 1.0));
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (p, pm1) = legendre(z);
        let dp = mf * (z * p - pm1) / (z * z - 1.0);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

fn composite_1d(length: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = nodes.div_ceil(MAX_PANEL_NODES).max(1);
    let per_panel = nodes.div_ceil(panels);
    let (gx, gw) = gauss_legendre(per_panel);
    let h = length / panels as f64;
    let mut xs = Vec::with_capacity(panels * per_panel);
    let mut ws = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(a + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

impl Quadrature {
    /// At least `nodes` Gauss points per dimension, split into panels of at
    /// most 128 nodes.
    pub fn new(domain: Domain, nodes: usize) -> Result<Self> {
        domain.validate()?;
        if nodes == 0 {
            return Err(Error::config("quadrature needs at least one node"));
        }
        let (points, weights, per_dim) = match domain {
            Domain::Interval { length } => {
                let (x, w) = composite_1d(length, nodes);
                let d = x.len();
                (x.into_iter().map(|x| [x, 0.0]).collect(), w, d)
            }
            Domain::Rectangle { lx, ly } => {
                let (x, wx) = composite_1d(lx, nodes);
                let (y, wy) = composite_1d(ly, nodes);
                let mut pts = Vec::with_capacity(x.len() * y.len());
                let mut ws = Vec::with_capacity(x.len() * y.len());
                for (xi, wxi) in x.iter().zip(&wx) {
                    for (yj, wyj) in y.iter().zip(&wy) {
                        pts.push([*xi, *yj]);
                        ws.push(wxi * wyj);
                    }
                }
                (pts, ws, x.len())
            }
        };
        Ok(Quadrature {
            domain,
            points,
            weights,
            per_dim,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Samples a function at every node.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> GridFunction {
        GridFunction {
            quad: Arc::new(self.clone()),
            values: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Eigenfunction values at quadrature nodes, row-major by mode.
#[derive(Debug, Clone)]
pub struct ModeTable {
    modes: usize,
    points: usize,
    values: Vec<f64>,
}

impl ModeTable {
    pub fn new(basis: &EigenBasis, quad: &Quadrature) -> Self {
        let mut values = Vec::with_capacity(basis.len() * quad.len());
        for i in 0..basis.len() {
            values.extend(quad.points().iter().map(|&p| basis.eval(i, p)));
        }
        ModeTable {
            modes: basis.len(),
            points: quad.len(),
            values,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.points..(i + 1) * self.points]
    }

    /// Σ_j c_j e_j at every node, written into `out`.
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(self.row(j)) {
                *o += c * e;
            }
        }
    }

    /// ∫ f e_i for every mode i, with `weighted` = w_k f(x_k).
    pub fn analyze_into(&self, weighted: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(weighted).map(|(e, f)| e * f).sum();
        }
    }
}

/// Maximum entry of |G - I| for the Gram matrix of the basis under `quad`.
pub fn orthonormality_defect(basis: &EigenBasis, quad: &Quadrature) -> f64 {
    let table = ModeTable::new(basis, quad);
    let w = quad.weights();
    let mut worst: f64 = 0.0;
    for i in 0..basis.len() {
        let wi: Vec<f64> = table.row(i).iter().zip(w).map(|(e, w)| e * w).collect();
        for j in i..basis.len() {
            let g: f64 = wi.iter().zip(table.row(j)).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// Coefficients of a function in an eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralField {
    basis: Arc<EigenBasis>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(basis: Arc<EigenBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::input(format!(
                "expected {} coefficients, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("spectral coefficients must be finite"));
        }
        Ok(SpectralField { basis, coeffs })
    }

    pub fn zeros(basis: Arc<EigenBasis>) -> Self {
        let n = basis.len();
        SpectralField {
            basis,
            coeffs: vec![0.0; n],
        }
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Plain L² norm (Parseval).
    pub fn h_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// λ^s with the convention 0^0 = 1.
#[inline]
pub fn eigen_power(lambda: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        lambda.powf(s)
    }
}

/// A^s acting diagonally: coeff_j ↦ λ_j^s coeff_j.
pub fn apply_fractional(v: &SpectralField, exponent: f64) -> Result<SpectralField> {
    if !(exponent.is_finite() && exponent >= 0.0) {
        return Err(Error::input(format!(
            "fractional exponent must be nonnegative, got {exponent}"
        )));
    }
    let coeffs = v
        .coeffs
        .iter()
        .zip(v.basis.eigenvalues())
        .map(|(c, l)| eigen_power(*l, exponent) * c)
        .collect();
    Ok(SpectralField {
        basis: v.basis.clone(),
        coeffs,
    })
}

/// Graph norm sqrt(‖v‖² + ‖A^s v‖²) computed from coefficients.
pub fn graph_norm_coeffs(coeffs: &[f64], eigenvalues: &[f64], exponent: f64) -> f64 {
    coeffs
        .iter()
        .zip(eigenvalues)
        .map(|(c, l)| (1.0 + eigen_power(*l, 2.0 * exponent)) * c * c)
        .sum::<f64>()
        .sqrt()
}

pub fn graph_norm(v: &SpectralField, exponent: f64) -> f64 {
    graph_norm_coeffs(&v.coeffs, v.basis.eigenvalues(), exponent)
}

/// Function values on quadrature nodes.
#[derive(Debug, Clone)]
pub struct GridFunction {
    quad: Arc<Quadrature>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(quad: Arc<Quadrature>, values: Vec<f64>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(Error::input(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                quad.len()
            )));
        }
        Ok(GridFunction { quad, values })
    }

    pub fn quadrature(&self) -> &Arc<Quadrature> {
        &self.quad
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        self.quad.points()
    }

    pub fn weights(&self) -> &[f64] {
        self.quad.weights()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            quad: self.quad.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.quad.integrate(&self.values)
    }
}

/// Evaluates Σ_j coeff_j e_j on a quadrature grid with `resolution` nodes per
/// dimension.
pub fn to_grid(v: &SpectralField, resolution: usize) -> Result<GridFunction> {
    if resolution < v.basis.min_resolution() {
        return Err(Error::config(format!(
            "resolution {resolution} below the minimum {} for {} modes",
            v.basis.min_resolution(),
            v.basis.len()
        )));
    }
    let quad = Quadrature::new(v.basis.domain(), resolution)?;
    let table = ModeTable::new(&v.basis, &quad);
    let mut values = vec![0.0; quad.len()];
    table.synthesize_into(&v.coeffs, &mut values);
    Ok(GridFunction {
        quad: Arc::new(quad),
        values,
    })
}

/// Orthogonal projection onto the span of the basis, coefficients by quadrature.
pub fn project(g: &GridFunction, basis: Arc<EigenBasis>) -> Result<SpectralField> {
    if g.quad.domain() != basis.domain() {
        return Err(Error::input(format!(
            "grid domain {:?} does not match basis domain {:?}",
            g.quad.domain(),
            basis.domain()
        )));
    }
    let table = ModeTable::new(&basis, &g.quad);
    let weighted: Vec<f64> = g.values.iter().zip(g.weights()).map(|(v, w)| v * w).collect();
    let mut coeffs = vec![0.0; basis.len()];
    table.analyze_into(&weighted, &mut coeffs);
    SpectralField::new(basis, coeffs)
}

/// ‖g‖_p by quadrature; `p = f64::INFINITY` gives the grid maximum.
pub fn lp_norm(g: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::config(format!("L^p exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(g.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    let s: f64 = g
        .values
        .iter()
        .zip(g.weights())
        .map(|(v, w)| w * v.abs().powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// Grid functions sampled at increasing times on one quadrature grid,
/// linearly interpolated in between and held constant outside.
#[derive(Debug, Clone)]
pub struct TimeSeriesField {
    quad: Arc<Quadrature>,
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

impl TimeSeriesField {
    pub fn new(quad: Arc<Quadrature>, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::input(format!(
                "time series needs matching nonempty times and slices ({} vs {})",
                times.len(),
                slices.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::input("time series times must be finite and increasing"));
        }
        if let Some(s) = slices.iter().find(|s| s.len() != quad.len()) {
            return Err(Error::input(format!(
                "time slice has {} values for {} nodes",
                s.len(),
                quad.len()
            )));
        }
        Ok(TimeSeriesField { quad, times, slices })
    }

    /// A field constant in time.
    pub fn constant(g: &GridFunction) -> Self {
        TimeSeriesField {
            quad: g.quad.clone(),
            times: vec![0.0],
            slices: vec![g.values.clone()],
        }
    }

    pub fn zeros(quad: Arc<Quadrature>) -> Self {
        let n = quad.len();
        TimeSeriesField {
            quad,
            times: vec![0.0],
            slices: vec![vec![0.0; n]],
        }
    }

    pub fn quadrature(&self) -> &Arc<Quadrature> {
        &self.quad
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    /// Values at time `t`, written into `out`.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 {
            out.copy_from_slice(&self.slices[0]);
        } else if k == self.times.len() {
            out.copy_from_slice(&self.slices[k - 1]);
        } else {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            let w = (t - t0) / (t1 - t0);
            for ((o, a), b) in out.iter_mut().zip(&self.slices[k - 1]).zip(&self.slices[k]) {
                *o = (1.0 - w) * a + w * b;
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeriesField {
        TimeSeriesField {
            quad: self.quad.clone(),
            times: self.times.clone(),
            slices: self
                .slices
                .iter()
                .map(|s| s.iter().map(|v| f(*v)).collect())
                .collect(),
        }
    }

    /// a·self + b·other on the union of both time grids.
    pub fn combine(&self, a: f64, other: &TimeSeriesField, b: f64) -> Result<TimeSeriesField> {
        if self.quad.as_ref() != other.quad.as_ref() {
            return Err(Error::input("time series live on different grids"));
        }
        let mut times: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let n = self.quad.len();
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
        let slices = times
            .iter()
            .map(|t| {
                self.value_at(*t, &mut x);
                other.value_at(*t, &mut y);
                x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect()
            })
            .collect();
        TimeSeriesField::new(self.quad.clone(), times, slices)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|v| *v == 0.0))
    }

    /// Spatial sup norm at time `t`.
    pub fn sup_at(&self, t: f64) -> f64 {
        let mut buf = vec![0.0; self.quad.len()];
        self.value_at(t, &mut buf);
        buf.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// (∫₀ᵀ ‖f(t)‖²_∞ dt)^{1/2}, trapezoid rule over 0, T and the stored
    /// times in between.
    pub fn l2_linf_norm(&self, horizon: f64) -> f64 {
        let mut ts: Vec<f64> = self
            .times
            .iter()
            .copied()
            .filter(|t| *t > 0.0 && *t < horizon)
            .collect();
        ts.push(0.0);
        ts.push(horizon);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let sq: Vec<f64> = ts.iter().map(|t| self.sup_at(*t).powi(2)).collect();
        let mut acc = 0.0;
        for k in 1..ts.len() {
            acc += 0.5 * (ts[k] - ts[k - 1]) * (sq[k] + sq[k - 1]);
        }
        acc.sqrt()
    }
}
