//! Closed-form densities and test functions with analytic derivatives.
//!
//! Densities are Gaussian mixtures with diagonal covariances. Test functions
//! come in three classes: single-variable scalars ψ(v), symmetric
//! two-variable functions (DS) and anti-symmetric vector fields (AS). The
//! two-variable objects are written in Bobylev-type coordinates
//! `z = v − v_*`, `y = (v + v_*)/2`, where `∇_v − ∇_{v_*} = 2∇_z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::quadrature::density_rule3;

/// Node count per axis used for the cached entropy.
const ENTROPY_NODES: usize = 20;

/// One Gaussian component `w N(m, diag(c))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec3,
    pub cov: Vec3,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec3, cov: Vec3) -> Self {
        let det = cov.x * cov.y * cov.z;
        let log_norm = weight.ln() - 0.5 * ((2.0 * PI).powi(3) * det).ln();
        Component { weight, mean, cov, log_norm }
    }

    #[inline]
    fn log_value(&self, v: &Vec3) -> f64 {
        let d = v - self.mean;
        self.log_norm - 0.5 * (d.x * d.x / self.cov.x + d.y * d.y / self.cov.y + d.z * d.z / self.cov.z)
    }

    #[inline]
    fn score(&self, v: &Vec3) -> Vec3 {
        let d = v - self.mean;
        Vec3::new(-d.x / self.cov.x, -d.y / self.cov.y, -d.z / self.cov.z)
    }
}

/// Strictly positive density given as a Gaussian mixture, with cached
/// moments and entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    components: Vec<Component>,
    entropy: f64,
}

/// Mixture `Σ w_j N(m_j, diag(c_j))` with weights summing to one.
pub fn gaussian_mixture(components: &[(f64, Vec3, Vec3)]) -> Result<Density> {
    if components.is_empty() {
        return Err(invalid("a mixture needs at least one component"));
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("mixture weights must sum to 1, got {total}")));
    }
    Density::from_components(components)
}

impl Density {
    fn from_components(components: &[(f64, Vec3, Vec3)]) -> Result<Self> {
        let mut out = Vec::with_capacity(components.len());
        for (w, m, c) in components {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(invalid("mixture weights must be positive"));
            }
            if c.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(invalid("covariances must be positive"));
            }
            if m.iter().any(|s| !s.is_finite()) {
                return Err(invalid("means must be finite"));
            }
            out.push(Component::new(*w, *m, *c));
        }
        let mut d = Density { components: out, entropy: 0.0 };
        let rule = density_rule3(&d, ENTROPY_NODES);
        d.entropy = crate::par::pairwise_sum(
            &rule.points.iter().zip(&rule.weights).map(|(v, w)| w * d.log_value(v)).collect::<Vec<_>>(),
        );
        Ok(d)
    }

    /// Standard Maxwellian `N(0, T I)`.
    pub fn maxwellian(temperature: f64) -> Result<Self> {
        gaussian_mixture(&[(1.0, Vec3::zeros(), Vec3::repeat(temperature))])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// The same shape with total mass `m`.
    pub fn scaled(&self, m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("mass must be positive"));
        }
        let c: Vec<_> = self.components.iter().map(|c| (c.weight * m, c.mean, c.cov)).collect();
        Density::from_components(&c)
    }

    /// Translate by `shift`.
    pub fn translated(&self, shift: &Vec3) -> Result<Self> {
        let c: Vec<_> = self.components.iter().map(|c| (c.weight, c.mean + shift, c.cov)).collect();
        Density::from_components(&c)
    }

    #[inline]
    pub fn log_value(&self, v: &Vec3) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_value(v);
        }
        let top = self.components.iter().map(|c| c.log_value(v)).fold(f64::NEG_INFINITY, f64::max);
        top + self.components.iter().map(|c| (c.log_value(v) - top).exp()).sum::<f64>().ln()
    }

    #[inline]
    pub fn value(&self, v: &Vec3) -> f64 {
        self.components.iter().map(|c| c.log_value(v).exp()).sum()
    }

    /// `∇ log f(v)`.
    #[inline]
    pub fn grad_log(&self, v: &Vec3) -> Vec3 {
        if self.components.len() == 1 {
            return self.components[0].score(v);
        }
        let top = self.components.iter().map(|c| c.log_value(v)).fold(f64::NEG_INFINITY, f64::max);
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for c in &self.components {
            let a = (c.log_value(v) - top).exp();
            num += a * c.score(v);
            den += a;
        }
        num / den
    }

    pub fn gradient(&self, v: &Vec3) -> Vec3 {
        self.components.iter().map(|c| c.log_value(v).exp() * c.score(v)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Second moment `∫ |v|² f`.
    pub fn energy(&self) -> f64 {
        self.components.iter().map(|c| c.weight * (c.mean.norm_squared() + c.cov.sum())).sum()
    }

    /// `H[f] = ∫ f log f`, computed once by quadrature.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// Characteristic function `∫ f(v) e^{−i ξ·v} dv` as (re, im).
    pub fn fourier(&self, xi: &Vec3) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for c in &self.components {
            let q = xi.x * xi.x * c.cov.x + xi.y * xi.y * c.cov.y + xi.z * xi.z * c.cov.z;
            let amp = c.weight * (-0.5 * q).exp();
            let phase = xi.dot(&c.mean);
            re += amp * phase.cos();
            im -= amp * phase.sin();
        }
        (re, im)
    }
}

/// Class of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestClass {
    /// ψ: ℝ³ → ℝ.
    CcSingle,
    /// Symmetric two-variable ψ(v, v_*), vanishing for `|v − v_*| ≤ δ`.
    Ds,
    /// Anti-symmetric vector field V(v, v_*), vanishing for `|v − v_*| ≤ δ`.
    As,
}

/// Decay of a test function, recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    CompactSupport,
    /// Gaussian-modulated, rapidly decaying but not compactly supported.
    Schwartz,
    /// Plain polynomial, used for collision invariants.
    Polynomial,
}

/// Single monomial `coef · v₁^a v₂^b v₃^c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 3],
}

/// Polynomial on ℝ³ as a sum of monomials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

fn pow_and_derivs(x: f64, n: u32) -> (f64, f64, f64) {
    let nf = n as f64;
    let p = |k: i64| -> f64 {
        if k < 0 {
            0.0
        } else {
            x.powi(k as i32)
        }
    };
    let k = n as i64;
    (p(k), if n >= 1 { nf * p(k - 1) } else { 0.0 }, if n >= 2 { nf * (nf - 1.0) * p(k - 2) } else { 0.0 })
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Polynomial { terms }
    }

    /// Shorthand from `(coef, [a, b, c])` pairs.
    pub fn from_terms(terms: &[(f64, [u32; 3])]) -> Self {
        Polynomial { terms: terms.iter().map(|(c, p)| Monomial { coef: *c, powers: *p }).collect() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(&[(c, [0, 0, 0])])
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|m| m.powers.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_even(&self) -> bool {
        self.terms.iter().all(|m| m.powers.iter().sum::<u32>() % 2 == 0)
    }

    pub fn is_odd(&self) -> bool {
        self.terms.iter().all(|m| m.powers.iter().sum::<u32>() % 2 == 1)
    }

    /// Value, gradient and Hessian at `v`.
    pub fn eval(&self, v: &Vec3) -> (f64, Vec3, Mat3) {
        let mut val = 0.0;
        let mut grad = Vec3::zeros();
        let mut hess = Mat3::zeros();
        for m in &self.terms {
            let d: [(f64, f64, f64); 3] = [
                pow_and_derivs(v.x, m.powers[0]),
                pow_and_derivs(v.y, m.powers[1]),
                pow_and_derivs(v.z, m.powers[2]),
            ];
            val += m.coef * d[0].0 * d[1].0 * d[2].0;
            for i in 0..3 {
                let mut g = m.coef;
                for (j, dj) in d.iter().enumerate() {
                    g *= if i == j { dj.1 } else { dj.0 };
                }
                grad[i] += g;
                for k in 0..3 {
                    let mut h = m.coef;
                    for (j, dj) in d.iter().enumerate() {
                        let order = (i == j) as u8 + (k == j) as u8;
                        h *= match order {
                            0 => dj.0,
                            1 => dj.1,
                            _ => dj.2,
                        };
                    }
                    hess[(i, k)] += h;
                }
            }
        }
        (val, grad, hess)
    }

    pub fn value(&self, v: &Vec3) -> f64 {
        let mut val = 0.0;
        for m in &self.terms {
            val += m.coef * v.x.powi(m.powers[0] as i32) * v.y.powi(m.powers[1] as i32) * v.z.powi(m.powers[2] as i32);
        }
        val
    }
}

/// The mollifier `exp(−1/(1−s))` for `s < 1` and its first two derivatives
/// in `s`; zero for `s ≥ 1`.
#[inline]
pub fn mollifier_s(s: f64) -> (f64, f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 - s;
    let m = (-1.0 / u).exp();
    let u2 = u * u;
    (m, -m / u2, m * (1.0 - 2.0 * u) / (u2 * u2))
}

/// The mollifier `exp(−1/(1−t²))` on `|t| < 1` and its derivatives in `t`.
#[inline]
pub fn mollifier_t(t: f64) -> (f64, f64, f64) {
    let q = 1.0 - t * t;
    if q <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let m = (-1.0 / q).exp();
    let g = -2.0 * t / (q * q);
    let g_prime = -2.0 / (q * q) - 8.0 * t * t / (q * q * q);
    (m, m * g, m * (g * g + g_prime))
}

/// Envelope multiplying the polynomial part of a scalar test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    None,
    /// `exp(−|v − c|²/(2w²))`.
    Gaussian { center: [f64; 3], width: f64 },
    /// `exp(−1/(1 − |v − c|²/R²))` inside the ball of radius R.
    Bump { center: [f64; 3], radius: f64 },
}

impl Envelope {
    fn eval(&self, v: &Vec3) -> (f64, Vec3, Mat3) {
        match self {
            Envelope::None => (1.0, Vec3::zeros(), Mat3::zeros()),
            Envelope::Gaussian { center, width } => {
                let d = v - Vec3::from(*center);
                let w2 = width * width;
                let e = (-0.5 * d.norm_squared() / w2).exp();
                (e, -e * d / w2, e * (d * d.transpose() / (w2 * w2) - Mat3::identity() / w2))
            }
            Envelope::Bump { center, radius } => {
                let d = v - Vec3::from(*center);
                let r2 = radius * radius;
                let (m, m1, m2) = mollifier_s(d.norm_squared() / r2);
                let ds = 2.0 * d / r2;
                (m, m1 * ds, m2 * ds * ds.transpose() + m1 * 2.0 / r2 * Mat3::identity())
            }
        }
    }
}

/// Single-variable test function ψ: ℝ³ → ℝ.
pub trait ScalarField: Send + Sync {
    fn value(&self, v: &Vec3) -> f64;
    fn gradient(&self, v: &Vec3) -> Vec3;
    fn hessian(&self, v: &Vec3) -> Mat3;
    fn regularity(&self) -> Regularity;
}

/// `ψ(v) = P(v) · envelope(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTestFunction {
    pub poly: Polynomial,
    pub envelope: Envelope,
}

impl ScalarTestFunction {
    pub fn polynomial(poly: Polynomial) -> Self {
        ScalarTestFunction { poly, envelope: Envelope::None }
    }

    pub fn gaussian_modulated(poly: Polynomial, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("envelope width must be positive"));
        }
        Ok(ScalarTestFunction { poly, envelope: Envelope::Gaussian { center: [0.0; 3], width } })
    }

    pub fn bump(poly: Polynomial, center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("bump radius must be positive"));
        }
        Ok(ScalarTestFunction { poly, envelope: Envelope::Bump { center: center.into(), radius } })
    }

    /// Value, gradient and Hessian in one pass.
    pub fn eval(&self, v: &Vec3) -> (f64, Vec3, Mat3) {
        let (p, gp, hp) = self.poly.eval(v);
        let (e, ge, he) = self.envelope.eval(v);
        (p * e, e * gp + p * ge, e * hp + gp * ge.transpose() + ge * gp.transpose() + p * he)
    }
}

impl ScalarField for ScalarTestFunction {
    #[inline]
    fn value(&self, v: &Vec3) -> f64 {
        match &self.envelope {
            Envelope::None => self.poly.value(v),
            _ => self.poly.value(v) * self.envelope.eval(v).0,
        }
    }

    fn gradient(&self, v: &Vec3) -> Vec3 {
        self.eval(v).1
    }

    fn hessian(&self, v: &Vec3) -> Mat3 {
        self.eval(v).2
    }

    fn regularity(&self) -> Regularity {
        match self.envelope {
            Envelope::None => Regularity::Polynomial,
            Envelope::Gaussian { .. } => Regularity::Schwartz,
            Envelope::Bump { .. } => Regularity::CompactSupport,
        }
    }
}

/// Support of two-variable bumps: `δ < |z| < R` and `|y − c| < r_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSupport {
    pub delta: f64,
    pub outer: f64,
    pub y_center: [f64; 3],
    pub y_radius: f64,
}

impl BumpSupport {
    pub fn new(delta: f64, outer: f64, y_center: Vec3, y_radius: f64) -> Result<Self> {
        if !(delta > 0.0) || delta >= outer {
            return Err(invalid(format!("support needs 0 < delta < R, got delta {delta}, R {outer}")));
        }
        if !(y_radius > 0.0) {
            return Err(invalid("y radius must be positive"));
        }
        Ok(BumpSupport { delta, outer, y_center: y_center.into(), y_radius })
    }

    pub fn y_center(&self) -> Vec3 {
        Vec3::from(self.y_center)
    }

    /// Annulus profile in `|z|` with value, gradient and Hessian in z.
    fn radial(&self, z: &Vec3) -> (f64, Vec3, Mat3) {
        let rho = z.norm();
        if rho <= self.delta || rho >= self.outer {
            return (0.0, Vec3::zeros(), Mat3::zeros());
        }
        let width = self.outer - self.delta;
        let t = (2.0 * rho - (self.outer + self.delta)) / width;
        let (m, mt, mtt) = mollifier_t(t);
        let a1 = mt * 2.0 / width;
        let a2 = mtt * 4.0 / (width * width);
        let n = z / rho;
        let nn = n * n.transpose();
        (m, a1 * n, a2 * nn + a1 / rho * (Mat3::identity() - nn))
    }

    /// Bump in y with value and gradient.
    fn y_bump(&self, y: &Vec3) -> (f64, Vec3) {
        let d = y - self.y_center();
        let r2 = self.y_radius * self.y_radius;
        let (m, m1, _) = mollifier_s(d.norm_squared() / r2);
        (m, m1 * 2.0 * d / r2)
    }

    pub fn contains(&self, z: &Vec3, y: &Vec3) -> bool {
        let rho = z.norm();
        rho > self.delta && rho < self.outer && (y - self.y_center()).norm() < self.y_radius
    }
}

/// Two-variable test function written as `Φ(z, y)`.
pub trait PairField: Send + Sync {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> f64;
    /// `∇_z Φ`.
    fn grad_z(&self, z: &Vec3, y: &Vec3) -> Vec3;
    /// `∇²_z Φ`.
    fn hess_z(&self, z: &Vec3, y: &Vec3) -> Mat3;
    /// `∇_y Φ`.
    fn grad_y(&self, z: &Vec3, y: &Vec3) -> Vec3;
    fn support(&self) -> Option<BumpSupport>;

    fn value(&self, v: &Vec3, v_star: &Vec3) -> f64 {
        self.value_zy(&(v - v_star), &(0.5 * (v + v_star)))
    }

    /// `(∇_v − ∇_{v_*}) ψ = 2∇_z Φ`.
    fn d_gradient(&self, v: &Vec3, v_star: &Vec3) -> Vec3 {
        2.0 * self.grad_z(&(v - v_star), &(0.5 * (v + v_star)))
    }

    /// `(∇_v − ∇_{v_*})² ψ = 4∇²_z Φ`.
    fn d_hessian(&self, v: &Vec3, v_star: &Vec3) -> Mat3 {
        4.0 * self.hess_z(&(v - v_star), &(0.5 * (v + v_star)))
    }
}

/// Symmetric bump `Φ(z, y) = a(|z|) b(y) P(z)` with `P` even, so that
/// `ψ(v, v_*) = ψ(v_*, v)` and ψ vanishes for `|z| ≤ δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTestFunction {
    pub support: BumpSupport,
    pub poly: Polynomial,
}

impl PairTestFunction {
    pub fn new(support: BumpSupport, poly: Polynomial) -> Result<Self> {
        if !poly.is_even() {
            return Err(Error::ClassViolation("the z-polynomial of a DS function must be even".into()));
        }
        Ok(PairTestFunction { support, poly })
    }
}

impl PairField for PairTestFunction {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> f64 {
        let (a, _, _) = self.support.radial(z);
        if a == 0.0 {
            return 0.0;
        }
        let (b, _) = self.support.y_bump(y);
        a * b * self.poly.value(z)
    }

    fn grad_z(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        let (a, ga, _) = self.support.radial(z);
        let (b, _) = self.support.y_bump(y);
        let (p, gp, _) = self.poly.eval(z);
        b * (p * ga + a * gp)
    }

    fn hess_z(&self, z: &Vec3, y: &Vec3) -> Mat3 {
        let (a, ga, ha) = self.support.radial(z);
        let (b, _) = self.support.y_bump(y);
        let (p, gp, hp) = self.poly.eval(z);
        b * (p * ha + ga * gp.transpose() + gp * ga.transpose() + a * hp)
    }

    fn grad_y(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        let (a, _, _) = self.support.radial(z);
        let (_, gb) = self.support.y_bump(y);
        a * self.poly.value(z) * gb
    }

    fn support(&self) -> Option<BumpSupport> {
        Some(self.support)
    }
}

/// Single-variable ψ seen as the symmetric pair `ψ(v) + ψ(v_*)`.
pub struct Symmetrized<'a>(pub &'a dyn ScalarField);

impl PairField for Symmetrized<'_> {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> f64 {
        self.0.value(&(y + 0.5 * z)) + self.0.value(&(y - 0.5 * z))
    }

    fn grad_z(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        0.5 * (self.0.gradient(&(y + 0.5 * z)) - self.0.gradient(&(y - 0.5 * z)))
    }

    fn hess_z(&self, z: &Vec3, y: &Vec3) -> Mat3 {
        0.25 * (self.0.hessian(&(y + 0.5 * z)) + self.0.hessian(&(y - 0.5 * z)))
    }

    fn grad_y(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        self.0.gradient(&(y + 0.5 * z)) + self.0.gradient(&(y - 0.5 * z))
    }

    fn support(&self) -> Option<BumpSupport> {
        None
    }
}

/// Vector field `V(z, y)` on pairs of velocities.
pub trait VectorField: Send + Sync {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> Vec3;
    /// `J_{ij} = ∂V_i/∂z_j`.
    fn jacobian_z(&self, z: &Vec3, y: &Vec3) -> Mat3;
    fn support(&self) -> Option<BumpSupport>;

    fn value(&self, v: &Vec3, v_star: &Vec3) -> Vec3 {
        self.value_zy(&(v - v_star), &(0.5 * (v + v_star)))
    }

    /// `(∇_v − ∇_{v_*})·(Π[z] V) = 2[−2 z·V/|z|² + tr(Π J)]`, using
    /// `∂_{z_i} Π_{ij} = −2 z_j/|z|²`.
    fn div_projected_zy(&self, z: &Vec3, y: &Vec3) -> f64 {
        let r2 = z.norm_squared();
        if r2 == 0.0 {
            return 0.0;
        }
        let v = self.value_zy(z, y);
        let j = self.jacobian_z(z, y);
        let pj = j - z * (z.transpose() * j) / r2;
        2.0 * (-2.0 * z.dot(&v) / r2 + pj.trace())
    }

    fn div_projected(&self, v: &Vec3, v_star: &Vec3) -> f64 {
        self.div_projected_zy(&(v - v_star), &(0.5 * (v + v_star)))
    }
}

/// Anti-symmetric bump field `V(z, y) = a(|z|) b(y) Q(z)` with each
/// component of `Q` an odd polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialVectorField {
    pub support: BumpSupport,
    pub components: [Polynomial; 3],
}

impl PolynomialVectorField {
    pub fn new(support: BumpSupport, components: [Polynomial; 3]) -> Result<Self> {
        if components.iter().any(|p| !p.terms.is_empty() && !p.is_odd()) {
            return Err(Error::ClassViolation("components of an AS field must be odd in z".into()));
        }
        Ok(PolynomialVectorField { support, components })
    }

    /// Linear field `a(|z|) b(y) M z`.
    pub fn linear(support: BumpSupport, m: &Mat3) -> Result<Self> {
        let row = |i: usize| {
            Polynomial::from_terms(&[(m[(i, 0)], [1, 0, 0]), (m[(i, 1)], [0, 1, 0]), (m[(i, 2)], [0, 0, 1])])
        };
        Self::new(support, [row(0), row(1), row(2)])
    }
}

impl VectorField for PolynomialVectorField {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        let (a, _, _) = self.support.radial(z);
        if a == 0.0 {
            return Vec3::zeros();
        }
        let (b, _) = self.support.y_bump(y);
        a * b * Vec3::new(self.components[0].value(z), self.components[1].value(z), self.components[2].value(z))
    }

    fn jacobian_z(&self, z: &Vec3, y: &Vec3) -> Mat3 {
        let (a, ga, _) = self.support.radial(z);
        let (b, _) = self.support.y_bump(y);
        let mut j = Mat3::zeros();
        for i in 0..3 {
            let (q, gq, _) = self.components[i].eval(z);
            let row = b * (q * ga + a * gq);
            for k in 0..3 {
                j[(i, k)] = row[k];
            }
        }
        j
    }

    fn support(&self) -> Option<BumpSupport> {
        Some(self.support)
    }
}

/// Gradient-type field `V = |z|^{1+γ/2} (∇_v − ∇_{v_*}) φ` for a DS function
/// φ, so that `Π V = ∇̃φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVectorField {
    pub phi: PairTestFunction,
    pub gamma: f64,
}

impl VectorField for GradientVectorField {
    fn value_zy(&self, z: &Vec3, y: &Vec3) -> Vec3 {
        let r = z.norm();
        if r == 0.0 {
            return Vec3::zeros();
        }
        2.0 * r.powf(1.0 + 0.5 * self.gamma) * self.phi.grad_z(z, y)
    }

    fn jacobian_z(&self, z: &Vec3, y: &Vec3) -> Mat3 {
        let r = z.norm();
        if r == 0.0 {
            return Mat3::zeros();
        }
        let a = 1.0 + 0.5 * self.gamma;
        let w = r.powf(a);
        let dw = a * r.powf(a - 2.0) * z;
        2.0 * (w * self.phi.hess_z(z, y) + self.phi.grad_z(z, y) * dw.transpose())
    }

    fn support(&self) -> Option<BumpSupport> {
        Some(self.phi.support)
    }
}

/// Tagged test function, mirroring the three classes.
pub enum TestFunction {
    Single(ScalarTestFunction),
    Pair(PairTestFunction),
    Vector(Box<dyn VectorField>),
}

impl TestFunction {
    pub fn class(&self) -> TestClass {
        match self {
            TestFunction::Single(_) => TestClass::CcSingle,
            TestFunction::Pair(_) => TestClass::Ds,
            TestFunction::Vector(_) => TestClass::As,
        }
    }
}

/// Compactly supported bump of the requested class. For `CcSingle` the bump
/// is centred at `y_center` with radius `outer`; for DS and AS the support
/// is the `(δ, R)` annulus in `|z|` times the y-ball. AS fields take the
/// modulation as the z-polynomial `P` and use `Q(z) = P(z)·z` direction-wise,
/// so `P` must be even.
pub fn bump_testfn(class: TestClass, support: BumpSupport, modulation: Polynomial) -> Result<TestFunction> {
    match class {
        TestClass::CcSingle => Ok(TestFunction::Single(ScalarTestFunction::bump(
            modulation,
            support.y_center(),
            support.outer,
        )?)),
        TestClass::Ds => Ok(TestFunction::Pair(PairTestFunction::new(support, modulation)?)),
        TestClass::As => {
            if !modulation.is_even() {
                return Err(Error::ClassViolation("AS modulation must be even".into()));
            }
            let times = |axis: usize| {
                let mut terms = modulation.terms.clone();
                for t in &mut terms {
                    t.powers[axis] += 1;
                }
                Polynomial::new(terms)
            };
            Ok(TestFunction::Vector(Box::new(PolynomialVectorField::new(support, [times(0), times(1), times(2)])?)))
        }
    }
}
