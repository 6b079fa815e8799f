//! Deterministic quadrature rules over ℝ³, ℝ⁶, the sphere and the singular
//! deflection angle.
//!
//! Every integral is evaluated twice, at the requested resolution and at a
//! coarser one, and the difference is reported as the error estimate.
//! Node values are reduced with the fixed tree in [`crate::par`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{BumpSupport, Density};
use crate::geometry::{orthonormal_frame, Vec3};
use crate::kernels::{ScaledKernel, ThetaRule};
use crate::par::{self, Execution};

/// Value of an integral with a refinement-difference error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub node_count: usize,
}

impl IntegralResult {
    pub fn from_levels(fine: f64, coarse: f64, node_count: usize) -> Self {
        IntegralResult { value: fine, error_estimate: (fine - coarse).abs(), node_count }
    }

    /// Acceptance tolerance `max(floor, factor × error_estimate)`.
    pub fn tolerance(&self, floor: f64, factor: f64) -> f64 {
        floor.max(factor * self.error_estimate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityRuleKind {
    /// Gauss–Hermite tensor rule adapted to each Gaussian component.
    GaussHermite,
    /// Gauss–Legendre tensor rule on `[−L, L]^d`.
    TruncatedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocitySpec {
    pub rule: VelocityRuleKind,
    /// Nodes per axis for integrals over ℝ³.
    pub nodes_per_axis: usize,
    /// Nodes per axis for integrals over ℝ⁶.
    pub nodes_per_axis_r6: usize,
    pub box_half_width: f64,
}

impl Default for VelocitySpec {
    fn default() -> Self {
        VelocitySpec { rule: VelocityRuleKind::GaussHermite, nodes_per_axis: 20, nodes_per_axis_r6: 8, box_half_width: 8.0 }
    }
}

/// Rule for σ-integrals: `theta_nodes` in the deflection angle (with the
/// kernel absorbed) and `phi_nodes` equispaced in the azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSpec {
    pub theta_nodes: usize,
    pub phi_nodes: usize,
}

impl Default for SphereSpec {
    fn default() -> Self {
        SphereSpec { theta_nodes: 12, phi_nodes: 8 }
    }
}

/// Composite rule for one-dimensional kernel integrals in θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AngularSpec {
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for AngularSpec {
    fn default() -> Self {
        AngularSpec { panels: 4, nodes_per_panel: 16 }
    }
}

/// Rule on the compact `(z, y)` support of DS/AS test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompactSpec {
    pub radial: usize,
    pub direction_theta: usize,
    pub direction_phi: usize,
    pub y_per_axis: usize,
}

impl Default for CompactSpec {
    fn default() -> Self {
        CompactSpec { radial: 12, direction_theta: 8, direction_phi: 16, y_per_axis: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub velocity: VelocitySpec,
    pub sphere: SphereSpec,
    pub circle_nodes: usize,
    pub angular: AngularSpec,
    pub compact: CompactSpec,
    /// Seed for randomized spot checks; never used by the rules themselves.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            velocity: VelocitySpec::default(),
            sphere: SphereSpec::default(),
            circle_nodes: 16,
            angular: AngularSpec::default(),
            compact: CompactSpec::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

fn two_thirds(n: usize, even: bool) -> usize {
    let mut m = ((2 * n) / 3).max(4);
    if even && m % 2 == 1 {
        m += 1;
    }
    m
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.velocity.nodes_per_axis,
            self.velocity.nodes_per_axis_r6,
            self.sphere.theta_nodes,
            self.sphere.phi_nodes,
            self.circle_nodes,
            self.angular.nodes_per_panel,
            self.compact.radial,
            self.compact.direction_theta,
            self.compact.direction_phi,
            self.compact.y_per_axis,
        ];
        if counts.iter().any(|&n| n < 4) {
            return Err(invalid("every node count must be at least 4"));
        }
        if self.angular.panels == 0 {
            return Err(invalid("angular panels must be positive"));
        }
        if self.velocity.nodes_per_axis_r6 % 2 == 1 {
            return Err(invalid("nodes_per_axis_r6 must be even so that no node has v = v_*"));
        }
        if !(self.velocity.box_half_width > 0.0) {
            return Err(invalid("box half-width must be positive"));
        }
        Ok(())
    }

    /// The lower refinement level used for error estimates.
    pub fn coarsened(&self) -> Self {
        let mut c = *self;
        c.velocity.nodes_per_axis = two_thirds(self.velocity.nodes_per_axis, false);
        c.velocity.nodes_per_axis_r6 = two_thirds(self.velocity.nodes_per_axis_r6, true);
        c.sphere.theta_nodes = two_thirds(self.sphere.theta_nodes, false);
        c.sphere.phi_nodes = two_thirds(self.sphere.phi_nodes, false);
        c.circle_nodes = two_thirds(self.circle_nodes, false);
        c.angular.nodes_per_panel = (self.angular.nodes_per_panel / 2).max(4);
        c.compact.radial = two_thirds(self.compact.radial, false);
        c.compact.direction_theta = two_thirds(self.compact.direction_theta, false);
        c.compact.direction_phi = two_thirds(self.compact.direction_phi, false);
        c.compact.y_per_axis = two_thirds(self.compact.y_per_axis, false);
        c
    }
}

type Rule1 = Arc<[(f64, f64)]>;

fn cached(table: &'static OnceLock<Mutex<HashMap<usize, Rule1>>>, n: usize, build: impl FnOnce() -> Vec<(f64, f64)>) -> Rule1 {
    let map = table.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("rule cache poisoned");
    guard.entry(n).or_insert_with(|| build().into()).clone()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, in increasing order.
pub fn gauss_legendre(n: usize) -> Rule1 {
    static TABLE: OnceLock<Mutex<HashMap<usize, Rule1>>> = OnceLock::new();
    cached(&TABLE, n, || {
        let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
        let mut v: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    })
}

/// Gauss–Hermite rule for the standard normal weight; the weights sum to 1.
pub fn gauss_hermite_normal(n: usize) -> Rule1 {
    static TABLE: OnceLock<Mutex<HashMap<usize, Rule1>>> = OnceLock::new();
    cached(&TABLE, n, || {
        let rule = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
        let mut v: Vec<(f64, f64)> =
            rule.iter().map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / PI.sqrt())).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Symmetrize to remove eigen-solver noise, so odd moments vanish exactly.
        let m = v.len();
        for i in 0..m / 2 {
            let x = 0.5 * (v[m - 1 - i].0 - v[i].0);
            let w = 0.5 * (v[i].1 + v[m - 1 - i].1);
            v[i] = (-x, w);
            v[m - 1 - i] = (x, w);
        }
        if m % 2 == 1 {
            v[m / 2].0 = 0.0;
        }
        let total: f64 = v.iter().map(|p| p.1).sum();
        for p in &mut v {
            p.1 /= total;
        }
        v
    })
}

/// Points and weights in ℝ³.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rule3 {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

/// Pairs `(v, v_*)` and weights in ℝ⁶.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rule6 {
    pub pairs: Vec<(Vec3, Vec3)>,
    pub weights: Vec<f64>,
}

impl Rule6 {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn tensor3(rule: &[(f64, f64)]) -> Vec<(Vec3, f64)> {
    let mut out = Vec::with_capacity(rule.len().pow(3));
    for (x, wx) in rule {
        for (y, wy) in rule {
            for (z, wz) in rule {
                out.push((Vec3::new(*x, *y, *z), wx * wy * wz));
            }
        }
    }
    out
}

/// Rule with `Σ w h(v) ≈ ∫ f(v) h(v) dv`, built from each component's own
/// Gauss–Hermite nodes.
pub fn density_rule3(f: &Density, n: usize) -> Rule3 {
    let base = tensor3(&gauss_hermite_normal(n));
    let mut rule = Rule3::default();
    for c in f.components() {
        let sd = c.cov.map(f64::sqrt);
        for (a, w) in &base {
            rule.points.push(c.mean + sd.component_mul(a));
            rule.weights.push(c.weight * w);
        }
    }
    rule
}

/// Rule with `Σ w h(v, v_*) ≈ ∫∫ f f_* h`. Pairs drawn from the same
/// component use `v = m + L(b + a)/√2`, `v_* = m + L(b − a)/√2`, so that
/// `z = √2 L a` never vanishes for an even node count.
pub fn density_rule6(f: &Density, n: usize) -> Rule6 {
    let base = tensor3(&gauss_hermite_normal(n));
    let comps = f.components();
    let mut rule = Rule6::default();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (i, ci) in comps.iter().enumerate() {
        let li = ci.cov.map(f64::sqrt);
        for (j, cj) in comps.iter().enumerate() {
            let lj = cj.cov.map(f64::sqrt);
            let wij = ci.weight * cj.weight;
            for (a, wa) in &base {
                for (b, wb) in &base {
                    let (v, vs) = if i == j {
                        (ci.mean + li.component_mul(&((b + a) * s)), ci.mean + li.component_mul(&((b - a) * s)))
                    } else {
                        (ci.mean + li.component_mul(a), cj.mean + lj.component_mul(b))
                    };
                    if (v - vs).norm() <= 1e-12 * (1.0 + v.norm()) {
                        continue;
                    }
                    rule.pairs.push((v, vs));
                    rule.weights.push(wij * wa * wb);
                }
            }
        }
    }
    rule
}

/// Rule with `Σ w h(v, v_*) ≈ ∫∫ f f_* h` for integrands with kinks in
/// `|v − v_*|`. Each component pair is written as `z ~ N(m_i − m_j, C_i + C_j)`
/// times the conditional law of `y` given `z`; `z` is integrated in
/// spherical coordinates with the radius split at `breaks`, `y` with
/// Gauss–Hermite nodes. Uses `radial` nodes per radial piece, the
/// `direction_*` counts on the sphere and `y_per_axis` nodes in y.
pub fn density_rule6_split(f: &Density, breaks: &[f64], spec: &CompactSpec) -> Rule6 {
    let radial = gauss_legendre(spec.radial);
    let y_rule = tensor3(&gauss_hermite_normal(spec.y_per_axis));
    let mut dirs = Vec::new();
    for (c, wc) in gauss_legendre(spec.direction_theta).iter() {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for j in 0..spec.direction_phi {
            let phi = 2.0 * PI * (j as f64 + 0.5) / spec.direction_phi as f64;
            dirs.push((Vec3::new(s * phi.cos(), s * phi.sin(), *c), wc * 2.0 * PI / spec.direction_phi as f64));
        }
    }
    let comps = f.components();
    let mut rule = Rule6::default();
    for ci in comps {
        for cj in comps {
            let wij = ci.weight * cj.weight;
            let mz = ci.mean - cj.mean;
            let cz = ci.cov + cj.cov;
            let gain = (ci.cov - cj.cov).component_div(&(2.0 * cz));
            let sy = ci.cov.component_mul(&cj.cov).component_div(&cz).map(f64::sqrt);
            let my = 0.5 * (ci.mean + cj.mean);
            let log_norm = -0.5 * cz.iter().map(|c| (2.0 * PI * c).ln()).sum::<f64>();
            let reach = mz.norm() + 10.0 * cz.max().sqrt();
            let mut edges = vec![0.0];
            edges.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < reach));
            edges.sort_by(f64::total_cmp);
            edges.push(reach);
            for piece in edges.windows(2) {
                let (a, b) = (piece[0], piece[1]);
                for (x, wx) in radial.iter() {
                    let rho = a + 0.5 * (b - a) * (x + 1.0);
                    let wr = 0.5 * (b - a) * wx * rho * rho;
                    for (dir, wd) in &dirs {
                        let z = rho * dir;
                        let d = z - mz;
                        let q: f64 = d.component_mul(&d).component_div(&cz).sum();
                        let wz = wij * wr * wd * (log_norm - 0.5 * q).exp();
                        if wz == 0.0 {
                            continue;
                        }
                        let center = my + gain.component_mul(&d);
                        for (a, wa) in &y_rule {
                            let y = center + sy.component_mul(a);
                            rule.pairs.push((y + 0.5 * z, y - 0.5 * z));
                            rule.weights.push(wz * wa);
                        }
                    }
                }
            }
        }
    }
    rule
}

/// Rule for plain Lebesgue integrals over ℝ³.
pub fn lebesgue_rule3(spec: &VelocitySpec, n: usize) -> Rule3 {
    match spec.rule {
        VelocityRuleKind::GaussHermite => {
            let norm = (2.0 * PI).powf(1.5);
            let mut rule = Rule3::default();
            for (x, w) in tensor3(&gauss_hermite_normal(n)) {
                rule.weights.push(w * norm * (0.5 * x.norm_squared()).exp());
                rule.points.push(x);
            }
            rule
        }
        VelocityRuleKind::TruncatedBox => {
            let l = spec.box_half_width;
            let scaled: Vec<(f64, f64)> = gauss_legendre(n).iter().map(|(x, w)| (l * x, l * w)).collect();
            let (points, weights) = tensor3(&scaled).into_iter().unzip();
            Rule3 { points, weights }
        }
    }
}

fn check_finite(value: f64, node: impl FnOnce() -> Vec<f64>) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { node: node() })
    }
}

fn sum_rule3(rule: &Rule3, exec: Execution, g: &(dyn Fn(&Vec3) -> f64 + Sync)) -> Result<f64> {
    par::try_sum_map(rule.points.len(), exec, |i| {
        let p = &rule.points[i];
        let val = check_finite(g(p), || p.iter().cloned().collect())?;
        Ok(rule.weights[i] * val)
    })
}

/// `∫_{ℝ³} g(v) dv`.
pub fn integrate_r3(g: impl Fn(&Vec3) -> f64 + Sync, spec: &QuadratureSpec) -> Result<IntegralResult> {
    spec.validate()?;
    let coarse = spec.coarsened();
    let fine_rule = lebesgue_rule3(&spec.velocity, spec.velocity.nodes_per_axis);
    let coarse_rule = lebesgue_rule3(&spec.velocity, coarse.velocity.nodes_per_axis);
    let fine = sum_rule3(&fine_rule, spec.execution, &g)?;
    let c = sum_rule3(&coarse_rule, spec.execution, &g)?;
    Ok(IntegralResult::from_levels(fine, c, fine_rule.points.len()))
}

/// `∫_{ℝ³} f(v) g(v) dv` with the density-adapted rule.
pub fn integrate_density_r3(f: &Density, g: impl Fn(&Vec3) -> f64 + Sync, spec: &QuadratureSpec) -> Result<IntegralResult> {
    spec.validate()?;
    let coarse = spec.coarsened();
    let fine_rule = density_rule3(f, spec.velocity.nodes_per_axis);
    let coarse_rule = density_rule3(f, coarse.velocity.nodes_per_axis);
    let fine = sum_rule3(&fine_rule, spec.execution, &g)?;
    let c = sum_rule3(&coarse_rule, spec.execution, &g)?;
    Ok(IntegralResult::from_levels(fine, c, fine_rule.points.len()))
}

/// `∫∫_{ℝ⁶} g(v, v_*) dv dv_*` with a tensor of two ℝ³ rules.
pub fn integrate_r6(g: impl Fn(&Vec3, &Vec3) -> f64 + Sync, spec: &QuadratureSpec) -> Result<IntegralResult> {
    spec.validate()?;
    let level = |n: usize| -> Result<(f64, usize)> {
        let r = lebesgue_rule3(&spec.velocity, n);
        let m = r.points.len();
        let total = par::try_sum_map(m * m, spec.execution, |idx| {
            let (i, j) = (idx / m, idx % m);
            let (v, vs) = (&r.points[i], &r.points[j]);
            let val = check_finite(g(v, vs), || v.iter().chain(vs.iter()).cloned().collect())?;
            Ok(r.weights[i] * r.weights[j] * val)
        })?;
        Ok((total, m * m))
    };
    let (fine, count) = level(spec.velocity.nodes_per_axis_r6)?;
    let (c, _) = level(spec.coarsened().velocity.nodes_per_axis_r6)?;
    Ok(IntegralResult::from_levels(fine, c, count))
}

/// Sums `N` integrands against a ℝ⁶ rule in one sweep.
pub fn sum_rule6<const N: usize, G>(rule: &Rule6, exec: Execution, g: &G) -> Result<[f64; N]>
where
    G: Fn(&Vec3, &Vec3) -> Result<[f64; N]> + Sync,
{
    par::try_sum_map_n::<N, _>(rule.len(), exec, |i| {
        let (v, vs) = &rule.pairs[i];
        let vals = g(v, vs)?;
        let mut out = [0.0; N];
        for (o, x) in out.iter_mut().zip(vals) {
            *o = rule.weights[i] * check_finite(x, || v.iter().chain(vs.iter()).cloned().collect())?;
        }
        Ok(out)
    })
}

/// `∫∫ f f_* g(v, v_*)` for several integrands at once, at two levels. The
/// closure receives the spec of the level being evaluated so that inner
/// (angular) rules can be refined together with the velocity rule.
pub fn integrate_density_r6_n<const N: usize, G>(
    f: &Density,
    spec: &QuadratureSpec,
    make: impl Fn(&QuadratureSpec) -> G,
) -> Result<[IntegralResult; N]>
where
    G: Fn(&Vec3, &Vec3) -> Result<[f64; N]> + Sync,
{
    spec.validate()?;
    let coarse = spec.coarsened();
    let fine_rule = density_rule6(f, spec.velocity.nodes_per_axis_r6);
    let coarse_rule = density_rule6(f, coarse.velocity.nodes_per_axis_r6);
    let fine = sum_rule6(&fine_rule, spec.execution, &make(spec))?;
    let c = sum_rule6(&coarse_rule, spec.execution, &make(&coarse))?;
    let mut out = [IntegralResult { value: 0.0, error_estimate: 0.0, node_count: fine_rule.len() }; N];
    for k in 0..N {
        out[k] = IntegralResult::from_levels(fine[k], c[k], fine_rule.len());
    }
    Ok(out)
}

/// Single-integrand form of [`integrate_density_r6_n`].
pub fn integrate_density_r6(
    f: &Density,
    g: impl Fn(&Vec3, &Vec3) -> Result<f64> + Sync,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    let [r] = integrate_density_r6_n(f, spec, |_| |v: &Vec3, vs: &Vec3| Ok([g(v, vs)?]))?;
    Ok(r)
}

/// Cap integral `∫_0^{π/2} sinθ dθ ∫_0^{2π} dφ g(σ)` about the axis `k`,
/// with Gauss–Legendre nodes in `cos θ` and equispaced φ.
pub fn integrate_sphere(g: impl Fn(&Vec3) -> f64, k: &Vec3, spec: &QuadratureSpec) -> Result<IntegralResult> {
    spec.validate()?;
    let k = crate::geometry::unit(*k)?;
    let (h, i) = orthonormal_frame(&k);
    let level = |nt: usize, np: usize| -> Result<f64> {
        let mut vals = Vec::with_capacity(nt * np);
        for (x, w) in gauss_legendre(nt).iter() {
            let c = 0.5 * (x + 1.0);
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..np {
                let phi = 2.0 * PI * j as f64 / np as f64;
                let sigma = c * k + s * (phi.cos() * h + phi.sin() * i);
                let val = check_finite(g(&sigma), || sigma.iter().cloned().collect())?;
                vals.push(0.5 * w * (2.0 * PI / np as f64) * val);
            }
        }
        Ok(par::pairwise_sum(&vals))
    };
    let c = spec.coarsened();
    let fine = level(spec.sphere.theta_nodes, spec.sphere.phi_nodes)?;
    let coarse = level(c.sphere.theta_nodes, c.sphere.phi_nodes)?;
    Ok(IntegralResult::from_levels(fine, coarse, spec.sphere.theta_nodes * spec.sphere.phi_nodes))
}

/// Relative refinement tolerance of [`integrate_theta_singular`].
pub const THETA_REFINEMENT_TOL: f64 = 1e-6;

/// `∫ g(θ) β^ε(θ) dθ` over the kernel support with the singular endpoint
/// absorbed by substitution. Fails when halving the nodes per panel moves
/// the value by more than [`THETA_REFINEMENT_TOL`] relative.
pub fn integrate_theta_singular(g: impl Fn(f64) -> f64, kernel: &ScaledKernel, spec: &AngularSpec) -> Result<IntegralResult> {
    if spec.nodes_per_panel < 4 || spec.panels == 0 {
        return Err(invalid("angular rule needs panels ≥ 1 and ≥ 4 nodes per panel"));
    }
    let fine_rule = kernel.theta_rule(spec.panels, spec.nodes_per_panel);
    let coarse_rule = kernel.theta_rule(spec.panels, (spec.nodes_per_panel / 2).max(4));
    let eval = |rule: &ThetaRule| -> Result<f64> {
        let mut vals = Vec::with_capacity(rule.nodes.len());
        for n in &rule.nodes {
            vals.push(n.weight * check_finite(g(n.theta), || vec![n.theta])?);
        }
        Ok(par::pairwise_sum(&vals))
    };
    let fine = eval(&fine_rule)?;
    let coarse = eval(&coarse_rule)?;
    let r = IntegralResult::from_levels(fine, coarse, fine_rule.nodes.len());
    if r.error_estimate > THETA_REFINEMENT_TOL * fine.abs().max(1e-300) && r.error_estimate > 1e-14 {
        return Err(Error::NonConvergence(format!(
            "angular integral changed by {:e} under refinement (value {fine:e})",
            r.error_estimate
        )));
    }
    Ok(r)
}

/// Angular rule for σ-integrals `∫ F B^ε sinθ dθ dφ / |z|^γ`: θ nodes carry
/// `β^ε` in their weights; φ nodes are equispaced with weight `2π/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionAngles {
    pub theta: ThetaRule,
    /// `(cos φ, sin φ)`.
    pub phi: Vec<(f64, f64)>,
    pub phi_weight: f64,
}

impl CollisionAngles {
    pub fn new(kernel: &ScaledKernel, sphere: &SphereSpec) -> Self {
        CollisionAngles { theta: kernel.theta_rule(1, sphere.theta_nodes), ..Self::phi_only(sphere.phi_nodes) }
    }

    fn phi_only(n: usize) -> Self {
        let phi = (0..n)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect();
        CollisionAngles { theta: ThetaRule { nodes: Vec::new() }, phi, phi_weight: 2.0 * PI / n as f64 }
    }

    pub fn node_count(&self) -> usize {
        self.theta.nodes.len() * self.phi.len()
    }
}

/// Lebesgue rule on `{δ < |z| < R} × [c − r_y, c + r_y]³` mapped back to
/// `(v, v_*)`, with `dv dv_* = dz dy`.
pub fn compact_pair_rule(support: &BumpSupport, spec: &CompactSpec) -> Rule6 {
    let radial = gauss_legendre(spec.radial);
    let dir_theta = gauss_legendre(spec.direction_theta);
    let y_rule = gauss_legendre(spec.y_per_axis);
    let (lo, hi) = (support.delta, support.outer);
    let yc = support.y_center();
    let ry = support.y_radius;
    let mut zs = Vec::new();
    for (x, w) in radial.iter() {
        let rho = lo + 0.5 * (hi - lo) * (x + 1.0);
        let wr = 0.5 * (hi - lo) * w * rho * rho;
        for (c, wc) in dir_theta.iter() {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..spec.direction_phi {
                let phi = 2.0 * PI * (j as f64 + 0.5) / spec.direction_phi as f64;
                let dir = Vec3::new(s * phi.cos(), s * phi.sin(), *c);
                zs.push((rho * dir, wr * wc * 2.0 * PI / spec.direction_phi as f64));
            }
        }
    }
    let mut ys = Vec::new();
    for (a, wa) in y_rule.iter() {
        for (b, wb) in y_rule.iter() {
            for (c, wc) in y_rule.iter() {
                let y = yc + ry * Vec3::new(*a, *b, *c);
                ys.push((y, ry.powi(3) * wa * wb * wc));
            }
        }
    }
    let mut rule = Rule6::default();
    for (z, wz) in &zs {
        for (y, wy) in &ys {
            rule.pairs.push((y + 0.5 * z, y - 0.5 * z));
            rule.weights.push(wz * wy);
        }
    }
    rule
}
