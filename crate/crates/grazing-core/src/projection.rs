//! Projection of anti-symmetric vector fields onto gradients `∇̃ψ`.
//!
//! Writing `z = 2r ω` with `ω ∈ S²`, the projected gradient only sees the
//! angular variable: `∇̃ψ = 2|z|^{γ/2} ∇_ω ψ`. Minimising `‖∇̃ψ − Π[z]V‖²`
//! therefore decouples into one Poisson problem per shell `(r, y)`,
//! `Δ_{S²}ψ = 2^{−1−γ/2} r^{−γ/2} ∇_ω·(Π[ω]V)`, solved here in real
//! spherical harmonics with the degree-0 coefficient pinned to zero.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{BumpSupport, PairField, VectorField};
use crate::geometry::Vec3;
use crate::par::{map_collect, Execution};
use crate::quadrature::gauss_legendre;

/// Largest admissible degree-0 coefficient of a right-hand side, relative to
/// `max(1, max |coefficient|)`.
pub const SOLVABILITY_TOL: f64 = 1e-10;

pub const DEFAULT_LMAX: usize = 16;

/// Position of `Y_{ℓm}`, `−ℓ ≤ m ≤ ℓ`, in a coefficient vector.
pub fn coefficient_index(l: usize, m: i64) -> usize {
    l * l + (l as i64 + m) as usize
}

pub fn coefficient_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

fn lmax_of(len: usize) -> Result<usize> {
    let n = (len as f64).sqrt().round() as usize;
    if n == 0 || n * n != len {
        return Err(invalid(format!("{len} is not a spherical-harmonic coefficient count")));
    }
    Ok(n - 1)
}

fn degree_of(index: usize) -> usize {
    (index as f64).sqrt().floor() as usize
}

/// Orthonormal associated Legendre functions `P̄_ℓ^m(cos θ)` for `0 ≤ m ≤ ℓ`
/// and their θ-derivatives, stored at `ℓ(ℓ+1)/2 + m`. The derivatives are
/// only meaningful for `sin θ > 0`.
fn legendre(lmax: usize, x: f64, s: f64) -> (Vec<f64>, Vec<f64>) {
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let n = at(lmax, lmax) + 1;
    let mut p = vec![0.0; n];
    p[0] = (0.25 / std::f64::consts::PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            p[at(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[at(m - 1, m - 1)];
        }
        if m < lmax {
            p[at(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[at(m, m)];
        }
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[at(l, m)] = a * (x * p[at(l - 1, m)] - b * p[at(l - 2, m)]);
        }
    }
    let mut dp = vec![0.0; n];
    if s > 0.0 {
        for l in 1..=lmax {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let prev = if m < l { p[at(l - 1, m)] } else { 0.0 };
                let c = ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf - mf) * (lf + mf)).sqrt();
                dp[at(l, m)] = (lf * x * p[at(l, m)] - c * prev) / s;
            }
        }
    }
    (p, dp)
}

/// Real orthonormal spherical harmonics at `ω` with their tangential
/// gradients `∇_ω Y` (zero at the poles, where they are not needed).
fn harmonics_at(lmax: usize, omega: &Vec3) -> (Vec<f64>, Vec<Vec3>) {
    let x = omega.z.clamp(-1.0, 1.0);
    let s = (omega.x * omega.x + omega.y * omega.y).sqrt();
    let phi = omega.y.atan2(omega.x);
    let (p, dp) = legendre(lmax, x, s);
    let e_theta = if s > 0.0 { Vec3::new(x * omega.x / s, x * omega.y / s, -s) } else { Vec3::zeros() };
    let e_phi = if s > 0.0 { Vec3::new(-omega.y / s, omega.x / s, 0.0) } else { Vec3::zeros() };
    let mut y = vec![0.0; coefficient_count(lmax)];
    let mut g = vec![Vec3::zeros(); coefficient_count(lmax)];
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=lmax {
        let base = l * (l + 1) / 2;
        y[coefficient_index(l, 0)] = p[base];
        g[coefficient_index(l, 0)] = dp[base] * e_theta;
        for m in 1..=l {
            let mf = m as f64;
            let (sm, cm) = (mf * phi).sin_cos();
            let (pv, dv) = (sqrt2 * p[base + m], sqrt2 * dp[base + m]);
            y[coefficient_index(l, m as i64)] = pv * cm;
            y[coefficient_index(l, -(m as i64))] = pv * sm;
            if s > 0.0 {
                g[coefficient_index(l, m as i64)] = dv * cm * e_theta - mf * pv * sm / s * e_phi;
                g[coefficient_index(l, -(m as i64))] = dv * sm * e_theta + mf * pv * cm / s * e_phi;
            }
        }
    }
    (y, g)
}

/// Quadrature node on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode {
    pub omega: Vec3,
    pub weight: f64,
}

/// Gauss–Legendre in `cos θ` times uniform φ, with harmonic tables.
#[derive(Debug)]
pub struct SphereTransform {
    lmax: usize,
    nodes: Vec<SphereNode>,
    values: Vec<f64>,
    gradients: Vec<Vec3>,
}

impl SphereTransform {
    /// Uses `lmax + 8` nodes in `cos θ` and `2 lmax + 8` in φ.
    pub fn new(lmax: usize) -> Result<Self> {
        if lmax == 0 {
            return Err(invalid("lmax must be at least 1"));
        }
        let n_phi = 2 * lmax + 8;
        let mut nodes = Vec::new();
        for &(x, w) in gauss_legendre(lmax + 8).iter() {
            let s = (1.0 - x * x).sqrt();
            for j in 0..n_phi {
                let (sp, cp) = (2.0 * std::f64::consts::PI * j as f64 / n_phi as f64).sin_cos();
                nodes.push(SphereNode {
                    omega: Vec3::new(s * cp, s * sp, x),
                    weight: w * 2.0 * std::f64::consts::PI / n_phi as f64,
                });
            }
        }
        let mut values = Vec::with_capacity(nodes.len() * coefficient_count(lmax));
        let mut gradients = Vec::with_capacity(values.capacity());
        for node in &nodes {
            let (y, g) = harmonics_at(lmax, &node.omega);
            values.extend(y);
            gradients.extend(g);
        }
        Ok(SphereTransform { lmax, nodes, values, gradients })
    }

    /// Shared instance for `lmax`.
    pub fn cached(lmax: usize) -> Result<Arc<Self>> {
        static TABLE: OnceLock<Mutex<HashMap<usize, Arc<SphereTransform>>>> = OnceLock::new();
        let table = TABLE.get_or_init(Default::default);
        if let Some(t) = table.lock().unwrap().get(&lmax) {
            return Ok(t.clone());
        }
        let t = Arc::new(SphereTransform::new(lmax)?);
        table.lock().unwrap().insert(lmax, t.clone());
        Ok(t)
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn nodes(&self) -> &[SphereNode] {
        &self.nodes
    }

    fn row(&self, node: usize) -> &[f64] {
        let n = coefficient_count(self.lmax);
        &self.values[node * n..(node + 1) * n]
    }

    fn grad_row(&self, node: usize) -> &[Vec3] {
        let n = coefficient_count(self.lmax);
        &self.gradients[node * n..(node + 1) * n]
    }

    /// Coefficients `∫ h Y_{ℓm}` of nodal values `h`.
    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; coefficient_count(self.lmax)];
        for (i, (node, h)) in self.nodes.iter().zip(values).enumerate() {
            let wh = node.weight * h;
            for (ci, y) in c.iter_mut().zip(self.row(i)) {
                *ci += wh * y;
            }
        }
        c
    }

    /// Nodal values of a coefficient vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.nodes.len()).map(|i| self.row(i).iter().zip(coeffs).map(|(y, c)| y * c).sum()).collect()
    }

    /// Nodal tangential gradients `∇_ω ψ`.
    pub fn tangential_gradients(&self, coeffs: &[f64]) -> Vec<Vec3> {
        (0..self.nodes.len())
            .map(|i| self.grad_row(i).iter().zip(coeffs).fold(Vec3::zeros(), |acc, (g, c)| acc + *c * g))
            .collect()
    }

    /// Value at an arbitrary unit vector.
    pub fn evaluate(&self, coeffs: &[f64], omega: &Vec3) -> f64 {
        let (y, _) = harmonics_at(self.lmax, omega);
        y.iter().zip(coeffs).map(|(y, c)| y * c).sum()
    }
}

/// `Δ_{S²}` in coefficient space.
pub fn laplace_beltrami(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let l = degree_of(i) as f64;
            -l * (l + 1.0) * c
        })
        .collect()
}

fn check_solvable(coeffs: &[f64]) -> Result<()> {
    let scale = coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    if coeffs[0].abs() > SOLVABILITY_TOL * scale {
        return Err(Error::NonSolvable(coeffs[0]));
    }
    Ok(())
}

/// Coefficients of `2^{−1−γ/2} r^{−γ/2} ∇_ω·(Π[ω]V(2rω, y))`.
pub fn sphere_rhs(v: &dyn VectorField, r: f64, y: &Vec3, gamma: f64, lmax: usize) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(invalid(format!("shell radius must be positive, got {r}")));
    }
    let t = SphereTransform::cached(lmax)?;
    let rho = 2.0 * r;
    let scale = 2f64.powf(-1.0 - 0.5 * gamma) * r.powf(-0.5 * gamma) * rho;
    let values: Vec<f64> = t
        .nodes()
        .iter()
        .map(|node| {
            let z = rho * node.omega;
            let vz = v.value_zy(&z, y);
            let j = v.jacobian_z(&z, y);
            let pj = j - node.omega * (node.omega.transpose() * j);
            scale * (pj.trace() - 2.0 * node.omega.dot(&vz) / rho)
        })
        .collect();
    if let Some(bad) = values.iter().position(|h| !h.is_finite()) {
        let w = rho * t.nodes()[bad].omega;
        return Err(Error::NonFinite { node: vec![w.x, w.y, w.z, y.x, y.y, y.z] });
    }
    let c = t.forward(&values);
    check_solvable(&c)?;
    Ok(c)
}

/// Solves `Δ_{S²}ψ = rhs` with zero mean.
pub fn sphere_poisson_solve(rhs: &[f64]) -> Result<Vec<f64>> {
    lmax_of(rhs.len())?;
    check_solvable(rhs)?;
    Ok(rhs
        .iter()
        .enumerate()
        .map(|(i, c)| match degree_of(i) {
            0 => 0.0,
            l => -c / (l * (l + 1)) as f64,
        })
        .collect())
}

/// Resolution of a projection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSpec {
    pub radii: usize,
    pub y_per_axis: usize,
    pub lmax: usize,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec { radii: 6, y_per_axis: 5, lmax: DEFAULT_LMAX }
    }
}

/// Shells `r = |z|/2` and parameters `y`, with quadrature weights for the
/// measure `dz dy = 8r² dr dω dy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellGrid {
    pub radii: Vec<f64>,
    pub radial_weights: Vec<f64>,
    pub y_nodes: Vec<Vec3>,
    pub y_weights: Vec<f64>,
    pub lmax: usize,
}

impl ShellGrid {
    /// Gauss–Legendre shells on `[δ/2, R/2]` and a tensor rule in y on the
    /// cube around the y-ball of the support.
    pub fn new(support: &BumpSupport, spec: &ProjectionSpec) -> Result<Self> {
        if spec.radii == 0 || spec.y_per_axis == 0 {
            return Err(invalid("shell grid needs at least one radius and one y node"));
        }
        let (a, b) = (0.5 * support.delta, 0.5 * support.outer);
        let mut radii = Vec::new();
        let mut radial_weights = Vec::new();
        for &(x, w) in gauss_legendre(spec.radii).iter() {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
            radii.push(r);
            radial_weights.push(0.5 * (b - a) * w * 8.0 * r * r);
        }
        let c = support.y_center();
        let h = support.y_radius;
        let line = gauss_legendre(spec.y_per_axis);
        let mut y_nodes = Vec::new();
        let mut y_weights = Vec::new();
        for &(x0, w0) in line.iter() {
            for &(x1, w1) in line.iter() {
                for &(x2, w2) in line.iter() {
                    y_nodes.push(c + h * Vec3::new(x0, x1, x2));
                    y_weights.push(h * h * h * w0 * w1 * w2);
                }
            }
        }
        let grid = ShellGrid { radii, radial_weights, y_nodes, y_weights, lmax: spec.lmax };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || !(self.radii[0] > 0.0) {
            return Err(invalid("shell radii must be positive"));
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("shell radii must be strictly increasing"));
        }
        if self.radial_weights.len() != self.radii.len() || self.y_weights.len() != self.y_nodes.len() {
            return Err(invalid("shell grid weights do not match its nodes"));
        }
        if self.lmax == 0 {
            return Err(invalid("lmax must be at least 1"));
        }
        Ok(())
    }

    pub fn shell_count(&self) -> usize {
        self.radii.len() * self.y_nodes.len()
    }

    fn split(&self, index: usize) -> (usize, usize) {
        (index / self.y_nodes.len(), index % self.y_nodes.len())
    }
}

/// Per-shell harmonic coefficients of ψ(k, r, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereField {
    pub grid: ShellGrid,
    pub gamma: f64,
    /// Indexed by `radius_index · y_count + y_index`.
    pub coefficients: Vec<Vec<f64>>,
}

impl SphereField {
    pub fn shell(&self, radius_index: usize, y_index: usize) -> &[f64] {
        &self.coefficients[radius_index * self.grid.y_nodes.len() + y_index]
    }

    /// ψ at `z = 2rω` on a grid shell.
    pub fn value(&self, radius_index: usize, y_index: usize, omega: &Vec3) -> Result<f64> {
        Ok(SphereTransform::cached(self.grid.lmax)?.evaluate(self.shell(radius_index, y_index), omega))
    }

    /// Largest odd-degree coefficient, zero when ψ(k) = ψ(−k).
    pub fn max_odd_coefficient(&self) -> f64 {
        self.max_where(|l| l % 2 == 1)
    }

    pub fn max_mean_coefficient(&self) -> f64 {
        self.max_where(|l| l == 0)
    }

    fn max_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        self.coefficients
            .iter()
            .flat_map(|c| c.iter().enumerate())
            .filter(|(i, _)| keep(degree_of(*i)))
            .fold(0.0f64, |m, (_, c)| m.max(c.abs()))
    }
}

/// Squared norms `‖Π V‖²`, `‖∇̃ψ‖²` and `‖Π V − ∇̃ψ‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PythagorasNorms {
    pub norm_v2: f64,
    pub norm_grad2: f64,
    pub norm_residual2: f64,
}

impl PythagorasNorms {
    pub fn defect(&self) -> f64 {
        (self.norm_v2 - self.norm_grad2 - self.norm_residual2).abs()
    }

    pub fn relative_defect(&self) -> f64 {
        if self.norm_v2 == 0.0 {
            self.defect()
        } else {
            self.defect() / self.norm_v2
        }
    }
}

/// Quality measures of a projection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    pub shells: usize,
    /// Largest |degree-0 coefficient| of a right-hand side.
    pub max_rhs_mean: f64,
    /// Largest coefficient-space residual `‖Δ_{S²}ψ − rhs‖∞` (degrees ≥ 1).
    pub max_spectral_residual: f64,
    pub max_odd_coefficient: f64,
    /// Largest coefficient of ψ on the shells `|z| = δ` and `|z| = R`.
    pub endpoint_max: f64,
    pub norms: PythagorasNorms,
}

/// Solves every shell of `grid` and reports the decomposition of `‖Π V‖²`.
pub fn project_vector_field(
    v: &dyn VectorField,
    grid: &ShellGrid,
    gamma: f64,
    exec: Execution,
) -> Result<(SphereField, ProjectionDiagnostics)> {
    grid.validate()?;
    let solved = map_collect(grid.shell_count(), exec, |i| -> Result<(Vec<f64>, f64, f64)> {
        let (ir, iy) = grid.split(i);
        let rhs = sphere_rhs(v, grid.radii[ir], &grid.y_nodes[iy], gamma, grid.lmax)?;
        let psi = sphere_poisson_solve(&rhs)?;
        let residual = laplace_beltrami(&psi)
            .iter()
            .zip(&rhs)
            .skip(1)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok((psi, rhs[0].abs(), residual))
    });
    let mut coefficients = Vec::with_capacity(solved.len());
    let (mut max_rhs_mean, mut max_spectral_residual) = (0.0f64, 0.0f64);
    for s in solved {
        let (psi, mean, residual) = s?;
        coefficients.push(psi);
        max_rhs_mean = max_rhs_mean.max(mean);
        max_spectral_residual = max_spectral_residual.max(residual);
    }
    let mut endpoint_max = 0.0f64;
    if let Some(s) = v.support() {
        for r in [0.5 * s.delta, 0.5 * s.outer] {
            for y in &grid.y_nodes {
                let psi = sphere_poisson_solve(&sphere_rhs(v, r, y, gamma, grid.lmax)?)?;
                endpoint_max = psi.iter().fold(endpoint_max, |m, c| m.max(c.abs()));
            }
        }
    }
    let field = SphereField { grid: grid.clone(), gamma, coefficients };
    let norms = pythagoras_check(v, &field, exec)?;
    let diagnostics = ProjectionDiagnostics {
        shells: grid.shell_count(),
        max_rhs_mean,
        max_spectral_residual,
        max_odd_coefficient: field.max_odd_coefficient(),
        endpoint_max,
        norms,
    };
    Ok((field, diagnostics))
}

/// The three squared norms by shell quadrature, with `∇̃ψ = 2|z|^{γ/2}∇_ωψ`.
pub fn pythagoras_check(v: &dyn VectorField, psi: &SphereField, exec: Execution) -> Result<PythagorasNorms> {
    let grid = &psi.grid;
    let t = SphereTransform::cached(grid.lmax)?;
    let parts = map_collect(grid.shell_count(), exec, |i| {
        let (ir, iy) = grid.split(i);
        let (r, y) = (grid.radii[ir], &grid.y_nodes[iy]);
        let rho = 2.0 * r;
        let factor = 2.0 * rho.powf(0.5 * psi.gamma);
        let grads = t.tangential_gradients(&psi.coefficients[i]);
        let mut acc = [0.0; 3];
        for (node, g) in t.nodes().iter().zip(&grads) {
            let w = node.omega;
            let vz = v.value_zy(&(rho * w), y);
            let pv = vz - w.dot(&vz) * w;
            let dg = factor * g;
            acc[0] += node.weight * pv.norm_squared();
            acc[1] += node.weight * dg.norm_squared();
            acc[2] += node.weight * (pv - dg).norm_squared();
        }
        let weight = grid.radial_weights[ir] * grid.y_weights[iy];
        acc.map(|a| weight * a)
    });
    let total = |k: usize| crate::par::pairwise_sum(&parts.iter().map(|p| p[k]).collect::<Vec<_>>());
    Ok(PythagorasNorms { norm_v2: total(0), norm_grad2: total(1), norm_residual2: total(2) })
}

/// Largest nodal deviation between a solved field and the zero-mean part of
/// `φ` on every shell, for fields produced from `V = ∇̃φ`.
pub fn gradient_round_trip_error(phi: &dyn PairField, psi: &SphereField) -> Result<f64> {
    let grid = &psi.grid;
    let t = SphereTransform::cached(grid.lmax)?;
    let mut worst = 0.0f64;
    for (ir, r) in grid.radii.iter().enumerate() {
        for (iy, y) in grid.y_nodes.iter().enumerate() {
            let truth: Vec<f64> = t.nodes().iter().map(|n| phi.value_zy(&(2.0 * r * n.omega), y)).collect();
            let mean = truth.iter().zip(t.nodes()).map(|(p, n)| p * n.weight).sum::<f64>() / (4.0 * std::f64::consts::PI);
            let got = t.synthesize(psi.shell(ir, iy));
            worst = got.iter().zip(&truth).fold(worst, |m, (g, p)| m.max((g - (p - mean)).abs()));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{GradientVectorField, PairTestFunction, PolynomialVectorField, Polynomial};
    use crate::geometry::Mat3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn support() -> BumpSupport {
        BumpSupport::new(0.6, 3.0, Vec3::new(0.2, 0.0, -0.1), 1.5).unwrap()
    }

    fn small_grid() -> ShellGrid {
        ShellGrid::new(&support(), &ProjectionSpec { radii: 3, y_per_axis: 3, lmax: 10 }).unwrap()
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let t = SphereTransform::new(8).unwrap();
        let n = coefficient_count(8);
        for a in 0..n {
            let col: Vec<f64> = (0..t.nodes().len()).map(|i| t.row(i)[a]).collect();
            let c = t.forward(&col);
            for (b, cb) in c.iter().enumerate() {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((cb - expected).abs() < 1e-12, "({a}, {b}): {cb}");
            }
        }
    }

    #[test]
    fn low_degree_harmonics_match_closed_forms() {
        // Y_10 = √(3/4π) cos θ and Y_11 = √(3/4π) sin θ cos φ.
        let w = Vec3::new(0.36, 0.48, 0.8);
        let (y, g) = harmonics_at(2, &w);
        let c = (0.75 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(y[coefficient_index(1, 0)], c * 0.8, max_relative = 1e-14);
        assert_relative_eq!(y[coefficient_index(1, 1)], c * 0.36, max_relative = 1e-14);
        assert_relative_eq!(y[coefficient_index(1, -1)], c * 0.48, max_relative = 1e-14);
        // Gradient of the linear function e₃·ω on the sphere is Π[ω]e₃.
        let expected = c * (Vec3::z() - w.z * w);
        assert!((g[coefficient_index(1, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn poisson_solve_examples() {
        let mut rhs = vec![0.0; coefficient_count(4)];
        rhs[coefficient_index(1, -1)] = 3.0;
        rhs[coefficient_index(2, 1)] = 1.2;
        let psi = sphere_poisson_solve(&rhs).unwrap();
        assert_eq!(psi[coefficient_index(1, -1)], -1.5);
        assert_relative_eq!(psi[coefficient_index(2, 1)], -0.2, max_relative = 1e-15);
        assert!(sphere_poisson_solve(&[0.0; 25]).unwrap().iter().all(|c| *c == 0.0));
        let mut bad = vec![0.0; 25];
        bad[0] = 1e-3;
        assert!(matches!(sphere_poisson_solve(&bad), Err(Error::NonSolvable(_))));
        assert!(sphere_poisson_solve(&[0.0; 5]).is_err());
    }

    #[test]
    fn rhs_examples() {
        let zero = PolynomialVectorField::linear(support(), &Mat3::zeros()).unwrap();
        let c = sphere_rhs(&zero, 1.0, &support().y_center(), -1.0, 8).unwrap();
        assert!(c.iter().all(|x| *x == 0.0));
        let rotation = Mat3::new(0.0, 1.0, -0.5, -1.0, 0.0, 2.0, 0.5, -2.0, 0.0);
        let curl = PolynomialVectorField::linear(support(), &rotation).unwrap();
        let c = sphere_rhs(&curl, 1.0, &support().y_center(), -1.0, 8).unwrap();
        assert!(c.iter().all(|x| x.abs() < 1e-13));
        assert!(sphere_rhs(&curl, 0.0, &Vec3::zeros(), 0.0, 8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rhs_mean_vanishes(m in prop::array::uniform9(-2.0..2.0f64), cubic in -1.0..1.0f64, r in 0.35..1.45f64, gamma in -3.0..0.0f64) {
            let lin = PolynomialVectorField::linear(support(), &Mat3::from_row_slice(&m)).unwrap();
            let mut comps = lin.components.clone();
            comps[0].terms.push(crate::functions::Monomial { coef: cubic, powers: [1, 2, 0] });
            comps[2].terms.push(crate::functions::Monomial { coef: -cubic, powers: [0, 0, 3] });
            let v = PolynomialVectorField::new(support(), comps).unwrap();
            let t = SphereTransform::cached(10).unwrap();
            let c = sphere_rhs(&v, r, &support().y_center(), gamma, 10).unwrap();
            let mean = c[0] * t.nodes().iter().map(|n| n.weight).sum::<f64>().sqrt().recip();
            prop_assert!(mean.abs() < 1e-10);
            let psi = sphere_poisson_solve(&c).unwrap();
            let res = laplace_beltrami(&psi).iter().zip(&c).skip(1).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            prop_assert!(res < 1e-10);
            // Odd V gives an even right-hand side.
            let odd = c.iter().enumerate().filter(|(i, _)| degree_of(*i) % 2 == 1).fold(0.0f64, |a, (_, x)| a.max(x.abs()));
            prop_assert!(odd < 1e-10);
        }
    }

    #[test]
    fn spectral_operator_matches_cartesian() {
        // φ(x) = exp(a·x) + (b·x)², with ∇·(Π[x]∇φ) = tr(ΠH) − 2x·∇φ/|x|².
        let a = Vec3::new(0.3, -0.4, 0.2);
        let b = Vec3::new(1.0, 0.5, -0.7);
        let phi = |x: &Vec3| a.dot(x).exp() + b.dot(x).powi(2);
        let t = SphereTransform::cached(16).unwrap();
        for r in [0.5, 1.3] {
            let values: Vec<f64> = t.nodes().iter().map(|n| phi(&(r * n.omega))).collect();
            let lap = laplace_beltrami(&t.forward(&values));
            for omega in [Vec3::new(0.6, 0.0, 0.8), Vec3::new(-0.48, 0.64, 0.6), Vec3::new(0.0, -0.6, -0.8)] {
                let x = r * omega;
                let e = a.dot(&x).exp();
                let grad = e * a + 2.0 * b.dot(&x) * b;
                let hess = e * a * a.transpose() + 2.0 * b * b.transpose();
                let proj = Mat3::identity() - omega * omega.transpose();
                let cartesian = (proj * hess).trace() - 2.0 * x.dot(&grad) / (r * r);
                let spectral = t.evaluate(&lap, &omega) / (r * r);
                assert_relative_eq!(spectral, cartesian, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn gradient_fields_are_recovered() {
        let phi = PairTestFunction::new(
            support(),
            Polynomial::from_terms(&[(1.0, [2, 0, 0]), (-0.5, [0, 1, 1]), (0.3, [0, 0, 4]), (0.2, [1, 1, 0])]),
        )
        .unwrap();
        for gamma in [0.0, -1.0, -3.0] {
            let v = GradientVectorField { phi: phi.clone(), gamma };
            let grid = small_grid();
            let (field, diag) = project_vector_field(&v, &grid, gamma, Execution::default()).unwrap();
            assert!(gradient_round_trip_error(&phi, &field).unwrap() < 1e-6);
            assert!(diag.norms.norm_v2 > 0.0);
            assert!(diag.norms.norm_residual2 <= 1e-10 * diag.norms.norm_v2);
            assert_relative_eq!(diag.norms.norm_grad2, diag.norms.norm_v2, max_relative = 1e-9);
            assert!(diag.max_odd_coefficient < 1e-10 && diag.max_spectral_residual < 1e-10);
            assert!(diag.endpoint_max < 1e-12);
        }
    }

    #[test]
    fn divergence_free_fields_project_to_zero() {
        let rotation = Mat3::new(0.0, 1.0, -0.5, -1.0, 0.0, 2.0, 0.5, -2.0, 0.0);
        let v = PolynomialVectorField::linear(support(), &rotation).unwrap();
        let (field, diag) = project_vector_field(&v, &small_grid(), -1.0, Execution::default()).unwrap();
        let worst = field.coefficients.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
        assert!(worst < 1e-12, "{worst}");
        assert!(diag.norms.norm_v2 > 0.0 && diag.norms.norm_grad2 < 1e-20 * diag.norms.norm_v2, "{:?}", diag.norms);
        assert_relative_eq!(diag.norms.norm_residual2, diag.norms.norm_v2, max_relative = 1e-12);
    }

    #[test]
    fn zero_field_gives_zero_norms() {
        let v = PolynomialVectorField::linear(support(), &Mat3::zeros()).unwrap();
        let (_, diag) = project_vector_field(&v, &small_grid(), 0.0, Execution::default()).unwrap();
        assert_eq!((diag.norms.norm_v2, diag.norms.norm_grad2, diag.norms.norm_residual2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn generic_fields_split_orthogonally() {
        let m = Mat3::new(1.0, 0.4, -0.3, 0.2, -0.5, 0.8, 0.1, 0.7, 0.6);
        let lin = PolynomialVectorField::linear(support(), &m).unwrap();
        let mut comps = lin.components.clone();
        comps[1].terms.push(crate::functions::Monomial { coef: 0.4, powers: [2, 1, 0] });
        comps[2].terms.push(crate::functions::Monomial { coef: -0.3, powers: [1, 1, 1] });
        let v = PolynomialVectorField::new(support(), comps).unwrap();
        for gamma in [0.0, -2.5] {
            let grid = ShellGrid::new(&support(), &ProjectionSpec { radii: 4, y_per_axis: 3, lmax: 12 }).unwrap();
            let (field, diag) = project_vector_field(&v, &grid, gamma, Execution::default()).unwrap();
            let n = diag.norms;
            assert!(n.norm_grad2 > 0.0 && n.norm_residual2 > 0.0);
            assert!(n.relative_defect() < 1e-6, "{n:?}");
            assert!(field.max_odd_coefficient() < 1e-10);
            assert_eq!(field.max_mean_coefficient(), 0.0);
        }
    }

    #[test]
    fn grid_validation() {
        let mut g = small_grid();
        g.radii.swap(0, 1);
        assert!(g.validate().is_err());
        assert!(ShellGrid::new(&support(), &ProjectionSpec { radii: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn sequential_matches_parallel() {
        let m = Mat3::new(1.0, 0.4, -0.3, 0.2, -0.5, 0.8, 0.1, 0.7, 0.6);
        let v = PolynomialVectorField::linear(support(), &m).unwrap();
        let (a, _) = project_vector_field(&v, &small_grid(), -1.0, Execution::Sequential).unwrap();
        let (b, _) = project_vector_field(&v, &small_grid(), -1.0, Execution::default()).unwrap();
        assert_eq!(a, b);
    }
}
