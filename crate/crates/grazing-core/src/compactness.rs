//! Fourier-side diagnostics behind the compactness estimate: the
//! cancellation kernel `S^ε`, the truncated square root `√f χ_R`, its
//! weighted seminorm `∫ |𝓕g|² min(|ξ|², |ξ|^ν) dξ`, the angular-average
//! lower bound and the positivity gap of `𝓕f`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{mollifier_t, Density};
use crate::geometry::{CollisionFrame, Vec3};
use crate::kernels::{CollisionKernel, ScaledKernel};
use crate::quadrature::{
    density_rule6_split, gauss_legendre, integrate_theta_singular, sum_rule6, AngularSpec, CollisionAngles,
    IntegralResult, QuadratureSpec, THETA_REFINEMENT_TOL,
};

/// Width over which the cut-off `χ_R` drops from 1 to 0.
pub const CUTOFF_TRANSITION: f64 = 0.95;

/// Largest admissible share of `|𝓕g|²` (or of `g²`) in the two outermost
/// grid layers.
pub const ALIASING_TOL: f64 = 1e-8;

fn require_cutoff(kernel: &CollisionKernel) -> Result<()> {
    if kernel.gamma != 0.0 && !kernel.kinetic_cutoff {
        return Err(invalid("the cancellation kernel needs the kinetic cut-off |z|^γ_kin"));
    }
    Ok(())
}

/// `log cos(θ/2)` without cancellation for small θ.
fn log_cos_half(theta: f64) -> f64 {
    (-2.0 * (0.25 * theta).sin().powi(2)).ln_1p()
}

/// `(|z|/cos(θ/2))^γ_kin cos^{−3}(θ/2) − |z|^γ_kin`, free of cancellation
/// wherever both kinetic factors lie on the same branch.
fn gain_minus_loss(kernel: &CollisionKernel, z_norm: f64, theta: f64) -> f64 {
    let lc = log_cos_half(theta);
    let stretched = z_norm * (-lc).exp();
    let flat = |r: f64| kernel.gamma == 0.0 || (kernel.kinetic_cutoff && r <= 1.0);
    match (flat(z_norm), flat(stretched)) {
        (true, true) => (-3.0 * lc).exp_m1(),
        (false, false) => z_norm.powf(kernel.gamma) * (-(kernel.gamma + 3.0) * lc).exp_m1(),
        _ => kernel.kinetic(stretched) * (-3.0 * lc).exp() - kernel.kinetic(z_norm),
    }
}

/// `2π ∫ [cos^{−3}(θ/2) − 1] β^ε(θ) dθ`, the value of `S^ε` where the
/// kinetic factor is 1.
pub fn s_eps_unit(kernel: &ScaledKernel, spec: &AngularSpec) -> Result<IntegralResult> {
    let r = integrate_theta_singular(|t| (-3.0 * log_cos_half(t)).exp_m1(), kernel, spec)?;
    Ok(IntegralResult { value: 2.0 * PI * r.value, error_estimate: 2.0 * PI * r.error_estimate, node_count: r.node_count })
}

/// `S^ε(z) = 2π |z|^γ_kin ∫ [cos^{−3}(θ/2) − 1] β^ε(θ) dθ`.
pub fn s_eps(z_norm: f64, kernel: &CollisionKernel, spec: &AngularSpec) -> Result<f64> {
    require_cutoff(kernel)?;
    if !(z_norm > 0.0) {
        return Err(Error::ZeroRelativeVelocity);
    }
    Ok(kernel.kinetic(z_norm) * s_eps_unit(&kernel.angular, spec)?.value)
}

/// `2π ∫ [(|z|/cos(θ/2))^γ_kin cos^{−3}(θ/2) − |z|^γ_kin] β^ε dθ` on a
/// θ rule split where `|z|/cos(θ/2)` crosses the kinetic cut-off.
fn exact_kernel_on(kernel: &CollisionKernel, z_norm: f64, panels: usize, nodes_per_panel: usize) -> f64 {
    let crossing = if kernel.gamma != 0.0 && kernel.kinetic_cutoff && z_norm < 1.0 { 2.0 * z_norm.acos() } else { PI };
    let pieces = [(0.0, crossing.min(PI / 2.0)), (crossing.min(PI / 2.0), PI / 2.0)];
    2.0 * PI
        * pieces
            .iter()
            .map(|&(lo, hi)| {
                kernel.angular.theta_rule_on(lo, hi, panels, nodes_per_panel).integrate(|t| gain_minus_loss(kernel, z_norm, t))
            })
            .sum::<f64>()
}

/// The kernel produced by the change of variables `v ↦ v′` when the gain
/// term keeps its own kinetic factor `(|z|/cos(θ/2))^γ_kin`. It coincides
/// with [`s_eps`] when γ = 0 or `|z| ≤ cos(ε/4)`; for `|z| > 1` it equals
/// `(3 + γ)/3` times [`s_eps`] as ε → 0.
pub fn s_eps_exact(z_norm: f64, kernel: &CollisionKernel, spec: &AngularSpec) -> Result<f64> {
    require_cutoff(kernel)?;
    if !(z_norm > 0.0) {
        return Err(Error::ZeroRelativeVelocity);
    }
    let fine = exact_kernel_on(kernel, z_norm, spec.panels, spec.nodes_per_panel);
    let coarse = exact_kernel_on(kernel, z_norm, spec.panels, (spec.nodes_per_panel / 2).max(4));
    let change = (fine - coarse).abs();
    if change > THETA_REFINEMENT_TOL * fine.abs() && change > 1e-14 {
        return Err(Error::NonConvergence(format!("S^ε changed by {change:e} under refinement (value {fine:e})")));
    }
    Ok(fine)
}

/// Both sides of `∫∫∫ B^ε f_*(f′ − f) = ∫∫ f f_* S^ε(v − v_*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationCheck {
    pub lhs: IntegralResult,
    /// With the stated `S^ε`.
    pub rhs: IntegralResult,
    /// With [`s_eps_exact`].
    pub rhs_exact: IntegralResult,
    pub gap: f64,
    pub gap_exact: f64,
    /// Combined quadrature error estimate of the compared values.
    pub tolerance: f64,
}

/// Evaluates both sides on a velocity rule whose radius `|v − v_*|` is split
/// at the kinetic cut-off and at `cos(ε/4)`, where the gain kernel bends.
pub fn cancellation_identity_check(f: &Density, kernel: &CollisionKernel, spec: &QuadratureSpec) -> Result<CancellationCheck> {
    require_cutoff(kernel)?;
    spec.validate()?;
    let unit = s_eps_unit(&kernel.angular, &spec.angular)?;
    let breaks = [(0.5 * kernel.angular.support().1).cos(), 1.0];
    let level = |q: &QuadratureSpec| -> Result<([f64; 3], usize)> {
        let rule = density_rule6_split(f, &breaks, &q.compact);
        let angles = CollisionAngles::new(&kernel.angular, &q.sphere);
        let sums = sum_rule6::<3, _>(&rule, q.execution, &|v: &Vec3, w: &Vec3| {
            let frame = CollisionFrame::new(v, w)?;
            let r = frame.z_norm();
            let lv = f.log_value(v);
            let gain_loss = crate::operators::angular_sum(&frame, &angles, |_, _, vp, _| (f.log_value(vp) - lv).exp_m1());
            Ok([
                kernel.kinetic(r) * gain_loss,
                kernel.kinetic(r) * unit.value,
                exact_kernel_on(kernel, r, q.angular.panels, q.angular.nodes_per_panel),
            ])
        })?;
        Ok((sums, rule.len()))
    };
    let (fine, n) = level(spec)?;
    let (coarse, _) = level(&spec.coarsened())?;
    let [lhs, rhs, rhs_exact] = [0, 1, 2].map(|i| IntegralResult::from_levels(fine[i], coarse[i], n));
    let tolerance = lhs.error_estimate + rhs.error_estimate.max(rhs_exact.error_estimate) + unit.error_estimate;
    Ok(CancellationCheck {
        lhs,
        rhs,
        rhs_exact,
        gap: (lhs.value - rhs.value).abs(),
        gap_exact: (lhs.value - rhs_exact.value).abs(),
        tolerance,
    })
}

/// `C₂ = 150π (∫∫(|v|² + |v_*|²) f f_*)(∫ θ² β^ε)` of the truncation step.
pub fn truncation_constant(f: &Density, kernel: &ScaledKernel, spec: &AngularSpec) -> Result<f64> {
    let moment = 2.0 * f.mass() * f.energy();
    let transfer = integrate_theta_singular(|t| t * t, kernel, spec)?.value;
    Ok(150.0 * PI * moment * transfer)
}

/// Smooth radial step: 1 for `s ≤ 0`, 0 for `s ≥ 1`, built from the
/// integrated mollifier `e^{−1/(1−t²)}`.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let t = 2.0 * s - 1.0;
    // Integrate over the shorter side so the small tail keeps its relative accuracy.
    if t <= 0.0 {
        1.0 - mollifier_mass(-1.0, t) / mollifier_mass(-1.0, 1.0)
    } else {
        mollifier_mass(t, 1.0) / mollifier_mass(-1.0, 1.0)
    }
}

fn mollifier_mass(a: f64, b: f64) -> f64 {
    let rule = gauss_legendre(32);
    let half = 0.5 * (b - a);
    rule.iter().map(|(x, w)| half * w * mollifier_t(a + half * (x + 1.0)).0).sum()
}

/// Lipschitz constant of `χ_R`: the peak of the mollifier over its mass,
/// stretched over [`CUTOFF_TRANSITION`].
pub fn cutoff_lipschitz() -> f64 {
    mollifier_t(0.0).0 / mollifier_mass(-1.0, 1.0) * 2.0 / CUTOFF_TRANSITION
}

/// Density with the cut-off `χ_R(v − c)`: 1 on `B_R(c)`, 0 outside
/// `B_{R+0.95}(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDensity {
    pub base: Density,
    pub radius: f64,
    pub center: [f64; 3],
}

impl CutoffDensity {
    pub fn new(base: Density, radius: f64) -> Result<Self> {
        Self::centered(base, radius, Vec3::zeros())
    }

    pub fn centered(base: Density, radius: f64, center: Vec3) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid(format!("cut-off radius must be positive, got {radius}")));
        }
        Ok(CutoffDensity { base, radius, center: center.into() })
    }

    pub fn chi(&self, v: &Vec3) -> f64 {
        smooth_step(((v - Vec3::from(self.center)).norm() - self.radius) / CUTOFF_TRANSITION)
    }

    /// `√f χ_R`, the function whose spectrum is measured.
    pub fn truncated_root(&self, v: &Vec3) -> f64 {
        let c = self.chi(v);
        if c == 0.0 {
            0.0
        } else {
            (0.5 * self.base.log_value(v)).exp() * c
        }
    }
}

/// Periodic box `[−L, L)³` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierGrid {
    pub points_per_axis: usize,
    pub half_width: f64,
}

impl Default for FourierGrid {
    fn default() -> Self {
        FourierGrid { points_per_axis: 64, half_width: 8.0 }
    }
}

impl FourierGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 8 || !self.points_per_axis.is_multiple_of(2) {
            return Err(invalid("Fourier grid needs an even number (≥ 8) of points per axis"));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("Fourier box half-width must be positive"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn frequency_spacing(&self) -> f64 {
        PI / self.half_width
    }

    fn signed(&self, k: usize) -> i64 {
        let n = self.points_per_axis;
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Samples `𝓕g(ξ) = ∫ g(x) e^{−iξ·x} dx` on the frequency grid.
    pub fn transform(&self, g: impl Fn(&Vec3) -> f64) -> Result<FourierSamples> {
        self.validate()?;
        let n = self.points_per_axis;
        let h = self.spacing();
        let x = |i: usize| -self.half_width + h * i as f64;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    data[(i * n + j) * n + k] = Complex64::new(g(&Vec3::new(x(i), x(j), x(k))), 0.0);
                }
            }
        }
        let outer = |i: usize| i < 2 || i >= n - 2;
        let mut spatial_total = 0.0;
        let mut spatial_edge = 0.0;
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = data[(i * n + j) * n + k].re;
                    mass += v;
                    spatial_total += v * v;
                    if outer(i) || outer(j) || outer(k) {
                        spatial_edge += v * v;
                    }
                }
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for stride in [1, n, n * n] {
            for start in 0..n * n {
                // `start` enumerates the lines orthogonal to the current axis.
                let (hi, lo) = (start / stride, start % stride);
                let base = hi * stride * n + lo;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, value) in line.iter().enumerate() {
                    data[base + t * stride] = *value;
                }
            }
        }
        let scale = h * h * h;
        for d in &mut data {
            *d *= scale;
        }
        let spectral_outer = |k: usize| self.signed(k).unsigned_abs() as usize >= n / 2 - 2;
        let mut spectral_total = 0.0;
        let mut spectral_edge = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let e = data[(i * n + j) * n + k].norm_sqr();
                    spectral_total += e;
                    if spectral_outer(i) || spectral_outer(j) || spectral_outer(k) {
                        spectral_edge += e;
                    }
                }
            }
        }
        let frac = |edge: f64, total: f64| if total > 0.0 { edge / total } else { 0.0 };
        Ok(FourierSamples {
            grid: *self,
            values: data,
            mass: mass * scale,
            aliasing: frac(spatial_edge, spatial_total).max(frac(spectral_edge, spectral_total)),
        })
    }
}

/// Transform values on the frequency grid `ξ = (π/L) k`, `−n/2 ≤ k_i < n/2`.
#[derive(Debug, Clone)]
pub struct FourierSamples {
    pub grid: FourierGrid,
    /// Stored in FFT order, moduli equal to those of the continuous transform.
    pub values: Vec<Complex64>,
    /// Riemann sum of g, equal to the transform at ξ = 0.
    pub mass: f64,
    /// Largest boundary-energy share in space or frequency.
    pub aliasing: f64,
}

impl FourierSamples {
    pub fn xi(&self, index: usize) -> Vec3 {
        let n = self.grid.points_per_axis;
        let (i, j, k) = (index / (n * n), (index / n) % n, index % n);
        self.grid.frequency_spacing()
            * Vec3::new(self.grid.signed(i) as f64, self.grid.signed(j) as f64, self.grid.signed(k) as f64)
    }

    pub fn at_zero(&self) -> Complex64 {
        self.values[0]
    }

    /// `∫ |𝓕g|² w(ξ) dξ` as a Riemann sum over the frequency grid.
    pub fn weighted_energy(&self, w: impl Fn(f64) -> f64) -> f64 {
        let d = self.grid.frequency_spacing();
        let parts: Vec<f64> =
            self.values.iter().enumerate().map(|(i, v)| v.norm_sqr() * w(self.xi(i).norm())).collect();
        crate::par::pairwise_sum(&parts) * d * d * d
    }
}

/// `min(|ξ|², |ξ|^ν)`.
pub fn seminorm_weight(xi_norm: f64, nu: f64) -> f64 {
    (xi_norm * xi_norm).min(xi_norm.powf(nu))
}

/// `∫ |𝓕g|² min(|ξ|², |ξ|^ν) dξ` for any function resolved by the grid.
pub fn weighted_seminorm_of(g: impl Fn(&Vec3) -> f64, nu: f64, grid: &FourierGrid) -> Result<f64> {
    if !(nu > 0.0 && nu <= 2.0) {
        return Err(invalid(format!("nu must lie in (0, 2], got {nu}")));
    }
    let samples = grid.transform(g)?;
    if samples.aliasing > ALIASING_TOL {
        return Err(Error::Aliasing(samples.aliasing));
    }
    Ok(samples.weighted_energy(|r| seminorm_weight(r, nu)))
}

/// The weighted seminorm of `√f χ_R`.
pub fn weighted_seminorm(f_r: &CutoffDensity, nu: f64, grid: &FourierGrid) -> Result<f64> {
    weighted_seminorm_of(|v| f_r.truncated_root(v), nu, grid)
}

/// `max_j seminorm / (D_j + 1)` over a sweep of dissipations.
pub fn fitted_seminorm_constant(seminorm: f64, dissipations: &[f64]) -> f64 {
    dissipations.iter().map(|d| seminorm / (d + 1.0)).fold(0.0, f64::max)
}

/// Lower-bound constant `(2c₁/π) ∫₀^{π/2} φ^{1−ν} dφ = (2c₁/π)(π/2)^{2−ν}/(2−ν)`.
pub fn average_bound_constant(c1: f64, nu: f64) -> Result<f64> {
    if !(nu < 2.0) {
        return Err(Error::RequiresLogCutoff);
    }
    Ok(2.0 * c1 / PI * (0.5 * PI).powf(2.0 - nu) / (2.0 - nu))
}

/// `∫ b^ε(ξ̂·σ) min(|ξ⁻|², 1) dσ` with `|ξ⁻|² = (|ξ|²/2)(1 − ξ̂·σ)`, and the
/// lower bound `(2c₁/π)(π/2)^{2−ν}/(2−ν) min(|ξ|², |ξ|^ν)`.
pub fn fourier_avg_lower_bound(xi: &Vec3, kernel: &ScaledKernel, spec: &AngularSpec) -> Result<(f64, f64)> {
    if kernel.epsilon() > 1.0 {
        return Err(invalid(format!("the average bound needs epsilon ≤ 1, got {}", kernel.epsilon())));
    }
    let r2 = xi.norm_squared();
    if r2 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let half = 0.5 * r2;
    let g = |t: f64| (half * (1.0 - t.cos())).min(1.0);
    // Split at the kink of the minimum so both pieces are smooth.
    let kink = if half > 0.5 { (1.0 - 1.0 / half).acos() } else { PI };
    let pieces = [(0.0, kink.min(PI / 2.0)), (kink.min(PI / 2.0), PI / 2.0)];
    let lhs: f64 = pieces
        .iter()
        .map(|&(lo, hi)| kernel.theta_rule_on(lo, hi, spec.panels, spec.nodes_per_panel).integrate(g))
        .sum::<f64>()
        * 2.0
        * PI;
    let nu = kernel.nu();
    let rhs = average_bound_constant(kernel.base().c1(), nu)? * seminorm_weight(r2.sqrt(), nu);
    Ok((lhs, rhs))
}

/// `𝓕f(0) − |𝓕f(ξ)|`.
pub fn fourier_positivity_gap(f: &Density, xi: &Vec3) -> f64 {
    let (re0, _) = f.fourier(&Vec3::zeros());
    let (re, im) = f.fourier(xi);
    (re0 - re.hypot(im)).max(0.0)
}

/// Largest `C_f` with `gap(ξ) ≥ C_f min(|ξ|², 1)` over the given frequencies.
pub fn fitted_positivity_constant(f: &Density, xis: &[Vec3]) -> f64 {
    xis.iter()
        .filter(|x| x.norm() > 0.0)
        .map(|x| fourier_positivity_gap(f, x) / x.norm_squared().min(1.0))
        .fold(f64::INFINITY, f64::min)
}
