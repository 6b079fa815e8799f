//! Discrete and grazing gradients, weak-form Boltzmann and Landau
//! operators, and ε-sweep studies of the grazing limit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{Density, PairField, ScalarField};
use crate::geometry::{CollisionConfiguration, CollisionFrame, Mat3, Vec3};
use crate::kernels::CollisionKernel;
use crate::quadrature::{integrate_density_r6_n, CollisionAngles, IntegralResult, QuadratureSpec};

/// Which of the two equivalent weak forms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// Test function differentiated twice, density undifferentiated.
    SecondOrder,
    /// One derivative on each side.
    FirstOrder,
}

/// `∇̄ψ = ψ(v′) + ψ(v′_*) − ψ(v) − ψ(v_*)`.
pub fn dbar(psi: &dyn ScalarField, c: &CollisionConfiguration) -> f64 {
    dbar_at(psi, &c.v, &c.v_star, &c.v_post, &c.v_star_post)
}

#[inline]
pub fn dbar_at(psi: &dyn ScalarField, v: &Vec3, v_star: &Vec3, v_post: &Vec3, v_star_post: &Vec3) -> f64 {
    (psi.value(v_post) - psi.value(v)) + (psi.value(v_star_post) - psi.value(v_star))
}

/// Two-variable `∇̄ψ = ψ(v′, v′_*) + ψ(v′_*, v′) − ψ(v, v_*) − ψ(v_*, v)`.
pub fn dbar_pair(psi: &dyn PairField, c: &CollisionConfiguration) -> f64 {
    dbar_pair_at(psi, &c.v, &c.v_star, &c.v_post, &c.v_star_post)
}

#[inline]
pub fn dbar_pair_at(psi: &dyn PairField, v: &Vec3, v_star: &Vec3, v_post: &Vec3, v_star_post: &Vec3) -> f64 {
    (psi.value(v_post, v_star_post) + psi.value(v_star_post, v_post)) - (psi.value(v, v_star) + psi.value(v_star, v))
}

fn relative(v: &Vec3, v_star: &Vec3) -> Result<(Vec3, f64)> {
    let z = v - v_star;
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    Ok((z, r))
}

/// `|z|^{1+γ/2} Π[z] d` for a difference of gradients `d`.
#[inline]
pub fn grazing_vector(z: &Vec3, r: f64, d: &Vec3, gamma: f64) -> Vec3 {
    let pd = d - z * (z.dot(d) / (r * r));
    r.powf(1.0 + 0.5 * gamma) * pd
}

/// `(∇ − ∇_*)·(|z|^{2+γ} Π[z] (∇ − ∇_*)ψ) = |z|^{2+γ} Π:D²ψ − 4|z|^γ z·Dψ`,
/// given `Dψ` and `D²ψ`.
#[inline]
pub fn grazing_divergence(z: &Vec3, r: f64, d: &Vec3, d2: &Mat3, gamma: f64) -> f64 {
    let r2 = r * r;
    let proj_contract = d2.trace() - z.dot(&(d2 * z)) / r2;
    let kin = if gamma == 0.0 { 1.0 } else { r.powf(gamma) };
    kin * (r2 * proj_contract - 4.0 * z.dot(d))
}

/// `∇̃ψ(v, v_*) = |v − v_*|^{1+γ/2} Π[v − v_*](∇ψ(v) − ∇ψ(v_*))`.
pub fn dtilde(psi: &dyn ScalarField, v: &Vec3, v_star: &Vec3, gamma: f64) -> Result<Vec3> {
    let (z, r) = relative(v, v_star)?;
    Ok(grazing_vector(&z, r, &(psi.gradient(v) - psi.gradient(v_star)), gamma))
}

/// Two-variable `∇̃ψ` using `(∇ − ∇_*)ψ`.
pub fn dtilde_pair(psi: &dyn PairField, v: &Vec3, v_star: &Vec3, gamma: f64) -> Result<Vec3> {
    let (z, r) = relative(v, v_star)?;
    Ok(grazing_vector(&z, r, &psi.d_gradient(v, v_star), gamma))
}

/// `∇̃·∇̃ψ` for single-variable ψ, where `D²ψ = ∇²ψ(v) + ∇²ψ(v_*)`.
pub fn dtilde_div_dtilde(psi: &dyn ScalarField, v: &Vec3, v_star: &Vec3, gamma: f64) -> Result<f64> {
    let (z, r) = relative(v, v_star)?;
    let d = psi.gradient(v) - psi.gradient(v_star);
    let d2 = psi.hessian(v) + psi.hessian(v_star);
    Ok(grazing_divergence(&z, r, &d, &d2, gamma))
}

/// Two-variable `∇̃·∇̃ψ`.
pub fn dtilde_div_dtilde_pair(psi: &dyn PairField, v: &Vec3, v_star: &Vec3, gamma: f64) -> Result<f64> {
    let (z, r) = relative(v, v_star)?;
    Ok(grazing_divergence(&z, r, &psi.d_gradient(v, v_star), &psi.d_hessian(v, v_star), gamma))
}

/// `Σ_θ w_θ Σ_φ w_φ g(σ, p, v′, v′_*)`, i.e. `∫ g B^ε dσ / |z|^γ`.
#[inline]
pub fn angular_sum(frame: &CollisionFrame, angles: &CollisionAngles, mut g: impl FnMut(&Vec3, &Vec3, &Vec3, &Vec3) -> f64) -> f64 {
    let mut total = 0.0;
    for t in &angles.theta.nodes {
        let mut ring = 0.0;
        for (cp, sp) in &angles.phi {
            let (sigma, p) = frame.direction(t.cos, t.sin, *cp, *sp);
            let (vp, vsp) = frame.post(&sigma);
            ring += g(&sigma, &p, &vp, &vsp);
        }
        total += t.weight * angles.phi_weight * ring;
    }
    total
}

/// [`angular_sum`] for several integrands sharing one sweep over σ.
#[inline]
pub fn angular_sum_n<const N: usize>(
    frame: &CollisionFrame,
    angles: &CollisionAngles,
    mut g: impl FnMut(&Vec3, &Vec3, &Vec3, &Vec3) -> [f64; N],
) -> [f64; N] {
    let mut total = [0.0; N];
    for t in &angles.theta.nodes {
        let mut ring = [0.0; N];
        for (cp, sp) in &angles.phi {
            let (sigma, p) = frame.direction(t.cos, t.sin, *cp, *sp);
            let (vp, vsp) = frame.post(&sigma);
            for (r, x) in ring.iter_mut().zip(g(&sigma, &p, &vp, &vsp)) {
                *r += x;
            }
        }
        for (acc, r) in total.iter_mut().zip(ring) {
            *acc += t.weight * angles.phi_weight * r;
        }
    }
    total
}

/// `log f(v′) + log f(v′_*) − log f(v) − log f(v_*)`.
#[inline]
pub fn log_ratio(f: &Density, v: &Vec3, v_star: &Vec3, v_post: &Vec3, v_star_post: &Vec3) -> f64 {
    (f.log_value(v_post) - f.log_value(v)) + (f.log_value(v_star_post) - f.log_value(v_star))
}

/// Integrand of `⟨Q_B^ε(f, f), ψ⟩` with respect to `f f_* dv dv_*`.
fn boltzmann_point(
    f: &Density,
    psi: &dyn ScalarField,
    kernel: &CollisionKernel,
    angles: &CollisionAngles,
    form: Form,
    v: &Vec3,
    v_star: &Vec3,
) -> Result<f64> {
    let frame = CollisionFrame::new(v, v_star)?;
    let kin = kernel.kinetic(frame.z_norm());
    let s = match form {
        Form::SecondOrder => 0.5 * angular_sum(&frame, angles, |_, _, vp, vsp| dbar_at(psi, v, v_star, vp, vsp)),
        Form::FirstOrder => {
            let (lv, lvs) = (f.log_value(v), f.log_value(v_star));
            -0.25
                * angular_sum(&frame, angles, |_, _, vp, vsp| {
                    let delta = (f.log_value(vp) - lv) + (f.log_value(vsp) - lvs);
                    delta.exp_m1() * dbar_at(psi, v, v_star, vp, vsp)
                })
        }
    };
    Ok(kin * s)
}

/// Integrand of `⟨Q_L(f, f), ψ⟩` with respect to `f f_* dv dv_*`.
fn landau_point(f: &Density, psi: &dyn ScalarField, gamma: f64, form: Form, v: &Vec3, v_star: &Vec3) -> Result<f64> {
    let (z, r) = relative(v, v_star)?;
    Ok(match form {
        Form::SecondOrder => {
            let d = psi.gradient(v) - psi.gradient(v_star);
            let d2 = psi.hessian(v) + psi.hessian(v_star);
            0.5 * grazing_divergence(&z, r, &d, &d2, gamma)
        }
        Form::FirstOrder => {
            let dl = grazing_vector(&z, r, &(f.grad_log(v) - f.grad_log(v_star)), gamma);
            let dp = grazing_vector(&z, r, &(psi.gradient(v) - psi.gradient(v_star)), gamma);
            -0.5 * dl.dot(&dp)
        }
    })
}

/// Weak Boltzmann pairing `⟨Q_B^ε(f, f), ψ⟩`.
pub fn boltzmann_weak(
    f: &Density,
    psi: &dyn ScalarField,
    kernel: &CollisionKernel,
    spec: &QuadratureSpec,
    form: Form,
) -> Result<IntegralResult> {
    let [r] = integrate_density_r6_n(f, spec, |level| {
        let angles = CollisionAngles::new(&kernel.angular, &level.sphere);
        move |v: &Vec3, vs: &Vec3| Ok([boltzmann_point(f, psi, kernel, &angles, form, v, vs)?])
    })?;
    Ok(with_angular_nodes(r, spec, kernel))
}

/// Weak Landau pairing `⟨Q_L(f, f), ψ⟩`.
pub fn landau_weak(f: &Density, psi: &dyn ScalarField, gamma: f64, spec: &QuadratureSpec, form: Form) -> Result<IntegralResult> {
    check_gamma(gamma)?;
    let [r] = integrate_density_r6_n(f, spec, |_| move |v: &Vec3, vs: &Vec3| Ok([landau_point(f, psi, gamma, form, v, vs)?]))?;
    Ok(r)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(-4.0..=0.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [-4, 0], got {gamma}")));
    }
    Ok(())
}

fn with_angular_nodes(mut r: IntegralResult, spec: &QuadratureSpec, kernel: &CollisionKernel) -> IntegralResult {
    r.node_count *= CollisionAngles::new(&kernel.angular, &spec.sphere).node_count();
    r
}

/// Boltzmann value, Landau value and their difference, all at the same
/// nodes so that the error estimate of the difference is meaningful on its
/// own.
pub fn weak_comparison(
    f: &Density,
    psi: &dyn ScalarField,
    kernel: &CollisionKernel,
    spec: &QuadratureSpec,
    form: Form,
) -> Result<[IntegralResult; 3]> {
    let out = integrate_density_r6_n(f, spec, |level| {
        let angles = CollisionAngles::new(&kernel.angular, &level.sphere);
        move |v: &Vec3, vs: &Vec3| {
            let b = boltzmann_point(f, psi, kernel, &angles, form, v, vs)?;
            let l = landau_point(f, psi, kernel.gamma, form, v, vs)?;
            Ok([b, l, b - l])
        }
    })?;
    Ok([with_angular_nodes(out[0], spec, kernel), out[1], with_angular_nodes(out[2], spec, kernel)])
}

/// Outcome of an ε-sweep of the weak grazing limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub boltzmann_values: Vec<f64>,
    pub landau_value: f64,
    pub abs_errors: Vec<f64>,
    /// Refinement estimate of each `⟨Q_B^ε − Q_L, ψ⟩` evaluation.
    pub error_estimates: Vec<f64>,
    pub fitted_order: Option<f64>,
    /// Why `fitted_order` is absent, when it is.
    pub order_note: Option<String>,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.abs_errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Least-squares slope of `log error` against `log ε`, skipping errors
/// below `10 ×` their estimate. Needs three usable points.
pub fn fitted_order(epsilons: &[f64], errors: &[f64], estimates: &[f64]) -> std::result::Result<f64, String> {
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(errors)
        .zip(estimates)
        .filter(|((_, e), est)| **e > 0.0 && **e > 10.0 * **est)
        .map(|((x, e), _)| (x.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(format!("only {} errors above 10x their quadrature estimate", pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `|⟨Q_B^ε, ψ⟩ − ⟨Q_L, ψ⟩|` along a strictly decreasing ε list.
pub fn grazing_limit_study(
    f: &Density,
    psi: &dyn ScalarField,
    kernel: &CollisionKernel,
    eps_list: &[f64],
    spec: &QuadratureSpec,
    form: Form,
) -> Result<ConvergenceReport> {
    if eps_list.len() < 3 {
        return Err(invalid("an epsilon sweep needs at least three values"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilons must be strictly decreasing"));
    }
    let mut boltzmann_values = Vec::new();
    let mut abs_errors = Vec::new();
    let mut error_estimates = Vec::new();
    let mut landau_value = 0.0;
    for &eps in eps_list {
        let k = kernel.with_epsilon(eps)?;
        let [b, l, d] = weak_comparison(f, psi, &k, spec, form)?;
        boltzmann_values.push(b.value);
        abs_errors.push(d.value.abs());
        error_estimates.push(d.error_estimate);
        landau_value = l.value;
    }
    let (fitted_order, order_note) = match fitted_order(eps_list, &abs_errors, &error_estimates) {
        Ok(o) => (Some(o), None),
        Err(note) => (None, Some(note)),
    };
    Ok(ConvergenceReport {
        epsilons: eps_list.to_vec(),
        boltzmann_values,
        landau_value,
        abs_errors,
        error_estimates,
        fitted_order,
        order_note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{gaussian_mixture, BumpSupport, PairTestFunction, Polynomial, ScalarTestFunction};
    use crate::geometry::{projector, sigma_from_angles};
    use crate::kernels::{AngularProfile, ScaledKernel, Variant};
    use crate::quadrature::AngularSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    fn poly(terms: &[(f64, [u32; 3])]) -> ScalarTestFunction {
        ScalarTestFunction::polynomial(Polynomial::from_terms(terms))
    }

    fn kernel(eps: f64) -> CollisionKernel {
        let raw = AngularProfile::power_law(1.0).unwrap();
        CollisionKernel::new(0.0, ScaledKernel::new(&raw, eps, Variant::Rescaled, &AngularSpec::default()).unwrap(), false).unwrap()
    }

    fn anisotropic() -> Density {
        gaussian_mixture(&[(1.0, Vec3::zeros(), v3(1.0, 1.0, 4.0))]).unwrap()
    }

    #[test]
    fn dbar_examples() {
        let c = CollisionConfiguration::from_sigma(&v3(1.0, 0.0, 0.0), &v3(-1.0, 0.0, 0.0), &v3(0.0, 1.0, 0.0));
        // k·σ = 0 is on the boundary of the admissible cap.
        let c = c.unwrap();
        assert_eq!(dbar(&poly(&[(1.0, [2, 0, 0])]), &c), -2.0);
        let energy = poly(&[(1.0, [2, 0, 0]), (1.0, [0, 2, 0]), (1.0, [0, 0, 2])]);
        let c = CollisionConfiguration::from_angles(&v3(0.3, -1.0, 2.0), &v3(1.1, 0.4, -0.7), 0.4, 1.3).unwrap();
        assert!(dbar(&energy, &c).abs() < 1e-12);
        assert!(dbar(&poly(&[(0.7, [1, 0, 0]), (-0.2, [0, 0, 1])]), &c).abs() < 1e-14);
    }

    #[test]
    fn dtilde_examples() {
        let energy = poly(&[(1.0, [2, 0, 0]), (1.0, [0, 2, 0]), (1.0, [0, 0, 2])]);
        let (v, w) = (v3(0.3, -1.0, 2.0), v3(1.1, 0.4, -0.7));
        assert!(dtilde(&energy, &v, &w, -1.0).unwrap().norm() < 1e-12);
        assert_eq!(dtilde(&poly(&[(1.0, [1, 0, 0])]), &v, &w, 0.0).unwrap(), Vec3::zeros());
        let sq = poly(&[(1.0, [2, 0, 0])]);
        assert_eq!(dtilde(&sq, &v3(0.0, 1.0, 0.0), &v3(0.0, -1.0, 0.0), 0.0).unwrap(), Vec3::zeros());
        // Oracle: z = (1, 2, 0), gradient difference (2, 0, 0), explicit I − zzᵀ/|z|².
        let z = v3(1.0, 2.0, 0.0);
        let pi = Mat3::identity() - z * z.transpose() / 5.0;
        let oracle = 5f64.sqrt() * pi * v3(2.0, 0.0, 0.0);
        let got = dtilde(&sq, &v3(1.0, 1.0, 0.0), &v3(0.0, -1.0, 0.0), 0.0).unwrap();
        assert!((got - oracle).norm() < 1e-14);
        assert_relative_eq!(got.x, 1.6 * 5f64.sqrt(), max_relative = 1e-14);
        assert_eq!(dtilde(&sq, &v, &v, 0.0), Err(Error::ZeroRelativeVelocity));
    }

    #[test]
    fn divergence_examples() {
        let energy = poly(&[(1.0, [2, 0, 0]), (1.0, [0, 2, 0]), (1.0, [0, 0, 2])]);
        let (v, w) = (v3(0.3, -1.0, 2.0), v3(1.1, 0.4, -0.7));
        assert!(dtilde_div_dtilde(&energy, &v, &w, -2.0).unwrap().abs() < 1e-12);
        assert_eq!(dtilde_div_dtilde(&poly(&[(3.0, [0, 0, 0])]), &v, &w, 0.0).unwrap(), 0.0);
    }

    fn ds_function() -> PairTestFunction {
        let s = BumpSupport::new(0.3, 3.0, v3(0.1, 0.2, -0.1), 2.5).unwrap();
        PairTestFunction::new(s, Polynomial::from_terms(&[(1.0, [2, 0, 0]), (0.6, [0, 1, 1]), (0.5, [0, 0, 0])])).unwrap()
    }

    #[test]
    fn divergence_matches_finite_differences() {
        // Oracle: central differences of G = |z|^{1+γ/2} ∇̃ψ along (e_i, −e_i).
        let psi = ds_function();
        for gamma in [0.0, -1.0, -3.0] {
            for (v, w) in [(v3(0.8, 0.1, 0.3), v3(-0.4, 0.5, -0.2)), (v3(0.2, -0.6, 0.9), v3(0.1, 0.7, -0.5))] {
                let g = |a: &Vec3, b: &Vec3| {
                    let r = (a - b).norm();
                    r.powf(1.0 + 0.5 * gamma) * dtilde_pair(&psi, a, b, gamma).unwrap()
                };
                let h = 1e-5;
                let mut fd = 0.0;
                for i in 0..3 {
                    let mut e = Vec3::zeros();
                    e[i] = h;
                    fd += (g(&(v + e), &(w - e))[i] - g(&(v - e), &(w + e))[i]) / (2.0 * h);
                }
                let an = dtilde_div_dtilde_pair(&psi, &v, &w, gamma).unwrap();
                assert!((an - fd).abs() <= 1e-5 * (1.0 + an.abs()), "{an} vs {fd}");
            }
        }
    }

    #[test]
    fn collision_invariants_vanish() {
        let f = anisotropic();
        let spec = QuadratureSpec::default();
        let k = kernel(0.5);
        for psi in [poly(&[(1.0, [0, 0, 0])]), poly(&[(1.0, [1, 0, 0])]), poly(&[(1.0, [2, 0, 0]), (1.0, [0, 2, 0]), (1.0, [0, 0, 2])])] {
            for form in [Form::SecondOrder, Form::FirstOrder] {
                let r = boltzmann_weak(&f, &psi, &k, &spec, form).unwrap();
                assert!(r.value.abs() <= r.tolerance(1e-8, 10.0), "{form:?}: {r:?}");
            }
        }
    }

    #[test]
    fn maxwellian_is_equilibrium() {
        let m = Density::maxwellian(1.0).unwrap();
        let psi = ScalarTestFunction::gaussian_modulated(Polynomial::from_terms(&[(1.0, [0, 0, 2]), (0.3, [1, 1, 0])]), 3.0).unwrap();
        let spec = QuadratureSpec::default();
        let r = boltzmann_weak(&m, &psi, &kernel(0.5), &spec, Form::FirstOrder).unwrap();
        assert!(r.value.abs() <= r.tolerance(1e-8, 10.0), "{r:?}");
        let r = landau_weak(&m, &psi, 0.0, &spec, Form::FirstOrder).unwrap();
        assert!(r.value.abs() <= r.tolerance(1e-8, 10.0), "{r:?}");
        let r = landau_weak(&m, &psi, 0.0, &spec, Form::SecondOrder).unwrap();
        assert!(r.value.abs() <= r.tolerance(1e-8, 10.0), "{r:?}");
    }

    #[test]
    fn anisotropic_fixture_relaxes_hot_axis() {
        // Oracle: the same integral with every rule refined.
        let f = anisotropic();
        let psi = ScalarTestFunction::bump(Polynomial::from_terms(&[(1.0, [0, 0, 2])]), Vec3::zeros(), 12.0).unwrap();
        let spec = QuadratureSpec::default();
        let r = boltzmann_weak(&f, &psi, &kernel(0.5), &spec, Form::SecondOrder).unwrap();
        let mut fine = spec;
        fine.velocity.nodes_per_axis_r6 = 12;
        fine.sphere.theta_nodes = 24;
        fine.sphere.phi_nodes = 16;
        let oracle = boltzmann_weak(&f, &psi, &kernel(0.5), &fine, Form::SecondOrder).unwrap();
        assert!(r.value < 0.0);
        assert_relative_eq!(r.value, oracle.value, max_relative = 1e-4);
    }

    #[test]
    fn landau_forms_agree() {
        let f = gaussian_mixture(&[(1.0, v3(0.5, -0.3, 0.2), v3(1.5, 0.8, 2.5))]).unwrap();
        let psi = ScalarTestFunction::gaussian_modulated(Polynomial::from_terms(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0]), (0.2, [3, 0, 0])]), 3.0).unwrap();
        let spec = QuadratureSpec::default();
        let a = landau_weak(&f, &psi, 0.0, &spec, Form::SecondOrder).unwrap();
        let b = landau_weak(&f, &psi, 0.0, &spec, Form::FirstOrder).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-5);
    }

    #[test]
    fn fitted_order_of_exact_power() {
        let eps = [1.0, 0.5, 0.25, 0.125];
        let errs: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        assert_relative_eq!(fitted_order(&eps, &errs, &[0.0; 4]).unwrap(), 2.0, max_relative = 1e-12);
        assert!(fitted_order(&eps, &errs, &[1.0; 4]).is_err());
    }

    #[test]
    fn equilibrium_sweep_flags_order() {
        let m = Density::maxwellian(1.0).unwrap();
        let psi = poly(&[(1.0, [0, 0, 2])]);
        let mut spec = QuadratureSpec::default();
        spec.velocity.nodes_per_axis_r6 = 6;
        let rep = grazing_limit_study(&m, &psi, &kernel(1.0), &[1.0, 0.5, 0.25], &spec, Form::SecondOrder).unwrap();
        assert!(rep.abs_errors.iter().all(|e| *e < 1e-8));
        assert!(rep.fitted_order.is_none() && rep.order_note.is_some());
        assert!(grazing_limit_study(&m, &psi, &kernel(1.0), &[0.5, 1.0, 0.25], &spec, Form::SecondOrder).is_err());
    }

    #[test]
    fn first_order_expansion_residual_halves() {
        // (1/ε)∇̄ψ at θ = εχ/π tends to (χ/2π)|z| p·(∇ − ∇_*)ψ with an O(ε) residual.
        let psi = ScalarTestFunction::gaussian_modulated(Polynomial::from_terms(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0])]), 3.0).unwrap();
        let (v, w) = (v3(0.4, -0.3, 1.0), v3(-0.5, 0.6, -0.2));
        let (chi, phi) = (1.0, 0.7);
        let residual = |eps: f64| {
            let c = CollisionConfiguration::from_angles(&v, &w, eps * chi / PI, phi).unwrap();
            let target = chi / (2.0 * PI) * (v - w).norm() * c.p.dot(&(psi.gradient(&v) - psi.gradient(&w)));
            (dbar(&psi, &c) / eps - target).abs()
        };
        for eps in [0.1, 0.05, 0.025] {
            let ratio = residual(eps / 2.0) / residual(eps);
            assert!(ratio < 0.6, "ratio {ratio}");
        }
    }

    #[test]
    fn circle_average_residual_halves() {
        // (1/(ε²χ²)) ∫_{S¹} ∇̄ψ dp tends to (1/8π) ∇̃·∇̃ψ at γ = 0.
        let psi = ScalarTestFunction::gaussian_modulated(Polynomial::from_terms(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0])]), 3.0).unwrap();
        let (v, w) = (v3(0.4, -0.3, 1.0), v3(-0.5, 0.6, -0.2));
        let chi = 1.2;
        let target = dtilde_div_dtilde(&psi, &v, &w, 0.0).unwrap() / (8.0 * PI);
        let n = 64;
        let residual = |eps: f64| {
            let theta = eps * chi / PI;
            let mut acc = 0.0;
            for j in 0..n {
                let phi = 2.0 * PI * j as f64 / n as f64;
                let c = CollisionConfiguration::from_angles(&v, &w, theta, phi).unwrap();
                acc += dbar(&psi, &c) * 2.0 * PI / n as f64;
            }
            (acc / (eps * eps * chi * chi) - target).abs()
        };
        for eps in [0.1, 0.05, 0.025] {
            let ratio = residual(eps / 2.0) / residual(eps);
            assert!(ratio < 0.6, "ratio {ratio}");
        }
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| v3(a, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn dbar_bounds(v in arb_vec(), w in arb_vec(), theta in 0.0..PI / 2.0, phi in 0.0..2.0 * PI) {
            // ψ = v₃² + ½v₁v₂ has Lipschitz constant ≤ 2|v| + 1 on the relevant ball
            // and ‖D²ψ‖ ≤ 2.
            prop_assume!((v - w).norm() > 1e-3);
            let psi = poly(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0])]);
            let c = CollisionConfiguration::from_angles(&v, &w, theta, phi).unwrap();
            let x2 = (v - w).norm();
            let sk = (c.sigma - c.k).norm();
            let radius = v.norm().max(w.norm()) * 2.0 + 1.0;
            let lip = 2.0 * radius + 1.0;
            let d = dbar(&psi, &c).abs();
            prop_assert!(d <= lip * x2 * sk + 1e-12);
            prop_assert!(d <= 2.0 * x2 * x2 * sk + 1e-12);
            let n = 32;
            let mut avg = 0.0;
            for j in 0..n {
                let p = 2.0 * PI * j as f64 / n as f64;
                let cj = CollisionConfiguration::from_angles(&v, &w, theta, p).unwrap();
                avg += dbar(&psi, &cj) / n as f64;
            }
            prop_assert!(avg.abs() <= 2.0 * x2 * x2 * sk * sk + 1e-12);
        }

        #[test]
        fn dtilde_orthogonal_to_z(v in arb_vec(), w in arb_vec(), gamma in -4.0..0.0f64) {
            prop_assume!((v - w).norm() > 1e-3);
            let psi = poly(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0]), (0.3, [3, 0, 0])]);
            let d = dtilde(&psi, &v, &w, gamma).unwrap();
            prop_assert!(d.dot(&(v - w)).abs() <= 1e-9 * (1.0 + d.norm() * (v - w).norm()));
            let p = projector(&(v - w)).unwrap();
            prop_assert!((p.apply(&d) - d).norm() <= 1e-9 * (1.0 + d.norm()));
        }
    }

    #[test]
    fn sigma_frame_used_by_operators_is_consistent() {
        let (v, w) = (v3(0.4, -0.3, 1.0), v3(-0.5, 0.6, -0.2));
        let frame = CollisionFrame::new(&v, &w).unwrap();
        let (s, _) = sigma_from_angles(&frame.k, 0.3, 1.1).unwrap();
        let (s2, _) = frame.direction(0.3f64.cos(), 0.3f64.sin(), 1.1f64.cos(), 1.1f64.sin());
        assert!((s - s2).norm() < 1e-15);
    }
}
