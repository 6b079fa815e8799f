//! Angular kernel families, the ε-scaling and the normalization that fixes
//! the momentum transfer `∫ θ² β(θ) dθ = 8/π`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_legendre, AngularSpec, IntegralResult};

/// Target momentum transfer after normalization.
pub const TRANSFER: f64 = 8.0 / PI;

/// Shape of the raw profile. Profiles are stored through their reduced form
/// `β(θ) θ^{1+ν}`, which is bounded near zero for every admissible family.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileShape {
    /// `β(θ) = θ^{−1−ν}` before scaling.
    PowerLaw,
    /// User data `β(θ_j)`, stored reduced and interpolated linearly in θ.
    Tabulated { thetas: Vec<f64>, reduced: Vec<f64> },
}

/// Angular profile `β` with singularity exponent ν.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularProfile {
    nu: f64,
    shape: ProfileShape,
    scale: f64,
}

impl AngularProfile {
    /// Raw power law `θ^{−1−ν}`.
    pub fn power_law(nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(AngularProfile { nu, shape: ProfileShape::PowerLaw, scale: 1.0 })
    }

    /// Tabulated profile given as samples `β(θ_j)` on increasing θ nodes in
    /// `(0, π/2]`. Outside the table the reduced profile is held constant.
    pub fn tabulated(nu: f64, thetas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_nu(nu)?;
        if thetas.len() < 2 || thetas.len() != values.len() {
            return Err(invalid("tabulated profile needs matching θ and β arrays of length ≥ 2"));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) || thetas[0] <= 0.0 || thetas[thetas.len() - 1] > PI / 2.0 {
            return Err(invalid("tabulated θ nodes must increase within (0, π/2]"));
        }
        if values.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(invalid("tabulated β values must be positive"));
        }
        let reduced = thetas.iter().zip(&values).map(|(t, b)| b * t.powf(1.0 + nu)).collect();
        Ok(AngularProfile { nu, shape: ProfileShape::Tabulated { thetas, reduced }, scale: 1.0 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn shape(&self) -> &ProfileShape {
        &self.shape
    }

    /// Overall multiplicative factor applied to the raw shape.
    pub fn normalization_constant(&self) -> f64 {
        self.scale
    }

    /// Lower-bound constant `c₁` with `β(θ) ≥ c₁ θ^{−1−ν}` on `(0, π/2]`.
    pub fn c1(&self) -> f64 {
        match &self.shape {
            ProfileShape::PowerLaw => self.scale,
            ProfileShape::Tabulated { reduced, .. } => self.scale * reduced.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn reduced(&self, theta: f64) -> f64 {
        match &self.shape {
            ProfileShape::PowerLaw => 1.0,
            ProfileShape::Tabulated { thetas, reduced } => {
                let n = thetas.len();
                if theta <= thetas[0] {
                    return reduced[0];
                }
                if theta >= thetas[n - 1] {
                    return reduced[n - 1];
                }
                let j = thetas.partition_point(|t| *t <= theta);
                let (t0, t1) = (thetas[j - 1], thetas[j]);
                let s = (theta - t0) / (t1 - t0);
                reduced[j - 1] * (1.0 - s) + reduced[j] * s
            }
        }
    }

    /// `β(θ)` for θ > 0.
    pub fn beta(&self, theta: f64) -> f64 {
        self.scale * self.reduced(theta) * theta.powf(-1.0 - self.nu)
    }

    /// `θ^{1+ν} β(θ)`, bounded near zero.
    pub fn reduced_beta(&self, theta: f64) -> f64 {
        self.scale * self.reduced(theta)
    }

    /// `∫₀^{π/2} θ² β(θ) dθ`, finite only for ν < 2.
    pub fn transfer(&self, spec: &AngularSpec) -> Result<f64> {
        if self.nu >= 2.0 {
            return Err(Error::RequiresLogCutoff);
        }
        let a = 2.0 - self.nu;
        // With t = θ^{2−ν} the integrand θ^{1−ν} r(θ) dθ becomes r(θ(t)) dt / (2−ν).
        let rule = composite_rule(0.0, (PI / 2.0).powf(a), spec.panels, spec.nodes_per_panel);
        Ok(rule.iter().map(|(t, w)| w * self.reduced_beta(t.powf(1.0 / a))).sum::<f64>() / a)
    }

    /// Rescales so that the momentum transfer equals `8/π`.
    pub fn normalize(&self, spec: &AngularSpec) -> Result<Self> {
        let transfer = self.transfer(spec)?;
        let mut out = self.clone();
        out.scale *= TRANSFER / transfer;
        Ok(out)
    }

    /// Normalization for the logarithmic cut-off (ν = 2): the transfer over
    /// `(ε, π/2)` divided by `log ε⁻¹` tends to `lim θ³β(θ)`, which is set to
    /// `8/π`.
    pub fn normalize_log(&self) -> Result<Self> {
        if self.nu != 2.0 {
            return Err(invalid("the logarithmic cut-off variant requires nu = 2"));
        }
        let mut out = self.clone();
        out.scale *= TRANSFER / self.reduced_beta(0.0);
        Ok(out)
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= 2.0 {
        Ok(())
    } else {
        Err(invalid(format!("nu must lie in (0, 2], got {nu}")))
    }
}

/// How the profile is concentrated as ε ↓ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `β^ε(θ) = (π³/ε³) β(πθ/ε)` on `(0, ε/2)`.
    Rescaled,
    /// `β^ε(θ) = 1_{θ ≥ ε} β(θ) / log ε⁻¹`.
    CoulombLogCutoff,
}

/// Normalized profile together with ε and the scaling variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledKernel {
    base: AngularProfile,
    epsilon: f64,
    variant: Variant,
}

impl ScaledKernel {
    /// Normalizes `raw` once and fixes ε.
    pub fn new(raw: &AngularProfile, epsilon: f64, variant: Variant, spec: &AngularSpec) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        let base = match variant {
            Variant::Rescaled => raw.normalize(spec)?,
            Variant::CoulombLogCutoff => {
                if epsilon >= 1.0 {
                    return Err(invalid("the logarithmic cut-off needs epsilon < 1"));
                }
                raw.normalize_log()?
            }
        };
        Ok(ScaledKernel { base, epsilon, variant })
    }

    /// Same normalized profile at a different ε.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) || (self.variant == Variant::CoulombLogCutoff && epsilon >= 1.0) {
            return Err(invalid(format!("epsilon {epsilon} is outside the admissible range")));
        }
        Ok(ScaledKernel { base: self.base.clone(), epsilon, variant: self.variant })
    }

    pub fn base(&self) -> &AngularProfile {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn nu(&self) -> f64 {
        self.base.nu
    }

    /// Angular support `(lo, hi)` of `β^ε`.
    pub fn support(&self) -> (f64, f64) {
        match self.variant {
            Variant::Rescaled => (0.0, (0.5 * self.epsilon).min(PI / 2.0)),
            Variant::CoulombLogCutoff => (self.epsilon, PI / 2.0),
        }
    }

    /// `β^ε(θ)` for θ ∈ (0, π/2]; zero outside the support.
    pub fn beta_eps(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) || theta > PI / 2.0 {
            return Err(Error::AngleOutOfDomain);
        }
        Ok(self.beta_eps_unchecked(theta))
    }

    pub(crate) fn beta_eps_unchecked(&self, theta: f64) -> f64 {
        let eps = self.epsilon;
        match self.variant {
            Variant::Rescaled => {
                if theta < 0.5 * eps {
                    (PI / eps).powi(3) * self.base.beta(PI * theta / eps)
                } else {
                    0.0
                }
            }
            Variant::CoulombLogCutoff => {
                if theta >= eps {
                    self.base.beta(theta) / (1.0 / eps).ln()
                } else {
                    0.0
                }
            }
        }
    }

    /// Nodes θ_j and weights with `Σ w_j g(θ_j) ≈ ∫ g(θ) β^ε(θ) dθ` over
    /// `[lo, hi]` intersected with the support. The substitution
    /// `t = θ^{2−ν}` (logarithmic when ν = 2) absorbs the endpoint singularity
    /// for integrands that vanish like θ².
    pub fn theta_rule_on(&self, lo: f64, hi: f64, panels: usize, nodes_per_panel: usize) -> ThetaRule {
        let (s0, s1) = self.support();
        let lo = lo.max(s0);
        let hi = hi.min(s1);
        let mut nodes = Vec::new();
        if hi > lo {
            let a = 2.0 - self.nu();
            if a > 1e-12 {
                for (t, w) in composite_rule(lo.powf(a), hi.powf(a), panels, nodes_per_panel) {
                    let theta = t.powf(1.0 / a);
                    let jac = theta.powf(1.0 - a) / a;
                    nodes.push(ThetaNode::new(theta, w * jac * self.beta_eps_unchecked(theta)));
                }
            } else {
                for (t, w) in composite_rule(lo.ln(), hi.ln(), panels, nodes_per_panel) {
                    let theta = t.exp();
                    nodes.push(ThetaNode::new(theta, w * theta * self.beta_eps_unchecked(theta)));
                }
            }
        }
        ThetaRule { nodes }
    }

    /// Full-support rule.
    pub fn theta_rule(&self, panels: usize, nodes_per_panel: usize) -> ThetaRule {
        self.theta_rule_on(0.0, PI / 2.0, panels, nodes_per_panel)
    }
}

/// One node of a β^ε-weighted θ rule with cached trigonometric values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaNode {
    pub theta: f64,
    pub cos: f64,
    pub sin: f64,
    pub weight: f64,
}

impl ThetaNode {
    fn new(theta: f64, weight: f64) -> Self {
        ThetaNode { theta, cos: theta.cos(), sin: theta.sin(), weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaRule {
    pub nodes: Vec<ThetaNode>,
}

impl ThetaRule {
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * g(n.theta)).sum()
    }
}

/// Composite Gauss–Legendre nodes on `[a, b]` with equal panels.
pub(crate) fn composite_rule(a: f64, b: f64, panels: usize, nodes_per_panel: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(nodes_per_panel);
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * base.len());
    for p in 0..panels {
        let left = a + width * p as f64;
        for (x, w) in base.iter() {
            out.push((left + 0.5 * width * (x + 1.0), 0.5 * width * w));
        }
    }
    out
}

/// Full collision kernel `B^ε(|z|, θ) sin θ = |z|^γ β^ε(θ)`, optionally with
/// the kinetic cut-off `|z|^γ_kin = 1` for `|z| ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel {
    pub gamma: f64,
    pub angular: ScaledKernel,
    pub kinetic_cutoff: bool,
}

impl CollisionKernel {
    pub fn new(gamma: f64, angular: ScaledKernel, kinetic_cutoff: bool) -> Result<Self> {
        if !(-4.0..=0.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [-4, 0], got {gamma}")));
        }
        Ok(CollisionKernel { gamma, angular, kinetic_cutoff })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Ok(CollisionKernel { gamma: self.gamma, angular: self.angular.with_epsilon(epsilon)?, kinetic_cutoff: self.kinetic_cutoff })
    }

    pub fn epsilon(&self) -> f64 {
        self.angular.epsilon
    }

    /// Kinetic factor `|z|^γ` or its cut-off version.
    #[inline]
    pub fn kinetic(&self, z_norm: f64) -> f64 {
        if self.gamma == 0.0 || (self.kinetic_cutoff && z_norm <= 1.0) {
            1.0
        } else {
            z_norm.powf(self.gamma)
        }
    }

    /// `B^ε(|z|, θ) sin θ`.
    pub fn b_sin(&self, z_norm: f64, theta: f64) -> Result<f64> {
        Ok(self.kinetic(z_norm) * self.angular.beta_eps(theta)?)
    }
}

/// Momentum transfer `∫ θ² β^ε(θ) dθ`, with a refinement check that fails
/// when halving the node count moves the value by more than `1e−6`
/// relative.
pub fn momentum_transfer(kernel: &ScaledKernel, spec: &AngularSpec) -> Result<f64> {
    let r = crate::quadrature::integrate_theta_singular(|t| t * t, kernel, spec)?;
    Ok(r.value)
}

/// [`momentum_transfer`] keeping the refinement diagnostic.
pub fn momentum_transfer_result(kernel: &ScaledKernel, spec: &AngularSpec) -> Result<IntegralResult> {
    crate::quadrature::integrate_theta_singular(|t| t * t, kernel, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> AngularSpec {
        AngularSpec::default()
    }

    fn maxwell(eps: f64) -> ScaledKernel {
        ScaledKernel::new(&AngularProfile::power_law(0.5).unwrap(), eps, Variant::Rescaled, &spec()).unwrap()
    }

    #[test]
    fn raw_power_law_beta_value() {
        // Raw θ^{-3/2} profile at ε = π/2, θ = π/8: (π³/ε³) β(π/4) = 8 (π/4)^{-3/2}.
        let k = ScaledKernel { base: AngularProfile::power_law(0.5).unwrap(), epsilon: PI / 2.0, variant: Variant::Rescaled };
        assert_relative_eq!(k.beta_eps(PI / 8.0).unwrap(), 8.0 * (PI / 4.0).powf(-1.5), max_relative = 1e-14);
        let k = ScaledKernel { epsilon: 1.0, ..k };
        let theta = 0.1;
        let expected = PI.powi(3) * (PI * theta).powf(-1.5);
        assert_relative_eq!(k.beta_eps(theta).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn support_and_domain() {
        let k = maxwell(0.5);
        assert_eq!(k.beta_eps(0.3).unwrap(), 0.0);
        assert!(k.beta_eps(0.2).unwrap() > 0.0);
        assert_eq!(k.beta_eps(0.0), Err(Error::AngleOutOfDomain));
        assert_eq!(k.beta_eps(-1.0), Err(Error::AngleOutOfDomain));
        let coulomb = ScaledKernel::new(&AngularProfile::power_law(2.0).unwrap(), 0.1, Variant::CoulombLogCutoff, &spec()).unwrap();
        assert_eq!(coulomb.beta_eps(0.05).unwrap(), 0.0);
        assert!(coulomb.beta_eps(0.2).unwrap() > 0.0);
    }

    #[test]
    fn normalization_factor_matches_closed_form() {
        let raw = AngularProfile::power_law(0.5).unwrap();
        let transfer = raw.transfer(&spec()).unwrap();
        let closed = (2.0 / 3.0) * (PI / 2.0).powf(1.5);
        assert_relative_eq!(transfer, closed, max_relative = 1e-13);
        let normed = raw.normalize(&spec()).unwrap();
        assert_relative_eq!(normed.normalization_constant(), TRANSFER / closed, max_relative = 1e-13);
        let again = normed.normalize(&spec()).unwrap();
        assert_relative_eq!(again.normalization_constant(), normed.normalization_constant(), max_relative = 1e-10);
    }

    #[test]
    fn divergent_transfer_needs_log_cutoff() {
        let raw = AngularProfile::power_law(2.0).unwrap();
        assert_eq!(raw.normalize(&spec()), Err(Error::RequiresLogCutoff));
        assert_eq!(ScaledKernel::new(&raw, 0.5, Variant::Rescaled, &spec()), Err(Error::RequiresLogCutoff));
    }

    #[test]
    fn transfer_is_epsilon_invariant() {
        for eps in [1.0, 0.3, 0.1, 0.03, 0.01] {
            let t = momentum_transfer(&maxwell(eps), &spec()).unwrap();
            assert!((t - TRANSFER).abs() < 1e-10, "eps {eps}: {t}");
        }
    }

    #[test]
    fn log_cutoff_transfer_oracle() {
        let raw = AngularProfile::power_law(2.0).unwrap();
        let mut previous = f64::INFINITY;
        for eps in [0.5, 0.1, 0.01, 1e-3, 1e-4] {
            let k = ScaledKernel::new(&raw, eps, Variant::CoulombLogCutoff, &spec()).unwrap();
            let t = momentum_transfer(&k, &spec()).unwrap();
            // ∫_ε^{π/2} θ^{-1} dθ / log ε⁻¹ times the normalized coefficient.
            let oracle = TRANSFER * ((PI / 2.0).ln() - eps.ln()) / (1.0 / eps).ln();
            assert_relative_eq!(t, oracle, max_relative = 1e-10);
            assert!(t < previous);
            previous = t;
            if eps == 1e-3 {
                assert!((t - TRANSFER).abs() < 0.1 * TRANSFER);
            }
        }
    }

    #[test]
    fn tabulated_power_law_matches_builtin() {
        let thetas: Vec<f64> = (1..=50).map(|j| PI / 2.0 * j as f64 / 50.0).collect();
        let values: Vec<f64> = thetas.iter().map(|t| 3.0 * t.powf(-1.5)).collect();
        let tab = AngularProfile::tabulated(0.5, thetas, values).unwrap().normalize(&spec()).unwrap();
        let pl = AngularProfile::power_law(0.5).unwrap().normalize(&spec()).unwrap();
        for theta in [1e-6, 0.01, 0.5, 1.5] {
            assert_relative_eq!(tab.beta(theta), pl.beta(theta), max_relative = 1e-12);
        }
        assert_relative_eq!(tab.c1(), pl.c1(), max_relative = 1e-12);
    }

    #[test]
    fn singularity_lower_bound_on_log_grid() {
        let p = AngularProfile::power_law(0.5).unwrap().normalize(&spec()).unwrap();
        for j in 0..=80 {
            let theta = 1e-8 * (PI / 2.0 / 1e-8).powf(j as f64 / 80.0);
            assert!(p.beta(theta) * theta.powf(1.5) >= p.c1() * (1.0 - 1e-12));
        }
    }
}
