//! JSON run configuration with documented defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use grazing_core::compactness::FourierGrid;
use grazing_core::functions::{
    bump_testfn, gaussian_mixture, BumpSupport, Density, GradientVectorField, PairTestFunction, Polynomial,
    PolynomialVectorField, ScalarTestFunction, TestClass, TestFunction, VectorField,
};
use grazing_core::kernels::{AngularProfile, CollisionKernel, ScaledKernel, Variant};
use grazing_core::operators::Form;
use grazing_core::projection::ProjectionSpec;
use grazing_core::quadrature::{CompactSpec, QuadratureSpec};
use grazing_core::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Identities,
    LimitCheck,
    DissipationStudy,
    MetricAffine,
    Projection,
    Compactness,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::LimitCheck => "limit_check",
            Experiment::DissipationStudy => "dissipation_study",
            Experiment::MetricAffine => "metric_affine",
            Experiment::Projection => "projection",
            Experiment::Compactness => "compactness",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Raw angular profile before normalization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `β(θ) = θ^{−1−ν}`.
    #[default]
    PowerLaw,
    /// Samples `β(θ_j)` on increasing nodes in `(0, π/2]`.
    Tabulated { thetas: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Kinetic exponent in `[−4, 0]`.
    pub gamma: f64,
    /// Angular singularity exponent in `(0, 2]`.
    pub nu: f64,
    pub family: Family,
    /// Lower-bound constant in `β ≥ c₁ θ^{−1−ν}`; must not exceed the one
    /// implied by the normalized profile. Defaults to that value.
    pub c1: Option<f64>,
    pub variant: Variant,
    /// Replace `|z|^γ` by 1 for `|z| ≤ 1`.
    pub kinetic_cutoff: bool,
    /// Grazing parameter for single-ε evaluations.
    pub epsilon: f64,
    /// Strictly decreasing sweep for studies.
    pub eps_list: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            gamma: 0.0,
            nu: 1.0,
            family: Family::PowerLaw,
            c1: None,
            variant: Variant::Rescaled,
            kinetic_cutoff: false,
            epsilon: 0.5,
            eps_list: vec![1.0, 0.5, 0.25, 0.125],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: [f64; 3],
    /// Diagonal covariance.
    pub variance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub components: Vec<ComponentConfig>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { components: vec![ComponentConfig { weight: 1.0, mean: [0.0; 3], variance: [1.0, 1.0, 4.0] }] }
    }
}

/// One entry of the test-function family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFnConfig {
    /// Plain polynomial ψ(v).
    Polynomial { poly: Polynomial },
    /// `P(v) exp(−|v|²/(2w²))`.
    GaussianModulated { poly: Polynomial, width: f64 },
    /// `P(v)` times a smooth bump of the given radius.
    Bump { poly: Polynomial, center: [f64; 3], radius: f64 },
    /// Symmetric two-variable bump `a(|z|) b(y) P(z)` with `P` even.
    Pair { support: BumpSupport, poly: Polynomial },
    /// Anti-symmetric field `a(|z|) b(y) P(z) z` with `P` even.
    Vector { support: BumpSupport, modulation: Polynomial },
    /// Anti-symmetric field `a(|z|) b(y) M z`, rows of `M` given.
    LinearField { support: BumpSupport, matrix: [[f64; 3]; 3] },
    /// `|z|^{1+γ/2}(∇ − ∇_*)φ` for the `pair` entry at index `of`.
    GradientField { of: usize },
}

impl TestFnConfig {
    pub fn class(&self) -> TestClass {
        match self {
            TestFnConfig::Polynomial { .. } | TestFnConfig::GaussianModulated { .. } | TestFnConfig::Bump { .. } => {
                TestClass::CcSingle
            }
            TestFnConfig::Pair { .. } => TestClass::Ds,
            _ => TestClass::As,
        }
    }
}

fn default_testfns() -> Vec<TestFnConfig> {
    let support = BumpSupport { delta: 0.5, outer: 4.0, y_center: [0.0; 3], y_radius: 2.5 };
    vec![
        TestFnConfig::GaussianModulated {
            poly: Polynomial::from_terms(&[(1.0, [0, 0, 2]), (0.5, [1, 1, 0])]),
            width: 3.0,
        },
        TestFnConfig::Bump {
            poly: Polynomial::from_terms(&[(1.0, [0, 0, 2]), (-0.3, [2, 0, 1])]),
            center: [0.2, 0.0, 0.0],
            radius: 12.0,
        },
        TestFnConfig::Pair { support, poly: Polynomial::from_terms(&[(1.0, [0, 0, 2]), (-0.5, [2, 0, 0]), (-0.5, [0, 2, 0])]) },
        TestFnConfig::Pair { support, poly: Polynomial::from_terms(&[(1.0, [0, 0, 0]), (0.2, [1, 0, 1])]) },
        TestFnConfig::LinearField {
            support: BumpSupport { delta: 0.6, outer: 3.0, y_center: [0.2, 0.0, -0.1], y_radius: 1.5 },
            matrix: [[1.0, 0.4, -0.3], [0.2, -0.5, 0.8], [0.1, 0.7, 0.6]],
        },
        TestFnConfig::GradientField { of: 2 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub form: Form,
    /// Least acceptable fitted convergence order.
    pub min_order: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { form: Form::SecondOrder, min_order: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Random (mobility, ψ) pairs per operator.
    pub pairs_per_kind: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { pairs_per_kind: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompactnessConfig {
    /// Radius `R` of the cut-off `χ_R`.
    pub cutoff_radius: f64,
    /// Must resolve the cut-off transition of `√f χ_R`; 96 points on
    /// `[−8, 8)³` keep the default density below the aliasing tolerance.
    pub fourier_grid: FourierGrid,
    /// `|z|` values for the `S^ε` grid.
    pub z_norms: Vec<f64>,
    /// ε at which `S^ε` is compared with its grazing limit.
    pub limit_epsilon: f64,
    /// `|ξ|` values for the Fourier bounds, each taken along three directions.
    pub xi_norms: Vec<f64>,
    /// Replaces `quadrature.compact` in the cancellation check, whose
    /// accuracy on anisotropic densities is set by the direction grid.
    pub cancellation_rule: CompactSpec,
}

impl Default for CompactnessConfig {
    fn default() -> Self {
        CompactnessConfig {
            cutoff_radius: 6.0,
            fourier_grid: FourierGrid { points_per_axis: 96, half_width: 8.0 },
            z_norms: vec![0.1, 0.5, 0.9, 1.0, 1.5, 3.0, 10.0],
            limit_epsilon: 1e-3,
            xi_norms: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            cancellation_rule: CompactSpec { radial: 24, direction_theta: 16, direction_phi: 32, y_per_axis: 4 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub kernel: KernelConfig,
    pub density: DensityConfig,
    pub testfns: Vec<TestFnConfig>,
    pub quadrature: QuadratureSpec,
    pub limit: LimitConfig,
    pub metric: MetricConfig,
    pub projection: ProjectionSpec,
    pub compactness: CompactnessConfig,
    /// Report destination; standard output when absent.
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::Identities,
            kernel: KernelConfig::default(),
            density: DensityConfig::default(),
            testfns: default_testfns(),
            quadrature: QuadratureSpec::default(),
            limit: LimitConfig::default(),
            metric: MetricConfig::default(),
            projection: ProjectionSpec::default(),
            compactness: CompactnessConfig::default(),
            output: None,
            format: Format::Json,
        }
    }
}

/// Parses JSON, reporting the path of the offending field.
pub fn parse(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("{}: {}", if path == "." { "config".to_string() } else { path }, e.into_inner())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn at<T, E: fmt::Display>(path: impl fmt::Display, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow!("{path}: {e}"))
}

/// Test functions built from the configuration, by class.
pub struct TestFamily {
    pub single: Vec<(usize, ScalarTestFunction)>,
    pub pair: Vec<(usize, PairTestFunction)>,
    pub vector: Vec<(usize, Box<dyn VectorField>)>,
}

impl TestFamily {
    /// Pair entry that a gradient field was built from, if any.
    pub fn gradient_source(&self, index: usize, config: &RunConfig) -> Option<&PairTestFunction> {
        match config.testfns.get(index) {
            Some(TestFnConfig::GradientField { of }) => self.pair.iter().find(|(i, _)| i == of).map(|(_, p)| p),
            _ => None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let k = &self.kernel;
        if !(-4.0..=0.0).contains(&k.gamma) {
            bail!("kernel.gamma: must lie in [-4, 0], got {}", k.gamma);
        }
        if !(k.epsilon > 0.0 && k.epsilon <= 1.0) {
            bail!("kernel.epsilon: must lie in (0, 1], got {}", k.epsilon);
        }
        for (i, e) in k.eps_list.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                bail!("kernel.eps_list[{i}]: must lie in (0, 1], got {e}");
            }
        }
        if let Some(i) = k.eps_list.windows(2).position(|w| w[1] >= w[0]) {
            bail!("kernel.eps_list[{}]: the sweep must be strictly decreasing", i + 1);
        }
        let kernel = self.kernel()?;
        for (i, e) in k.eps_list.iter().enumerate() {
            at(format!("kernel.eps_list[{i}]"), kernel.with_epsilon(*e))?;
        }
        if let Some(c1) = k.c1 {
            let implied = kernel.angular.base().c1();
            if !(c1 > 0.0 && c1 <= implied) {
                bail!("kernel.c1: must lie in (0, {implied}] for this profile, got {c1}");
            }
        }
        self.density()?;
        self.test_functions()?;
        at("quadrature", self.quadrature.validate())?;
        at("compactness.fourier_grid", self.compactness.fourier_grid.validate())?;
        at("compactness.cancellation_rule", self.cancellation_spec().validate())?;
        let counts = [
            ("projection.radii", self.projection.radii),
            ("projection.y_per_axis", self.projection.y_per_axis),
            ("projection.lmax", self.projection.lmax),
        ];
        for (name, n) in counts {
            if n == 0 {
                bail!("{name}: must be positive");
            }
        }
        let classes: Vec<TestClass> = self.testfns.iter().map(TestFnConfig::class).collect();
        let needs = |class: TestClass, what: &str| -> Result<()> {
            if !classes.contains(&class) {
                bail!("testfns: the {} experiment needs at least one {what} test function", self.experiment);
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Identities => needs(TestClass::CcSingle, "single-variable")?,
            Experiment::LimitCheck => {
                needs(TestClass::CcSingle, "single-variable")?;
                if k.eps_list.len() < 3 {
                    bail!("kernel.eps_list: a limit check needs at least three values");
                }
            }
            Experiment::DissipationStudy => {
                needs(TestClass::Ds, "pair")?;
                if k.eps_list.len() < 3 {
                    bail!("kernel.eps_list: a dissipation study needs at least three values");
                }
            }
            Experiment::MetricAffine => {
                needs(TestClass::CcSingle, "single-variable")?;
                if self.metric.pairs_per_kind == 0 {
                    bail!("metric.pairs_per_kind: must be positive");
                }
            }
            Experiment::Projection => needs(TestClass::As, "vector")?,
            Experiment::Compactness => {
                if k.gamma != 0.0 && !k.kinetic_cutoff {
                    bail!("kernel.kinetic_cutoff: the compactness diagnostics need the cut-off when gamma != 0");
                }
                if !(self.compactness.cutoff_radius > 0.0) {
                    bail!("compactness.cutoff_radius: must be positive");
                }
                if !(self.compactness.limit_epsilon > 0.0 && self.compactness.limit_epsilon <= 1.0) {
                    bail!("compactness.limit_epsilon: must lie in (0, 1]");
                }
                if let Some(i) = self.compactness.z_norms.iter().position(|z| !(*z > 0.0)) {
                    bail!("compactness.z_norms[{i}]: must be positive");
                }
                if let Some(i) = self.compactness.xi_norms.iter().position(|x| !(*x > 0.0)) {
                    bail!("compactness.xi_norms[{i}]: must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<AngularProfile> {
        let k = &self.kernel;
        let p = match &k.family {
            Family::PowerLaw => AngularProfile::power_law(k.nu),
            Family::Tabulated { thetas, values } => AngularProfile::tabulated(k.nu, thetas.clone(), values.clone()),
        };
        at("kernel.family", p)
    }

    /// Collision kernel at `kernel.epsilon`.
    pub fn kernel(&self) -> Result<CollisionKernel> {
        let k = &self.kernel;
        let scaled = at("kernel", ScaledKernel::new(&self.profile()?, k.epsilon, k.variant, &self.quadrature.angular))?;
        at("kernel", CollisionKernel::new(k.gamma, scaled, k.kinetic_cutoff))
    }

    /// `c₁` used by the Fourier average bound.
    /// Quadrature for the cancellation check.
    pub fn cancellation_spec(&self) -> QuadratureSpec {
        QuadratureSpec { compact: self.compactness.cancellation_rule, ..self.quadrature }
    }

    pub fn c1(&self) -> Result<f64> {
        match self.kernel.c1 {
            Some(c) => Ok(c),
            None => Ok(self.kernel()?.angular.base().c1()),
        }
    }

    pub fn density(&self) -> Result<Density> {
        let comps: Vec<(f64, Vec3, Vec3)> =
            self.density.components.iter().map(|c| (c.weight, Vec3::from(c.mean), Vec3::from(c.variance))).collect();
        at("density.components", gaussian_mixture(&comps))
    }

    pub fn test_functions(&self) -> Result<TestFamily> {
        let mut out = TestFamily { single: Vec::new(), pair: Vec::new(), vector: Vec::new() };
        for (i, t) in self.testfns.iter().enumerate() {
            let path = format!("testfns[{i}]");
            match t {
                TestFnConfig::Polynomial { poly } => out.single.push((i, ScalarTestFunction::polynomial(poly.clone()))),
                TestFnConfig::GaussianModulated { poly, width } => {
                    out.single.push((i, at(&path, ScalarTestFunction::gaussian_modulated(poly.clone(), *width))?))
                }
                TestFnConfig::Bump { poly, center, radius } => {
                    out.single.push((i, at(&path, ScalarTestFunction::bump(poly.clone(), Vec3::from(*center), *radius))?))
                }
                TestFnConfig::Pair { support, poly } => {
                    let s = checked_support(&path, support)?;
                    out.pair.push((i, at(&path, PairTestFunction::new(s, poly.clone()))?));
                }
                TestFnConfig::Vector { support, modulation } => {
                    let s = checked_support(&path, support)?;
                    match at(&path, bump_testfn(TestClass::As, s, modulation.clone()))? {
                        TestFunction::Vector(v) => out.vector.push((i, v)),
                        _ => unreachable!("bump_testfn returns the requested class"),
                    }
                }
                TestFnConfig::LinearField { support, matrix } => {
                    let s = checked_support(&path, support)?;
                    let m = Mat3::from_fn(|r, c| matrix[r][c]);
                    out.vector.push((i, Box::new(at(&path, PolynomialVectorField::linear(s, &m))?)));
                }
                TestFnConfig::GradientField { of } => {
                    let phi = match self.testfns.get(*of) {
                        Some(TestFnConfig::Pair { support, poly }) => {
                            at(&path, PairTestFunction::new(checked_support(&path, support)?, poly.clone()))?
                        }
                        _ => bail!("{path}.of: no pair test function at index {of}"),
                    };
                    out.vector.push((i, Box::new(GradientVectorField { phi, gamma: self.kernel.gamma })));
                }
            }
        }
        Ok(out)
    }
}

fn checked_support(path: &str, s: &BumpSupport) -> Result<BumpSupport> {
    at(format!("{path}.support"), BumpSupport::new(s.delta, s.outer, s.y_center(), s.y_radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
        assert_eq!(parse("{}").unwrap(), c);
    }

    #[test]
    fn unknown_fields_are_reported_with_their_path() {
        let err = parse(r#"{"kernel": {"gama": 0}}"#).unwrap_err().to_string();
        assert!(err.starts_with("kernel"), "{err}");
        assert!(err.contains("gama"), "{err}");
        let err = parse(r#"{"quadrature": {"velocity": {"nodes_per_axis_r6": "eight"}}}"#).unwrap_err().to_string();
        assert!(err.starts_with("quadrature.velocity.nodes_per_axis_r6"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = parse(r#"{"kernel": {"eps_list": [1.0, 0.25, 0.5]}}"#).unwrap_err().to_string();
        assert!(err.starts_with("kernel.eps_list[2]"), "{err}");
        let err = parse(r#"{"testfns": [{"kind": "gradient_field", "of": 0}]}"#).unwrap_err().to_string();
        assert!(err.starts_with("testfns[0].of"), "{err}");
        let err = parse(r#"{"experiment": "compactness", "kernel": {"gamma": -1}}"#).unwrap_err().to_string();
        assert!(err.starts_with("kernel.kinetic_cutoff"), "{err}");
        let err = parse(r#"{"kernel": {"c1": 100.0}}"#).unwrap_err().to_string();
        assert!(err.starts_with("kernel.c1"), "{err}");
        let err = parse(r#"{"density": {"components": [{"weight": 1, "mean": [0,0,0], "variance": [1,-1,1]}]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("density.components"), "{err}");
    }

    #[test]
    fn family_classes() {
        let f = RunConfig::default().test_functions().unwrap();
        assert_eq!((f.single.len(), f.pair.len(), f.vector.len()), (2, 2, 2));
        let c = RunConfig::default();
        assert!(f.gradient_source(5, &c).is_some());
        assert!(f.gradient_source(4, &c).is_none());
    }
}
