//! The six experiments. Each one fills a [`Report`] with a table of
//! measurements and a list of pass/fail assertions.

use std::f64::consts::PI;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grazing_core::compactness::{
    average_bound_constant, cancellation_identity_check, fitted_positivity_constant, fitted_seminorm_constant,
    fourier_avg_lower_bound, s_eps, seminorm_weight, truncation_constant, weighted_seminorm, CutoffDensity,
};
use grazing_core::dissipation::{
    affine_boltzmann, affine_landau, boltzmann_dissipations, dbar_moments, landau_dissipation, log_mean,
    metric_affine_boltzmann, metric_affine_landau, FluxFn, GradientFlux, GradientRate, LandauArgument, Mobility,
    RateFn,
};
use grazing_core::functions::{Density, PairField, Polynomial, ScalarField, ScalarTestFunction};
use grazing_core::geometry::{circle_average_pp, CollisionConfiguration};
use grazing_core::kernels::{momentum_transfer, AngularProfile, ScaledKernel, Variant, TRANSFER};
use grazing_core::operators::{dtilde_div_dtilde_pair, dtilde_pair, grazing_limit_study, weak_comparison, Form};
use grazing_core::projection::{gradient_round_trip_error, project_vector_field, ShellGrid};
use grazing_core::quadrature::IntegralResult;
use grazing_core::{Mat3, Vec3};

use crate::config::{Experiment, RunConfig};
use crate::report::{Assertion, Cell, Report};

/// Relative agreement demanded of the two weak forms.
pub const FORM_AGREEMENT: f64 = 1e-5;
/// Largest admissible ratio of consecutive limit-piece residuals.
pub const LIMIT_PIECE_RATIO: f64 = 0.6;
/// Bound on `|S^ε|`.
pub const S_EPS_BOUND: f64 = 12.0;
/// Relative distance of `S^ε` from its grazing limit at the smallest ε.
pub const S_EPS_LIMIT_TOL: f64 = 1e-2;
/// Largest admissible spread of `seminorm/(D_B^ε + 1)` along the sweep.
pub const SEMINORM_SPREAD: f64 = 10.0;
/// Number of random configurations for pointwise identities.
pub const RANDOM_CASES: usize = 10_000;
/// Number of random pairs for the limit pieces.
pub const LIMIT_PIECE_POINTS: usize = 20;

/// Runs the configured experiment.
pub fn run(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let name = config.experiment.name();
    let out = match config.experiment {
        Experiment::Identities => identities(config),
        Experiment::LimitCheck => limit_check(config),
        Experiment::DissipationStudy => dissipation_study(config),
        Experiment::MetricAffine => metric_affine(config),
        Experiment::Projection => projection(config),
        Experiment::Compactness => compactness(config),
    };
    out.with_context(|| format!("{name} experiment failed"))
}

fn label(index: usize) -> String {
    format!("testfns[{index}]")
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let c: f64 = rng.gen_range(-1.0..1.0);
    let p: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - c * c).sqrt();
    Vec3::new(s * p.cos(), s * p.sin(), c)
}

fn random_in_cube(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half))
}

fn random_configuration(rng: &mut ChaCha8Rng, half: f64) -> Result<CollisionConfiguration> {
    loop {
        let v = random_in_cube(rng, half);
        let w = random_in_cube(rng, half);
        if (v - w).norm() < 1e-6 {
            continue;
        }
        let theta = rng.gen_range(0.0..=0.5 * PI);
        let phi = rng.gen_range(0.0..2.0 * PI);
        return Ok(CollisionConfiguration::from_angles(&v, &w, theta, phi)?);
    }
}

/// Adds one summary line together with a table row mirroring it.
fn check(report: &mut Report, a: Assertion, cases: usize) {
    let threshold = a.threshold.map(Cell::from).unwrap_or_else(|| Cell::from(""));
    report.push_row(vec![a.property.clone().into(), cases.into(), a.measured.into(), threshold]);
    report.assert(a);
}

/// Profile used where the rescaled variant is required; ν = 2 has no finite
/// transfer, so the ν = 1 power law stands in.
fn rescaled_profile(config: &RunConfig) -> Result<AngularProfile> {
    if config.kernel.nu < 2.0 {
        config.profile()
    } else {
        Ok(AngularProfile::power_law(1.0)?)
    }
}

fn log_cutoff_profile(config: &RunConfig) -> Result<AngularProfile> {
    if config.kernel.nu == 2.0 {
        config.profile()
    } else {
        Ok(AngularProfile::power_law(2.0)?)
    }
}

fn invariant_tolerance(r: &IntegralResult) -> f64 {
    r.tolerance(1e-8, 10.0)
}

fn identities(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(config, &["check", "cases", "measured", "threshold"]);
    let spec = &config.quadrature;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = random_unit(&mut rng);
        let got = circle_average_pp(&k, spec.circle_nodes)?;
        let want = PI * (Mat3::identity() - k * k.transpose());
        worst = worst.max((got - want).amax());
    }
    check(&mut report, Assertion::at_most("circle average of p⊗p equals π Π[k]", worst, 1e-12), 100);

    let (mut chord, mut momentum, mut energy) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..RANDOM_CASES {
        let c = random_configuration(&mut rng, 4.0)?;
        chord = chord.max(((c.sigma - c.k).norm_squared() - 2.0 * (1.0 - c.k.dot(&c.sigma))).abs());
        let p0 = c.v + c.v_star;
        let p1 = c.v_post + c.v_star_post;
        momentum = momentum.max((p1 - p0).norm() / (c.v.norm() + c.v_star.norm()));
        let e0 = c.v.norm_squared() + c.v_star.norm_squared();
        let e1 = c.v_post.norm_squared() + c.v_star_post.norm_squared();
        energy = energy.max((e1 - e0).abs() / e0);
    }
    check(&mut report, Assertion::at_most("|σ − k|² = 2(1 − k·σ)", chord, 1e-12), RANDOM_CASES);
    check(&mut report, Assertion::at_most("momentum conservation (relative)", momentum, 1e-10), RANDOM_CASES);
    check(&mut report, Assertion::at_most("energy conservation (relative)", energy, 1e-10), RANDOM_CASES);

    let raw = rescaled_profile(config)?;
    let eps_set = [1.0, 0.3, 0.1, 0.03, 0.01];
    let mut transfer_err = 0.0f64;
    for &eps in &eps_set {
        let k = ScaledKernel::new(&raw, eps, Variant::Rescaled, &spec.angular)?;
        transfer_err = transfer_err.max((momentum_transfer(&k, &spec.angular)? - TRANSFER).abs());
    }
    check(&mut report, Assertion::at_most("rescaled momentum transfer equals 8/π", transfer_err, 1e-6), eps_set.len());

    let raw = log_cutoff_profile(config)?;
    let log_eps = [0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-6];
    let mut distances = Vec::new();
    for &eps in &log_eps {
        let k = ScaledKernel::new(&raw, eps, Variant::CoulombLogCutoff, &spec.angular)?;
        distances.push((momentum_transfer(&k, &spec.angular)? - TRANSFER).abs());
    }
    let steps_up = distances.windows(2).filter(|w| w[1] >= w[0]).count();
    check(
        &mut report,
        Assertion::at_most("log cut-off transfer approaches 8/π monotonically (non-decreasing steps)", steps_up as f64, 0.0),
        log_eps.len(),
    );
    check(&mut report, Assertion::info("log cut-off transfer distance at ε = 1e-6", distances[distances.len() - 1]), 1);

    let mut alg = 0usize;
    for _ in 0..RANDOM_CASES {
        let a = 10f64.powf(rng.gen_range(-6.0..6.0));
        let b = 10f64.powf(rng.gen_range(-6.0..6.0));
        if !mean_order_holds(a, b)? {
            alg += 1;
        }
    }
    check(&mut report, Assertion::at_most("geometric ≤ log mean ≤ arithmetic (violations)", alg as f64, 0.0), RANDOM_CASES);

    let f = config.density()?;
    let mut lambda = 0usize;
    for _ in 0..RANDOM_CASES {
        let c = random_configuration(&mut rng, 3.0)?;
        let before = (f.log_value(&c.v) + f.log_value(&c.v_star)).exp();
        let after = (f.log_value(&c.v_post) + f.log_value(&c.v_star_post)).exp();
        if !mean_order_holds(after, before)? {
            lambda += 1;
        }
    }
    check(&mut report, Assertion::at_most("Λ(f) between geometric and arithmetic means (violations)", lambda as f64, 0.0), RANDOM_CASES);

    let kernel = config.kernel()?;
    let invariants = [
        ("1", Polynomial::constant(1.0)),
        ("v_1", Polynomial::from_terms(&[(1.0, [1, 0, 0])])),
        ("|v|^2", Polynomial::from_terms(&[(1.0, [2, 0, 0]), (1.0, [0, 2, 0]), (1.0, [0, 0, 2])])),
    ];
    for (name, poly) in invariants {
        let psi = ScalarTestFunction::polynomial(poly);
        for form in [Form::FirstOrder, Form::SecondOrder] {
            let [b, _, _] = weak_comparison(&f, &psi, &kernel, spec, form)?;
            let tol = invariant_tolerance(&b);
            check(&mut report, Assertion::at_most(format!("⟨Q_B, {name}⟩ vanishes ({})", form_name(form)), b.value.abs(), tol), b.node_count);
        }
    }

    let family = config.test_functions()?;
    let maxwellian = Density::maxwellian(1.0)?;
    for (i, psi) in &family.single {
        let [b, l, _] = weak_comparison(&maxwellian, psi, &kernel, spec, Form::FirstOrder)?;
        check(&mut report, Assertion::at_most(format!("⟨Q_B(M, M), {}⟩ vanishes", label(*i)), b.value.abs(), invariant_tolerance(&b)), b.node_count);
        check(&mut report, Assertion::at_most(format!("⟨Q_L(M, M), {}⟩ vanishes", label(*i)), l.value.abs(), invariant_tolerance(&l)), l.node_count);
    }

    for (i, psi) in &family.single {
        let [b1, l1, _] = weak_comparison(&f, psi, &kernel, spec, Form::FirstOrder)?;
        let [b2, l2, _] = weak_comparison(&f, psi, &kernel, spec, Form::SecondOrder)?;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        check(&mut report, Assertion::at_most(format!("Boltzmann forms agree on {}", label(*i)), rel(b1.value, b2.value), FORM_AGREEMENT), b1.node_count);
        check(&mut report, Assertion::at_most(format!("Landau forms agree on {}", label(*i)), rel(l1.value, l2.value), FORM_AGREEMENT), l1.node_count);
    }
    Ok(report)
}

fn form_name(form: Form) -> &'static str {
    match form {
        Form::FirstOrder => "first order",
        Form::SecondOrder => "second order",
    }
}

/// `√(ab) ≤ Λ(a, b) ≤ (a + b)/2`, strict once `a` and `b` differ beyond
/// rounding.
fn mean_order_holds(a: f64, b: f64) -> Result<bool> {
    let l = log_mean(a, b)?.value();
    let (g, m) = ((a * b).sqrt(), 0.5 * (a + b));
    let slack = 1e-12 * m;
    if (a / b - 1.0).abs() > 1e-3 {
        Ok(g < l && l < m)
    } else {
        Ok(g <= l + slack && l <= m + slack)
    }
}

fn limit_check(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(config, &["psi", "eps", "q_boltz", "q_landau", "abs_err", "err_estimate"]);
    let f = config.density()?;
    let kernel = config.kernel()?;
    let family = config.test_functions()?;
    for (i, psi) in &family.single {
        let study = grazing_limit_study(&f, psi, &kernel, &config.kernel.eps_list, &config.quadrature, config.limit.form)?;
        for (j, eps) in study.epsilons.iter().enumerate() {
            report.push_row(vec![
                label(*i).into(),
                (*eps).into(),
                study.boltzmann_values[j].into(),
                study.landau_value.into(),
                study.abs_errors[j].into(),
                study.error_estimates[j].into(),
            ]);
        }
        let steps_up = study.abs_errors.windows(2).filter(|w| w[1] >= w[0]).count();
        report.assert(Assertion::at_most(format!("{}: error strictly decreasing (non-decreasing steps)", label(*i)), steps_up as f64, 0.0));
        let order = study.fitted_order.unwrap_or(f64::NAN);
        report.assert(Assertion::at_least(format!("{}: fitted order", label(*i)), order, config.limit.min_order));
    }
    Ok(report)
}

/// Romberg extrapolation of `D_B^ε` to ε = 0 assuming an expansion in ε².
/// Returns the extrapolated value and the size of its last correction.
pub fn extrapolate_to_zero(eps: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let n = eps.len();
    if n < 3 || values.len() != n {
        return None;
    }
    let step = |i: usize, p: i32, lo: f64, hi: f64| -> f64 {
        let r = (eps[i] / eps[i + 1]).powi(p);
        hi + (hi - lo) / (r - 1.0)
    };
    let first: Vec<f64> = (0..n - 1).map(|i| step(i, 2, values[i], values[i + 1])).collect();
    let last = first[n - 2];
    let second = step(n - 2, 4, first[n - 3], last);
    Some((second, (second - last).abs()))
}

fn dissipation_study(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(
        config,
        &["eps", "D_B_eps", "D_B_R", "D_L", "affine_max", "affine_landau_max", "boltzmann_chain", "landau_chain"],
    );
    let f = config.density()?;
    let spec = &config.quadrature;
    let base = config.kernel()?;
    let family = config.test_functions()?;
    let gamma = config.kernel.gamma;

    let dl = landau_dissipation(&f, gamma, spec)?;
    let mut landau_affine = Vec::new();
    for (_, psi) in &family.pair {
        landau_affine.push(affine_landau(&f, LandauArgument::Symmetric(psi), gamma, spec)?);
    }
    for (_, xi) in &family.vector {
        landau_affine.push(affine_landau(&f, LandauArgument::AntiSymmetric(xi.as_ref()), gamma, spec)?);
    }
    let al_max = landau_affine.iter().map(|a| a.value()).fold(f64::NEG_INFINITY, f64::max);
    let al_err = landau_affine.iter().map(|a| a.error_estimate()).fold(0.0, f64::max);
    let landau_tol = 10.0 * (al_err + dl.error_estimate) + 1e-10 * dl.value.abs();
    let landau_violation = landau_affine
        .iter()
        .map(|a| (-a.value()).max(a.value() - dl.value))
        .fold(f64::NEG_INFINITY, f64::max);
    let landau_ok = landau_violation <= landau_tol;

    let eps_list = &config.kernel.eps_list;
    let (mut full, mut full_err) = (Vec::new(), Vec::new());
    for &eps in eps_list {
        let kernel = base.with_epsilon(eps)?;
        let d = boltzmann_dissipations(&f, &kernel, spec)?;
        let mut worst = f64::NEG_INFINITY;
        let (mut ab_max, mut ab_err) = (f64::NEG_INFINITY, 0.0f64);
        for (_, psi) in &family.pair {
            let a = affine_boltzmann(&f, psi, &kernel, spec)?;
            ab_max = ab_max.max(a.value());
            ab_err = ab_err.max(a.error_estimate());
            worst = worst.max((-a.value()).max(a.value() - d.reduced.value));
        }
        worst = worst.max(d.reduced.value - d.full.value);
        let tol = 10.0 * (ab_err + d.reduced.error_estimate + d.full.error_estimate) + 1e-10 * d.full.value.abs();
        report.push_row(vec![
            eps.into(),
            d.full.value.into(),
            d.reduced.value.into(),
            dl.value.into(),
            ab_max.into(),
            al_max.into(),
            (worst <= tol).into(),
            landau_ok.into(),
        ]);
        report.assert(Assertion::at_most(format!("ε = {eps}: 0 ≤ affine_B ≤ D_B^R ≤ D_B^ε (largest violation)"), worst, tol));
        full.push(d.full.value);
        full_err.push(d.full.error_estimate);
    }
    report.assert(Assertion::at_most("0 ≤ affine_L ≤ D_L (largest violation)", landau_violation, landau_tol));

    let gaps: Vec<f64> = full.iter().map(|d| (d - dl.value).abs()).collect();
    let steps_up = gaps.windows(2).filter(|w| w[1] >= w[0]).count();
    report.assert(Assertion::at_most("|D_B^ε − D_L| decreasing (non-decreasing steps)", steps_up as f64, 0.0));

    let (limit, correction) = extrapolate_to_zero(eps_list, &full).context("the sweep needs at least three values")?;
    let quad = full_err.iter().fold(0.0f64, |m, e| m.max(*e)) + dl.error_estimate;
    report.assert(Assertion::at_most(
        "extrapolated D_B^0 − D_L explained by 10 × (extrapolation + quadrature error)",
        (limit - dl.value).abs(),
        10.0 * (correction + quad),
    ));
    report.assert(Assertion::info("final gap D_B^ε − D_L", full[full.len() - 1] - dl.value));
    report.assert(Assertion::info("min over ε of D_B^ε − D_L", full.iter().map(|d| d - dl.value).fold(f64::INFINITY, f64::min)));

    if let Some((_, psi)) = family.pair.first() {
        let small: Vec<f64> = eps_list.iter().copied().filter(|e| *e <= 0.25).collect();
        let small = if small.is_empty() { vec![0.25] } else { small };
        let ratio = limit_piece_ratio(psi, &base, &small, spec)?;
        report.assert(Assertion::at_most("σ-moment residual ratio at ε/2 versus ε", ratio, LIMIT_PIECE_RATIO));
    }
    Ok(report)
}

/// Largest ratio `residual(ε/2)/residual(ε)` of both σ-moments of `∇̄ψ`
/// against their grazing limits, over random pairs inside the support.
fn limit_piece_ratio(
    psi: &grazing_core::functions::PairTestFunction,
    base: &grazing_core::kernels::CollisionKernel,
    eps_list: &[f64],
    spec: &grazing_core::quadrature::QuadratureSpec,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(7));
    let support = psi.support;
    let mut worst = 0.0f64;
    for _ in 0..LIMIT_PIECE_POINTS {
        let r = rng.gen_range(support.delta..support.outer);
        let z = r * random_unit(&mut rng);
        let y = support.y_center() + support.y_radius * rng.gen_range(0.0f64..1.0).cbrt() * random_unit(&mut rng);
        let (v, w) = (y + 0.5 * z, y - 0.5 * z);
        let t1 = 2.0 * dtilde_div_dtilde_pair(psi, &v, &w, base.gamma)?;
        let t2 = 8.0 * dtilde_pair(psi, &v, &w, base.gamma)?.norm_squared();
        let residuals = |eps: f64| -> Result<(f64, f64)> {
            let (a, b) = dbar_moments(psi, &v, &w, &base.with_epsilon(eps)?, &spec.sphere)?;
            Ok(((a - t1).abs(), (b - t2).abs()))
        };
        for &eps in eps_list {
            let (a0, b0) = residuals(eps)?;
            let (a1, b1) = residuals(0.5 * eps)?;
            for (r0, r1) in [(a0, a1), (b0, b1)] {
                if r0 > 1e-12 {
                    worst = worst.max(r1 / r0);
                }
            }
        }
    }
    Ok(worst)
}

fn random_test_function(rng: &mut ChaCha8Rng) -> Result<ScalarTestFunction> {
    let monomials = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 0, 0], [1, 1, 0], [0, 0, 2], [0, 1, 1]];
    let terms: Vec<(f64, [u32; 3])> = monomials.iter().map(|m| (rng.gen_range(-1.0..1.0), *m)).collect();
    Ok(ScalarTestFunction::gaussian_modulated(Polynomial::from_terms(&terms), rng.gen_range(2.0..4.0))?)
}

fn metric_affine(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(config, &["kind", "pair", "action", "affine", "relative_gap"]);
    let f = config.density()?;
    let spec = &config.quadrature;
    let kernel = config.kernel()?;
    let gamma = config.kernel.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(11));
    let rel = |action: f64, affine: f64| (affine - action) / action.abs().max(f64::MIN_POSITIVE);
    let n = config.metric.pairs_per_kind;

    let mut worst = f64::NEG_INFINITY;
    for j in 0..n {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rate = RateFn(move |v: &Vec3, vs: &Vec3, s: &Vec3| {
            let g = (s - (v - vs).normalize()).norm();
            g * (c[0] + c[1] * v.x + c[2] * vs.z + c[3] * s.y + c[4] * v.y * s.x + 0.1 * c[5] * vs.norm_squared())
        });
        let psi = random_test_function(&mut rng)?;
        let d = metric_affine_boltzmann(&f, &Mobility::Boltzmann(&rate), &psi, &kernel, spec)?;
        let g = rel(d.action.value, d.affine.value);
        worst = worst.max(g);
        report.push_row(vec!["boltzmann".into(), j.into(), d.action.value.into(), d.affine.value.into(), g.into()]);
    }
    report.assert(Assertion::at_most("Boltzmann: (affine − action)/action over random pairs", worst, 1e-12));

    let mut worst = f64::NEG_INFINITY;
    for j in 0..n {
        let a = Mat3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        let b = Mat3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        let s = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let flux = FluxFn(move |v: &Vec3, vs: &Vec3| a * v + b * vs + s);
        let psi = random_test_function(&mut rng)?;
        let d = metric_affine_landau(&f, &Mobility::Landau(&flux), &psi, gamma, spec)?;
        let g = rel(d.action.value, d.affine.value);
        worst = worst.max(g);
        report.push_row(vec!["landau".into(), j.into(), d.action.value.into(), d.affine.value.into(), g.into()]);
    }
    report.assert(Assertion::at_most("Landau: (affine − action)/action over random pairs", worst, 1e-12));

    let psi = random_test_function(&mut rng)?;
    let d = metric_affine_boltzmann(&f, &Mobility::Boltzmann(&GradientRate(&psi)), &psi, &kernel, spec)?;
    let g = rel(d.action.value, d.affine.value);
    report.push_row(vec!["boltzmann_gradient".into(), 0usize.into(), d.action.value.into(), d.affine.value.into(), g.into()]);
    report.assert(Assertion::at_most("Boltzmann: equality at gradient type (relative)", g.abs(), 1e-6));
    let flux = GradientFlux { psi: &psi as &dyn ScalarField, gamma };
    let d = metric_affine_landau(&f, &Mobility::Landau(&flux), &psi, gamma, spec)?;
    let g = rel(d.action.value, d.affine.value);
    report.push_row(vec!["landau_gradient".into(), 0usize.into(), d.action.value.into(), d.affine.value.into(), g.into()]);
    report.assert(Assertion::at_most("Landau: equality at gradient type (relative)", g.abs(), 1e-6));
    Ok(report)
}

fn projection(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(
        config,
        &[
            "field",
            "shells",
            "max_rhs_mean",
            "max_spectral_residual",
            "max_odd_coefficient",
            "endpoint_max",
            "norm_v2",
            "norm_grad2",
            "norm_residual2",
            "relative_defect",
            "round_trip",
        ],
    );
    let family = config.test_functions()?;
    let gamma = config.kernel.gamma;
    for (i, field) in &family.vector {
        let support = field.support().with_context(|| format!("{}: vector field without compact support", label(*i)))?;
        let grid = ShellGrid::new(&support, &config.projection)?;
        let (psi, diag) = project_vector_field(field.as_ref(), &grid, gamma, config.quadrature.execution)?;
        let round_trip = match family.gradient_source(*i, config) {
            Some(phi) => Some(gradient_round_trip_error(phi as &dyn PairField, &psi)?),
            None => None,
        };
        let n = &diag.norms;
        report.push_row(vec![
            label(*i).into(),
            diag.shells.into(),
            diag.max_rhs_mean.into(),
            diag.max_spectral_residual.into(),
            diag.max_odd_coefficient.into(),
            diag.endpoint_max.into(),
            n.norm_v2.into(),
            n.norm_grad2.into(),
            n.norm_residual2.into(),
            n.relative_defect().into(),
            round_trip.map(Cell::from).unwrap_or_else(|| Cell::from("")),
        ]);
        let name = label(*i);
        report.assert(Assertion::at_most(format!("{name}: spectral residual"), diag.max_spectral_residual, 1e-10));
        report.assert(Assertion::at_most(format!("{name}: odd-degree coefficients"), diag.max_odd_coefficient, 1e-10));
        report.assert(Assertion::at_most(format!("{name}: Pythagoras relative defect"), n.relative_defect(), 1e-6));
        report.assert(Assertion::at_most(format!("{name}: potential at the support endpoints"), diag.endpoint_max, 1e-10));
        if let Some(e) = round_trip {
            report.assert(Assertion::at_most(format!("{name}: gradient round trip"), e, 1e-6));
        }
    }
    Ok(report)
}

fn directions() -> [Vec3; 3] {
    [Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0).normalize(), Vec3::new(0.3, -0.8, 0.52).normalize()]
}

fn compactness(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(config, &["quantity", "at", "eps", "value", "bound"]);
    let c = &config.compactness;
    let spec = &config.quadrature;
    let f = config.density()?;
    let base = config.kernel()?;
    let nu = config.kernel.nu;

    let mut eps_grid = config.kernel.eps_list.clone();
    eps_grid.push(c.limit_epsilon);
    let mut s_max = 0.0f64;
    for &eps in &eps_grid {
        let kernel = base.with_epsilon(eps)?;
        for &z in &c.z_norms {
            let s = s_eps(z, &kernel, &spec.angular)?;
            s_max = s_max.max(s.abs());
            report.push_row(vec!["s_eps".into(), format!("{z}").into(), eps.into(), s.into(), S_EPS_BOUND.into()]);
        }
    }
    report.assert(Assertion::at_most("max |S^ε| on the (|z|, ε) grid", s_max, S_EPS_BOUND));

    let kernel = base.with_epsilon(c.limit_epsilon)?;
    let mut limit_err = 0.0f64;
    for &z in &c.z_norms {
        let target = 6.0 * kernel.kinetic(z);
        limit_err = limit_err.max((s_eps(z, &kernel, &spec.angular)? - target).abs() / target);
    }
    report.assert(Assertion::at_most(format!("S^ε vs 6|z|^γ at ε = {} (relative)", c.limit_epsilon), limit_err, S_EPS_LIMIT_TOL));

    let cc = cancellation_identity_check(&f, &base, &config.cancellation_spec())?;
    let eps = config.kernel.epsilon;
    for (name, r) in [("cancellation_lhs", &cc.lhs), ("cancellation_rhs", &cc.rhs), ("cancellation_rhs_exact", &cc.rhs_exact)] {
        report.push_row(vec![name.into(), "".into(), eps.into(), r.value.into(), "".into()]);
    }
    let combined = 10.0 * cc.tolerance + 1e-12 * cc.lhs.value.abs();
    report.assert(Assertion::at_most("cancellation identity gap (exact kernel)", cc.gap_exact, combined));
    if config.kernel.gamma == 0.0 {
        report.assert(Assertion::at_most("cancellation identity gap (stated kernel)", cc.gap, combined));
    } else {
        report.assert(Assertion::info("cancellation identity gap (stated kernel)", cc.gap));
    }
    let mass2 = f.mass() * f.mass();
    report.assert(Assertion::at_most("|cancellation lhs| / (12 mass²)", cc.lhs.value.abs() / (S_EPS_BOUND * mass2), 1.0));

    let xis: Vec<Vec3> = c.xi_norms.iter().flat_map(|r| directions().map(|d| *r * d)).collect();
    if nu < 2.0 {
        let constant = average_bound_constant(config.c1()?, nu)?;
        let mut margin = f64::INFINITY;
        for &e in &config.kernel.eps_list {
            let k = base.angular.with_epsilon(e)?;
            for xi in &xis {
                let (lhs, _) = fourier_avg_lower_bound(xi, &k, &spec.angular)?;
                let rhs = constant * seminorm_weight(xi.norm(), nu);
                margin = margin.min(lhs - rhs);
                report.push_row(vec!["fourier_avg".into(), format!("{}", xi.norm()).into(), e.into(), lhs.into(), rhs.into()]);
            }
        }
        report.assert(Assertion::at_least("min of fourier average lhs − rhs", margin, 0.0));
    } else {
        report.assert(Assertion::info("fourier average bound skipped for the logarithmic cut-off", f64::NAN));
    }

    for (name, density) in [("config density", f.clone()), ("Maxwellian", Density::maxwellian(1.0)?)] {
        let floor = fitted_positivity_constant(&density, &xis);
        report.push_row(vec!["positivity_floor".into(), name.into(), "".into(), floor.into(), "".into()]);
        report.assert(Assertion::at_least(format!("fitted positivity floor ({name})"), floor, f64::MIN_POSITIVE));
    }

    let f_r = CutoffDensity::new(f.clone(), c.cutoff_radius)?;
    let seminorm = weighted_seminorm(&f_r, nu, &c.fourier_grid)?;
    let mut dissipations = Vec::new();
    for &e in &config.kernel.eps_list {
        let d = boltzmann_dissipations(&f, &base.with_epsilon(e)?, spec)?.full.value;
        let ratio = seminorm / (d + 1.0);
        report.push_row(vec!["seminorm_ratio".into(), format!("{}", c.cutoff_radius).into(), e.into(), ratio.into(), d.into()]);
        dissipations.push(d);
    }
    let ratios: Vec<f64> = dissipations.iter().map(|d| seminorm / (d + 1.0)).collect();
    let spread = ratios.iter().fold(0.0f64, |m, r| m.max(*r)) / ratios.iter().fold(f64::INFINITY, |m, r| m.min(*r));
    report.assert(Assertion::info("weighted seminorm of √f χ_R", seminorm));
    report.assert(Assertion::info("fitted C_R", fitted_seminorm_constant(seminorm, &dissipations)));
    report.assert(Assertion::at_most("spread of seminorm/(D_B^ε + 1) along the sweep", spread, SEMINORM_SPREAD));
    report.assert(Assertion::info("truncation constant", truncation_constant(&f, &base.angular, &spec.angular)?));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_removes_even_terms() {
        let eps = [1.0f64, 0.5, 0.25, 0.125];
        let values: Vec<f64> = eps.iter().map(|&e| 3.0 - 0.7 * e * e + 0.2 * e.powi(4) + 0.05 * e.powi(6)).collect();
        let (limit, correction) = extrapolate_to_zero(&eps, &values).unwrap();
        assert!((limit - 3.0).abs() < 2e-5, "{limit}");
        assert!(correction < 1e-3);
        assert!(extrapolate_to_zero(&eps[..2], &values[..2]).is_none());
    }

    #[test]
    fn mean_order_examples() {
        assert!(mean_order_holds(1.0, 4.0).unwrap());
        assert!(mean_order_holds(2.0, 2.0).unwrap());
        assert!(mean_order_holds(1e-6, 1e6).unwrap());
    }

    #[test]
    fn projection_experiment_passes_at_defaults() {
        let config = RunConfig { experiment: Experiment::Projection, ..RunConfig::default() };
        let report = run(&config).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    }
}
