//! Collision geometry: post-collision velocities, the spherical
//! parametrization of σ about the relative direction, and the projector onto
//! the plane orthogonal to the relative velocity.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit vectors are accepted as-is within this distance of norm one.
pub const UNIT_TOL: f64 = 1e-12;
/// Vectors within this distance of norm one are renormalized.
pub const RENORM_TOL: f64 = 1e-9;

/// Checks a unit-vector precondition, renormalizing small drift.
pub fn unit(v: Vec3) -> Result<Vec3> {
    let norm = v.norm();
    let drift = (norm - 1.0).abs();
    if drift <= UNIT_TOL {
        Ok(v)
    } else if drift <= RENORM_TOL {
        Ok(v / norm)
    } else {
        Err(Error::NotUnit { norm })
    }
}

/// Post-collision pair `v' = y + |x|σ`, `v'_* = y − |x|σ`.
pub fn post_collision(v: &Vec3, v_star: &Vec3, sigma: &Vec3) -> Result<(Vec3, Vec3)> {
    let sigma = unit(*sigma)?;
    let z = v - v_star;
    let half = 0.5 * z.norm();
    if half == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    let y = 0.5 * (v + v_star);
    Ok((y + half * sigma, y - half * sigma))
}

/// Deterministic orthonormal pair `(h, i)` spanning the plane orthogonal to
/// the unit vector `k`: the standard basis vector least aligned with `k` is
/// orthogonalized against it, and `i = k × h`.
pub fn orthonormal_frame(k: &Vec3) -> (Vec3, Vec3) {
    let mut axis = 0;
    for j in 1..3 {
        if k[j].abs() < k[axis].abs() {
            axis = j;
        }
    }
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let h = (e - k[axis] * k).normalize();
    let i = k.cross(&h);
    (h, i)
}

/// `σ = cos θ k + sin θ p` with `p = cos φ h + sin φ i`. Returns `(σ, p)`.
pub fn sigma_from_angles(k: &Vec3, theta: f64, phi: f64) -> Result<(Vec3, Vec3)> {
    let k = unit(*k)?;
    if !(0.0..=PI / 2.0).contains(&theta) || !phi.is_finite() {
        return Err(Error::AngleOutOfDomain);
    }
    let (h, i) = orthonormal_frame(&k);
    let p = phi.cos() * h + phi.sin() * i;
    Ok((theta.cos() * k + theta.sin() * p, p))
}

/// Orthogonal projector `I − ẑ ⊗ ẑ` onto the plane orthogonal to its axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector {
    matrix: Mat3,
    axis: Vec3,
}

impl Projector {
    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    /// Unit axis of the projector.
    pub fn axis(&self) -> &Vec3 {
        &self.axis
    }

    pub fn apply(&self, u: &Vec3) -> Vec3 {
        u - self.axis * self.axis.dot(u)
    }
}

pub fn projector(z: &Vec3) -> Result<Projector> {
    let norm = z.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::UndefinedProjector);
    }
    let axis = z / norm;
    Ok(Projector { matrix: Mat3::identity() - axis * axis.transpose(), axis })
}

/// Uniform-node quadrature of `∫ p ⊗ p dp` over the unit circle orthogonal
/// to `k`. The integrand is a degree-two trigonometric polynomial, so four
/// or more nodes give `π Π[k]` up to roundoff.
pub fn circle_average_pp(k: &Vec3, n_nodes: usize) -> Result<Mat3> {
    if n_nodes < 4 {
        return Err(Error::InsufficientNodes);
    }
    let k = unit(*k)?;
    let (h, i) = orthonormal_frame(&k);
    let weight = 2.0 * PI / n_nodes as f64;
    let mut acc = Mat3::zeros();
    for j in 0..n_nodes {
        let phi = weight * j as f64;
        let p = phi.cos() * h + phi.sin() * i;
        acc += weight * p * p.transpose();
    }
    Ok(acc)
}

/// Everything attached to a pre-collision pair that does not depend on σ:
/// Bobylev coordinates `x = (v − v_*)/2`, `y = (v + v_*)/2`, the relative
/// direction `k` and its frame `(h, i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionFrame {
    pub v: Vec3,
    pub v_star: Vec3,
    pub x: Vec3,
    pub y: Vec3,
    pub x_norm: f64,
    pub k: Vec3,
    pub h: Vec3,
    pub i: Vec3,
}

impl CollisionFrame {
    pub fn new(v: &Vec3, v_star: &Vec3) -> Result<Self> {
        let x = 0.5 * (v - v_star);
        let x_norm = x.norm();
        if x_norm == 0.0 || !x_norm.is_finite() {
            return Err(Error::ZeroRelativeVelocity);
        }
        let k = x / x_norm;
        let (h, i) = orthonormal_frame(&k);
        Ok(CollisionFrame { v: *v, v_star: *v_star, x, y: 0.5 * (v + v_star), x_norm, k, h, i })
    }

    /// `|v − v_*|`.
    pub fn z_norm(&self) -> f64 {
        2.0 * self.x_norm
    }

    pub fn z(&self) -> Vec3 {
        2.0 * self.x
    }

    /// `(σ, p)` from precomputed trigonometric values of θ and φ.
    #[inline]
    pub fn direction(&self, cos_t: f64, sin_t: f64, cos_p: f64, sin_p: f64) -> (Vec3, Vec3) {
        let p = cos_p * self.h + sin_p * self.i;
        (cos_t * self.k + sin_t * p, p)
    }

    /// Post-collision pair for a unit σ.
    #[inline]
    pub fn post(&self, sigma: &Vec3) -> (Vec3, Vec3) {
        let shift = self.x_norm * sigma;
        (self.y + shift, self.y - shift)
    }
}

/// A fully resolved collision: pre/post velocities, angles and frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionConfiguration {
    pub v: Vec3,
    pub v_star: Vec3,
    pub sigma: Vec3,
    pub k: Vec3,
    pub p: Vec3,
    pub theta: f64,
    pub phi: f64,
    pub v_post: Vec3,
    pub v_star_post: Vec3,
    pub x: Vec3,
    pub y: Vec3,
}

impl CollisionConfiguration {
    /// Builds the configuration with θ ∈ [0, π/2] and φ taken modulo 2π.
    pub fn from_angles(v: &Vec3, v_star: &Vec3, theta: f64, phi: f64) -> Result<Self> {
        let frame = CollisionFrame::new(v, v_star)?;
        if !(0.0..=PI / 2.0).contains(&theta) || !phi.is_finite() {
            return Err(Error::AngleOutOfDomain);
        }
        let phi = phi.rem_euclid(2.0 * PI);
        let (sigma, p) = frame.direction(theta.cos(), theta.sin(), phi.cos(), phi.sin());
        let (v_post, v_star_post) = frame.post(&sigma);
        Ok(CollisionConfiguration {
            v: *v,
            v_star: *v_star,
            sigma,
            k: frame.k,
            p,
            theta,
            phi,
            v_post,
            v_star_post,
            x: frame.x,
            y: frame.y,
        })
    }

    /// Recovers (θ, φ) from a unit σ in the hemisphere `k·σ ≥ 0`.
    pub fn from_sigma(v: &Vec3, v_star: &Vec3, sigma: &Vec3) -> Result<Self> {
        let frame = CollisionFrame::new(v, v_star)?;
        let sigma = unit(*sigma)?;
        let cos_t = frame.k.dot(&sigma).clamp(-1.0, 1.0);
        if cos_t < 0.0 {
            return Err(Error::AngleOutOfDomain);
        }
        let theta = cos_t.acos();
        let tangential = sigma - cos_t * frame.k;
        let phi = if tangential.norm() > 0.0 {
            tangential.dot(&frame.i).atan2(tangential.dot(&frame.h)).rem_euclid(2.0 * PI)
        } else {
            0.0
        };
        let (v_post, v_star_post) = frame.post(&sigma);
        let p = phi.cos() * frame.h + phi.sin() * frame.i;
        Ok(CollisionConfiguration {
            v: *v,
            v_star: *v_star,
            sigma,
            k: frame.k,
            p,
            theta,
            phi,
            v_post,
            v_star_post,
            x: frame.x,
            y: frame.y,
        })
    }
}
