//! Desk-scale tactile contact simulation.
//!
//! Shapes are analytic signed distance fields translating at constant
//! velocity. Each step advances the scene, queries per-taxel penetration
//! depth and its finite-difference rate, and applies a Kelvin-Voigt
//! penalty force (linear spring plus viscous damper, clamped at zero —
//! no tension, no shear).

mod scene;

pub use scene::{ResolvedScene, SceneSpec, SimOutput};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pad::{taxel_world_positions, GridConfig, PadGeometry, TactileFrame};

const UNIT_TOL: f64 = 1e-9;

/// Analytic signed-distance primitive, dimensions in meters.
#[derive(Debug, Clone)]
pub enum SdfGeometry {
    /// Half-space: sdf(p) = dot(normal, p) - offset.
    Plane { normal: Vector3<f64>, offset: f64 },
    /// sdf(p) = |p - center| - radius.
    Sphere { center: Vector3<f64>, radius: f64 },
    /// Oriented box: exact distance outside, negative max-component inside.
    Box {
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
        rotation: Matrix3<f64>,
    },
}

/// A primitive moving with constant translational velocity.
#[derive(Debug, Clone)]
pub struct SdfShape {
    geometry: SdfGeometry,
    /// Rigid translation velocity, meters/second.
    pub velocity: Vector3<f64>,
}

impl SdfShape {
    pub fn new(geometry: SdfGeometry, velocity: Vector3<f64>) -> Result<Self> {
        match &geometry {
            SdfGeometry::Plane { normal, .. } => {
                if (normal.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "plane normal must be unit length, |n| = {}",
                        normal.norm()
                    )));
                }
            }
            SdfGeometry::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
            SdfGeometry::Box { half_extents, rotation, .. } => {
                if !(half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "box half-extents must be positive, got {half_extents:?}"
                    )));
                }
                crate::pad::validate_rotation(rotation)?;
            }
        }
        Ok(Self { geometry, velocity })
    }

    pub fn geometry(&self) -> &SdfGeometry {
        &self.geometry
    }

    /// Signed distance from `point` to this shape; negative inside.
    pub fn sdf(&self, point: &Vector3<f64>) -> f64 {
        match &self.geometry {
            SdfGeometry::Plane { normal, offset } => normal.dot(point) - offset,
            SdfGeometry::Sphere { center, radius } => (point - center).norm() - radius,
            SdfGeometry::Box { center, half_extents, rotation } => {
                let local = rotation.transpose() * (point - center);
                let q = local.abs() - half_extents;
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
        }
    }

    /// Translate by velocity * dt.
    pub fn advance(&mut self, dt: f64) {
        let delta = self.velocity * dt;
        match &mut self.geometry {
            SdfGeometry::Plane { normal, offset } => *offset += normal.dot(&delta),
            SdfGeometry::Sphere { center, .. } => *center += delta,
            SdfGeometry::Box { center, .. } => *center += delta,
        }
    }
}

/// Ordered collection of shapes; the scene SDF is the minimum over
/// shape SDFs (+infinity for an empty scene).
#[derive(Debug, Clone, Default)]
pub struct SdfScene {
    pub shapes: Vec<SdfShape>,
}

impl SdfScene {
    pub fn new(shapes: Vec<SdfShape>) -> Self {
        Self { shapes }
    }

    pub fn sdf(&self, point: &Vector3<f64>) -> f64 {
        self.shapes
            .iter()
            .map(|s| s.sdf(point))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn advance(&mut self, dt: f64) {
        for shape in &mut self.shapes {
            shape.advance(dt);
        }
    }
}

/// Scene signed distance at a point (module-level convenience).
pub fn sdf_eval(scene: &SdfScene, point: &Vector3<f64>) -> f64 {
    scene.sdf(point)
}

/// max(0, -sdf): how far the point sits inside the scene.
pub fn penetration_depth(scene: &SdfScene, point: &Vector3<f64>) -> f64 {
    (-scene.sdf(point)).max(0.0)
}

/// Kelvin-Voigt contact parameters plus the linear count response that
/// maps force to raw ADC counts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContactParams {
    /// Normal stiffness, N/m.
    pub k_n: f64,
    /// Normal damping, N·s/m.
    pub k_d: f64,
    /// Count gain, counts per newton.
    pub counts_per_newton: f64,
    /// Baseline counts at zero force.
    pub noise_floor_counts: f64,
    /// Gaussian noise standard deviation in counts; 0 disables noise.
    pub noise_sigma_counts: f64,
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_n >= 0.0) || !(self.k_d >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stiffness and damping must be non-negative, got k_n={}, k_d={}",
                self.k_n, self.k_d
            )));
        }
        if !(self.counts_per_newton > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "counts_per_newton must be positive, got {}",
                self.counts_per_newton
            )));
        }
        if !(self.noise_sigma_counts >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma_counts must be non-negative, got {}",
                self.noise_sigma_counts
            )));
        }
        Ok(())
    }

    pub fn with_kelvin_voigt(&self, k_n: f64, k_d: f64) -> Self {
        Self { k_n, k_d, ..*self }
    }
}

/// One taxel's contact state for one step. Normal channel only; the
/// type has no tangential component by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaxelContactSample {
    /// Penetration depth, meters, >= 0.
    pub depth: f64,
    /// Penetration rate, meters/second; positive while approaching.
    pub depth_rate: f64,
    /// Normal force, newtons, >= 0.
    pub force_n: f64,
}

impl TaxelContactSample {
    pub const ZERO: Self = Self { depth: 0.0, depth_rate: 0.0, force_n: 0.0 };
}

/// Kelvin-Voigt penalty force: max(0, k_n*depth + k_d*depth_rate),
/// identically zero out of contact.
pub fn kelvin_voigt_force(params: &ContactParams, depth: f64, depth_rate: f64) -> Result<f64> {
    if depth < 0.0 {
        return Err(Error::ContractViolation(format!(
            "penetration depth must be non-negative, got {depth}"
        )));
    }
    if depth == 0.0 {
        return Ok(0.0);
    }
    Ok((params.k_n * depth + params.k_d * depth_rate).max(0.0))
}

/// Advance the scene by one step of `dt` seconds and sample every taxel.
///
/// `previous_depths` (row-major, from the prior step) feeds the
/// finite-difference depth rate; without it all rates are zero.
pub fn step(
    scene: &mut SdfScene,
    pad: &PadGeometry,
    params: &ContactParams,
    dt: f64,
    previous_depths: Option<&[f64]>,
) -> Result<Vec<TaxelContactSample>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::ContractViolation(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let taxel_count = pad.grid.taxel_count();
    if let Some(prev) = previous_depths {
        if prev.len() != taxel_count {
            return Err(Error::ContractViolation(format!(
                "previous_depths has {} entries, grid has {taxel_count} taxels",
                prev.len()
            )));
        }
    }
    params.validate()?;

    scene.advance(dt);
    let mut samples = Vec::with_capacity(taxel_count);
    for (k, point) in taxel_world_positions(pad).iter().enumerate() {
        let depth = penetration_depth(scene, point);
        let depth_rate = match previous_depths {
            Some(prev) => (depth - prev[k]) / dt,
            None => 0.0,
        };
        let force_n = kelvin_voigt_force(params, depth, depth_rate)?;
        samples.push(TaxelContactSample { depth, depth_rate, force_n });
    }
    Ok(samples)
}

/// Depths of a sample array, for feeding the next step.
pub fn sample_depths(samples: &[TaxelContactSample]) -> Vec<f64> {
    samples.iter().map(|s| s.depth).collect()
}

/// Map forces to raw counts:
/// clamp(round(gain*force + floor + N(0, sigma)), 0, 2^bits - 1).
pub fn samples_to_counts(
    samples: &[TaxelContactSample],
    params: &ContactParams,
    config: &GridConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<u16>> {
    if samples.len() != config.taxel_count() {
        return Err(Error::ContractViolation(format!(
            "{} samples for a {} grid with {} taxels",
            samples.len(),
            config.name(),
            config.taxel_count()
        )));
    }
    params.validate()?;

    let max = config.max_count() as f64;
    let mut noise: Option<(&mut ChaCha8Rng, Normal<f64>)> =
        if params.noise_sigma_counts > 0.0 {
            let rng = rng.ok_or_else(|| {
                Error::ContractViolation(
                    "noise_sigma_counts > 0 requires an rng".into(),
                )
            })?;
            let dist = Normal::new(0.0, params.noise_sigma_counts)
                .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
            Some((rng, dist))
        } else {
            None
        };

    Ok(samples
        .iter()
        .map(|s| {
            let mut raw = params.counts_per_newton * s.force_n + params.noise_floor_counts;
            if let Some((rng, dist)) = noise.as_mut() {
                raw += dist.sample(rng);
            }
            raw.round().clamp(0.0, max) as u16
        })
        .collect())
}

/// Package a step's samples as a wire-compatible frame. With
/// `noise_sigma_counts > 0` the result is deterministic for a fixed
/// `rng_seed`; with sigma 0 it is exactly deterministic.
#[allow(clippy::too_many_arguments)]
pub fn samples_to_frame(
    samples: &[TaxelContactSample],
    params: &ContactParams,
    config_id: u8,
    config: &GridConfig,
    sequence: u16,
    timestamp_ms: u32,
    rng_seed: Option<u64>,
) -> Result<TactileFrame> {
    let mut seeded;
    let rng = if params.noise_sigma_counts > 0.0 {
        seeded = match rng_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        Some(&mut seeded)
    } else {
        None
    };
    let values = samples_to_counts(samples, params, config, rng)?;
    TactileFrame::new(config_id, sequence, timestamp_ms, values, config)
}
