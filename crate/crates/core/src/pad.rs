//! Pad geometry, frame data, and the normalization rule shared between
//! simulated and real signal paths.
//!
//! Conventions fixed here and relied on everywhere else:
//! - pad-local frame: origin at the grid center, x along columns,
//!   y along rows, z is the contact normal;
//! - taxel values are stored and transmitted in row-major order
//!   (index = row * cols + col).

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ADC resolution in bits (Arduino Nano class MCU).
pub const DEFAULT_ADC_BITS: u8 = 10;

/// Default taxel pitch in meters (2 mm).
pub const DEFAULT_PITCH_M: f64 = 0.002;

/// One pad variant: electrode grid dimensions, taxel pitch, ADC depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Horizontal electrode lines (y direction).
    rows: usize,
    /// Vertical electrode lines (x direction).
    cols: usize,
    /// Distance between adjacent taxel centers, meters.
    pitch: f64,
    /// ADC resolution in bits, 1..=16.
    adc_bits: u8,
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize, pitch: f64, adc_bits: u8) -> Result<Self> {
        if rows < 1 || cols < 1 {
            return Err(Error::InvalidConfig(format!(
                "grid must have at least one row and one column, got {rows}x{cols}"
            )));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "pitch must be a positive finite length, got {pitch}"
            )));
        }
        if !(1..=16).contains(&adc_bits) {
            return Err(Error::InvalidConfig(format!(
                "adc_bits must be in 1..=16, got {adc_bits}"
            )));
        }
        Ok(Self { rows, cols, pitch, adc_bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn adc_bits(&self) -> u8 {
        self.adc_bits
    }

    pub fn taxel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Largest representable raw count, `2^adc_bits - 1`.
    pub fn max_count(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    /// Name of the form "RxC", e.g. "12x32".
    pub fn name(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Maps wire-protocol config ids to grid configs.
///
/// The standard registry carries the four built-in pad presets; tests and
/// custom deployments may register additional ids.
#[derive(Debug, Clone)]
pub struct ConfigRegistry {
    entries: Vec<(u8, GridConfig)>,
}

impl ConfigRegistry {
    /// Empty registry with no known ids.
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Built-in presets: 12x32 (id 0), 8x16 (id 1), 16x16 (id 2),
    /// 32x32 (id 3), all with 2 mm pitch and 10-bit ADC.
    pub fn standard() -> Self {
        let preset = |rows, cols| {
            GridConfig::new(rows, cols, DEFAULT_PITCH_M, DEFAULT_ADC_BITS)
                .expect("preset dimensions are valid")
        };
        Self {
            entries: vec![
                (0, preset(12, 32)),
                (1, preset(8, 16)),
                (2, preset(16, 16)),
                (3, preset(32, 32)),
            ],
        }
    }

    /// Register (or replace) a config under an id.
    pub fn insert(&mut self, config_id: u8, config: GridConfig) {
        if let Some(slot) = self.entries.iter_mut().find(|(id, _)| *id == config_id) {
            slot.1 = config;
        } else {
            self.entries.push((config_id, config));
        }
    }

    pub fn get(&self, config_id: u8) -> Option<&GridConfig> {
        self.entries.iter().find(|(id, _)| *id == config_id).map(|(_, c)| c)
    }

    /// Look up by "RxC" name, e.g. "12x32".
    pub fn by_name(&self, name: &str) -> Option<(u8, &GridConfig)> {
        self.entries
            .iter()
            .find(|(_, c)| c.name() == name)
            .map(|(id, c)| (*id, c))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &GridConfig)> {
        self.entries.iter().map(|(id, c)| (*id, c))
    }
}

impl Default for ConfigRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

const ROTATION_TOL: f64 = 1e-9;

/// Proper rigid transform: orthonormal rotation plus translation, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates that `rotation` is orthonormal with determinant +1
    /// (both within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        validate_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    /// Build from a wxyz quaternion (normalized here) and a translation.
    pub fn from_quaternion_wxyz(wxyz: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let [w, x, y, z] = wxyz;
        let q = Quaternion::new(w, x, y, z);
        if q.norm() < 1e-12 || !q.norm().is_finite() {
            return Err(Error::InvalidConfig(
                "quaternion must be nonzero and finite".into(),
            ));
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Ok(Self { rotation: *rotation.matrix(), translation })
    }

    pub fn translation_only(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Apply to a point: `R p + t`.
    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// `self ∘ inner`: the transform that applies `inner` first, then `self`.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }
}

pub(crate) fn validate_rotation(rotation: &Matrix3<f64>) -> Result<()> {
    let gram = rotation.transpose() * rotation;
    let defect = (gram - Matrix3::identity()).abs().max();
    if defect > ROTATION_TOL {
        return Err(Error::InvalidConfig(format!(
            "rotation is not orthonormal (defect {defect:.3e})"
        )));
    }
    let det = rotation.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::InvalidConfig(format!(
            "rotation determinant must be +1, got {det:.12}"
        )));
    }
    Ok(())
}

/// A pad variant placed in the world: grid plus pad-to-world pose.
#[derive(Debug, Clone)]
pub struct PadGeometry {
    pub grid: GridConfig,
    pub pose: RigidTransform,
}

impl PadGeometry {
    pub fn new(grid: GridConfig, pose: RigidTransform) -> Self {
        Self { grid, pose }
    }

    pub fn at_identity(grid: GridConfig) -> Self {
        Self { grid, pose: RigidTransform::identity() }
    }
}

/// Pad-local position of one taxel, meters.
///
/// The grid is centered on the origin in the z = 0 plane:
/// x = (col - (cols-1)/2) * pitch, y = (row - (rows-1)/2) * pitch.
pub fn taxel_local_position(grid: &GridConfig, row: usize, col: usize) -> Result<Vector3<f64>> {
    if row >= grid.rows() || col >= grid.cols() {
        return Err(Error::IndexOutOfRange(format!(
            "taxel ({row},{col}) outside {} grid",
            grid.name()
        )));
    }
    let x = (col as f64 - (grid.cols() as f64 - 1.0) / 2.0) * grid.pitch();
    let y = (row as f64 - (grid.rows() as f64 - 1.0) / 2.0) * grid.pitch();
    Ok(Vector3::new(x, y, 0.0))
}

/// All pad-local taxel positions in row-major order.
pub fn taxel_local_positions(grid: &GridConfig) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(grid.taxel_count());
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            out.push(taxel_local_position(grid, row, col).expect("indices in range"));
        }
    }
    out
}

/// World positions of every taxel in row-major order:
/// element k = pose.rotation * local(k) + pose.translation.
pub fn taxel_world_positions(pad: &PadGeometry) -> Vec<Vector3<f64>> {
    taxel_local_positions(&pad.grid)
        .iter()
        .map(|p| pad.pose.apply(p))
        .collect()
}

/// One scan of raw ADC counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TactileFrame {
    /// Wire-protocol config id naming the pad variant.
    pub config_id: u8,
    /// Wrap-around scan counter.
    pub sequence: u16,
    /// Device-nominal milliseconds since stream start.
    pub timestamp_ms: u32,
    /// Raw counts, row-major, length rows * cols.
    pub values: Vec<u16>,
}

impl TactileFrame {
    /// Validates length and ADC range against `config`.
    pub fn new(
        config_id: u8,
        sequence: u16,
        timestamp_ms: u32,
        values: Vec<u16>,
        config: &GridConfig,
    ) -> Result<Self> {
        if values.len() != config.taxel_count() {
            return Err(Error::ContractViolation(format!(
                "frame carries {} values but {} grid has {} taxels",
                values.len(),
                config.name(),
                config.taxel_count()
            )));
        }
        let max = config.max_count();
        if let Some(v) = values.iter().find(|v| **v > max) {
            return Err(Error::ContractViolation(format!(
                "value {v} exceeds {}-bit ADC max {max}",
                config.adc_bits()
            )));
        }
        Ok(Self { config_id, sequence, timestamp_ms, values })
    }
}

/// Linear normalization with a noise-floor threshold and hard clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRule {
    /// Raw counts at or below this map to 0.
    noise_floor: u16,
    /// Raw counts at or above this map to 1.
    full_scale: u16,
}

impl NormalizationRule {
    pub fn new(noise_floor: u16, full_scale: u16) -> Result<Self> {
        if noise_floor >= full_scale {
            return Err(Error::InvalidConfig(format!(
                "noise_floor ({noise_floor}) must be below full_scale ({full_scale})"
            )));
        }
        Ok(Self { noise_floor, full_scale })
    }

    /// Full range of the given grid's ADC with no noise floor.
    pub fn full_range(grid: &GridConfig) -> Self {
        Self { noise_floor: 0, full_scale: grid.max_count() }
    }

    pub fn noise_floor(&self) -> u16 {
        self.noise_floor
    }

    pub fn full_scale(&self) -> u16 {
        self.full_scale
    }

    /// Check the rule fits within the grid's ADC range.
    pub fn validate_for(&self, grid: &GridConfig) -> Result<()> {
        if self.full_scale > grid.max_count() {
            return Err(Error::InvalidConfig(format!(
                "full_scale {} exceeds {}-bit ADC max {}",
                self.full_scale,
                grid.adc_bits(),
                grid.max_count()
            )));
        }
        Ok(())
    }

    /// clamp((v - noise_floor) / (full_scale - noise_floor), 0, 1)
    pub fn normalize(&self, value: u16) -> f64 {
        let span = (self.full_scale - self.noise_floor) as f64;
        let x = (value as f64 - self.noise_floor as f64) / span;
        x.clamp(0.0, 1.0)
    }
}

/// Normalize every value of a frame with the shared rule.
pub fn normalize_frame(
    frame: &TactileFrame,
    rule: &NormalizationRule,
    config: &GridConfig,
) -> Result<Vec<f64>> {
    rule.validate_for(config)?;
    if frame.values.len() != config.taxel_count() {
        return Err(Error::ContractViolation(format!(
            "frame length {} does not match {} grid",
            frame.values.len(),
            config.name()
        )));
    }
    Ok(frame.values.iter().map(|&v| rule.normalize(v)).collect())
}
