//! JSON scene description consumed by the CLI and the calibration
//! pipeline. Field names carry explicit units to prevent unit drift.
//!
//! ```json
//! {
//!   "pad": {
//!     "preset": "12x32",
//!     "pose": { "rotation_wxyz": [1, 0, 0, 0], "translation_m": [0, 0, 0] }
//!   },
//!   "shapes": [
//!     { "kind": "sphere", "center_m": [0.001, 0.001, 0.021],
//!       "radius_m": 0.02, "velocity_mps": [0, 0, -0.01] }
//!   ],
//!   "contact": { "k_n": 400.0, "k_d": 2.0, "counts_per_newton": 400.0,
//!                "noise_floor_counts": 50.0, "noise_sigma_counts": 0.0 },
//!   "dt_s": 0.01,
//!   "steps": 100
//! }
//! ```

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pad::{
    ConfigRegistry, GridConfig, NormalizationRule, PadGeometry, RigidTransform, TactileFrame,
};
use crate::wire::nominal_timestamp_ms;

use super::{
    sample_depths, samples_to_counts, step, ContactParams, SdfGeometry, SdfScene, SdfShape,
    TaxelContactSample,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSpec {
    pub rotation_wxyz: [f64; 4],
    pub translation_m: [f64; 3],
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self { rotation_wxyz: [1.0, 0.0, 0.0, 0.0], translation_m: [0.0, 0.0, 0.0] }
    }
}

impl PoseSpec {
    pub fn resolve(&self) -> Result<RigidTransform> {
        RigidTransform::from_quaternion_wxyz(
            self.rotation_wxyz,
            Vector3::from(self.translation_m),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PadSpec {
    /// Preset name, e.g. "12x32".
    pub preset: String,
    #[serde(default)]
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Plane {
        normal: [f64; 3],
        offset_m: f64,
        #[serde(default)]
        velocity_mps: [f64; 3],
    },
    Sphere {
        center_m: [f64; 3],
        radius_m: f64,
        #[serde(default)]
        velocity_mps: [f64; 3],
    },
    Box {
        center_m: [f64; 3],
        half_extents_m: [f64; 3],
        #[serde(default = "identity_wxyz")]
        rotation_wxyz: [f64; 4],
        #[serde(default)]
        velocity_mps: [f64; 3],
    },
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl ShapeSpec {
    fn resolve(&self, index: usize) -> Result<SdfShape> {
        let located = |e: Error| Error::Scene(format!("shapes[{index}]: {e}"));
        match self {
            ShapeSpec::Plane { normal, offset_m, velocity_mps } => SdfShape::new(
                SdfGeometry::Plane { normal: Vector3::from(*normal), offset: *offset_m },
                Vector3::from(*velocity_mps),
            )
            .map_err(located),
            ShapeSpec::Sphere { center_m, radius_m, velocity_mps } => SdfShape::new(
                SdfGeometry::Sphere { center: Vector3::from(*center_m), radius: *radius_m },
                Vector3::from(*velocity_mps),
            )
            .map_err(located),
            ShapeSpec::Box { center_m, half_extents_m, rotation_wxyz, velocity_mps } => {
                let pose = RigidTransform::from_quaternion_wxyz(
                    *rotation_wxyz,
                    Vector3::zeros(),
                )
                .map_err(located)?;
                SdfShape::new(
                    SdfGeometry::Box {
                        center: Vector3::from(*center_m),
                        half_extents: Vector3::from(*half_extents_m),
                        rotation: *pose.rotation(),
                    },
                    Vector3::from(*velocity_mps),
                )
                .map_err(|e| Error::Scene(format!("shapes[{index}]: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub noise_floor_counts: u16,
    pub full_scale_counts: u16,
}

/// Top-level scene file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub pad: PadSpec,
    pub shapes: Vec<ShapeSpec>,
    pub contact: ContactParams,
    /// Physics step, seconds.
    pub dt_s: f64,
    /// Number of steps (= frames) to simulate.
    pub steps: u64,
    /// Normalization shared between real and simulated streams.
    /// Defaults to (noise_floor_counts, ADC max).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationSpec>,
}

impl SceneSpec {
    /// Parse from JSON text. Parse failures carry serde's line/column
    /// diagnostics.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scene(format!("parse: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    /// Validate against a registry and build the runtime scene.
    pub fn resolve(&self, registry: &ConfigRegistry) -> Result<ResolvedScene> {
        let (config_id, grid) = registry.by_name(&self.pad.preset).ok_or_else(|| {
            Error::Scene(format!(
                "pad.preset: unknown preset {:?} (known: {})",
                self.pad.preset,
                registry
                    .iter()
                    .map(|(_, c)| c.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        let pose = self
            .pad
            .pose
            .resolve()
            .map_err(|e| Error::Scene(format!("pad.pose: {e}")))?;
        let shapes = self
            .shapes
            .iter()
            .enumerate()
            .map(|(i, s)| s.resolve(i))
            .collect::<Result<Vec<_>>>()?;
        self.contact
            .validate()
            .map_err(|e| Error::Scene(format!("contact: {e}")))?;
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::Scene(format!(
                "dt_s must be positive and finite, got {}",
                self.dt_s
            )));
        }
        let rule = match &self.normalization {
            Some(n) => NormalizationRule::new(n.noise_floor_counts, n.full_scale_counts)
                .map_err(|e| Error::Scene(format!("normalization: {e}")))?,
            None => {
                let floor = self.contact.noise_floor_counts.round().clamp(0.0, u16::MAX as f64)
                    as u16;
                NormalizationRule::new(floor, grid.max_count())
                    .map_err(|e| Error::Scene(format!("normalization default: {e}")))?
            }
        };
        rule.validate_for(grid)
            .map_err(|e| Error::Scene(format!("normalization: {e}")))?;

        Ok(ResolvedScene {
            config_id,
            grid: grid.clone(),
            pad: PadGeometry::new(grid.clone(), pose),
            initial_scene: SdfScene::new(shapes),
            params: self.contact,
            dt: self.dt_s,
            steps: self.steps,
            rule,
        })
    }
}

/// A validated scene ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedScene {
    pub config_id: u8,
    pub grid: GridConfig,
    pub pad: PadGeometry,
    pub initial_scene: SdfScene,
    pub params: ContactParams,
    pub dt: f64,
    pub steps: u64,
    pub rule: NormalizationRule,
}

/// Frames plus the raw per-step samples behind them.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub frames: Vec<TactileFrame>,
    pub per_step: Vec<Vec<TaxelContactSample>>,
}

impl ResolvedScene {
    /// Run the scene from its initial state.
    ///
    /// `kelvin_voigt` overrides the scene's (k_n, k_d) when given; the
    /// count response and noise settings always come from the scene.
    /// One ChaCha stream seeded with `seed` drives all noise, so a run
    /// is bitwise reproducible.
    pub fn run(&self, kelvin_voigt: Option<(f64, f64)>, seed: u64) -> Result<SimOutput> {
        let params = match kelvin_voigt {
            Some((k_n, k_d)) => self.params.with_kelvin_voigt(k_n, k_d),
            None => self.params,
        };
        params.validate()?;

        let mut scene = self.initial_scene.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = std::time::Duration::from_secs_f64(self.dt);
        let mut prev: Option<Vec<f64>> = None;
        let mut frames = Vec::with_capacity(self.steps as usize);
        let mut per_step = Vec::with_capacity(self.steps as usize);

        for k in 0..self.steps {
            let samples = step(&mut scene, &self.pad, &params, self.dt, prev.as_deref())?;
            let noise = (params.noise_sigma_counts > 0.0).then_some(&mut rng);
            let values = samples_to_counts(&samples, &params, &self.grid, noise)?;
            frames.push(TactileFrame::new(
                self.config_id,
                k as u16,
                nominal_timestamp_ms(period, k),
                values,
                &self.grid,
            )?);
            prev = Some(sample_depths(&samples));
            per_step.push(samples);
        }

        Ok(SimOutput { frames, per_step })
    }

    /// Per-step (depth, depth_rate) at one taxel; the load schedule the
    /// scene kinematics impose there. Independent of (k_n, k_d).
    pub fn replay_taxel_loads(&self, row: usize, col: usize) -> Result<Vec<(f64, f64)>> {
        let index = crate::wire::scan_payload_index(&self.grid, row, col)?;
        let output = self.run(None, 0)?;
        Ok(output
            .per_step
            .iter()
            .map(|samples| (samples[index].depth, samples[index].depth_rate))
            .collect())
    }
}
