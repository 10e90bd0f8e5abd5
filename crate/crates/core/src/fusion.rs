//! 3D visuo-tactile point fusion.
//!
//! Tactile frames are lifted into world-space points (taxel position via
//! the pad pose, normalized reading as the magnitude feature) and merged
//! with visual points into one modality-tagged set.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pad::{
    normalize_frame, taxel_world_positions, NormalizationRule, PadGeometry, TactileFrame,
};

/// Which sensing stream a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Tactile,
}

/// One fused point: position, scalar feature in [0, 1], modality tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPoint {
    pub position: Vector3<f64>,
    pub magnitude: f64,
    pub modality: Modality,
}

impl FusedPoint {
    pub fn new(position: Vector3<f64>, magnitude: f64, modality: Modality) -> Result<Self> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(Error::ContractViolation(format!(
                "magnitude must be in [0, 1], got {magnitude}"
            )));
        }
        Ok(Self { position, magnitude, modality })
    }
}

/// Merged point set with per-modality counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPointSet {
    points: Vec<FusedPoint>,
    vision_count: usize,
    tactile_count: usize,
}

impl FusedPointSet {
    pub fn points(&self) -> &[FusedPoint] {
        &self.points
    }

    pub fn vision_count(&self) -> usize {
        self.vision_count
    }

    pub fn tactile_count(&self) -> usize {
        self.tactile_count
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Split back into (vision, tactile) lists, preserving order.
    pub fn partition(&self) -> (Vec<FusedPoint>, Vec<FusedPoint>) {
        self.points
            .iter()
            .cloned()
            .partition(|p| p.modality == Modality::Vision)
    }
}

/// Lift a tactile frame into world-space tactile points.
///
/// One point per taxel whose normalized magnitude is at least
/// `drop_below` (0 keeps every taxel), in row-major taxel order.
pub fn lift_tactile(
    frame: &TactileFrame,
    pad: &PadGeometry,
    rule: &NormalizationRule,
    drop_below: f64,
) -> Result<Vec<FusedPoint>> {
    if frame.values.len() != pad.grid.taxel_count() {
        return Err(Error::ContractViolation(format!(
            "frame carries {} values but pad grid {} has {} taxels",
            frame.values.len(),
            pad.grid.name(),
            pad.grid.taxel_count()
        )));
    }
    if !(0.0..=1.0).contains(&drop_below) {
        return Err(Error::ContractViolation(format!(
            "drop_below must be in [0, 1], got {drop_below}"
        )));
    }
    let magnitudes = normalize_frame(frame, rule, &pad.grid)?;
    let positions = taxel_world_positions(pad);
    Ok(magnitudes
        .into_iter()
        .zip(positions)
        .filter(|(m, _)| *m >= drop_below)
        .map(|(magnitude, position)| FusedPoint {
            position,
            magnitude,
            modality: Modality::Tactile,
        })
        .collect())
}

/// Concatenate visual then tactile points into one set. No deduplication;
/// every input point appears exactly once. Tags must match the argument
/// roles.
pub fn merge(visual: Vec<FusedPoint>, tactile: Vec<FusedPoint>) -> Result<FusedPointSet> {
    if let Some(p) = visual.iter().find(|p| p.modality != Modality::Vision) {
        return Err(Error::ContractViolation(format!(
            "visual input contains a {:?} point",
            p.modality
        )));
    }
    if let Some(p) = tactile.iter().find(|p| p.modality != Modality::Tactile) {
        return Err(Error::ContractViolation(format!(
            "tactile input contains a {:?} point",
            p.modality
        )));
    }
    let vision_count = visual.len();
    let tactile_count = tactile.len();
    let mut points = visual;
    points.extend(tactile);
    Ok(FusedPointSet { points, vision_count, tactile_count })
}

#[derive(Debug, Serialize, Deserialize)]
struct VisualRow {
    x_m: f64,
    y_m: f64,
    z_m: f64,
    feature: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FusedRow {
    x_m: f64,
    y_m: f64,
    z_m: f64,
    magnitude: f64,
    modality: Modality,
}

/// Read a visual point file: CSV with columns x_m, y_m, z_m, feature.
pub fn read_visual_csv<R: std::io::Read>(reader: R) -> Result<Vec<FusedPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize::<VisualRow>() {
        let row = row?;
        out.push(FusedPoint::new(
            Vector3::new(row.x_m, row.y_m, row.z_m),
            row.feature,
            Modality::Vision,
        )?);
    }
    Ok(out)
}

/// Write a fused set: CSV with columns x_m, y_m, z_m, magnitude, modality.
pub fn write_fused_csv<W: std::io::Write>(writer: W, set: &FusedPointSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in set.points() {
        w.serialize(FusedRow {
            x_m: p.position.x,
            y_m: p.position.y,
            z_m: p.position.z,
            magnitude: p.magnitude,
            modality: p.modality,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read a fused CSV back into a point set (counts recomputed).
pub fn read_fused_csv<R: std::io::Read>(reader: R) -> Result<FusedPointSet> {
    let mut r = csv::Reader::from_reader(reader);
    let mut points = Vec::new();
    let mut vision_count = 0;
    let mut tactile_count = 0;
    for row in r.deserialize::<FusedRow>() {
        let row = row?;
        match row.modality {
            Modality::Vision => vision_count += 1,
            Modality::Tactile => tactile_count += 1,
        }
        points.push(FusedPoint::new(
            Vector3::new(row.x_m, row.y_m, row.z_m),
            row.magnitude,
            row.modality,
        )?);
    }
    Ok(FusedPointSet { points, vision_count, tactile_count })
}
