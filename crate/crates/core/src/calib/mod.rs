//! Kelvin-Voigt parameter fitting and histogram-based distribution
//! alignment.
//!
//! The count model is linear in (k_n, k_d):
//!
//! ```text
//! counts(d, d_rate) = gain * max(0, k_n*d + k_d*d_rate) + floor
//! ```
//!
//! so the mismatch minimizer is a closed-form 2-column least-squares
//! solve. Samples driven negative by the clamp are excluded and the
//! solve repeated until the active set is stable.

mod pipeline;

pub use pipeline::{calibrate_pipeline, PipelineOptions, PipelineReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ContactParams;

/// One measured point of a force-response curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    /// Penetration depth, meters.
    pub depth_m: f64,
    /// Penetration rate, meters/second.
    pub depth_rate_mps: f64,
    /// Sensor reading in raw ADC counts (fractional values allowed for
    /// synthetic curves).
    pub reading_counts: f64,
}

/// Where a curve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    Real,
    Simulated,
}

/// Force-response curve of one taxel.
#[derive(Debug, Clone)]
pub struct ForceResponseCurve {
    samples: Vec<CurveSample>,
    pub taxel: (usize, usize),
    pub source: CurveSource,
}

impl ForceResponseCurve {
    pub fn new(
        samples: Vec<CurveSample>,
        taxel: (usize, usize),
        source: CurveSource,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::ContractViolation(format!(
                "a curve needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.depth_m >= 0.0) || !s.depth_m.is_finite() {
                return Err(Error::ContractViolation(format!(
                    "samples[{i}]: depth must be non-negative and finite, got {}",
                    s.depth_m
                )));
            }
            if !s.depth_rate_mps.is_finite() || !s.reading_counts.is_finite() {
                return Err(Error::ContractViolation(format!(
                    "samples[{i}]: rate and reading must be finite"
                )));
            }
        }
        Ok(Self { samples, taxel, source })
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    /// Write as CSV with header depth_m,depth_rate_mps,reading_counts.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_samples_csv(writer, &self.samples)
    }

    /// Read from CSV (header row required).
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        taxel: (usize, usize),
        source: CurveSource,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let samples = r
            .deserialize::<CurveSample>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, taxel, source)
    }
}

/// Write curve samples as CSV with the standard header.
pub fn write_samples_csv<W: std::io::Write>(writer: W, samples: &[CurveSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Count response of the sensor with (k_n, k_d) factored out.
#[derive(Debug, Clone, Copy)]
pub struct ResponseModel {
    pub counts_per_newton: f64,
    pub noise_floor_counts: f64,
}

impl From<&ContactParams> for ResponseModel {
    fn from(p: &ContactParams) -> Self {
        Self {
            counts_per_newton: p.counts_per_newton,
            noise_floor_counts: p.noise_floor_counts,
        }
    }
}

/// Result of a Kelvin-Voigt fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CalibrationResult {
    /// Fitted normal stiffness, N/m; clamped at 0 if the unconstrained
    /// solution was negative.
    pub k_n: f64,
    /// Fitted normal damping, N·s/m; 0 when the system is degenerate.
    pub k_d: f64,
    /// RMS count residual of the clamped model over all samples.
    pub residual_rms: f64,
    /// Number of least-squares solves (active-set refinements).
    pub iterations: u32,
    /// Set when k_d was unidentifiable (no rate excitation).
    pub degenerate: bool,
    /// Set when the unconstrained k_n was negative and clamped.
    pub k_n_clamped: bool,
}

const MAX_SOLVES: u32 = 32;

/// Fit (k_n, k_d) to a curve by least squares on count residuals.
///
/// Samples at zero depth are constant under the model and never enter
/// the solve; samples the clamp would zero at the current solution are
/// excluded and the solve repeated until the active set is stable.
pub fn fit_kelvin_voigt(
    curve: &ForceResponseCurve,
    response: &ResponseModel,
) -> Result<CalibrationResult> {
    if !(response.counts_per_newton > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "counts_per_newton must be positive, got {}",
            response.counts_per_newton
        )));
    }

    // (depth, rate, target force in newtons) for samples with excitation.
    let usable: Vec<(f64, f64, f64)> = curve
        .samples()
        .iter()
        .filter(|s| s.depth_m > 0.0)
        .map(|s| {
            let z = (s.reading_counts - response.noise_floor_counts)
                / response.counts_per_newton;
            (s.depth_m, s.depth_rate_mps, z)
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Unidentifiable(
            "every sample has zero depth; no excitation to fit".into(),
        ));
    }

    let mut active: Vec<usize> = (0..usable.len()).collect();
    let mut iterations = 0u32;
    let mut k_n;
    let mut k_d;
    let mut degenerate;

    loop {
        iterations += 1;
        (k_n, k_d, degenerate) = solve_normal_equations(&usable, &active)?;

        let next: Vec<usize> = (0..usable.len())
            .filter(|&i| {
                let (d, r, _) = usable[i];
                k_n * d + k_d * r >= 0.0
            })
            .collect();
        // An empty next set means the best clamped model is zero force
        // everywhere; keep the current solution and let the k_n clamp
        // below flag it.
        if next.is_empty() || next == active || iterations >= MAX_SOLVES {
            break;
        }
        active = next;
    }

    let mut k_n_clamped = false;
    if k_n < 0.0 {
        k_n = 0.0;
        k_n_clamped = true;
    }

    let params = ContactParams {
        k_n,
        k_d,
        counts_per_newton: response.counts_per_newton,
        noise_floor_counts: response.noise_floor_counts,
        noise_sigma_counts: 0.0,
    };
    let sq_sum: f64 = curve
        .samples()
        .iter()
        .map(|s| {
            let force = if s.depth_m > 0.0 {
                (k_n * s.depth_m + k_d * s.depth_rate_mps).max(0.0)
            } else {
                0.0
            };
            let predicted = params.counts_per_newton * force + params.noise_floor_counts;
            (predicted - s.reading_counts).powi(2)
        })
        .sum();
    let residual_rms = (sq_sum / curve.samples().len() as f64).sqrt();

    Ok(CalibrationResult { k_n, k_d, residual_rms, iterations, degenerate, k_n_clamped })
}

/// Solve the 2x2 normal equations over the active subset. Falls back to
/// the spring-only fit (k_d = 0, degenerate) when the rate column gives
/// the system no second direction.
fn solve_normal_equations(
    usable: &[(f64, f64, f64)],
    active: &[usize],
) -> Result<(f64, f64, bool)> {
    let mut s_dd = 0.0;
    let mut s_dr = 0.0;
    let mut s_rr = 0.0;
    let mut b_d = 0.0;
    let mut b_r = 0.0;
    for &i in active {
        let (d, r, z) = usable[i];
        s_dd += d * d;
        s_dr += d * r;
        s_rr += r * r;
        b_d += d * z;
        b_r += r * z;
    }
    if s_dd == 0.0 {
        return Err(Error::Unidentifiable(
            "active samples have zero depth excitation".into(),
        ));
    }

    let det = s_dd * s_rr - s_dr * s_dr;
    if s_rr == 0.0 || det <= 1e-12 * s_dd * s_rr {
        // Rank 1: spring-only fit.
        return Ok((b_d / s_dd, 0.0, true));
    }
    let k_n = (s_rr * b_d - s_dr * b_r) / det;
    let k_d = (s_dd * b_r - s_dr * b_d) / det;
    Ok((k_n, k_d, false))
}

/// Normalized histogram over uniform bins spanning [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    masses: Vec<f64>,
}

impl Histogram {
    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// True when no value survived the floor cut.
    pub fn is_empty(&self) -> bool {
        self.masses.iter().all(|m| *m == 0.0)
    }
}

/// Bin normalized readings into a unit-mass histogram, dropping values
/// below `floor_cut` first (contact signal, not silence).
pub fn histogram(values: &[f64], bins: usize, floor_cut: f64) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::ContractViolation(format!(
            "histogram input {v} outside [0, 1]"
        )));
    }

    let bin_edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for &v in values.iter().filter(|v| **v >= floor_cut) {
        let idx = ((v * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
        total += 1;
    }

    let masses = if total == 0 {
        vec![0.0; bins] // empty-histogram sentinel
    } else {
        counts.iter().map(|c| *c as f64 / total as f64).collect()
    };
    Ok(Histogram { bin_edges, masses })
}

/// Histogram intersection: sum of per-bin minima, in [0, 1].
pub fn histogram_intersection(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.bin_edges != b.bin_edges {
        return Err(Error::ContractViolation(
            "histogram intersection requires identical bin edges".into(),
        ));
    }
    Ok(a.masses
        .iter()
        .zip(&b.masses)
        .map(|(x, y)| x.min(*y))
        .sum())
}
