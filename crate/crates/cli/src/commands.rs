//! Command implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use flexitac_core::calib::{calibrate_pipeline, PipelineOptions};
use flexitac_core::fusion::{lift_tactile, merge, read_visual_csv, write_fused_csv};
use flexitac_core::pad::{
    ConfigRegistry, GridConfig, NormalizationRule, PadGeometry, RigidTransform, TactileFrame,
};
use flexitac_core::sim::{sample_depths, samples_to_counts, step, SceneSpec, SdfScene};
use flexitac_core::wire::{encode_frame, run_device, DecoderState, DeviceConfig};
use flexitac_core::Error as CoreError;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{write_atomic, RunManifest};
use crate::Command;

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs or configuration; exit code 3.
    Validation(String),
    /// I/O or transport failure; exit code 4.
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn parse_taxel(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| format!("expected R,C but got {s:?}"))?;
    let row = r.trim().parse().map_err(|e| format!("row: {e}"))?;
    let col = c.trim().parse().map_err(|e| format!("col: {e}"))?;
    Ok((row, col))
}

fn parse_pose(s: &str) -> CliResult<RigidTransform> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(format!("--pose: {e}")))?;
    if parts.len() != 7 {
        return Err(CliError::Validation(format!(
            "--pose needs 7 numbers w,x,y,z,tx,ty,tz, got {}",
            parts.len()
        )));
    }
    RigidTransform::from_quaternion_wxyz(
        [parts[0], parts[1], parts[2], parts[3]],
        Vector3::new(parts[4], parts[5], parts[6]),
    )
    .map_err(CliError::from)
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_scene(path: &Path, registry: &ConfigRegistry) -> CliResult<flexitac_core::sim::ResolvedScene> {
    let text = read_to_string(path)?;
    let spec = SceneSpec::from_json(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    spec.resolve(registry)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { scene, out, seed } => simulate(&scene, &out, seed),
        Command::Stream { scene, rate_hz, frames, out, non_realtime, seed } => {
            stream(&scene, rate_hz, frames, &out, non_realtime, seed)
        }
        Command::Replay { log } => replay(&log),
        Command::Calibrate { log, scene, taxel, out, seed, bins, dump_curve } => {
            calibrate(&log, &scene, taxel, &out, seed, bins, dump_curve.as_deref())
        }
        Command::Fuse {
            log,
            visual,
            out,
            pose,
            pad,
            frame_index,
            drop_below,
            noise_floor,
            full_scale,
        } => fuse(
            &log,
            &visual,
            &out,
            pose.as_deref(),
            pad.as_deref(),
            frame_index,
            drop_below,
            noise_floor,
            full_scale,
        ),
        Command::Stats { log, pad } => stats(&log, pad.as_deref()),
    }
}

fn simulate(scene_path: &Path, out: &Path, seed: u64) -> CliResult<()> {
    let registry = ConfigRegistry::standard();
    let scene = load_scene(scene_path, &registry)?;
    let output = scene.run(None, seed)?;

    let mut log = Vec::new();
    let mut run_max_force: f64 = 0.0;
    for (k, (frame, samples)) in output.frames.iter().zip(&output.per_step).enumerate() {
        log.extend(encode_frame(frame, &registry)?);
        let contacting = samples.iter().filter(|s| s.force_n > 0.0).count();
        let max_force = samples.iter().map(|s| s.force_n).fold(0.0, f64::max);
        run_max_force = run_max_force.max(max_force);
        println!("step {k:>5}: contacting {contacting:>4} taxels, max force {max_force:.4} N");
    }
    write_atomic(out, &log)?;

    let mut manifest = RunManifest::new("simulate", Some(seed));
    manifest.add_input(scene_path)?;
    manifest.add_output(out)?;
    let manifest_path = manifest.write_adjacent(out)?;

    println!(
        "wrote {} frames ({} bytes) to {}; run max force {run_max_force:.4} N",
        output.frames.len(),
        log.len(),
        out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

/// Steps the scene once per emitted frame; dt is the frame period.
struct SceneStreamer {
    scene: SdfScene,
    pad: PadGeometry,
    params: flexitac_core::sim::ContactParams,
    grid: GridConfig,
    dt: f64,
    prev: Option<Vec<f64>>,
    rng: ChaCha8Rng,
    failure: Option<CoreError>,
}

impl SceneStreamer {
    fn values(&mut self) -> Vec<u16> {
        match self.try_values() {
            Ok(v) => v,
            Err(e) => {
                // Returning an empty payload makes the device stop with an
                // encoding error; the stored failure is reported instead.
                self.failure = Some(e);
                Vec::new()
            }
        }
    }

    fn try_values(&mut self) -> flexitac_core::Result<Vec<u16>> {
        let samples = step(&mut self.scene, &self.pad, &self.params, self.dt, self.prev.as_deref())?;
        let noise = (self.params.noise_sigma_counts > 0.0).then_some(&mut self.rng);
        let values = samples_to_counts(&samples, &self.params, &self.grid, noise)?;
        self.prev = Some(sample_depths(&samples));
        Ok(values)
    }
}

enum Sink {
    File(std::fs::File, PathBuf),
    Tcp(std::net::TcpStream),
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        match self {
            Sink::File(f, _) => f.write(buf),
            Sink::Tcp(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self {
            Sink::File(f, _) => f.flush(),
            Sink::Tcp(s) => s.flush(),
        }
    }
}

fn stream(
    scene_path: &Path,
    rate_hz: f64,
    frames: u64,
    out: &str,
    non_realtime: bool,
    seed: u64,
) -> CliResult<()> {
    let registry = ConfigRegistry::standard();
    let scene = load_scene(scene_path, &registry)?;
    let mut device = DeviceConfig::at_rate_hz(scene.config_id, rate_hz)?;
    device.realtime = !non_realtime;

    let mut streamer = SceneStreamer {
        scene: scene.initial_scene.clone(),
        pad: scene.pad.clone(),
        params: scene.params,
        grid: scene.grid.clone(),
        dt: device.period.as_secs_f64(),
        prev: None,
        rng: ChaCha8Rng::seed_from_u64(seed),
        failure: None,
    };

    let mut sink = if let Some(addr) = out.strip_prefix("tcp://") {
        Sink::Tcp(
            std::net::TcpStream::connect(addr)
                .map_err(|e| CliError::Runtime(format!("connect {addr}: {e}")))?,
        )
    } else {
        let path = PathBuf::from(out);
        Sink::File(
            std::fs::File::create(&path)
                .map_err(|e| CliError::Runtime(format!("{out}: {e}")))?,
            path,
        )
    };

    let result = run_device(&device, &registry, |_| streamer.values(), frames, &mut sink);
    let stats = match (result, streamer.failure) {
        (_, Some(sim_error)) => return Err(sim_error.into()),
        (Err(e), None) => return Err(e.into()),
        (Ok(stats), None) => stats,
    };

    println!(
        "streamed {} frames ({} bytes) to {out}",
        stats.frames_emitted, stats.bytes_written
    );
    match stats.timing {
        Some(timing) => {
            let mean_ms = timing.mean_period_s().unwrap_or(0.0) * 1e3;
            let jitter_ms = timing.jitter_stddev_s().unwrap_or(0.0) * 1e3;
            println!(
                "mode: real-time at {rate_hz} Hz; mean period {mean_ms:.4} ms, \
                 jitter (stddev) {jitter_ms:.4} ms"
            );
        }
        None => println!("mode: non-realtime at nominal {rate_hz} Hz"),
    }

    if let Sink::File(file, path) = sink {
        drop(file);
        let mut manifest = RunManifest::new("stream", Some(seed));
        manifest.add_input(scene_path)?;
        manifest.add_output(&path)?;
        let manifest_path = manifest.write_adjacent(&path)?;
        println!("manifest: {}", manifest_path.display());
    }
    Ok(())
}

fn replay(log_path: &Path) -> CliResult<()> {
    let bytes = read_bytes(log_path)?;
    let registry = ConfigRegistry::standard();
    let mut decoder = DecoderState::new(registry.clone());
    let frames = decoder.feed(&bytes);
    let stats = decoder.stats();

    let mut by_config: Vec<(String, usize)> = Vec::new();
    let mut sequence_gaps = 0u64;
    for pair in frames.windows(2) {
        if pair[1].sequence != pair[0].sequence.wrapping_add(1) {
            sequence_gaps += 1;
        }
    }
    for frame in &frames {
        let name = registry
            .get(frame.config_id)
            .map(|c| c.name())
            .unwrap_or_else(|| format!("id{}", frame.config_id));
        match by_config.iter_mut().find(|(n, _)| *n == name) {
            Some((_, count)) => *count += 1,
            None => by_config.push((name, 1)),
        }
    }

    println!("log: {}", log_path.display());
    println!("bytes: {}", bytes.len());
    println!("frames_ok: {}", stats.frames_ok);
    println!("frames_corrupt: {}", stats.frames_corrupt);
    println!("bytes_discarded: {}", stats.bytes_discarded);
    println!("pending_bytes: {}", decoder.pending_bytes());
    println!("sequence_gaps: {sequence_gaps}");
    for (name, count) in by_config {
        println!("config {name}: {count} frames");
    }
    if let (Some(first), Some(last)) = (frames.first(), frames.last()) {
        println!(
            "timestamps_ms: {} .. {} (span {})",
            first.timestamp_ms,
            last.timestamp_ms,
            last.timestamp_ms.wrapping_sub(first.timestamp_ms)
        );
    }
    Ok(())
}

fn calibrate(
    log_path: &Path,
    scene_path: &Path,
    taxel: (usize, usize),
    out: &Path,
    seed: u64,
    bins: usize,
    dump_curve: Option<&Path>,
) -> CliResult<()> {
    let registry = ConfigRegistry::standard();
    let scene = load_scene(scene_path, &registry)?;
    let log = read_bytes(log_path)?;

    let opts = PipelineOptions { taxel, bins, floor_cut: None, seed };
    let report = calibrate_pipeline(&log, &scene, &opts, &scene.rule)?;

    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_atomic(out, text.as_bytes())?;

    let mut manifest = RunManifest::new("calibrate", Some(seed));
    manifest.add_input(log_path)?;
    manifest.add_input(scene_path)?;
    manifest.add_output(out)?;

    if let Some(curve_path) = dump_curve {
        let mut buf = Vec::new();
        flexitac_core::calib::write_samples_csv(&mut buf, &report.curve)?;
        write_atomic(curve_path, &buf)?;
        manifest.add_output(curve_path)?;
        println!("curve: {}", curve_path.display());
    }

    let manifest_path = manifest.write_adjacent(out)?;
    println!(
        "fit: k_n {:.6} N/m, k_d {:.6} N·s/m, residual rms {:.4} counts, {} solve(s)",
        report.k_n, report.k_d, report.residual_rms, report.iterations
    );
    println!(
        "overlap: before {:.4}, after {:.4}",
        report.overlap_before, report.overlap_after
    );
    println!(
        "decoder: {} ok, {} corrupt, {} bytes discarded",
        report.frames_ok, report.frames_corrupt, report.bytes_discarded
    );
    if report.degenerate {
        println!("warning: no rate excitation; k_d is unidentified and reported as 0");
    }
    if report.k_n_clamped {
        println!("warning: unconstrained k_n was negative; clamped to 0");
    }
    println!("report: {}", out.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn decode_uniform_log(
    bytes: &[u8],
    registry: &ConfigRegistry,
    expect_preset: Option<&str>,
) -> CliResult<(Vec<TactileFrame>, GridConfig, u8)> {
    let mut decoder = DecoderState::new(registry.clone());
    let frames = decoder.feed(bytes);
    let stats = decoder.stats();
    let Some(first) = frames.first() else {
        return Err(CliError::Validation(format!(
            "log decodes to no frames ({} corrupt candidates)",
            stats.frames_corrupt
        )));
    };
    let config_id = first.config_id;
    if frames.iter().any(|f| f.config_id != config_id) {
        return Err(CliError::Validation(
            "log mixes pad configs; per-config processing is not supported here".into(),
        ));
    }
    let grid = registry
        .get(config_id)
        .expect("decoded frames always reference a registered config")
        .clone();
    if let Some(preset) = expect_preset {
        let Some((expected_id, _)) = registry.by_name(preset) else {
            return Err(CliError::Validation(format!("unknown pad preset {preset:?}")));
        };
        if expected_id != config_id {
            return Err(CliError::Validation(format!(
                "log carries {} frames (config_id {config_id}) but --pad {preset} \
                 (config_id {expected_id}) was requested",
                grid.name()
            )));
        }
    }
    Ok((frames, grid, config_id))
}

#[allow(clippy::too_many_arguments)]
fn fuse(
    log_path: &Path,
    visual_path: &Path,
    out: &Path,
    pose: Option<&str>,
    pad_preset: Option<&str>,
    frame_index: Option<usize>,
    drop_below: f64,
    noise_floor: u16,
    full_scale: Option<u16>,
) -> CliResult<()> {
    let registry = ConfigRegistry::standard();
    let log = read_bytes(log_path)?;
    let (frames, grid, _) = decode_uniform_log(&log, &registry, pad_preset)?;

    let pose = match pose {
        Some(s) => parse_pose(s)?,
        None => RigidTransform::identity(),
    };
    let pad = PadGeometry::new(grid.clone(), pose);
    let rule = NormalizationRule::new(noise_floor, full_scale.unwrap_or(grid.max_count()))?;
    rule.validate_for(&grid)?;

    let visual_text = read_bytes(visual_path)?;
    let visual = read_visual_csv(visual_text.as_slice())?;

    let mut manifest = RunManifest::new("fuse", None);
    manifest.add_input(log_path)?;
    manifest.add_input(visual_path)?;

    let selected: Vec<(usize, &TactileFrame)> = match frame_index {
        Some(i) => {
            let frame = frames.get(i).ok_or_else(|| {
                CliError::Validation(format!(
                    "--frame-index {i} out of range; log has {} frames",
                    frames.len()
                ))
            })?;
            vec![(i, frame)]
        }
        None => frames.iter().enumerate().collect(),
    };
    let single = frame_index.is_some();

    for (i, frame) in selected {
        let tactile = lift_tactile(frame, &pad, &rule, drop_below)?;
        let set = merge(visual.clone(), tactile)?;
        let path = if single { out.to_path_buf() } else { indexed_path(out, i) };
        let mut buf = Vec::new();
        write_fused_csv(&mut buf, &set)?;
        write_atomic(&path, &buf)?;
        manifest.add_output(&path)?;
        println!(
            "frame {i}: {} visual + {} tactile = {} points -> {}",
            set.vision_count(),
            set.tactile_count(),
            set.len(),
            path.display()
        );
    }

    let manifest_path = manifest.write_adjacent(out)?;
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn indexed_path(out: &Path, index: usize) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{index:05}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index:05}"),
    };
    out.with_file_name(name)
}

fn stats(log_path: &Path, pad_preset: Option<&str>) -> CliResult<()> {
    let registry = ConfigRegistry::standard();
    let log = read_bytes(log_path)?;
    let (frames, grid, _) = decode_uniform_log(&log, &registry, pad_preset)?;

    let n = grid.taxel_count();
    let mut min = vec![u16::MAX; n];
    let mut max = vec![0u16; n];
    let mut sum = vec![0u64; n];
    for frame in &frames {
        for (k, &v) in frame.values.iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
            sum[k] += v as u64;
        }
    }

    println!(
        "log: {} ({} frames, {} grid)",
        log_path.display(),
        frames.len(),
        grid.name()
    );
    println!("row col   min   max      mean");
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            let k = row * grid.cols() + col;
            let mean = sum[k] as f64 / frames.len() as f64;
            println!("{row:>3} {col:>3} {:>5} {:>5} {mean:>9.3}", min[k], max[k]);
        }
    }
    Ok(())
}
