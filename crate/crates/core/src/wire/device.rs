//! Virtual readout device: emits encoded frames at a fixed rate.
//!
//! Timestamps are device-nominal (cumulative multiples of the period),
//! never host wall-clock, so real-time and non-realtime runs produce
//! identical bytes.

use std::io::Write;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::pad::{ConfigRegistry, TactileFrame};

use super::encode_frame;

/// Virtual device settings.
#[derive(Debug, Clone)]
pub struct DeviceConfig {
    /// Config id of the pad the device scans.
    pub config_id: u8,
    /// Inter-frame period; 10 ms for the nominal 100 Hz stream.
    pub period: Duration,
    /// Pace emissions against the wall clock. When false, frames are
    /// written back-to-back with identical bytes.
    pub realtime: bool,
    /// Sequence number of the first frame.
    pub start_sequence: u16,
}

impl DeviceConfig {
    pub fn at_rate_hz(config_id: u8, rate_hz: f64) -> Result<Self> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rate must be positive and finite, got {rate_hz}"
            )));
        }
        Ok(Self {
            config_id,
            period: Duration::from_secs_f64(1.0 / rate_hz),
            realtime: true,
            start_sequence: 0,
        })
    }
}

/// Wall-clock emission record of a real-time run.
#[derive(Debug, Clone)]
pub struct TimingStats {
    /// Seconds from run start to each frame's write completion.
    pub offsets_s: Vec<f64>,
}

impl TimingStats {
    /// Mean inter-frame period over the whole run.
    pub fn mean_period_s(&self) -> Option<f64> {
        let n = self.offsets_s.len();
        if n < 2 {
            return None;
        }
        Some((self.offsets_s[n - 1] - self.offsets_s[0]) / (n - 1) as f64)
    }

    /// Sample standard deviation of inter-frame periods.
    pub fn jitter_stddev_s(&self) -> Option<f64> {
        let periods = self.periods_s();
        if periods.len() < 2 {
            return None;
        }
        let mean = periods.iter().sum::<f64>() / periods.len() as f64;
        let var = periods.iter().map(|p| (p - mean).powi(2)).sum::<f64>()
            / (periods.len() - 1) as f64;
        Some(var.sqrt())
    }

    /// Min and max of the mean period over every sliding window of
    /// `window` consecutive periods.
    pub fn window_mean_extrema_s(&self, window: usize) -> Option<(f64, f64)> {
        if window == 0 || self.offsets_s.len() < window + 1 {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for start in 0..=(self.offsets_s.len() - 1 - window) {
            let mean = (self.offsets_s[start + window] - self.offsets_s[start]) / window as f64;
            lo = lo.min(mean);
            hi = hi.max(mean);
        }
        Some((lo, hi))
    }

    fn periods_s(&self) -> Vec<f64> {
        self.offsets_s.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Result of a device run.
#[derive(Debug, Clone)]
pub struct StreamStats {
    pub frames_emitted: u64,
    pub bytes_written: u64,
    /// Present only for real-time runs.
    pub timing: Option<TimingStats>,
}

/// Device-nominal timestamp of frame `k`: floor(k * period) in ms.
pub(crate) fn nominal_timestamp_ms(period: Duration, k: u64) -> u32 {
    ((period.as_nanos() * k as u128) / 1_000_000) as u32
}

/// Run the virtual device: emit `frame_count` encoded frames to `sink`,
/// one per period, sequence wrapping at 16 bits.
///
/// `source` supplies the raw payload values for step k. A sink write
/// failure stops the device with a transport error.
pub fn run_device<W, F>(
    device: &DeviceConfig,
    registry: &ConfigRegistry,
    mut source: F,
    frame_count: u64,
    sink: &mut W,
) -> Result<StreamStats>
where
    W: Write,
    F: FnMut(u64) -> Vec<u16>,
{
    if device.period.is_zero() {
        return Err(Error::InvalidConfig("device period must be positive".into()));
    }
    let config = registry.get(device.config_id).ok_or_else(|| {
        Error::InvalidConfig(format!("unknown config_id {}", device.config_id))
    })?;

    let start = Instant::now();
    let mut offsets = device.realtime.then(|| Vec::with_capacity(frame_count as usize));
    let mut bytes_written = 0u64;

    for k in 0..frame_count {
        let frame = TactileFrame::new(
            device.config_id,
            device.start_sequence.wrapping_add(k as u16),
            nominal_timestamp_ms(device.period, k),
            source(k),
            config,
        )?;
        let bytes = encode_frame(&frame, registry)?;

        if device.realtime {
            let deadline = start
                + Duration::from_nanos((device.period.as_nanos() * k as u128) as u64);
            loop {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                std::thread::sleep(deadline - now);
            }
        }
        sink.write_all(&bytes)?;
        bytes_written += bytes.len() as u64;
        if let Some(offsets) = offsets.as_mut() {
            offsets.push(start.elapsed().as_secs_f64());
        }
    }
    sink.flush()?;

    Ok(StreamStats {
        frames_emitted: frame_count,
        bytes_written,
        timing: offsets.map(|offsets_s| TimingStats { offsets_s }),
    })
}

/// In-memory ordered, lossless byte channel for device/decoder loopback.
pub fn loopback() -> (LoopbackSender, LoopbackReceiver) {
    let (tx, rx) = mpsc::channel();
    (LoopbackSender { tx }, LoopbackReceiver { rx })
}

/// Write half of the loopback channel. Writes fail with `BrokenPipe`
/// once the receiver is dropped.
pub struct LoopbackSender {
    tx: mpsc::Sender<Vec<u8>>,
}

impl Write for LoopbackSender {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "loopback closed"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Read half of the loopback channel.
pub struct LoopbackReceiver {
    rx: mpsc::Receiver<Vec<u8>>,
}

impl LoopbackReceiver {
    /// Next chunk, blocking; `None` once the sender is dropped.
    pub fn recv_chunk(&self) -> Option<Vec<u8>> {
        self.rx.recv().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{DecoderState, frame_len};

    fn registry() -> ConfigRegistry {
        ConfigRegistry::standard()
    }

    #[test]
    fn non_realtime_timestamps_follow_nominal_period() {
        let reg = registry();
        let device = DeviceConfig {
            config_id: 1,
            period: Duration::from_millis(10),
            realtime: false,
            start_sequence: 0,
        };
        let mut sink = Vec::new();
        let stats =
            run_device(&device, &reg, |_| vec![0; 128], 100, &mut sink).unwrap();
        assert_eq!(stats.frames_emitted, 100);
        assert!(stats.timing.is_none());

        let mut dec = DecoderState::new(reg);
        let frames = dec.feed(&sink);
        assert_eq!(frames.len(), 100);
        let expected: Vec<u32> = (0..100).map(|k| k * 10).collect();
        let got: Vec<u32> = frames.iter().map(|f| f.timestamp_ms).collect();
        assert_eq!(got, expected);
        assert_eq!(frames.last().unwrap().timestamp_ms, 990);
    }

    #[test]
    fn sequence_wraps_at_16_bits() {
        let reg = registry();
        let device = DeviceConfig {
            config_id: 1,
            period: Duration::from_millis(10),
            realtime: false,
            start_sequence: 65534,
        };
        let mut sink = Vec::new();
        run_device(&device, &reg, |_| vec![0; 128], 4, &mut sink).unwrap();
        let mut dec = DecoderState::new(reg);
        let seqs: Vec<u16> = dec.feed(&sink).iter().map(|f| f.sequence).collect();
        assert_eq!(seqs, vec![65534, 65535, 0, 1]);
    }

    #[test]
    fn loopback_end_to_end_is_lossless() {
        let reg = registry();
        let device = DeviceConfig {
            config_id: 0,
            period: Duration::from_micros(50),
            realtime: false,
            start_sequence: 0,
        };
        let (mut tx, rx) = loopback();
        let reg_producer = reg.clone();
        let producer = std::thread::spawn(move || {
            run_device(
                &device,
                &reg_producer,
                |k| vec![(k % 1024) as u16; 384],
                300,
                &mut tx,
            )
        });

        let mut dec = DecoderState::new(reg);
        let mut frames = Vec::new();
        while let Some(chunk) = rx.recv_chunk() {
            frames.extend(dec.feed(&chunk));
        }
        producer.join().unwrap().unwrap();

        assert_eq!(frames.len(), 300);
        assert_eq!(dec.stats().frames_corrupt, 0);
        assert_eq!(dec.stats().bytes_discarded, 0);
    }

    #[test]
    fn sink_failure_stops_the_device() {
        let reg = registry();
        let device = DeviceConfig {
            config_id: 1,
            period: Duration::from_millis(1),
            realtime: false,
            start_sequence: 0,
        };
        let (mut tx, rx) = loopback();
        drop(rx);
        let err = run_device(&device, &reg, |_| vec![0; 128], 10, &mut tx).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }

    #[test]
    fn realtime_pacing_matches_nominal_period() {
        // Short run to keep unit tests fast; the acceptance suite does 1000.
        let reg = registry();
        let device = DeviceConfig {
            config_id: 1,
            period: Duration::from_millis(5),
            realtime: true,
            start_sequence: 0,
        };
        let mut sink = Vec::new();
        let stats = run_device(&device, &reg, |_| vec![0; 128], 60, &mut sink).unwrap();
        let timing = stats.timing.unwrap();
        let mean = timing.mean_period_s().unwrap();
        assert!((mean - 0.005).abs() < 0.005 * 0.01, "mean period {mean}");
        assert_eq!(sink.len(), 60 * frame_len(reg.get(1).unwrap()));
    }
}
