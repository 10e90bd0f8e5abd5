//! Bit-exact serial frame protocol.
//!
//! Layout (all integers little-endian except the CRC):
//!
//! ```text
//! offset  size  field
//! 0       2     sync = AA 55
//! 2       1     version = 01
//! 3       1     config_id
//! 4       2     sequence, u16 LE
//! 6       4     timestamp_ms, u32 LE
//! 10      2*N   payload: N = rows*cols ADC counts, u16 LE, row-major
//! 10+2N   2     CRC-16/CCITT-FALSE over bytes [2, 10+2N), big-endian
//! ```
//!
//! A frame log (`.ftlog`) is the raw concatenation of encoded frames.

mod crc;
mod decoder;
mod device;

pub use crc::crc16_ccitt_false;
pub use decoder::{DecoderState, DecoderStats};
pub use device::{
    loopback, run_device, DeviceConfig, LoopbackReceiver, LoopbackSender, StreamStats,
    TimingStats,
};
pub(crate) use device::nominal_timestamp_ms;

use crate::error::{Error, Result};
use crate::pad::{ConfigRegistry, GridConfig, TactileFrame};

/// Frame start marker.
pub const SYNC: [u8; 2] = [0xAA, 0x55];

/// Protocol version emitted and accepted by this crate.
pub const VERSION: u8 = 0x01;

/// Bytes before the payload.
pub const HEADER_LEN: usize = 10;

/// Trailing checksum bytes.
pub const CRC_LEN: usize = 2;

/// Total encoded size of one frame for a grid: 10 + 2*rows*cols + 2.
pub fn frame_len(config: &GridConfig) -> usize {
    HEADER_LEN + 2 * config.taxel_count() + CRC_LEN
}

/// Row-major matrix scan: shift registers select a row, the analog
/// multiplexer sweeps its columns.
#[derive(Debug, Clone)]
pub struct ScanOrder {
    config: GridConfig,
}

impl ScanOrder {
    pub fn new(config: GridConfig) -> Self {
        Self { config }
    }

    /// Payload index of a taxel: row * cols + col.
    pub fn payload_index(&self, row: usize, col: usize) -> Result<usize> {
        scan_payload_index(&self.config, row, col)
    }

    /// Inverse mapping: payload index back to (row, col).
    pub fn taxel_of(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.config.taxel_count() {
            return Err(Error::IndexOutOfRange(format!(
                "payload index {index} outside {} grid",
                self.config.name()
            )));
        }
        Ok((index / self.config.cols(), index % self.config.cols()))
    }
}

/// Row-major payload index: row * cols + col.
pub fn scan_payload_index(config: &GridConfig, row: usize, col: usize) -> Result<usize> {
    if row >= config.rows() || col >= config.cols() {
        return Err(Error::IndexOutOfRange(format!(
            "taxel ({row},{col}) outside {} grid",
            config.name()
        )));
    }
    Ok(row * config.cols() + col)
}

/// Serialize a frame. The registry supplies the grid for the frame's
/// config id; a mismatch between values and grid is an encoding error.
pub fn encode_frame(frame: &TactileFrame, registry: &ConfigRegistry) -> Result<Vec<u8>> {
    let config = registry.get(frame.config_id).ok_or_else(|| {
        Error::Encoding(format!("unknown config_id {}", frame.config_id))
    })?;
    if frame.values.len() != config.taxel_count() {
        return Err(Error::Encoding(format!(
            "frame carries {} values but config {} has {} taxels",
            frame.values.len(),
            config.name(),
            config.taxel_count()
        )));
    }
    let max = config.max_count();
    if frame.values.iter().any(|v| *v > max) {
        return Err(Error::Encoding(format!(
            "frame value exceeds {}-bit ADC range",
            config.adc_bits()
        )));
    }

    let mut out = Vec::with_capacity(frame_len(config));
    out.extend_from_slice(&SYNC);
    out.push(VERSION);
    out.push(frame.config_id);
    out.extend_from_slice(&frame.sequence.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_ms.to_le_bytes());
    for v in &frame.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc16_ccitt_false(&out[2..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Deserialize one complete candidate frame.
///
/// Rejects bad sync or length (framing), unknown version or config id
/// (protocol), and CRC or ADC-range failures (corrupt).
pub fn decode_frame(bytes: &[u8], registry: &ConfigRegistry) -> Result<TactileFrame> {
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(Error::Framing(format!(
            "candidate of {} bytes is shorter than any frame",
            bytes.len()
        )));
    }
    if bytes[0..2] != SYNC {
        return Err(Error::Framing("missing AA 55 sync".into()));
    }
    let version = bytes[2];
    if version != VERSION {
        return Err(Error::Protocol(format!("unsupported version 0x{version:02X}")));
    }
    let config_id = bytes[3];
    let config = registry
        .get(config_id)
        .ok_or_else(|| Error::Protocol(format!("unknown config_id {config_id}")))?;
    let expected = frame_len(config);
    if bytes.len() != expected {
        return Err(Error::Framing(format!(
            "config {} frame must be {expected} bytes, got {}",
            config.name(),
            bytes.len()
        )));
    }

    let crc_stored = u16::from_be_bytes([bytes[expected - 2], bytes[expected - 1]]);
    let crc_actual = crc16_ccitt_false(&bytes[2..expected - 2]);
    if crc_stored != crc_actual {
        return Err(Error::Corrupt(format!(
            "crc mismatch: stored {crc_stored:04X}, computed {crc_actual:04X}"
        )));
    }

    let sequence = u16::from_le_bytes([bytes[4], bytes[5]]);
    let timestamp_ms = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
    let max = config.max_count();
    let mut values = Vec::with_capacity(config.taxel_count());
    for chunk in bytes[HEADER_LEN..expected - CRC_LEN].chunks_exact(2) {
        let v = u16::from_le_bytes([chunk[0], chunk[1]]);
        if v > max {
            return Err(Error::Corrupt(format!(
                "value {v} exceeds {}-bit ADC range",
                config.adc_bits()
            )));
        }
        values.push(v);
    }

    Ok(TactileFrame { config_id, sequence, timestamp_ms, values })
}

/// Decode an entire frame log (raw concatenation of encoded frames).
pub fn decode_log(bytes: &[u8], registry: &ConfigRegistry) -> (Vec<TactileFrame>, DecoderStats) {
    let mut state = DecoderState::new(registry.clone());
    let frames = state.feed(bytes);
    (frames, state.stats())
}
