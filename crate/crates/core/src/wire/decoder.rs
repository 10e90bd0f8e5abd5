//! Resynchronizing stream decoder.
//!
//! Bytes may arrive in chunks split at arbitrary boundaries; the decoder's
//! output is invariant to the chunking. On corruption it discards one byte
//! at a time until the next AA 55 sync pattern.

use crate::error::Error;
use crate::pad::{ConfigRegistry, TactileFrame};

use super::{decode_frame, frame_len, CRC_LEN, HEADER_LEN, SYNC, VERSION};

/// Counters accumulated by a [`DecoderState`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct DecoderStats {
    /// Complete sync-delimited candidates that decoded successfully.
    pub frames_ok: u64,
    /// Complete sync-delimited candidates that failed validation.
    pub frames_corrupt: u64,
    /// Bytes dropped while hunting for sync (garbage and corrupt-frame
    /// bytes skipped during resynchronization).
    pub bytes_discarded: u64,
}

/// Incremental frame decoder with resynchronization.
#[derive(Debug, Clone)]
pub struct DecoderState {
    registry: ConfigRegistry,
    buffer: Vec<u8>,
    stats: DecoderStats,
}

impl DecoderState {
    pub fn new(registry: ConfigRegistry) -> Self {
        Self { registry, buffer: Vec::new(), stats: DecoderStats::default() }
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Bytes buffered awaiting the rest of a frame.
    pub fn pending_bytes(&self) -> usize {
        self.buffer.len()
    }

    /// Feed a chunk; returns every frame completed by it, in stream order.
    pub fn feed(&mut self, chunk: &[u8]) -> Vec<TactileFrame> {
        self.buffer.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut pos = 0usize;

        loop {
            // Hunt for the sync pattern, discarding garbage byte by byte.
            while pos + 1 < self.buffer.len()
                && self.buffer[pos..pos + 2] != SYNC
            {
                pos += 1;
                self.stats.bytes_discarded += 1;
            }
            if pos + 1 >= self.buffer.len() {
                // Zero or one byte left. A lone 0xAA may be the start of a
                // sync split across chunks; anything else is garbage.
                if pos < self.buffer.len() && self.buffer[pos] != SYNC[0] {
                    pos += 1;
                    self.stats.bytes_discarded += 1;
                }
                break;
            }

            // Need version + config_id to size the candidate.
            if self.buffer.len() - pos < 4 {
                break;
            }
            let version = self.buffer[pos + 2];
            let config_id = self.buffer[pos + 3];
            let Some(config) = self.registry.get(config_id).filter(|_| version == VERSION)
            else {
                // Header invalid: a candidate we can reject without its body.
                self.stats.frames_corrupt += 1;
                pos += 1;
                self.stats.bytes_discarded += 1;
                continue;
            };

            let total = frame_len(config);
            debug_assert!(total >= HEADER_LEN + CRC_LEN);
            if self.buffer.len() - pos < total {
                break; // wait for the rest of the frame
            }

            match decode_frame(&self.buffer[pos..pos + total], &self.registry) {
                Ok(frame) => {
                    self.stats.frames_ok += 1;
                    out.push(frame);
                    pos += total;
                }
                Err(Error::Corrupt(_)) | Err(Error::Framing(_)) | Err(Error::Protocol(_)) => {
                    self.stats.frames_corrupt += 1;
                    pos += 1;
                    self.stats.bytes_discarded += 1;
                }
                Err(_) => unreachable!("decode_frame only fails with protocol-class errors"),
            }
        }

        self.buffer.drain(..pos);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pad::GridConfig;
    use crate::wire::encode_frame;

    fn registry() -> ConfigRegistry {
        ConfigRegistry::standard()
    }

    fn frame_bytes(config_id: u8, seq: u16) -> Vec<u8> {
        let reg = registry();
        let config = reg.get(config_id).unwrap();
        let frame = TactileFrame::new(
            config_id,
            seq,
            seq as u32 * 10,
            (0..config.taxel_count())
                .map(|i| ((i as u16).wrapping_mul(31).wrapping_add(seq)) % 1024)
                .collect(),
            config,
        )
        .unwrap();
        encode_frame(&frame, &reg).unwrap()
    }

    #[test]
    fn empty_chunk_is_a_no_op() {
        let mut state = DecoderState::new(registry());
        assert!(state.feed(&[]).is_empty());
        assert_eq!(state.stats(), DecoderStats::default());
    }

    #[test]
    fn byte_at_a_time_equals_whole_buffer() {
        let mut stream = Vec::new();
        for seq in 0..3 {
            stream.extend(frame_bytes(0, seq));
        }

        let mut whole = DecoderState::new(registry());
        let frames_whole = whole.feed(&stream);

        let mut trickle = DecoderState::new(registry());
        let mut frames_trickle = Vec::new();
        for byte in &stream {
            frames_trickle.extend(trickle.feed(std::slice::from_ref(byte)));
        }

        assert_eq!(frames_whole.len(), 3);
        assert_eq!(frames_whole, frames_trickle);
        assert_eq!(whole.stats(), trickle.stats());
        assert_eq!(whole.stats().frames_corrupt, 0);
        assert_eq!(whole.stats().bytes_discarded, 0);
    }

    #[test]
    fn garbage_prefix_is_counted_and_skipped() {
        let mut stream = vec![0x01, 0x02, 0x03, 0x04, 0x05];
        stream.extend(frame_bytes(1, 9));
        let mut state = DecoderState::new(registry());
        let frames = state.feed(&stream);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].sequence, 9);
        assert_eq!(state.stats().bytes_discarded, 5);
        assert_eq!(state.stats().frames_ok, 1);
    }

    #[test]
    fn corrupt_frame_is_skipped_and_stream_recovers() {
        let mut corrupted = frame_bytes(1, 1);
        corrupted[20] ^= 0xFF; // payload corruption
        let mut stream = corrupted;
        stream.extend(frame_bytes(1, 2));

        let mut state = DecoderState::new(registry());
        let frames = state.feed(&stream);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].sequence, 2);
        assert!(state.stats().frames_corrupt >= 1);
        assert!(state.stats().bytes_discarded > 0);
    }

    #[test]
    fn mixed_presets_decode_on_one_host() {
        // Backward compatibility: a single host registry decodes every
        // registered pad variant by config_id, including low-res pads.
        let mut stream = Vec::new();
        for id in [0u8, 1, 2, 3, 1, 0] {
            stream.extend(frame_bytes(id, id as u16));
        }
        let mut state = DecoderState::new(registry());
        let frames = state.feed(&stream);
        assert_eq!(frames.len(), 6);
        assert_eq!(
            frames.iter().map(|f| f.config_id).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 1, 0]
        );
        assert_eq!(state.stats().frames_corrupt, 0);
    }

    #[test]
    fn custom_config_requires_registration() {
        let tiny = GridConfig::new(1, 4, 0.002, 10).unwrap();
        let mut reg = ConfigRegistry::standard();
        reg.insert(9, tiny.clone());
        let frame = TactileFrame::new(9, 0, 0, vec![1, 2, 3, 4], &tiny).unwrap();
        let bytes = encode_frame(&frame, &reg).unwrap();

        let mut known = DecoderState::new(reg);
        assert_eq!(known.feed(&bytes).len(), 1);

        // The standard registry treats id 9 as a corrupt candidate.
        let mut unknown = DecoderState::new(ConfigRegistry::standard());
        assert!(unknown.feed(&bytes).is_empty());
        assert!(unknown.stats().frames_corrupt >= 1);
    }
}
