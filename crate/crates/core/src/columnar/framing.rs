//! Frame-level encoding shared by TIERCOL streams and metadata records.
//!
//! Layout: 4-byte magic, version byte, flags byte, then frames of
//! `type: u8 | len: u32 LE | payload | crc32(payload): u32 LE`.

use super::{ColumnarError, Result};

pub(crate) const FRAME_END: u8 = 0xFF;

pub(crate) struct FrameWriter {
    buf: Vec<u8>,
}

impl FrameWriter {
    pub fn new(magic: &[u8; 4], version: u8, flags: u8) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic);
        buf.push(version);
        buf.push(flags);
        FrameWriter { buf }
    }

    pub fn frame(&mut self, frame_type: u8, payload: &[u8]) {
        self.buf.push(frame_type);
        self.buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(payload);
        self.buf.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.frame(FRAME_END, &[]);
        self.buf
    }
}

pub(crate) struct FrameReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    pub version: u8,
    pub flags: u8,
}

impl<'a> FrameReader<'a> {
    /// Checks the magic; version/flags are left to the caller.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 6 {
            return Err(ColumnarError::CorruptFrame("stream shorter than header".into()));
        }
        if &bytes[..4] != magic {
            return Err(ColumnarError::CorruptFrame("bad magic".into()));
        }
        Ok(FrameReader {
            bytes,
            pos: 6,
            version: bytes[4],
            flags: bytes[5],
        })
    }

    /// Next frame as `(type, payload)`. Returns `None` after the end frame,
    /// which must be the last bytes of the stream.
    pub fn next_frame(&mut self) -> Result<Option<(u8, &'a [u8])>> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < 5 {
            return Err(ColumnarError::CorruptFrame(format!(
                "truncated frame header at offset {}",
                self.pos
            )));
        }
        let frame_type = rest[0];
        let len = u32::from_le_bytes(rest[1..5].try_into().unwrap()) as usize;
        if rest.len() < 5 + len + 4 {
            return Err(ColumnarError::CorruptFrame(format!(
                "frame at offset {} declares {} bytes, {} available",
                self.pos,
                len,
                rest.len().saturating_sub(9)
            )));
        }
        let payload = &rest[5..5 + len];
        let crc = u32::from_le_bytes(rest[5 + len..9 + len].try_into().unwrap());
        if crc != crc32fast::hash(payload) {
            return Err(ColumnarError::CorruptFrame(format!(
                "checksum mismatch in frame at offset {}",
                self.pos
            )));
        }
        self.pos += 9 + len;
        if frame_type == FRAME_END {
            if len != 0 {
                return Err(ColumnarError::CorruptFrame("non-empty end frame".into()));
            }
            if self.pos != self.bytes.len() {
                return Err(ColumnarError::CorruptFrame("trailing bytes after end frame".into()));
            }
            return Ok(None);
        }
        Ok(Some((frame_type, payload)))
    }
}

/// Little-endian cursor over a frame payload.
pub(crate) struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        PayloadReader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(ColumnarError::CorruptFrame(format!(
                "payload truncated: need {n} bytes at {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ColumnarError::CorruptFrame("invalid UTF-8".into()))
    }

    /// Length-prefixed byte block.
    pub fn block(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(ColumnarError::CorruptFrame(format!(
                "{} unexpected trailing payload bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

pub(crate) fn put_block(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(buf, bytes.len() as u32);
    buf.extend_from_slice(bytes);
}
