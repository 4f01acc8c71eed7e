//! Versioned binary container for network parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RFSC" | u32 version | u32 kind | u64 payload_len | payload | sha256(preceding bytes)
//! ```
//!
//! A network payload is `u32 input_dim, u32 n_layers, n_layers x (u32 n_in,
//! u32 n_out), u32 n_skips, n_skips x u32, u64 n_params, n_params x f64`.

use sha2::{Digest, Sha256};

use super::mlp::MlpParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RFSC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ContainerKind {
    Network = 1,
    Library = 2,
}

pub fn frame(kind: ContainerKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Validate framing and return the payload.
pub fn unframe(bytes: &[u8], kind: ContainerKind) -> Result<&[u8]> {
    if bytes.len() < 20 + 32 {
        return Err(Error::Format("container truncated: checksum mismatch".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic bytes, not an RFSC container".into()));
    }
    let body = &bytes[..bytes.len() - 32];
    let digest = Sha256::digest(body);
    if digest.as_slice() != &bytes[bytes.len() - 32..] {
        return Err(Error::Format("checksum mismatch (file truncated or corrupted)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if k != kind as u32 {
        return Err(Error::Format(format!("container kind {k}, expected {}", kind as u32)));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if 20 + len != body.len() {
        return Err(Error::Format("payload length mismatch".into()));
    }
    Ok(&body[20..])
}

#[derive(Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    pub fn network(&mut self, p: &MlpParams) {
        self.u32(p.input_dim() as u32);
        self.u32(p.num_layers() as u32);
        for l in p.layers() {
            self.u32(l.n_in as u32);
            self.u32(l.n_out as u32);
        }
        self.u32(p.skips().len() as u32);
        for &s in p.skips() {
            self.u32(s as u32);
        }
        self.u64(p.len() as u64);
        for v in p.data() {
            self.f64(*v);
        }
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8".into()))
    }
    pub fn network(&mut self) -> Result<MlpParams> {
        let input_dim = self.u32()? as usize;
        let n_layers = self.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            shapes.push((self.u32()? as usize, self.u32()? as usize));
        }
        let n_skips = self.u32()? as usize;
        let mut skips = Vec::with_capacity(n_skips);
        for _ in 0..n_skips {
            skips.push(self.u32()? as usize);
        }
        let n = self.u64()? as usize;
        if n > self.buf.len() / 8 + 1 {
            return Err(Error::Format("parameter count exceeds payload".into()));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        MlpParams::from_parts(input_dim, &shapes, skips, data)
    }
    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn encode_network(p: &MlpParams) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.network(p);
    frame(ContainerKind::Network, &w.buf)
}

pub fn decode_network(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = ByteReader::new(unframe(bytes, ContainerKind::Network)?);
    let p = r.network()?;
    if !r.is_done() {
        return Err(Error::Format("trailing bytes after network".into()));
    }
    Ok(p)
}
