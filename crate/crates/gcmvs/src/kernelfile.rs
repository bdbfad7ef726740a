//! Aggregation kernel weights: three little-endian `u32` (slots `k²`,
//! channels `M`, depth taps `k_d`) followed by `M · k² · M · k_d`
//! little-endian `f32` in `[out][slot][in][tap]` order.

use std::fs;
use std::path::Path;

use gcmvs_core::gcp::AggregationKernel;

use crate::error::{Error, Result};

pub fn encode_kernel(k: &AggregationKernel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * k.weights.len());
    for d in [k.slots, k.channels, k.depth_extent] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &w in &k.weights {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

pub fn decode_kernel(bytes: &[u8]) -> std::result::Result<AggregationKernel, String> {
    if bytes.len() < 12 {
        return Err("kernel header truncated".into());
    }
    let u = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (slots, channels, taps) = (u(0), u(4), u(8));
    let body = &bytes[12..];
    if body.len() % 4 != 0 {
        return Err("kernel body is not a whole number of floats".into());
    }
    let weights = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    AggregationKernel::new(slots, channels, taps, weights).map_err(|e| e.to_string())
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<AggregationKernel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kernel(&bytes).map_err(|m| Error::format(path, m))
}

pub fn write_kernel(path: impl AsRef<Path>, k: &AggregationKernel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kernel(k)).map_err(|e| Error::io(path, e))
}
