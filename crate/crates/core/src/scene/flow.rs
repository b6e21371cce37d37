//! `.flo3` flow files: magic `FLO3`, then little-endian `u32` height, width,
//! source view, target view, followed by row-major little-endian `f32`
//! triples `(dx, dy, confidence)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::viewset::Flow;

pub const FLOW_MAGIC: &[u8; 4] = b"FLO3";
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn encode_flow(flow: &Flow) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + flow.data.len() * 4);
    out.extend_from_slice(FLOW_MAGIC);
    for v in [flow.height, flow.width, flow.from, flow.to] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &flow.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8], name: &str) -> Result<Flow> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::decode(name, "not a FLO3 flow file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (height, width, from, to) = (word(0), word(1), word(2), word(3));
    let n = width * height * 3;
    if bytes.len() != HEADER_LEN + n * 4 {
        return Err(Error::decode(
            name,
            format!("expected {} payload bytes, found {}", n * 4, bytes.len() - HEADER_LEN),
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Flow {
        from,
        to,
        width,
        height,
        data,
    })
}

pub fn write_flow(flow: &Flow, path: &Path) -> Result<()> {
    std::fs::write(path, encode_flow(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<Flow> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes, &path.display().to_string())
}

pub fn flow_file_name(from: usize, to: usize) -> String {
    format!("{from:04}_{to:04}.flo3")
}
