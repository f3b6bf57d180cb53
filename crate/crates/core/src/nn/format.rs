//! Model file layout (all integers little-endian):
//!
//! ```text
//! "RSRL"                 4 bytes magic
//! version                u16
//! manifest length        u32
//! manifest               UTF-8 text, one directive per line
//! parameter blocks       f64 LE, in manifest `block` order
//! crc32                  u32 over every preceding byte
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{param_layout, NetworkModel, NnError, Params, CONV_CHANNELS};
use crate::data::INPUT_SIZE;

pub const MAGIC: &[u8; 4] = b"RSRL";
pub const FORMAT_VERSION: u16 = 1;

fn block_layout() -> Vec<(String, Vec<usize>)> {
    let mut out = param_layout();
    for l in 0..3 {
        out.push((format!("batchnorm_{}.running_mean", l + 1), vec![CONV_CHANNELS[l + 1]]));
        out.push((format!("batchnorm_{}.running_var", l + 1), vec![CONV_CHANNELS[l + 1]]));
    }
    out
}

fn blocks(model: &NetworkModel) -> Vec<&[f64]> {
    let mut out = model.params.groups();
    for l in 0..3 {
        out.push(&model.running_mean[l]);
        out.push(&model.running_var[l]);
    }
    out
}

fn manifest(model: &NetworkModel) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "architecture type_c");
    let _ = writeln!(m, "seed {}", model.seed);
    let [r, g, b] = model.zerocenter;
    let _ = writeln!(m, "zerocenter {r:?} {g:?} {b:?}");
    let _ = writeln!(m, "input {INPUT_SIZE} {INPUT_SIZE} 3");
    for (name, shape) in block_layout() {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        let _ = writeln!(m, "block {name} {}", dims.join(" "));
    }
    m
}

pub fn write_model(model: &NetworkModel) -> Vec<u8> {
    let manifest = manifest(model);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    for block in blocks(model) {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_model(bytes: &[u8]) -> Result<NetworkModel, NnError> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(NnError::FormatVersionMismatch("missing RSRL magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(NnError::FormatVersionMismatch(format!(
            "file version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    if bytes.len() < 14 {
        return Err(NnError::CorruptFile("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(NnError::CorruptFile("checksum mismatch".into()));
    }

    let corrupt = |m: String| NnError::CorruptFile(m);
    let mlen = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let manifest_end = 10usize
        .checked_add(mlen)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("manifest overruns file".into()))?;
    let manifest = std::str::from_utf8(&body[10..manifest_end]).map_err(|e| corrupt(format!("manifest: {e}")))?;

    let mut model = NetworkModel::init_type_c(0);
    let mut declared = Vec::new();
    for line in manifest.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["architecture", "type_c"] => {}
            ["architecture", other] => {
                return Err(NnError::FormatVersionMismatch(format!("unknown architecture {other}")))
            }
            ["seed", s] => model.seed = s.parse().map_err(|_| corrupt(format!("bad seed {s:?}")))?,
            ["zerocenter", r, g, b] => {
                let p = |s: &str| s.parse::<f64>().map_err(|_| corrupt(format!("bad zerocenter value {s:?}")));
                model.zerocenter = [p(r)?, p(g)?, p(b)?];
            }
            ["input", ..] => {
                let want = format!("input {INPUT_SIZE} {INPUT_SIZE} 3");
                if line.trim() != want {
                    return Err(corrupt(format!("unsupported input shape {line:?}")));
                }
            }
            ["block", name, dims @ ..] => {
                let shape = dims
                    .iter()
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| corrupt(format!("bad block shape in {line:?}")))?;
                declared.push((name.to_string(), shape));
            }
            [] => {}
            _ => return Err(corrupt(format!("unrecognized manifest line {line:?}"))),
        }
    }
    if declared != block_layout() {
        return Err(corrupt("parameter blocks do not match the type (c) layout".into()));
    }

    let mut cursor = manifest_end;
    let mut read_into = |dst: &mut [f64]| -> Result<(), NnError> {
        let need = dst.len() * 8;
        let src = body.get(cursor..cursor + need).ok_or_else(|| corrupt("parameter data truncated".into()))?;
        for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        cursor += need;
        Ok(())
    };
    let mut params = Params::zeros();
    for group in params.groups_mut() {
        read_into(group)?;
    }
    for l in 0..3 {
        read_into(&mut model.running_mean[l])?;
        read_into(&mut model.running_var[l])?;
    }
    if cursor != body.len() {
        return Err(corrupt(format!("{} trailing bytes", body.len() - cursor)));
    }
    if model.running_var.iter().flatten().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(corrupt("running variance must be positive".into()));
    }
    model.params = params;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<(), NnError> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NetworkModel, NnError> {
    read_model(&fs::read(path)?)
}
