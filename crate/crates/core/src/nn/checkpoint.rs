//! `OATM` checkpoints: magic `b"OATM"`, a little-endian `u32` descriptor
//! length, the ASCII model descriptor, a `u64` parameter count, then the
//! parameters as little-endian `f64` in layer order.
//!
//! Descriptor examples: `cnn-small input=3x16x16 classes=4 cnn=16,32,3,128`,
//! `mlp input=8x1x1 classes=2 hidden=16,16`, `logistic input=2x1x1 classes=2`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{CnnSpec, InputShape, Model, ModelKind, ModelSpec};
use crate::error::{OatError, Result};

const MAGIC: &[u8; 4] = b"OATM";

fn malformed(reason: impl ToString) -> OatError {
    OatError::Malformed { format: "checkpoint", reason: reason.to_string() }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn describe(spec: &ModelSpec) -> String {
    let i = spec.input;
    let mut s = format!("{} input={}x{}x{} classes={}", spec.kind.name(), i.channels, i.height, i.width, spec.num_classes);
    match &spec.kind {
        ModelKind::Logistic => {}
        ModelKind::Mlp { hidden } => s += &format!(" hidden={}", join(hidden)),
        ModelKind::CnnSmall(c) => s += &format!(" cnn={}", join(&[c.conv1, c.conv2, c.kernel, c.fc])),
    }
    s
}

fn numbers(s: &str, sep: char) -> Result<Vec<usize>> {
    s.split(sep)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| malformed(format!("bad number {t:?} in descriptor"))))
        .collect()
}

/// Inverse of [`describe`].
pub fn parse_descriptor(desc: &str) -> Result<ModelSpec> {
    let mut words = desc.split_whitespace();
    let kind = words.next().ok_or_else(|| malformed("empty descriptor"))?;
    let (mut input, mut classes, mut hidden, mut cnn) = (None, None, None, None);
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| malformed(format!("descriptor word {w:?}")))?;
        match k {
            "input" => input = Some(numbers(v, 'x')?),
            "classes" => classes = Some(v.parse::<usize>().map_err(|_| malformed("bad class count"))?),
            "hidden" => hidden = Some(numbers(v, ',')?),
            "cnn" => cnn = Some(numbers(v, ',')?),
            _ => return Err(malformed(format!("unknown descriptor key {k:?}"))),
        }
    }
    let input = match input.as_deref() {
        Some(&[c, h, w]) => InputShape::image(c, h, w),
        _ => return Err(malformed("descriptor needs input=CxHxW")),
    };
    let num_classes = classes.ok_or_else(|| malformed("descriptor needs classes="))?;
    let kind = match (kind, hidden, cnn.as_deref()) {
        ("logistic", None, None) => ModelKind::Logistic,
        ("mlp", Some(hidden), None) => ModelKind::Mlp { hidden },
        ("cnn-small", None, Some(&[conv1, conv2, kernel, fc])) => ModelKind::CnnSmall(CnnSpec { conv1, conv2, kernel, fc }),
        _ => return Err(malformed(format!("inconsistent descriptor {desc:?}"))),
    };
    let spec = ModelSpec { kind, input, num_classes };
    spec.validate()?;
    Ok(spec)
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let desc = describe(model.spec());
    let params = model.params();
    let mut out = Vec::with_capacity(16 + desc.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(malformed("missing OATM magic"));
    }
    let dlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rest = &bytes[8..];
    if rest.len() < dlen + 8 {
        return Err(malformed("truncated header"));
    }
    let desc = core::str::from_utf8(&rest[..dlen]).map_err(|_| malformed("descriptor is not UTF-8"))?;
    let spec = parse_descriptor(desc)?;
    let n = u64::from_le_bytes(rest[dlen..dlen + 8].try_into().unwrap()) as usize;
    let body = &rest[dlen + 8..];
    if n != spec.param_count() {
        return Err(malformed(format!("{n} parameters stored, descriptor needs {}", spec.param_count())));
    }
    if body.len() != 8 * n {
        return Err(malformed(format!("expected {} parameter bytes, found {}", 8 * n, body.len())));
    }
    let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Model::from_params(&spec, params)
}
