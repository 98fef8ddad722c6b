//! Byte-level codecs for the CIFAR-10 binary layout and the native `OATD` layout.
//!
//! `OATD`: magic `b"OATD"`, then little-endian `u32` count, channels, height,
//! width, num_classes, then per record a `u16` label (`0xFFFF` for OOD)
//! followed by the raw pixels.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::Dataset;
use crate::error::{OatError, Result};

/// Bytes per CIFAR-10 record: one label byte and a 3x32x32 image.
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

const OATD_MAGIC: &[u8; 4] = b"OATD";

fn malformed(format: &'static str, reason: impl ToString) -> OatError {
    OatError::Malformed { format, reason: reason.to_string() }
}

pub fn decode_cifar10(bytes: &[u8], name: &str) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(malformed("cifar10", format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len())));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(malformed("cifar10", format!("record {i} has label byte {}", rec[0])));
        }
        labels.push(rec[0] as u16);
        images.extend_from_slice(&rec[1..]);
    }
    Dataset::new(images, labels, (3, 32, 32), 10, name)
}

/// Fails on OOD samples and on any shape other than 3x32x32 with <= 10 classes.
pub fn encode_cifar10(d: &Dataset) -> Result<Vec<u8>> {
    if d.dims() != (3, 32, 32) || d.num_classes() > 10 {
        return Err(malformed("cifar10", "only 3x32x32 images with at most 10 classes fit the layout"));
    }
    let mut out = Vec::with_capacity(d.len() * CIFAR_RECORD);
    for i in 0..d.len() {
        out.push(d.label(i)? as u8);
        out.extend_from_slice(d.image(i));
    }
    Ok(out)
}

pub fn encode_oatd(d: &Dataset) -> Vec<u8> {
    let (c, h, w) = d.dims();
    let mut out = Vec::with_capacity(24 + d.len() * (2 + d.image_len()));
    out.extend_from_slice(OATD_MAGIC);
    for v in [d.len(), c, h, w, d.num_classes()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (i, &l) in d.raw_labels().iter().enumerate() {
        out.extend_from_slice(&l.to_le_bytes());
        out.extend_from_slice(d.image(i));
    }
    out
}

pub fn decode_oatd(bytes: &[u8], name: &str) -> Result<Dataset> {
    if bytes.len() < 24 || &bytes[..4] != OATD_MAGIC {
        return Err(malformed("oatd", "missing OATD header"));
    }
    let field = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (n, c, h, w, classes) = (field(0), field(1), field(2), field(3), field(4));
    let size = c.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| malformed("oatd", "image size overflows"))?;
    let expected = n
        .checked_mul(size + 2)
        .and_then(|v| v.checked_add(24))
        .ok_or_else(|| malformed("oatd", "record count overflows"))?;
    if bytes.len() != expected {
        return Err(malformed("oatd", format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut images = Vec::with_capacity(n * size);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes[24..].chunks(size + 2) {
        labels.push(u16::from_le_bytes([rec[0], rec[1]]));
        images.extend_from_slice(&rec[2..]);
    }
    Dataset::new(images, labels, (c, h, w), classes, name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OOD_LABEL;
    use alloc::vec;

    #[test]
    fn cifar_round_trip() {
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[0] = 3;
        bytes[CIFAR_RECORD] = 9;
        for (i, b) in bytes.iter_mut().enumerate() {
            if i % CIFAR_RECORD != 0 {
                *b = (i % 251) as u8;
            }
        }
        let d = decode_cifar10(&bytes, "c").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels().unwrap(), vec![3, 9]);
        let again = encode_cifar10(&d).unwrap();
        assert_eq!(again, bytes);
        assert_eq!(encode_cifar10(&decode_cifar10(&again, "c").unwrap()).unwrap(), bytes);
    }

    #[test]
    fn cifar_rejects_bad_input() {
        assert!(decode_cifar10(&[0u8; CIFAR_RECORD + 1], "c").is_err());
        let mut bytes = vec![0u8; CIFAR_RECORD];
        bytes[0] = 10;
        assert!(decode_cifar10(&bytes, "c").is_err());
    }

    #[test]
    fn oatd_round_trip_with_sentinels() {
        let d = Dataset::new((0..24u8).collect(), vec![1, OOD_LABEL], (3, 2, 2), 4, "d").unwrap();
        let bytes = encode_oatd(&d);
        assert_eq!(&bytes[..4], b"OATD");
        assert_eq!(bytes.len(), 24 + 2 * 14);
        let back = decode_oatd(&bytes, "d").unwrap();
        assert_eq!(back, d);
        assert_eq!(encode_oatd(&back), bytes);
        assert!(decode_oatd(&bytes[..bytes.len() - 1], "d").is_err());
        assert!(decode_oatd(b"NOPE", "d").is_err());
    }
}
