//! Little-endian binary blob formats.
//!
//! ```text
//! raster:      "MSRA" | version u8 = 1 | dtype u8 | bands u16 | height u32 | width u32 | band-sequential samples
//! binary mask: "MSKB" | version u8 = 1 | height u32 | width u32 | row-major bytes (0/1)
//! label mask:  "MSKL" | version u8 = 1 | height u32 | width u32 | row-major class ids (255 = ignore)
//! ```
//!
//! Raster dtypes: 0 = u8, 1 = u16, 2 = f32, 3 = f64. Integer samples widen
//! losslessly on read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BinaryMask, Raster, SemanticMask};
use crate::scalar::{Dtype, Scalar};

pub const RASTER_MAGIC: &[u8; 4] = b"MSRA";
pub const BINARY_MASK_MAGIC: &[u8; 4] = b"MSKB";
pub const LABEL_MASK_MAGIC: &[u8; 4] = b"MSKL";
pub const FORMAT_VERSION: u8 = 1;

const RASTER_HEADER: usize = 4 + 1 + 1 + 2 + 4 + 4;
const MASK_HEADER: usize = 4 + 1 + 4 + 4;

/// Narrowest dtype that stores every sample of `raster` exactly.
pub fn lossless_dtype<T: Scalar>(raster: &Raster<T>) -> Dtype {
    [Dtype::U8, Dtype::U16, Dtype::F32]
        .into_iter()
        .find(|d| raster.samples().iter().all(|&v| d.represents(v)))
        .unwrap_or(Dtype::F64)
}

/// `preferred` if it is lossless for `raster`, otherwise the narrowest lossless dtype.
pub fn dtype_for<T: Scalar>(raster: &Raster<T>, preferred: Dtype) -> Dtype {
    if raster.samples().iter().all(|&v| preferred.represents(v)) {
        preferred
    } else {
        lossless_dtype(raster)
    }
}

pub fn encode_raster<T: Scalar>(raster: &Raster<T>, dtype: Dtype) -> Result<Vec<u8>> {
    if raster.bands() > u16::MAX as usize {
        return Err(Error::format("raster", format!("{} bands exceed u16", raster.bands())));
    }
    let (h, w) = (u32_dim(raster.height())?, u32_dim(raster.width())?);
    let mut out = Vec::with_capacity(RASTER_HEADER + raster.samples().len() * dtype.byte_width());
    out.extend_from_slice(RASTER_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(dtype.code());
    out.extend_from_slice(&(raster.bands() as u16).to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for (i, &v) in raster.samples().iter().enumerate() {
        if !dtype.represents(v) {
            return Err(Error::format(
                "raster",
                format!("sample {i} ({v:?}) is not representable as {dtype:?}"),
            ));
        }
        let v = v.to_f64().expect("finite");
        match dtype {
            Dtype::U8 => out.push(v as u8),
            Dtype::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Decodes a raster blob, returning the stored dtype alongside the widened raster.
pub fn decode_raster<T: Scalar>(bytes: &[u8], context: &str) -> Result<(Raster<T>, Dtype)> {
    let header = check_header(bytes, RASTER_MAGIC, RASTER_HEADER, context)?;
    let dtype = Dtype::from_code(header[5])
        .ok_or_else(|| Error::format(context, format!("unknown dtype code {}", header[5])))?;
    let bands = u16::from_le_bytes([header[6], header[7]]) as usize;
    let height = read_u32(&header[8..12]) as usize;
    let width = read_u32(&header[12..16]) as usize;
    let count = height * width * bands;
    let body = &bytes[RASTER_HEADER..];
    if body.len() != count * dtype.byte_width() {
        return Err(Error::format(
            context,
            format!(
                "size mismatch: {height}x{width}x{bands} {dtype:?} needs {} data bytes, found {}",
                count * dtype.byte_width(),
                body.len()
            ),
        ));
    }
    let widen = |v: f64| {
        T::from_f64_exact(v).ok_or_else(|| {
            Error::format(context, format!("value {v} does not fit the in-memory scalar type"))
        })
    };
    let samples: Vec<T> = match dtype {
        Dtype::U8 => body.iter().map(|&b| widen(b as f64)).collect::<Result<_>>()?,
        Dtype::U16 => body
            .chunks_exact(2)
            .map(|c| widen(u16::from_le_bytes([c[0], c[1]]) as f64))
            .collect::<Result<_>>()?,
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| widen(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect::<Result<_>>()?,
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| widen(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect::<Result<_>>()?,
    };
    let raster = Raster::new(height, width, bands, samples)
        .map_err(|e| Error::format(context, e.to_string()))?;
    Ok((raster, dtype))
}

pub fn encode_binary_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    let mut out = mask_header(BINARY_MASK_MAGIC, mask.height(), mask.width())?;
    out.extend(mask.bits().iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode_binary_mask(bytes: &[u8], context: &str) -> Result<BinaryMask> {
    let (height, width, body) = split_mask(bytes, BINARY_MASK_MAGIC, context)?;
    let bits = body
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(context, format!("byte {i} is {other}, expected 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    BinaryMask::new(height, width, bits).map_err(|e| Error::format(context, e.to_string()))
}

pub fn encode_label_mask(mask: &SemanticMask) -> Result<Vec<u8>> {
    let mut out = mask_header(LABEL_MASK_MAGIC, mask.height(), mask.width())?;
    out.extend_from_slice(mask.values());
    Ok(out)
}

pub fn decode_label_mask(bytes: &[u8], context: &str) -> Result<SemanticMask> {
    let (height, width, body) = split_mask(bytes, LABEL_MASK_MAGIC, context)?;
    SemanticMask::new(height, width, body.to_vec()).map_err(|e| Error::format(context, e.to_string()))
}

pub fn read_raster<T: Scalar>(path: &Path) -> Result<(Raster<T>, Dtype)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes, &path.display().to_string())
}

pub fn write_raster<T: Scalar>(path: &Path, raster: &Raster<T>, dtype: Dtype) -> Result<()> {
    let bytes = encode_raster(raster, dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_label_mask(path: &Path) -> Result<SemanticMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_mask(&bytes, &path.display().to_string())
}

pub fn write_label_mask(path: &Path, mask: &SemanticMask) -> Result<()> {
    std::fs::write(path, encode_label_mask(mask)?).map_err(|e| Error::io(path, e))
}

fn u32_dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format("blob", format!("dimension {v} exceeds u32")))
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn check_header<'a>(bytes: &'a [u8], magic: &[u8; 4], len: usize, context: &str) -> Result<&'a [u8]> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::format(
            context,
            format!("invalid magic, expected {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    if bytes.len() < len {
        return Err(Error::format(context, "truncated header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::format(context, format!("unsupported version {}", bytes[4])));
    }
    Ok(&bytes[..len])
}

fn mask_header(magic: &[u8; 4], height: usize, width: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(MASK_HEADER + height * width);
    out.extend_from_slice(magic);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&u32_dim(height)?.to_le_bytes());
    out.extend_from_slice(&u32_dim(width)?.to_le_bytes());
    Ok(out)
}

fn split_mask<'a>(bytes: &'a [u8], magic: &[u8; 4], context: &str) -> Result<(usize, usize, &'a [u8])> {
    let header = check_header(bytes, magic, MASK_HEADER, context)?;
    let height = read_u32(&header[5..9]) as usize;
    let width = read_u32(&header[9..13]) as usize;
    let body = &bytes[MASK_HEADER..];
    if body.len() != height * width {
        return Err(Error::format(
            context,
            format!("size mismatch: {height}x{width} mask needs {} bytes, found {}", height * width, body.len()),
        ));
    }
    Ok((height, width, body))
}
