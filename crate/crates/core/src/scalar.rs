//! Real-valued sample type shared by rasters, instance patches and the demo classifier.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// On-disk sample encodings understood by the raster blob format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
    F32 = 2,
    /// Extension code used only for rasters that are not exactly representable in `f32`.
    F64 = 3,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::U16),
            2 => Some(Dtype::F32),
            3 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn byte_width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    /// Whether `value` survives an encode/decode cycle through this dtype unchanged.
    pub fn represents<T: Scalar>(self, value: T) -> bool {
        let v = value.to_f64().unwrap_or(f64::NAN);
        match self {
            Dtype::U8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            Dtype::U16 => v.fract() == 0.0 && (0.0..=65535.0).contains(&v),
            Dtype::F32 => (v as f32) as f64 == v,
            Dtype::F64 => v.is_finite(),
        }
    }
}

/// Floating-point sample type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumCast + Debug + Default + Send + Sync + 'static
{
    /// The float dtype this scalar serializes to natively.
    const NATIVE_DTYPE: Dtype;

    /// Lossless conversion from any value the given dtype can hold, `None` when
    /// the value cannot be represented exactly.
    fn from_f64_exact(value: f64) -> Option<Self>;

    fn lit(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("literal fits the scalar type")
    }
}

impl Scalar for f32 {
    const NATIVE_DTYPE: Dtype = Dtype::F32;

    fn from_f64_exact(value: f64) -> Option<Self> {
        let narrowed = value as f32;
        (narrowed as f64 == value).then_some(narrowed)
    }
}

impl Scalar for f64 {
    const NATIVE_DTYPE: Dtype = Dtype::F64;

    fn from_f64_exact(value: f64) -> Option<Self> {
        Some(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtype_codes_round_trip() {
        for d in [Dtype::U8, Dtype::U16, Dtype::F32, Dtype::F64] {
            assert_eq!(Dtype::from_code(d.code()), Some(d));
        }
        assert_eq!(Dtype::from_code(9), None);
    }

    #[test]
    fn representability() {
        assert!(Dtype::U8.represents(255.0f32));
        assert!(!Dtype::U8.represents(256.0f32));
        assert!(!Dtype::U16.represents(1.5f64));
        assert!(Dtype::F32.represents(0.1f32));
        assert!(!Dtype::F32.represents(0.1f64));
        assert_eq!(f32::from_f64_exact(0.1), None);
        assert_eq!(f32::from_f64_exact(0.5), Some(0.5));
    }
}
