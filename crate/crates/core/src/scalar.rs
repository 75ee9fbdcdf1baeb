//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar the numeric code is generic over: `f32` or `f64`.
///
/// `Display`/`FromStr` are required so parameters survive a text round trip
/// (checkpoint files) bit-exactly.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + FromStr + Sum + Send + Sync + 'static
{
    /// Name written into serialized artifacts.
    const NAME: &'static str;

    /// Lossless-enough literal conversion for constants used inside algorithms.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in scalar type")
    }

    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }

    /// Little-endian bytes of the value, used for bit-level parameter fingerprints.
    fn le_bytes(self) -> Vec<u8>;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn le_bytes(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn le_bytes(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
}
