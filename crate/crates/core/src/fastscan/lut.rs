use crate::error::{Error, Result};
use crate::pq::LutF;

/// Byte-quantized ADC table for K=16: one 16-byte row per subquantizer and
/// the affine map `f(acc) = bias + acc / scale` back to distances.
///
/// Row `j` stores `round((T[j][t] - min_t T[j][t]) * scale)`. The per-row
/// minima are folded into `bias`, and `scale = 255 / delta` with `delta` the
/// largest row range, so no entry exceeds 255.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLUT {
    m: usize,
    bytes: Vec<u8>,
    bias: f32,
    scale: f32,
}

impl QuantizedLUT {
    pub fn from_parts(m: usize, bytes: Vec<u8>, bias: f32, scale: f32) -> Result<Self> {
        if bytes.len() != m * 16 {
            return Err(Error::argument(format!(
                "{m} rows need {} bytes, got {}",
                m * 16,
                bytes.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) || !bias.is_finite() {
            return Err(Error::argument(format!(
                "need finite bias and positive scale, got bias={bias} scale={scale}"
            )));
        }
        Ok(Self {
            m,
            bytes,
            bias,
            scale,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bias(&self) -> f32 {
        self.bias
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn row(&self, j: usize) -> &[u8; 16] {
        self.bytes[j * 16..(j + 1) * 16].try_into().unwrap()
    }

    /// `f(acc)`.
    #[inline]
    pub fn dequantize(&self, acc: u32) -> f32 {
        self.bias + acc as f32 / self.scale
    }

    /// Worst-case gap between `f(acc)` and the float table sum it stands for.
    pub fn error_bound(&self) -> f32 {
        0.5 * self.m as f32 / self.scale
    }
}

pub fn quantize_lut(lut: &LutF) -> Result<QuantizedLUT> {
    if lut.k() != 16 {
        return Err(Error::argument(format!(
            "fast scan needs k=16, table has k={}",
            lut.k()
        )));
    }
    let m = lut.m();
    let mut mins = Vec::with_capacity(m);
    let mut delta = 0.0f32;
    for j in 0..m {
        let row = lut.row(j);
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::argument(format!("non-finite table entry {v}")));
        }
        let lo = row.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        mins.push(lo);
        delta = delta.max(hi - lo);
    }
    let bias = mins.iter().map(|&v| v as f64).sum::<f64>() as f32;
    let scale = if delta > 0.0 { 255.0 / delta } else { 1.0 };

    let mut bytes = Vec::with_capacity(m * 16);
    for (j, &lo) in mins.iter().enumerate() {
        for &v in lut.row(j) {
            // f32::round rounds half away from zero.
            let q = ((v - lo) * scale).round();
            debug_assert!((0.0..=255.0).contains(&q), "entry {q} needs clamping");
            bytes.push(q as u8);
        }
    }
    Ok(QuantizedLUT {
        m,
        bytes,
        bias,
        scale,
    })
}
