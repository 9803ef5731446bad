use std::io::Write;

use crate::error::{Error, Result};

/// Row-major `h × w` raster. Rendered and ground-truth masks hold only 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl Mask {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, values: vec![0.0; h * w] }
    }

    pub fn from_values(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::shape("Mask", format!("{h}x{w} mask from {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Mask::from_values"));
        }
        Ok(Self { h, w, values })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.w + c] = v;
    }

    /// Number of set pixels (sum of values).
    pub fn area(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub(crate) fn same_shape(&self, other: &Mask, op: &'static str) -> Result<()> {
        if self.h != other.h || self.w != other.w {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.h, self.w, other.h, other.w),
            ));
        }
        Ok(())
    }

    /// Binary PGM (P5, maxval 255): set pixels are 255, clear pixels 0.
    pub fn write_pgm(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.w, self.h)?;
        let bytes: Vec<u8> = self.values.iter().map(|&v| if v > 0.5 { 255 } else { 0 }).collect();
        out.write_all(&bytes)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.values.len() + 16);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("PGM: {m}"));
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let body = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated body"))?;
        let values = body.iter().map(|&b| if b >= 128 { 1.0 } else { 0.0 }).collect();
        Self::from_values(h, w, values)
    }
}
