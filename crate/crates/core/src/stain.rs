//! Optical density conversion and H-E-DAB colour deconvolution.
//!
//! Stain concentrations combine linearly in optical density (Beer-Lambert):
//! `od = Mᵀ · c`, where the rows of `M` are the unit OD vectors of
//! hematoxylin, eosin and DAB. Deconvolution inverts that map per pixel.

use std::fmt;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{CcplError, Result};
use crate::raster::RgbRaster;

/// Default reference (incident) intensity.
pub const DEFAULT_I0: f64 = 255.0;

/// Intensity floor applied before the logarithm so that black stays finite.
pub const OD_EPSILON: f64 = 0.5;

const MAX_CONDITION: f64 = 100.0;

/// Ruifrok-Johnston hematoxylin, eosin and DAB OD vectors (before normalisation).
pub const RUIFROK_JOHNSTON_HED: [[f64; 3]; 3] = [
    [0.650, 0.704, 0.286],
    [0.072, 0.990, 0.105],
    [0.268, 0.570, 0.776],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stain {
    #[serde(rename = "H")]
    Hematoxylin,
    #[serde(rename = "E")]
    Eosin,
    #[serde(rename = "D")]
    Dab,
}

impl Stain {
    pub const ALL: [Stain; 3] = [Stain::Hematoxylin, Stain::Eosin, Stain::Dab];

    pub fn index(self) -> usize {
        match self {
            Stain::Hematoxylin => 0,
            Stain::Eosin => 1,
            Stain::Dab => 2,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Stain::Hematoxylin => "H",
            Stain::Eosin => "E",
            Stain::Dab => "D",
        }
    }
}

impl fmt::Display for Stain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for Stain {
    type Err = CcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" | "h" | "hematoxylin" => Ok(Stain::Hematoxylin),
            "E" | "e" | "eosin" => Ok(Stain::Eosin),
            "D" | "d" | "dab" | "DAB" => Ok(Stain::Dab),
            other => Err(CcplError::InvalidParameter(format!("unknown stain {other:?}"))),
        }
    }
}

/// Row-normalised H, E, D stain matrix with its cached inverse.
///
/// Construction rejects matrices whose rows cannot be normalised or whose
/// condition number is 100 or more, so every `StainMatrix` in existence is
/// safe to deconvolve with.
#[derive(Clone, Debug, PartialEq)]
pub struct StainMatrix {
    rows: [[f64; 3]; 3],
    // (Mᵀ)⁻¹, row-major
    unmix: [[f64; 3]; 3],
    condition: f64,
}

impl StainMatrix {
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        let mut normalised = rows;
        for (row, stain) in normalised.iter_mut().zip(Stain::ALL) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CcplError::InvalidStainMatrix(format!(
                    "{stain} row has non-finite entries"
                )));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(CcplError::InvalidStainMatrix(format!("{stain} row is zero")));
            }
            // already-unit rows are kept bit-exact so a serialise/load cycle is stable
            if (norm - 1.0).abs() > 1e-12 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }

        let m = Matrix3::from_fn(|r, c| normalised[r][c]);
        let sv = m.singular_values();
        let (max, min) = (sv.max(), sv.min());
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if condition.is_nan() || condition >= MAX_CONDITION {
            return Err(CcplError::SingularMatrix { condition });
        }
        let inv_t = m
            .transpose()
            .try_inverse()
            .ok_or(CcplError::SingularMatrix { condition })?;
        let unmix = std::array::from_fn(|r| std::array::from_fn(|c| inv_t[(r, c)]));

        Ok(Self {
            rows: normalised,
            unmix,
            condition,
        })
    }

    pub fn ruifrok_johnston() -> Self {
        Self::new(RUIFROK_JOHNSTON_HED).expect("reference H-E-DAB matrix is well conditioned")
    }

    /// Reads `{"stain_matrix": [[..],[..],[..]]}` (rows in H, E, D order).
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            stain_matrix: [[f64; 3]; 3],
        }
        let text = std::fs::read_to_string(path)?;
        let file: File = serde_json::from_str(&text)?;
        Self::new(file.stain_matrix)
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// `Mᵀ · c`
    #[inline]
    pub fn mix(&self, c: [f64; 3]) -> [f64; 3] {
        let m = &self.rows;
        std::array::from_fn(|ch| c[0] * m[0][ch] + c[1] * m[1][ch] + c[2] * m[2][ch])
    }

    /// `(Mᵀ)⁻¹ · od`
    #[inline]
    pub fn unmix(&self, od: [f64; 3]) -> [f64; 3] {
        let u = &self.unmix;
        std::array::from_fn(|s| u[s][0] * od[0] + u[s][1] * od[1] + u[s][2] * od[2])
    }
}

impl Default for StainMatrix {
    fn default() -> Self {
        Self::ruifrok_johnston()
    }
}

impl Serialize for StainMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StainMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        StainMatrix::new(rows).map_err(serde::de::Error::custom)
    }
}

/// Per-pixel optical densities, interleaved like the source raster.
#[derive(Clone, Debug, PartialEq)]
pub struct OdImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl OdImage {
    pub fn pixel(&self, p: usize) -> [f64; 3] {
        [self.values[3 * p], self.values[3 * p + 1], self.values[3 * p + 2]]
    }
}

/// Per-pixel signed (c_H, c_E, c_D) concentrations.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ConcentrationImage {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut values = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                values.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn pixel(&self, p: usize) -> [f64; 3] {
        [self.values[3 * p], self.values[3 * p + 1], self.values[3 * p + 2]]
    }
}

/// `−log10(max(v, ε) / i0)`, floored at zero.
#[inline]
pub fn intensity_to_od(v: f64, i0: f64) -> f64 {
    (-(v.max(OD_EPSILON) / i0).log10()).max(0.0)
}

/// `i0 · 10^(−od)`, unclamped and unrounded.
#[inline]
pub fn od_to_intensity(od: f64, i0: f64) -> f64 {
    i0 * 10f64.powf(-od)
}

pub fn rgb_to_od<R: RgbRaster>(img: &R, i0: f64) -> OdImage {
    assert!(i0 > 0.0, "reference intensity must be positive");
    let n = 3 * img.pixel_count();
    OdImage {
        width: img.width(),
        height: img.height(),
        values: (0..n).map(|i| intensity_to_od(img.sample(i), i0)).collect(),
    }
}

/// Back to 8-bit (or real-valued, depending on `R`) intensities.
pub fn od_to_rgb<R: RgbRaster>(od: &OdImage, i0: f64) -> R {
    R::from_od(od.width, od.height, &od.values, i0)
}

/// Deconvolves optical densities; concentrations are left signed.
pub fn separate_od(od: &OdImage, m: &StainMatrix) -> ConcentrationImage {
    let values = od
        .values
        .chunks_exact(3)
        .flat_map(|px| m.unmix([px[0], px[1], px[2]]))
        .collect();
    ConcentrationImage {
        width: od.width,
        height: od.height,
        values,
    }
}

pub fn separate_stains<R: RgbRaster>(img: &R, m: &StainMatrix, i0: f64) -> ConcentrationImage {
    separate_od(&rgb_to_od(img, i0), m)
}

/// Forward model `od = Mᵀ · c`; OD may be negative for negative concentrations.
pub fn concentrations_to_od(c: &ConcentrationImage, m: &StainMatrix) -> OdImage {
    let values = c
        .values
        .chunks_exact(3)
        .flat_map(|px| m.mix([px[0], px[1], px[2]]))
        .collect();
    OdImage {
        width: c.width,
        height: c.height,
        values,
    }
}

pub fn compose<R: RgbRaster>(c: &ConcentrationImage, m: &StainMatrix, i0: f64) -> R {
    od_to_rgb(&concentrations_to_od(c, m), i0)
}

/// Keeps one stain: deconvolve, clamp the kept concentration at zero,
/// zero the other two, recompose.
pub fn isolate_channel<R: RgbRaster>(img: &R, stain: Stain, m: &StainMatrix, i0: f64) -> R {
    let k = stain.index();
    let n = img.pixel_count();
    let mut od = Vec::with_capacity(3 * n);
    for p in 0..n {
        let px = img.pixel(p);
        let c = m.unmix([
            intensity_to_od(px[0], i0),
            intensity_to_od(px[1], i0),
            intensity_to_od(px[2], i0),
        ]);
        let mut kept = [0.0; 3];
        kept[k] = c[k].max(0.0);
        od.extend_from_slice(&m.mix(kept));
    }
    R::from_od(img.width(), img.height(), &od, i0)
}
