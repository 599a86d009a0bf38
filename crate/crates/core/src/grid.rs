//! Fixed-size raster containers (90×90) and PNG codecs.

use std::fmt;
use std::io::Cursor;

use crate::error::{Error, Result};
use crate::geom::Pixel;
use crate::{IMAGE_SIZE, PIXELS};

/// Binary mask over the frame.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Default for Mask {
    fn default() -> Self {
        Mask::empty()
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({} px)", self.area())
    }
}

impl Mask {
    pub fn empty() -> Self {
        Mask {
            bits: vec![false; PIXELS],
        }
    }

    pub fn full() -> Self {
        Mask {
            bits: vec![true; PIXELS],
        }
    }

    pub fn from_fn(mut f: impl FnMut(Pixel) -> bool) -> Self {
        Mask {
            bits: (0..PIXELS).map(|i| f(Pixel::from_index(i))).collect(),
        }
    }

    pub fn from_pixels<I: IntoIterator<Item = Pixel>>(pixels: I) -> Self {
        let mut m = Mask::empty();
        for p in pixels {
            m.set(p, true);
        }
        m
    }

    /// Axis-aligned rectangle covering rows `r0..r1` and columns `c0..c1`.
    pub fn rect(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Mask::from_fn(|p| (r0..r1).contains(&p.row) && (c0..c1).contains(&p.col))
    }

    pub fn get(&self, p: Pixel) -> bool {
        self.bits[p.index()]
    }

    pub fn get_signed(&self, row: i64, col: i64) -> bool {
        Pixel::in_frame(row, col) && self.bits[row as usize * IMAGE_SIZE + col as usize]
    }

    pub fn set(&mut self, p: Pixel, v: bool) {
        self.bits[p.index()] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| Pixel::from_index(i))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        Mask {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a || b)
    }

    /// Pixels in `self` but not in `other`.
    pub fn minus(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && !b)
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// 3×3 dilation; off-frame pixels never become set.
    pub fn dilate(&self) -> Mask {
        Mask::from_fn(|p| {
            let (r, c) = (p.row as i64, p.col as i64);
            NEIGHBORHOOD
                .iter()
                .any(|&(dr, dc)| self.get_signed(r + dr, c + dc))
        })
    }

    /// 3×3 erosion. `border_set` decides whether off-frame pixels count as set.
    pub fn erode_with_border(&self, border_set: bool) -> Mask {
        Mask::from_fn(|p| {
            let (r, c) = (p.row as i64, p.col as i64);
            NEIGHBORHOOD.iter().all(|&(dr, dc)| {
                let (rr, cc) = (r + dr, c + dc);
                if Pixel::in_frame(rr, cc) {
                    self.get_signed(rr, cc)
                } else {
                    border_set
                }
            })
        })
    }

    pub fn erode(&self) -> Mask {
        self.erode_with_border(false)
    }

    /// Morphological closing with a 3×3 square; the frame border is treated
    /// as set so closing never removes pixels.
    pub fn close(&self) -> Mask {
        self.dilate().erode_with_border(true)
    }

    /// Pixels not in the mask that touch it (8-connectivity).
    pub fn outer_border(&self) -> Mask {
        self.dilate().minus(self)
    }

    pub fn to_gray(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let n = self.area();
        if n == 0 {
            return None;
        }
        let (sr, sc) = self
            .pixels()
            .fold((0.0, 0.0), |(r, c), p| (r + p.row as f64, c + p.col as f64));
        Some((sr / n as f64, sc / n as f64))
    }
}

const NEIGHBORHOOD: [(i64, i64); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Integer label per pixel (0 = background).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabelImage {
    labels: Vec<u8>,
}

impl fmt::Debug for LabelImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelImage(max {})", self.max_label())
    }
}

impl Default for LabelImage {
    fn default() -> Self {
        LabelImage {
            labels: vec![0; PIXELS],
        }
    }
}

impl LabelImage {
    pub fn from_vec(labels: Vec<u8>) -> Result<Self> {
        if labels.len() != PIXELS {
            return Err(Error::Decode(format!(
                "label image has {} pixels, expected {PIXELS}",
                labels.len()
            )));
        }
        Ok(LabelImage { labels })
    }

    pub fn get(&self, p: Pixel) -> u8 {
        self.labels[p.index()]
    }

    pub fn set(&mut self, p: Pixel, v: u8) {
        self.labels[p.index()] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn mask_of(&self, label: u8) -> Mask {
        Mask::from_fn(|p| self.get(p) == label)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn foreground(&self) -> Mask {
        Mask::from_fn(|p| self.get(p) > 0)
    }
}

/// 8-bit RGB image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    data: Vec<u8>,
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({IMAGE_SIZE}x{IMAGE_SIZE})")
    }
}

impl RgbImage {
    pub fn filled(rgb: [u8; 3]) -> Self {
        RgbImage {
            data: rgb.iter().copied().cycle().take(PIXELS * 3).collect(),
        }
    }

    pub fn from_vec(data: Vec<u8>) -> Result<Self> {
        if data.len() != PIXELS * 3 {
            return Err(Error::Decode(format!(
                "rgb image has {} bytes, expected {}",
                data.len(),
                PIXELS * 3
            )));
        }
        Ok(RgbImage { data })
    }

    pub fn get(&self, p: Pixel) -> [u8; 3] {
        let i = p.index() * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, p: Pixel, rgb: [u8; 3]) {
        let i = p.index() * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel value scaled to [0, 1].
    pub fn value(&self, p: Pixel, channel: usize) -> f64 {
        f64::from(self.data[p.index() * 3 + channel]) / 255.0
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

/// Quantize a [0, 1] intensity to a byte.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Real-valued map over the frame.
#[derive(Clone, PartialEq)]
pub struct ScalarMap {
    values: Vec<f64>,
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarMap(max {})", self.max())
    }
}

impl ScalarMap {
    pub fn zeros() -> Self {
        ScalarMap {
            values: vec![0.0; PIXELS],
        }
    }

    pub fn from_fn(mut f: impl FnMut(Pixel) -> f64) -> Self {
        ScalarMap {
            values: (0..PIXELS).map(|i| f(Pixel::from_index(i))).collect(),
        }
    }

    pub fn get(&self, p: Pixel) -> f64 {
        self.values[p.index()]
    }

    pub fn set(&mut self, p: Pixel, v: f64) {
        self.values[p.index()] = v;
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> Pixel {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        Pixel::from_index(best)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Single-channel byte image, `round(value × 255)`.
    pub fn to_gray(&self) -> Vec<u8> {
        self.values.iter().map(|&v| to_byte(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngKind {
    Gray,
    Rgb,
}

pub fn encode_png(data: &[u8], kind: PngKind) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, IMAGE_SIZE as u32, IMAGE_SIZE as u32);
        enc.set_color(match kind {
            PngKind::Gray => png::ColorType::Grayscale,
            PngKind::Rgb => png::ColorType::Rgb,
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer
            .write_image_data(data)
            .expect("in-memory png body has the declared size");
    }
    out
}

/// Encode an arbitrary-size RGB image.
pub fn encode_png_rgb_sized(data: &[u8], width: u32, height: u32) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer
            .write_image_data(data)
            .expect("in-memory png body has the declared size");
    }
    out
}

pub fn decode_png(bytes: &[u8], kind: PngKind) -> Result<Vec<u8>> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Decode(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Decode(e.to_string()))?;
    if info.width as usize != IMAGE_SIZE || info.height as usize != IMAGE_SIZE {
        return Err(Error::Decode(format!(
            "png is {}x{}, expected {IMAGE_SIZE}x{IMAGE_SIZE}",
            info.width, info.height
        )));
    }
    let expected = match kind {
        PngKind::Gray => png::ColorType::Grayscale,
        PngKind::Rgb => png::ColorType::Rgb,
    };
    if info.color_type != expected || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Decode(format!(
            "png has color type {:?}/{:?}, expected {expected:?}/8",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(buf)
}
