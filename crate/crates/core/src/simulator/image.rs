//! Glyph rendering on a noisy grey background.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::simulator::{DigitState, NUM_DIGITS};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const GLYPH_SIDE: usize = 8;

/// 8×8 bitmaps in label order `0 6 8 3 9`; bit 7 of each row byte is the
/// leftmost column.
const GLYPHS: [[u8; GLYPH_SIDE]; NUM_DIGITS] = [
    // 0
    [0x3C, 0x66, 0x66, 0x66, 0x66, 0x66, 0x3C, 0x00],
    // 6
    [0x3C, 0x60, 0x60, 0x7C, 0x66, 0x66, 0x3C, 0x00],
    // 8
    [0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x3C, 0x00],
    // 3
    [0x7C, 0x06, 0x06, 0x3C, 0x06, 0x06, 0x7C, 0x00],
    // 9
    [0x3C, 0x66, 0x66, 0x3E, 0x06, 0x0C, 0x38, 0x00],
];

/// Whether glyph `index` has ink at (row, col) after `quarter_turns`
/// clockwise 90° rotations (nearest neighbour, exact on the 8×8 grid).
pub fn glyph_pixel(index: usize, quarter_turns: u8, row: usize, col: usize) -> bool {
    let n = GLYPH_SIDE - 1;
    let (r, c) = match quarter_turns % 4 {
        0 => (row, col),
        1 => (n - col, row),
        2 => (n - row, n - col),
        _ => (col, n - row),
    };
    GLYPHS[index][r] & (0x80 >> c) != 0
}

pub fn glyph_ink_count(index: usize) -> usize {
    GLYPHS[index].iter().map(|b| b.count_ones() as usize).sum()
}

/// 32×32 grayscale image. Pixels are stored as bytes, value `b / 255`,
/// row-major with the top row first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pixels: Vec<u8>,
}

impl Image {
    pub fn from_bytes(pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == IMAGE_PIXELS).then_some(Image { pixels })
    }

    /// Quantizes `[0, 1]` values (clamped) to bytes.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        (values.len() == IMAGE_PIXELS).then(|| Image {
            pixels: values.iter().map(|&v| quantize(v)).collect(),
        })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        f64::from(self.pixels[row * IMAGE_SIDE + col]) / 255.0
    }

    pub fn values(&self) -> Vec<f64> {
        self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn write_values(&self, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&self.pixels) {
            *o = f64::from(b) / 255.0;
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Grey level of the background.
    pub background: f64,
    /// Grey level of glyph strokes.
    pub ink: f64,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            background: 0.5,
            ink: 1.0,
            noise_sigma: 0.15,
        }
    }
}

/// Where one glyph landed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub quarter_turns: u8,
}

/// Draws every digit of `digits` (label order) at a uniform position fully
/// inside the frame with a uniform quarter-turn rotation, then adds noise.
pub fn render_image(digits: DigitState, config: &RenderConfig, rng: &mut Rng) -> Image {
    render_with_placements(digits, config, rng).0
}

pub fn render_with_placements(
    digits: DigitState,
    config: &RenderConfig,
    rng: &mut Rng,
) -> (Image, Vec<Placement>) {
    let mut canvas = vec![config.background; IMAGE_PIXELS];
    let max_offset = (IMAGE_SIDE - GLYPH_SIDE) as i64;
    let mut placements = Vec::new();
    for index in digits.indices() {
        let p = Placement {
            index,
            row: rng.uniform_int(0, max_offset).expect("valid range") as usize,
            col: rng.uniform_int(0, max_offset).expect("valid range") as usize,
            quarter_turns: rng.uniform_int(0, 3).expect("valid range") as u8,
        };
        for r in 0..GLYPH_SIDE {
            for c in 0..GLYPH_SIDE {
                if glyph_pixel(index, p.quarter_turns, r, c) {
                    canvas[(p.row + r) * IMAGE_SIDE + p.col + c] = config.ink;
                }
            }
        }
        placements.push(p);
    }
    if config.noise_sigma > 0.0 {
        for v in canvas.iter_mut() {
            *v += config.noise_sigma * rng.standard_normal();
        }
    }
    let image = Image::from_values(&canvas).expect("canvas has image size");
    (image, placements)
}
