//! Deterministic local caption overlay.
//!
//! The caption is word-wrapped at 28 characters per line and drawn with the
//! public-domain 8x8 bitmap font from `font8x8`, scaled by an integer factor,
//! white with a dark outline, centered inside a semi-opaque dark band across
//! the top of the image. All arithmetic is integer, so output bytes depend
//! only on the inputs and the PNG encoder version.

use std::io::Cursor;

use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};
use thiserror::Error;

/// Bumped whenever output bytes change; part of the render cache key.
pub const RENDERER_VERSION: &str = "overlay-v1";

const GLYPH: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayStyle {
    pub chars_per_line: usize,
    /// Opacity of the black band, 0-255.
    pub band_alpha: u8,
    pub fill: [u8; 3],
    pub outline: [u8; 3],
    /// Maximum fraction (percent) of the image height the band may cover.
    pub max_band_percent: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            chars_per_line: 28,
            band_alpha: 160,
            fill: [255, 255, 255],
            outline: [16, 16, 16],
            max_band_percent: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("source image could not be decoded: {0}")]
    Decode(String),
    #[error("could not encode output image: {0}")]
    Encode(String),
}

/// Greedy word wrap. Words longer than `width` are split.
pub fn wrap_caption(caption: &str, width: usize) -> Vec<String> {
    let width = width.max(1);
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in caption.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        while word.len() > width {
            if !current.is_empty() {
                lines.push(std::mem::take(&mut current));
            }
            lines.push(word.drain(..width).collect());
        }
        let word: String = word.into_iter().collect();
        if word.is_empty() {
            continue;
        }
        let needed = if current.is_empty() { 0 } else { current.chars().count() + 1 };
        if needed + word.chars().count() > width {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(&word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

fn glyph(c: char) -> [u8; 8] {
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| BASIC_FONTS.get('?'))
        .expect("'?' is in the basic font")
}

/// Decodes `source`, overlays `caption` and returns PNG bytes of the same
/// dimensions.
pub fn render_overlay(source: &[u8], caption: &str, style: &OverlayStyle) -> Result<Vec<u8>, RenderError> {
    let decoded = image::load_from_memory(source).map_err(|e| RenderError::Decode(e.to_string()))?;
    let mut canvas = decoded.to_rgb8();
    draw_caption(&mut canvas, caption, style);
    encode_png(&canvas)
}

pub fn draw_caption(canvas: &mut RgbImage, caption: &str, style: &OverlayStyle) {
    let (width, height) = canvas.dimensions();
    let lines = wrap_caption(caption, style.chars_per_line);
    if lines.is_empty() || width == 0 || height == 0 {
        return;
    }
    let n_lines = lines.len() as u32;

    // Largest integer scale that fits 28 glyphs in 90% of the width and the
    // whole block in the allowed band height.
    let by_width = (width * 9 / 10) / (style.chars_per_line as u32 * GLYPH);
    let max_band = height * style.max_band_percent / 100;
    let by_height = max_band / (n_lines * (GLYPH + 2) + 2).max(1);
    let scale = by_width.min(by_height).max(1);

    let line_height = (GLYPH + 2) * scale;
    let pad = scale * 2;
    let band_height = (n_lines * line_height + 2 * pad).min(height);

    let keep = 255 - u32::from(style.band_alpha);
    for y in 0..band_height {
        for x in 0..width {
            let px = canvas.get_pixel_mut(x, y);
            for c in px.0.iter_mut() {
                *c = ((u32::from(*c) * keep + 127) / 255) as u8;
            }
        }
    }

    let outline = (scale / 2).max(1) as i64;
    for pass in 0..2 {
        let (color, grow) = if pass == 0 {
            (Rgb(style.outline), outline)
        } else {
            (Rgb(style.fill), 0)
        };
        for (row, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            let text_width = chars.len() as i64 * i64::from(GLYPH * scale);
            let x0 = (i64::from(width) - text_width) / 2;
            let y0 = i64::from(pad + row as u32 * line_height + scale);
            for (i, ch) in chars.iter().enumerate() {
                let gx = x0 + i as i64 * i64::from(GLYPH * scale);
                for (gy, bits) in glyph(*ch).iter().enumerate() {
                    for bit in 0..8 {
                        if bits & (1 << bit) == 0 {
                            continue;
                        }
                        let px = gx + i64::from(bit * scale);
                        let py = y0 + gy as i64 * i64::from(scale);
                        fill_rect(
                            canvas,
                            px - grow,
                            py - grow,
                            i64::from(scale) + 2 * grow,
                            i64::from(scale) + 2 * grow,
                            color,
                            band_height,
                        );
                    }
                }
            }
        }
    }
}

fn fill_rect(canvas: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Rgb<u8>, y_limit: u32) {
    let (width, _) = canvas.dimensions();
    let x_start = x.max(0);
    let y_start = y.max(0);
    let x_end = (x + w).min(i64::from(width));
    let y_end = (y + h).min(i64::from(y_limit));
    for yy in y_start..y_end {
        for xx in x_start..x_end {
            canvas.put_pixel(xx as u32, yy as u32, color);
        }
    }
}

pub fn encode_png(canvas: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Cursor::new(Vec::new());
    let encoder = PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive);
    encoder
        .write_image(
            canvas.as_raw(),
            canvas.width(),
            canvas.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}
