use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use eeg2image_tensor::Tensor;

use crate::error::{Error, Result};

const GAP: usize = 2;

fn to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Lays out `[H, W, 3]` images in rows (one row per class) on a black canvas
/// with a 2-pixel gap. Returns `(width, height, rgb bytes)`.
pub fn image_grid_rgb(rows: &[Vec<Tensor<f32>>]) -> Result<(usize, usize, Vec<u8>)> {
    let first = rows
        .iter()
        .flat_map(|r| r.first())
        .next()
        .ok_or_else(|| Error::Config("image grid needs at least one image".into()))?;
    let (h, w) = (first.dim(0), first.dim(1));
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width = cols * w + (cols + 1) * GAP;
    let height = rows.len() * h + (rows.len() + 1) * GAP;
    let mut buf = vec![0u8; width * height * 3];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            if img.shape() != [h, w, 3] {
                return Err(Error::Shape(format!("grid image {:?}, expected [{h}, {w}, 3]", img.shape())));
            }
            let (oy, ox) = (GAP + r * (h + GAP), GAP + c * (w + GAP));
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..3 {
                        buf[((oy + y) * width + ox + x) * 3 + ch] = to_u8(img.data()[(y * w + x) * 3 + ch]);
                    }
                }
            }
        }
    }
    Ok((width, height, buf))
}

/// Writes an 8-bit RGB PNG; pixel `v` maps to `round((v + 1) * 127.5)`
/// clamped to `[0, 255]`.
pub fn write_png_grid(path: &Path, rows: &[Vec<Tensor<f32>>]) -> Result<()> {
    let (width, height, buf) = image_grid_rgb(rows)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::write(dir))?;
    }
    let file = File::create(path).map_err(Error::write(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| std::io::Error::other(e.to_string());
    let mut writer = enc.write_header().map_err(|e| Error::Write { path: path.into(), source: to_io(e) })?;
    writer.write_image_data(&buf).map_err(|e| Error::Write { path: path.into(), source: to_io(e) })?;
    writer.finish().map_err(|e| Error::Write { path: path.into(), source: to_io(e) })
}
