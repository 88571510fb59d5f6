//! PNG codecs: 8-bit RGB images, palette-indexed label maps, and 16-bit
//! grayscale map dumps. All round trips are lossless.

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub fn write_rgb8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    if data.len() != width * height * 3 {
        return Err(Error::InvalidInput("rgb8 buffer size mismatch".into()));
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(data)?;
    Ok(())
}

pub fn read_rgb8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(File::open(path)?);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks(4).flat_map(|px| px[..3].to_vec()).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
        other => {
            return Err(Error::Schema(format!("unsupported color type {other:?} for rgb read")))
        }
    };
    Ok((w, h, rgb))
}

/// Writes a palette-indexed PNG (index 0 is background by convention).
pub fn write_indexed(
    path: &Path,
    width: usize,
    height: usize,
    indices: &[u8],
    palette: &[[u8; 3]],
) -> Result<()> {
    if indices.len() != width * height {
        return Err(Error::InvalidInput("index buffer size mismatch".into()));
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(palette.iter().flatten().copied().collect::<Vec<u8>>());
    let mut writer = encoder.write_header()?;
    writer.write_image_data(indices)?;
    Ok(())
}

/// Reads a palette-indexed PNG, returning raw indices and the palette.
pub fn read_indexed(path: &Path) -> Result<(usize, usize, Vec<u8>, Vec<[u8; 3]>)> {
    let mut decoder = png::Decoder::new(File::open(path)?);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Indexed {
        return Err(Error::Schema(format!(
            "expected a palette-indexed PNG, got {:?}",
            info.color_type
        )));
    }
    let palette = reader
        .info()
        .palette
        .as_ref()
        .ok_or_else(|| Error::Schema("indexed PNG carries no palette".into()))?
        .chunks(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    // Depths below 8 bits pack several indices per byte; unpack them.
    let indices = match info.bit_depth {
        png::BitDepth::Eight => buf,
        png::BitDepth::Four | png::BitDepth::Two | png::BitDepth::One => {
            let bits = match info.bit_depth {
                png::BitDepth::Four => 4,
                png::BitDepth::Two => 2,
                _ => 1,
            };
            let per_byte = 8 / bits;
            let mask = (1u16 << bits) - 1;
            let row_bytes = w.div_ceil(per_byte);
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let byte = buf[y * row_bytes + x / per_byte];
                    let shift = 8 - bits * (x % per_byte + 1);
                    out.push(((byte as u16 >> shift) & mask) as u8);
                }
            }
            out
        }
        other => return Err(Error::Schema(format!("unsupported index depth {other:?}"))),
    };
    Ok((w, h, indices, palette))
}

pub fn write_gray16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::InvalidInput("gray16 buffer size mismatch".into()));
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header()?;
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes)?;
    Ok(())
}

pub fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let mut decoder = png::Decoder::new(File::open(path)?);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Schema("expected 16-bit grayscale PNG".into()));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..info.buffer_size()]
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((w, h, data))
}

/// `[3,H,W]` tensor in [0,1] to interleaved 8-bit RGB.
pub fn tensor_to_rgb8(t: &Tensor) -> Vec<u8> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut out = Vec::with_capacity(w * h * 3);
    for i in 0..h * w {
        for c in 0..3 {
            let v = t.data()[c * h * w + i].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// Interleaved 8-bit RGB to a `[3,H,W]` tensor in [0,1].
pub fn rgb8_to_tensor(width: usize, height: usize, data: &[u8]) -> Tensor {
    let mut t = Tensor::zeros(vec![3, height, width]);
    for i in 0..width * height {
        for c in 0..3 {
            t.data_mut()[c * height * width + i] = data[i * 3 + c] as f64 / 255.0;
        }
    }
    t
}

/// Soft map in [0,1] to 16-bit samples.
pub fn map_to_gray16(map: &[f64]) -> Vec<u16> {
    map.iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn rgb8_round_trip_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let data: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
        write_rgb8(&path, 4, 3, &data).unwrap();
        let (w, h, back) = read_rgb8(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, data);
    }

    #[test]
    fn indexed_round_trip_keeps_indices_and_palette() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let indices: Vec<u8> = vec![0, 1, 2, 3, 3, 2, 1, 0, 1, 1, 2, 2];
        let palette = vec![[0, 0, 0], [255, 0, 0], [0, 255, 0], [0, 0, 255]];
        write_indexed(&path, 4, 3, &indices, &palette).unwrap();
        let (w, h, back, pal) = read_indexed(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, indices);
        assert_eq!(pal, palette);
    }

    #[test]
    fn gray16_round_trip_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("map.png");
        let data: Vec<u16> = (0..20).map(|i| (i * 3271) as u16).collect();
        write_gray16(&path, 5, 4, &data).unwrap();
        let (w, h, back) = read_gray16(&path).unwrap();
        assert_eq!((w, h), (5, 4));
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_file_is_a_decode_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("broken.png");
        let data: Vec<u8> = (0..16 * 16 * 3).map(|i| i as u8).collect();
        write_rgb8(&path, 16, 16, &data).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(read_rgb8(&path).is_err());
    }
}
