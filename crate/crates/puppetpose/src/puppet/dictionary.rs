//! Canonical part dictionary built from a labeled template image.

use crate::error::{Error, Result};

/// Integer label image: 0 is background, 1..=L are part labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.labels[y * self.width + x] = v;
    }
}

/// One canonical part: soft support map, shape-uncertainty map, and the
/// anchor points (pixel coordinates) tied to skeleton joints.
#[derive(Clone, Debug)]
pub struct DictPart {
    pub name: String,
    /// Label in the template image (1-based).
    pub label: u8,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub anchors: Vec<[f64; 2]>,
    /// Skeleton joint index per anchor.
    pub joints: Vec<usize>,
}

/// The canonical part dictionary: L part maps, L uncertainty maps, and
/// per-limb joint anchors, all at one template resolution.
#[derive(Clone, Debug)]
pub struct PartDictionary {
    pub width: usize,
    pub height: usize,
    pub parts: Vec<DictPart>,
}

impl PartDictionary {
    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    /// Background channel index in composited maps (0-based).
    pub fn background_channel(&self) -> usize {
        self.parts.len()
    }
}

/// Binary erosion with a disk structuring element of the given radius.
pub fn erode_disk(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let r = radius as isize;
    let r2 = (radius * radius) as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                offsets.push((dx, dy));
            }
        }
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut keep = true;
            for &(dx, dy) in &offsets {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= width as isize || yy >= height as isize {
                    keep = false;
                    break;
                }
                if !mask[(yy * width as isize + xx) as usize] {
                    keep = false;
                    break;
                }
            }
            out[(y * width as isize + x) as usize] = keep;
        }
    }
    out
}

/// Separable Gaussian blur with zero padding; `sigma <= 0` is the identity.
pub fn gaussian_blur(map: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return map.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-0.5 * (i as f64 / sigma).powi(2)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let mut tmp = vec![0.0; map.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = x + k as isize - radius;
                if xx >= 0 && xx < width as isize {
                    acc += kv * map[(y * width as isize + xx) as usize];
                }
            }
            tmp[(y * width as isize + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; map.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = y + k as isize - radius;
                if yy >= 0 && yy < height as isize {
                    acc += kv * tmp[(yy * width as isize + x) as usize];
                }
            }
            out[(y * width as isize + x) as usize] = acc;
        }
    }
    out
}

/// Anchor metadata for [`build_dictionary`]: name, template label, anchor
/// pixels, and the skeleton joints they correspond to.
#[derive(Clone, Debug)]
pub struct PartSpec {
    pub name: String,
    pub label: u8,
    pub anchors: Vec<[f64; 2]>,
    pub joints: Vec<usize>,
}

/// Builds the canonical dictionary from a label map: per part, binarize,
/// erode by a disk, Gaussian-blur into the soft map, and keep
/// `clip(blur(binary) - phi, 0, 1)` as the shape-uncertainty band.
pub fn build_dictionary(
    label_map: &LabelMap,
    parts: &[PartSpec],
    erosion_radius: usize,
    blur_sigma: f64,
) -> Result<PartDictionary> {
    let (w, h) = (label_map.width, label_map.height);
    let mut out = Vec::with_capacity(parts.len());
    for spec in parts {
        if spec.anchors.len() != spec.joints.len() {
            return Err(Error::Template(format!(
                "part {}: anchor/joint count mismatch",
                spec.name
            )));
        }
        for a in &spec.anchors {
            if a[0] < 0.0 || a[1] < 0.0 || a[0] > (w - 1) as f64 || a[1] > (h - 1) as f64 {
                return Err(Error::Template(format!(
                    "part {}: anchor ({}, {}) outside the canvas",
                    spec.name, a[0], a[1]
                )));
            }
        }
        let binary: Vec<bool> = label_map.labels.iter().map(|&l| l == spec.label).collect();
        if !binary.iter().any(|&b| b) {
            return Err(Error::Template(format!("part {} is empty in the template", spec.name)));
        }
        let eroded = erode_disk(&binary, w, h, erosion_radius);
        if !eroded.iter().any(|&b| b) {
            return Err(Error::Template(format!(
                "part {} vanished after erosion radius {erosion_radius}",
                spec.name
            )));
        }
        let eroded_f: Vec<f64> = eroded.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let binary_f: Vec<f64> = binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let phi = gaussian_blur(&eroded_f, w, h, blur_sigma);
        let blurred_raw = gaussian_blur(&binary_f, w, h, blur_sigma);
        let psi: Vec<f64> = blurred_raw
            .iter()
            .zip(&phi)
            .map(|(b, p)| (b - p).clamp(0.0, 1.0))
            .collect();
        out.push(DictPart {
            name: spec.name.clone(),
            label: spec.label,
            phi,
            psi,
            anchors: spec.anchors.clone(),
            joints: spec.joints.clone(),
        });
    }
    Ok(PartDictionary { width: w, height: h, parts: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_map(size: usize, lo: usize, hi: usize) -> LabelMap {
        let mut m = LabelMap::new(size, size);
        for y in lo..hi {
            for x in lo..hi {
                m.set(x, y, 1);
            }
        }
        m
    }

    fn square_spec() -> Vec<PartSpec> {
        vec![PartSpec {
            name: "square".into(),
            label: 1,
            anchors: vec![[10.0, 10.0], [20.0, 20.0]],
            joints: vec![0, 1],
        }]
    }

    #[test]
    fn degenerate_smoothing_reproduces_binary_mask() {
        let m = square_map(32, 8, 24);
        let d = build_dictionary(&m, &square_spec(), 0, 0.0).unwrap();
        for (i, &l) in m.labels.iter().enumerate() {
            assert_eq!(d.parts[0].phi[i], if l == 1 { 1.0 } else { 0.0 });
            assert_eq!(d.parts[0].psi[i], 0.0);
        }
    }

    #[test]
    fn eroded_blurred_square_matches_direct_convolution_oracle() {
        // 20x20 square inside a 40x40 canvas, radius 2, sigma 1.5.
        let m = square_map(40, 10, 30);
        let d = build_dictionary(&m, &square_spec(), 2, 1.5).unwrap();

        // Oracle: direct (non-separable) 2D convolution of the eroded mask.
        let binary: Vec<bool> = m.labels.iter().map(|&l| l == 1).collect();
        let eroded = erode_disk(&binary, 40, 40, 2);
        let sigma = 1.5f64;
        let radius = (3.0 * sigma).ceil() as isize;
        let mut ksum = 0.0;
        let mut kern = vec![];
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                // Separable kernel product, same normalization as the impl.
                let v = (-0.5 * ((dx * dx) as f64) / (sigma * sigma)).exp()
                    * (-0.5 * ((dy * dy) as f64) / (sigma * sigma)).exp();
                kern.push(v);
                ksum += (-0.5 * ((dx * dx) as f64) / (sigma * sigma)).exp();
            }
        }
        // Normalize as product of two normalized 1D kernels.
        let norm1d: f64 = (-radius..=radius)
            .map(|i| (-0.5 * ((i * i) as f64) / (sigma * sigma)).exp())
            .sum();
        let _ = ksum;
        for v in &mut kern {
            *v /= norm1d * norm1d;
        }
        for y in 0..40isize {
            for x in 0..40isize {
                let mut acc = 0.0;
                let mut ki = 0;
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        let (xx, yy) = (x + dx, y + dy);
                        if xx >= 0 && yy >= 0 && xx < 40 && yy < 40 && eroded[(yy * 40 + xx) as usize]
                        {
                            acc += kern[ki];
                        }
                        ki += 1;
                    }
                }
                let got = d.parts[0].phi[(y * 40 + x) as usize];
                assert!((got - acc).abs() < 1e-6, "at ({x},{y}): {got} vs {acc}");
            }
        }

        // Interior is ~1, and psi forms a positive band around the boundary.
        assert!(d.parts[0].phi[20 * 40 + 20] > 0.999);
        let boundary_psi = d.parts[0].psi[10 * 40 + 20];
        assert!(boundary_psi > 0.05, "psi at boundary: {boundary_psi}");
        assert!(d.parts[0].psi[20 * 40 + 20] < 1e-9);
    }

    #[test]
    fn empty_part_after_erosion_is_a_template_error() {
        let m = square_map(16, 7, 9); // 2x2 square
        let err = build_dictionary(&m, &square_spec(), 2, 1.0).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("square"), "{msg}");
    }

    #[test]
    fn anchor_outside_canvas_is_a_template_error() {
        let m = square_map(16, 4, 12);
        let spec = vec![PartSpec {
            name: "square".into(),
            label: 1,
            anchors: vec![[100.0, 0.0], [5.0, 5.0]],
            joints: vec![0, 1],
        }];
        assert!(matches!(
            build_dictionary(&m, &spec, 0, 0.0),
            Err(Error::Template(_))
        ));
    }
}
