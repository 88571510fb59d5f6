//! Built-in puppet template: rasterizes the canonical figure into a label
//! map with per-limb anchors at any canvas resolution.

use super::dictionary::{build_dictionary, LabelMap, PartDictionary, PartSpec};
use crate::error::Result;
use crate::geometry::Skeleton;

/// Half-widths of each part's capsule, in normalized skeleton units.
fn part_half_width(name: &str) -> f64 {
    match name {
        "torso" => 0.19,
        "head" => 0.11,
        "l_upper_arm" | "r_upper_arm" => 0.07,
        "l_lower_arm" | "r_lower_arm" => 0.06,
        "l_upper_leg" | "r_upper_leg" => 0.085,
        "l_lower_leg" | "r_lower_leg" => 0.07,
        _ => 0.06,
    }
}

/// Draw order: later parts overwrite earlier ones where capsules overlap
/// (limbs take precedence over the torso near their sockets).
fn draw_priority(name: &str) -> usize {
    match name {
        "torso" => 2,
        "l_upper_leg" | "r_upper_leg" => 0,
        "l_lower_leg" | "r_lower_leg" => 1,
        "head" => 3,
        "l_upper_arm" | "r_upper_arm" => 4,
        "l_lower_arm" | "r_lower_arm" => 5,
        _ => 6,
    }
}

/// Orthographic front-view mapping from canonical coordinates to pixels.
pub struct TemplateProjection {
    pub scale: f64,
    pub cx: f64,
    pub cy: f64,
}

impl TemplateProjection {
    pub fn for_canvas(size: usize) -> Self {
        // The figure spans roughly z in [-1, 1.4]; leave a safety margin.
        let scale = size as f64 * 0.36;
        Self {
            scale,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0 + scale * 0.2,
        }
    }

    /// Image x grows with the body's +Y (mirror view), image y points down.
    pub fn to_px(&self, p: [f64; 3]) -> [f64; 2] {
        [self.cx + self.scale * p[1], self.cy - self.scale * p[2]]
    }
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

/// Rasterizes the built-in figure: one capsule per two-anchor limb and a
/// rounded quad for the torso. Returns the label map and the per-part specs
/// (labels are 1-based in skeleton limb order).
pub fn builtin_template(skel: &Skeleton, size: usize) -> (LabelMap, Vec<PartSpec>) {
    let proj = TemplateProjection::for_canvas(size);
    let tpos = skel.template_positions();
    let mut map = LabelMap::new(size, size);

    let mut order: Vec<usize> = (0..skel.limbs().len()).collect();
    order.sort_by_key(|&i| draw_priority(&skel.limbs()[i].name));

    for &li in &order {
        let limb = &skel.limbs()[li];
        let label = (li + 1) as u8;
        let hw = part_half_width(&limb.name) * proj.scale;
        let anchors_px: Vec<[f64; 2]> = limb.joints.iter().map(|&j| proj.to_px(tpos[j])).collect();
        // Segments to thicken: a single anchor pair, or for the torso the
        // pelvis-neck spine plus the hip line.
        let segments: Vec<([f64; 2], [f64; 2])> = if anchors_px.len() == 4 {
            vec![
                (anchors_px[0], anchors_px[1]),
                (anchors_px[2], anchors_px[3]),
                // Shoulders line keeps the chest filled.
                (
                    [anchors_px[1][0] - hw * 0.5, anchors_px[1][1]],
                    [anchors_px[1][0] + hw * 0.5, anchors_px[1][1]],
                ),
            ]
        } else {
            vec![(anchors_px[0], anchors_px[1])]
        };
        for y in 0..size {
            for x in 0..size {
                let p = [x as f64, y as f64];
                if segments.iter().any(|(a, b)| dist_to_segment(p, *a, *b) <= hw) {
                    map.set(x, y, label);
                }
            }
        }
    }

    let specs = skel
        .limbs()
        .iter()
        .enumerate()
        .map(|(li, limb)| PartSpec {
            name: limb.name.clone(),
            label: (li + 1) as u8,
            anchors: limb.joints.iter().map(|&j| proj.to_px(tpos[j])).collect(),
            joints: limb.joints.clone(),
        })
        .collect();
    (map, specs)
}

/// Builds the canonical dictionary for the built-in template.
pub fn builtin_dictionary(
    skel: &Skeleton,
    size: usize,
    erosion_radius: usize,
    blur_sigma: f64,
) -> Result<PartDictionary> {
    let (map, specs) = builtin_template(skel, size);
    build_dictionary(&map, &specs, erosion_radius, blur_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_parts_nonempty_at_128_and_64() {
        let s = Skeleton::default_h17();
        let d128 = builtin_dictionary(&s, 128, 2, 1.5).unwrap();
        assert_eq!(d128.part_count(), 10);
        let d64 = builtin_dictionary(&s, 64, 1, 1.0).unwrap();
        assert_eq!(d64.part_count(), 10);
        for part in d64.parts.iter().chain(&d128.parts) {
            assert!(part.phi.iter().any(|&v| v > 0.5), "part {} too faint", part.name);
        }
    }

    #[test]
    fn anchors_lie_inside_their_parts_canvas() {
        let s = Skeleton::default_h17();
        let (map, specs) = builtin_template(&s, 128);
        for spec in &specs {
            for a in &spec.anchors {
                assert!(a[0] > 0.0 && a[0] < 127.0);
                assert!(a[1] > 0.0 && a[1] < 127.0);
            }
        }
        // The label map uses all ten labels.
        for l in 1..=10u8 {
            assert!(map.labels.iter().any(|&v| v == l), "label {l} missing");
        }
    }
}
