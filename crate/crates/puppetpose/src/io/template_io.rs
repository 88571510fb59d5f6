//! Template directory format: `template.png` (palette-indexed labels) plus
//! `template.json` (per-limb anchors and joint names).

use super::png_io;
use crate::error::{Error, Result};
use crate::geometry::Skeleton;
use crate::puppet::{LabelMap, PartSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct TemplateJson {
    resolution: [usize; 2],
    parts: Vec<TemplatePart>,
}

#[derive(Serialize, Deserialize)]
struct TemplatePart {
    name: String,
    label: u8,
    joints: Vec<String>,
    anchors: Vec<[f64; 2]>,
}

/// Distinct palette colors for label visualization (index 0 = background).
pub fn label_palette(num_parts: usize) -> Vec<[u8; 3]> {
    let mut palette = vec![[0u8, 0, 0]];
    for i in 0..num_parts {
        let hue = i as f64 / num_parts as f64 * 6.0;
        let sector = hue.floor() as usize % 6;
        let f = hue - hue.floor();
        let (r, g, b) = match sector {
            0 => (1.0, f, 0.0),
            1 => (1.0 - f, 1.0, 0.0),
            2 => (0.0, 1.0, f),
            3 => (0.0, 1.0 - f, 1.0),
            4 => (f, 0.0, 1.0),
            _ => (1.0, 0.0, 1.0 - f),
        };
        palette.push([(r * 220.0) as u8 + 35, (g * 220.0) as u8 + 35, (b * 220.0) as u8 + 35]);
    }
    palette
}

pub fn save_template(dir: &Path, map: &LabelMap, specs: &[PartSpec], skel: &Skeleton) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    png_io::write_indexed(
        &dir.join("template.png"),
        map.width,
        map.height,
        &map.labels,
        &label_palette(specs.len()),
    )?;
    let json = TemplateJson {
        resolution: [map.height, map.width],
        parts: specs
            .iter()
            .map(|s| TemplatePart {
                name: s.name.clone(),
                label: s.label,
                joints: s.joints.iter().map(|&j| skel.names()[j].clone()).collect(),
                anchors: s.anchors.clone(),
            })
            .collect(),
    };
    std::fs::write(dir.join("template.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

/// Loads the template pair and resolves joint names against the skeleton.
pub fn load_template(dir: &Path, skel: &Skeleton) -> Result<(LabelMap, Vec<PartSpec>)> {
    let (w, h, indices, _palette) = png_io::read_indexed(&dir.join("template.png"))?;
    let text = std::fs::read_to_string(dir.join("template.json"))?;
    let json: TemplateJson = serde_json::from_str(&text)?;
    if json.resolution != [h, w] {
        return Err(Error::Template(format!(
            "template.json resolution {:?} does not match template.png ({h}x{w})",
            json.resolution
        )));
    }
    if json.parts.is_empty() {
        return Err(Error::Template("template.json declares no parts".into()));
    }
    let mut specs = Vec::with_capacity(json.parts.len());
    for part in &json.parts {
        if part.anchors.len() != part.joints.len() {
            return Err(Error::Template(format!(
                "part {}: anchor/joint count mismatch",
                part.name
            )));
        }
        if !indices.iter().any(|&l| l == part.label) {
            return Err(Error::Template(format!(
                "part {} (label {}) does not appear in template.png",
                part.name, part.label
            )));
        }
        let joints = part
            .joints
            .iter()
            .map(|n| {
                skel.joint_index(n)
                    .ok_or_else(|| Error::Template(format!("unknown joint `{n}` in template.json")))
            })
            .collect::<Result<Vec<_>>>()?;
        specs.push(PartSpec {
            name: part.name.clone(),
            label: part.label,
            anchors: part.anchors.clone(),
            joints,
        });
    }
    Ok((LabelMap { width: w, height: h, labels: indices }, specs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puppet::{build_dictionary, builtin_template};
    use tempfile::tempdir;

    #[test]
    fn builtin_template_round_trips_through_files() {
        let skel = Skeleton::default_h17();
        let (map, specs) = builtin_template(&skel, 64);
        let dir = tempdir().unwrap();
        save_template(dir.path(), &map, &specs, &skel).unwrap();
        let (map2, specs2) = load_template(dir.path(), &skel).unwrap();
        assert_eq!(map, map2);
        assert_eq!(specs.len(), specs2.len());
        for (a, b) in specs.iter().zip(&specs2) {
            assert_eq!(a.joints, b.joints);
            assert_eq!(a.anchors, b.anchors);
        }
        // And the loaded pair still builds a dictionary.
        build_dictionary(&map2, &specs2, 1, 1.0).unwrap();
    }

    #[test]
    fn missing_part_label_is_a_template_error() {
        let skel = Skeleton::default_h17();
        let (mut map, specs) = builtin_template(&skel, 64);
        for l in &mut map.labels {
            if *l == 3 {
                *l = 0;
            }
        }
        let dir = tempdir().unwrap();
        save_template(dir.path(), &map, &specs, &skel).unwrap();
        assert!(matches!(
            load_template(dir.path(), &skel),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn non_indexed_png_is_rejected() {
        let skel = Skeleton::default_h17();
        let (map, specs) = builtin_template(&skel, 32);
        let dir = tempdir().unwrap();
        save_template(dir.path(), &map, &specs, &skel).unwrap();
        // Overwrite template.png with an RGB image.
        let rgb: Vec<u8> = vec![128; 32 * 32 * 3];
        png_io::write_rgb8(&dir.path().join("template.png"), 32, 32, &rgb).unwrap();
        assert!(load_template(dir.path(), &skel).is_err());
    }
}
