//! On-disk dataset layout: per pair an OFF file for each mesh plus a
//! correspondence file with one `src_idx dst_idx` line per vertex.
//!
//! ```text
//! pair_0000_a.off
//! pair_0000_b.off
//! pair_0000.corr
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::hiergraph::Correspondence;
use crate::mesh::{load_mesh, write_off, MeshFormat};

use super::synth::ShapePairSample;
use super::PipelineError;

pub fn pair_file_names(index: usize) -> (String, String, String) {
    (
        format!("pair_{index:04}_a.off"),
        format!("pair_{index:04}_b.off"),
        format!("pair_{index:04}.corr"),
    )
}

pub fn save_pair(dir: &Path, index: usize, sample: &ShapePairSample) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    let (a, b, corr) = pair_file_names(index);
    fs::write(dir.join(a), write_off(&sample.mesh_a))?;
    fs::write(dir.join(b), write_off(&sample.mesh_b))?;
    let mut lines = String::new();
    for src in 0..sample.mesh_a.vertices.len() {
        let dst = sample
            .correspondence
            .image(src)
            .ok_or(PipelineError::MissingCorrespondence(src))?;
        lines.push_str(&format!("{src} {dst}\n"));
    }
    fs::write(dir.join(corr), lines)?;
    Ok(())
}

/// Load every `pair_*_a.off` / `_b.off` / `.corr` triple, sorted by name.
pub fn load_dataset(dir: &Path) -> Result<Vec<ShapePairSample>, PipelineError> {
    let mut stems: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix("_a.off").map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(PipelineError::EmptyDataset(dir.display().to_string()));
    }
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let mesh_a = load_mesh(&fs::read(dir.join(format!("{stem}_a.off")))?, MeshFormat::Off)?;
        let mesh_b = load_mesh(&fs::read(dir.join(format!("{stem}_b.off")))?, MeshFormat::Off)?;
        let corr_path = dir.join(format!("{stem}.corr"));
        let corr_text = fs::read_to_string(&corr_path)?;
        let mut map = BTreeMap::new();
        for (k, line) in corr_text.lines().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if toks.len() != 2 {
                return Err(PipelineError::BadCorrespondenceFile {
                    path: corr_path.display().to_string(),
                    line: k + 1,
                });
            }
            let src: usize = toks[0].parse().map_err(|_| PipelineError::BadCorrespondenceFile {
                path: corr_path.display().to_string(),
                line: k + 1,
            })?;
            let dst: usize = toks[1].parse().map_err(|_| PipelineError::BadCorrespondenceFile {
                path: corr_path.display().to_string(),
                line: k + 1,
            })?;
            map.insert(src, dst);
        }
        out.push(ShapePairSample {
            mesh_a,
            mesh_b,
            correspondence: Correspondence::Map(map),
            provenance: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::pipeline::synth::{generate_synthetic_pair, BaseShape, DeformParams};

    use super::*;

    #[test]
    fn dataset_roundtrips_through_the_directory_layout() {
        let dir = std::env::temp_dir().join(format!("shapecorr_ds_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples = Vec::new();
        for k in 0..2 {
            let deform = DeformParams { bend_angle: 0.3 + 0.1 * k as f64, ..Default::default() };
            let s = generate_synthetic_pair(BaseShape::Cylinder, (24, 24), deform, &mut rng).unwrap();
            save_pair(&dir, k, &s).unwrap();
            samples.push(s);
        }
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.len(), 2);
        for (orig, back) in samples.iter().zip(&loaded) {
            assert_eq!(orig.mesh_a.faces, back.mesh_a.faces);
            assert_eq!(orig.mesh_b.vertices.len(), back.mesh_b.vertices.len());
            for v in 0..orig.mesh_a.vertices.len() {
                assert_eq!(back.correspondence.image(v), Some(v));
                for axis in 0..3 {
                    // OFF text stores shortest round-trip decimal for f64.
                    assert_eq!(orig.mesh_a.vertices[v][axis], back.mesh_a.vertices[v][axis]);
                }
            }
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = std::env::temp_dir().join(format!("shapecorr_empty_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        assert!(matches!(load_dataset(&dir), Err(PipelineError::EmptyDataset(_))));
        let _ = fs::remove_dir_all(&dir);
    }
}
