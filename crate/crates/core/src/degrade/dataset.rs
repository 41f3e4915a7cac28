//! Degraded dataset synthesis and the JSON-lines manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, synth_case, CaseRecipe, DegradationParams, DegradeError, Setting};
use crate::raster::Raster;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One degraded image. Paths are stored as written; relative paths are
/// resolved against the manifest's directory when loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clean: String,
    pub degraded: String,
    pub case_id: u32,
    pub setting: Setting,
    pub seed: u64,
    pub params: Vec<DegradationParams>,
}

/// Lists `*.png` files in `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, DegradeError> {
    let entries = fs::read_dir(dir).map_err(|e| DegradeError::Unreadable {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Per-image seed: the run seed mixed with a (case, index) counter.
pub fn image_seed(seed: u64, case_id: u32, index: usize) -> u64 {
    seed ^ ((case_id as u64) << 32 | index as u64)
}

/// Writes `n_per_case` degraded PNGs per case into `out_dir` together with
/// `manifest.jsonl`. Clean images are used round-robin in name order.
pub fn synth_dataset(
    clean_dir: &Path,
    cases: &[CaseRecipe],
    n_per_case: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>, DegradeError> {
    let clean_paths = list_pngs(clean_dir)?;
    if clean_paths.is_empty() {
        return Err(DegradeError::EmptyDirectory(clean_dir.display().to_string()));
    }
    fs::create_dir_all(out_dir).map_err(|e| DegradeError::Unwritable {
        path: out_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let clean: Vec<Raster> = clean_paths
        .iter()
        .map(|p| {
            Raster::load_png(p).map_err(|e| DegradeError::Unreadable {
                path: p.display().to_string(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(&CaseRecipe, usize)> = cases
        .iter()
        .flat_map(|c| (0..n_per_case).map(move |i| (c, i)))
        .collect();
    let rows: Vec<ManifestRow> = jobs
        .par_iter()
        .map(|&(recipe, i)| {
            let src = i % clean.len();
            let s = image_seed(seed, recipe.case_id, i);
            let out = synth_case(&clean[src], recipe, &mut seeded_rng(s));
            let name = format!("case{:02}_{:04}.png", recipe.case_id, i);
            let dst = out_dir.join(&name);
            out.image.save_png(&dst).map_err(|e| DegradeError::Unwritable {
                path: dst.display().to_string(),
                reason: e.to_string(),
            })?;
            Ok(ManifestRow {
                clean: clean_paths[src].display().to_string(),
                degraded: name,
                case_id: recipe.case_id,
                setting: recipe.setting,
                seed: s,
                params: out.params,
            })
        })
        .collect::<Result<_, DegradeError>>()?;

    write_manifest(&out_dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), DegradeError> {
    let err = |e: std::io::Error| DegradeError::Unwritable {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut f = fs::File::create(path).map_err(err)?;
    for row in rows {
        let line = serde_json::to_string(row).expect("manifest rows serialize");
        writeln!(f, "{line}").map_err(err)?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, DegradeError> {
    let err = |reason: String| DegradeError::Unreadable {
        path: path.display().to_string(),
        reason,
    };
    let f = fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(manifest: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::degrade::{all_cases, cases_in_setting};

    fn clean_dir(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (i, img) in corpus::corpus(n, 32, 0).iter().enumerate() {
            img.save_png(dir.path().join(format!("img{i:02}.png"))).unwrap();
        }
        dir
    }

    #[test]
    fn setting_one_at_twenty_per_case_gives_one_hundred_rows() {
        let clean = clean_dir(3);
        let out = tempfile::tempdir().unwrap();
        let cases = cases_in_setting(Setting::I);
        let rows = synth_dataset(clean.path(), &cases, 20, 5, out.path()).unwrap();
        assert_eq!(rows.len(), 100);
        let back = read_manifest(&out.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, rows);
        for row in &rows {
            assert!(resolve(&out.path().join(MANIFEST_FILE), &row.degraded).exists());
        }
    }

    #[test]
    fn zero_per_case_and_empty_dir() {
        let clean = clean_dir(1);
        let out = tempfile::tempdir().unwrap();
        let rows = synth_dataset(clean.path(), &all_cases(), 0, 1, out.path()).unwrap();
        assert!(rows.is_empty());

        let empty = tempfile::tempdir().unwrap();
        let err = synth_dataset(empty.path(), &all_cases(), 1, 1, out.path()).unwrap_err();
        assert!(matches!(err, DegradeError::EmptyDirectory(p) if p.contains(&empty.path().display().to_string())));
    }

    #[test]
    fn unreadable_file_names_the_path() {
        let clean = clean_dir(1);
        std::fs::write(clean.path().join("broken.png"), b"not a png").unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = synth_dataset(clean.path(), &all_cases()[..1], 1, 1, out.path()).unwrap_err();
        assert!(err.to_string().contains("broken.png"));
    }

    #[test]
    fn rerun_is_identical() {
        let clean = clean_dir(2);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cases = &all_cases()[..3];
        synth_dataset(clean.path(), cases, 2, 77, a.path()).unwrap();
        synth_dataset(clean.path(), cases, 2, 77, b.path()).unwrap();
        let ma = std::fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        let mb = std::fs::read(b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
        for name in ["case01_0000.png", "case03_0001.png"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
    }
}
