use std::path::{Path, PathBuf};

use keyloom_core::mocap::{load_clip, parse_bvh};
use keyloom_core::training::Dataset;
use keyloom_core::MotionClip;

use crate::error::{at, CliError, CliResult};

fn is_clip_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("klm" | "bvh"))
}

/// Expand directories (non-recursively, sorted) into their clip files.
pub fn clip_paths(inputs: &[PathBuf], extensions: &[&str]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::user(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().and_then(|e| e.to_str()).is_some_and(|e| extensions.contains(&e)))
                .collect();
            entries.sort();
            out.extend(entries);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(CliError::user(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(out)
}

/// Load a `.klm` clip, or parse a `.bvh` file with hemispheres canonicalized.
pub fn load_any_clip(path: &Path) -> CliResult<MotionClip> {
    if path.extension().and_then(|e| e.to_str()) == Some("bvh") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let (_, mut clip) = parse_bvh(&text).map_err(at(path))?;
        clip.canonicalize_hemispheres();
        Ok(clip)
    } else {
        load_clip(path).map_err(at(path))
    }
}

pub fn clip_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Every clip under `inputs`, named by file stem.
pub fn load_dataset(inputs: &[PathBuf]) -> CliResult<Dataset> {
    let paths: Vec<PathBuf> = clip_paths(inputs, &["klm", "bvh"])?
        .into_iter()
        .filter(|p| is_clip_file(p))
        .collect();
    if paths.is_empty() {
        return Err(CliError::user("dataset: no .klm or .bvh clips found"));
    }
    let clips = paths.iter().map(|p| load_any_clip(p)).collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset::new(paths.iter().map(|p| clip_name(p)).collect(), clips)?)
}
