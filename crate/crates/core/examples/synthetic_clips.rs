//! Write the bundled synthetic training clips as BVH.
//!
//! Usage: `cargo run -p keyloom-core --example synthetic_clips -- <dir>`

use std::path::PathBuf;

use keyloom_core::mocap::write_bvh;
use keyloom_core::synthetic::{desk_dataset, DESK_CLIPS};

fn main() -> keyloom_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into()));
    std::fs::create_dir_all(&dir)?;
    for (i, clip) in desk_dataset()?.clips.iter().enumerate() {
        let path = dir.join(format!("synthetic{i}.bvh"));
        std::fs::write(&path, write_bvh(clip))?;
        println!("{}", path.display());
    }
    assert_eq!(DESK_CLIPS, 4);
    Ok(())
}
