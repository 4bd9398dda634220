//! Scene manifests, synthetic scenes, and benchmark runs for the panoblend
//! blenders.

pub mod bench;
pub mod compare;
pub mod error;
pub mod io;
pub mod manifest;
pub mod synth;

pub use bench::{peak_rss_mb, run_benchmark, run_blend, write_report, RunOptions, RunReport};
pub use compare::{compare_outputs, DiffStats};
pub use error::{HarnessError, Result};
pub use manifest::{load_manifest, load_scene, scene_layout, SceneManifest};
pub use synth::{synth_scene, write_scene, Arrangement, SynthScene, SynthSpec};
