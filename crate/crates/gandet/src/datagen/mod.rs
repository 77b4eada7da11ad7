//! Synthetic corpus generation: procedural "real" scenes, periodic
//! generator fingerprints, PPM storage, and the JSONL manifest contract.

mod corpus;
mod fingerprint;
mod manifest;
mod ppm;
mod scene;
pub(crate) mod spectrum;

pub use corpus::{build_corpus, CorpusConfig};
pub use fingerprint::{inject_fingerprint, FingerprintSpec};
pub use manifest::{
    load_manifest, CorpusManifest, ImageSource, Record, Split, LABEL_FAKE, LABEL_REAL,
};
pub use ppm::{read_ppm, write_ppm};
pub use scene::{synth_real, SceneSpec};
