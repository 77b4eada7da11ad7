use crate::datagen::fingerprint::{inject_fingerprint, FingerprintSpec};
use crate::datagen::manifest::{CorpusManifest, Record, Split, LABEL_FAKE, LABEL_REAL};
use crate::datagen::ppm::write_ppm;
use crate::datagen::scene::{synth_real, SceneSpec};
use crate::error::{Error, Result};
use crate::tensorcore::RngStream;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Full corpus description. Train and val splits contain fakes only from
/// `families`; the test split additionally contains fakes from
/// `heldout_families`, which never appear during training. That is the
/// cross-generator generalization setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub scene: SceneSpec,
    pub families: Vec<FingerprintSpec>,
    pub heldout_families: Vec<FingerprintSpec>,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scene: SceneSpec::default(),
            families: vec![FingerprintSpec::default()],
            heldout_families: vec![
                FingerprintSpec {
                    family_id: "family_b".into(),
                    period: 3,
                    orientation_degrees: 45.0,
                    harmonic_weights: vec![1.0],
                    ..FingerprintSpec::default()
                },
                FingerprintSpec {
                    family_id: "family_c".into(),
                    period: 6,
                    orientation_degrees: 90.0,
                    harmonic_weights: vec![1.0, 0.5],
                    ..FingerprintSpec::default()
                },
            ],
            train_count: 64,
            val_count: 16,
            test_count: 32,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.families.is_empty() {
            return Err(Error::Config("at least one training family required".into()));
        }
        for fp in self.families.iter().chain(&self.heldout_families) {
            fp.validate()?;
            if fp.amplitude == 0.0 {
                return Err(Error::Config(format!(
                    "family `{}`: corpus fakes need a positive amplitude",
                    fp.family_id
                )));
            }
        }
        let mut ids: Vec<&str> = self
            .families
            .iter()
            .chain(&self.heldout_families)
            .map(|f| f.family_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.families.len() + self.heldout_families.len() {
            return Err(Error::Config("family ids must be unique".into()));
        }
        for (name, n) in [
            ("train_count", self.train_count),
            ("val_count", self.val_count),
            ("test_count", self.test_count),
        ] {
            if n < 2 {
                return Err(Error::Config(format!(
                    "{name} must be >= 2 so each split holds both classes, got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Generate the corpus under `out_dir`: PPM images plus `manifest.jsonl`.
/// Fully determined by (config, rng); re-running with the same seed
/// produces byte-identical files. Each split alternates real/fake so the
/// class balance is exact to within one image.
pub fn build_corpus(cfg: &CorpusConfig, out_dir: &Path, rng: &RngStream) -> Result<CorpusManifest> {
    cfg.validate()?;
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let rng = rng.child("corpus");

    let mut records = Vec::new();
    for (split, count) in [
        (Split::Train, cfg.train_count),
        (Split::Val, cfg.val_count),
        (Split::Test, cfg.test_count),
    ] {
        // held-out families are confined to the test split
        let families: Vec<&FingerprintSpec> = if split == Split::Test {
            cfg.families.iter().chain(&cfg.heldout_families).collect()
        } else {
            cfg.families.iter().collect()
        };
        let mut fake_index = 0usize;
        for i in 0..count {
            let fake = i % 2 == 1;
            let family = if fake {
                let fp = families[fake_index % families.len()];
                fake_index += 1;
                Some(fp)
            } else {
                None
            };
            let id = format!("{split}_{i:04}");
            let mut item_rng = rng.child(&id);
            let mut img = synth_real(&cfg.scene, &item_rng)?;
            if let Some(fp) = family {
                // randomize the lattice phase per image so the detector
                // must key on period and orientation, not pixel alignment
                let mut fp = fp.clone();
                fp.phase = item_rng.uniform_range(0.0, std::f64::consts::TAU);
                img = inject_fingerprint(&img, &fp)?;
            }
            let rel = format!("images/{id}.ppm");
            write_ppm(&img, &out_dir.join(&rel))?;
            records.push(Record {
                id,
                path: rel,
                label: if fake { LABEL_FAKE } else { LABEL_REAL },
                family: family.map(|f| f.family_id.clone()).unwrap_or_else(|| "none".into()),
                split,
            });
        }
    }

    let manifest = CorpusManifest::new(out_dir.to_path_buf(), records);
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::manifest::{load_manifest, ImageSource};

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            scene: SceneSpec {
                size: 16,
                ..SceneSpec::default()
            },
            train_count: 8,
            val_count: 4,
            test_count: 12,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn corpus_is_balanced_and_heldout_families_stay_in_test() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(&small_config(), dir.path(), &RngStream::new(7, 0)).unwrap();
        for (split, count) in [(Split::Train, 8), (Split::Val, 4), (Split::Test, 12)] {
            let recs = m.records_in(split);
            assert_eq!(recs.len(), count);
            let fakes = recs.iter().filter(|r| r.label == LABEL_FAKE).count();
            assert_eq!(fakes, count / 2);
        }
        for r in m.records_in(Split::Train).iter().chain(&m.records_in(Split::Val)) {
            assert!(r.family == "none" || r.family == "family_a", "{}", r.family);
        }
        let test_families: Vec<&str> = m
            .records_in(Split::Test)
            .iter()
            .map(|r| r.family.as_str())
            .collect();
        assert!(test_families.contains(&"family_b"));
        assert!(test_families.contains(&"family_c"));
    }

    #[test]
    fn same_seed_reproduces_byte_identical_output() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        build_corpus(&small_config(), d1.path(), &RngStream::new(11, 0)).unwrap();
        build_corpus(&small_config(), d2.path(), &RngStream::new(11, 0)).unwrap();
        let a = std::fs::read(d1.path().join("manifest.jsonl")).unwrap();
        let b = std::fs::read(d2.path().join("manifest.jsonl")).unwrap();
        assert_eq!(a, b);
        let a = std::fs::read(d1.path().join("images/test_0003.ppm")).unwrap();
        let b = std::fs::read(d2.path().join("images/test_0003.ppm")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn written_manifest_loads_back_and_images_open() {
        let dir = tempfile::tempdir().unwrap();
        let built = build_corpus(&small_config(), dir.path(), &RngStream::new(5, 0)).unwrap();
        let loaded = load_manifest(&dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.records().len(), built.records().len());
        let rec = &loaded.records()[1];
        let img = loaded.load(rec).unwrap();
        assert_eq!(img.height(), 16);
        assert_eq!(img.width(), 16);
    }

    #[test]
    fn loader_rejects_missing_image_and_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.jsonl");
        let rec = r#"{"id":"a","path":"images/a.ppm","label":0,"family":"none","split":"train"}"#;
        std::fs::write(&m, format!("{rec}\n")).unwrap();
        let err = load_manifest(&m).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");

        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        write_ppm(
            &crate::augment::Image::constant(4, 4, 0.5),
            &dir.path().join("images/a.ppm"),
        )
        .unwrap();
        std::fs::write(&m, format!("{rec}\n{rec}\n")).unwrap();
        let err = load_manifest(&m).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");

        std::fs::write(&m, "not json\n").unwrap();
        let err = load_manifest(&m).unwrap_err().to_string();
        assert!(err.contains("malformed"), "{err}");
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let mut c = small_config();
        c.train_count = 1;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.families.clear();
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.heldout_families[0].family_id = "family_a".into();
        assert!(c.validate().is_err());
    }
}
