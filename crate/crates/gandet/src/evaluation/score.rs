use crate::augment::{center_crop, Perturbation};
use crate::datagen::{ImageSource, Split};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{accuracy_at, auc, ScoreSet, ScoredItem};
use crate::netarch::DetectorNetwork;
use serde::{Deserialize, Serialize};

/// Score every record of a split: apply the perturbation to the full
/// stored image, center-crop, classify. Items that fail to score are
/// excluded from the metrics but reported in `skipped`.
pub fn score_dataset(
    net: &DetectorNetwork,
    source: &dyn ImageSource,
    split: Split,
    crop_size: usize,
    perturbation: Perturbation,
) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for rec in source.records_in(split) {
        let scored = source
            .load(rec)
            .and_then(|img| perturbation.apply(&img))
            .and_then(|p| net.classify(&center_crop(&p, crop_size)));
        match scored {
            Ok(score) => set.items.push(ScoredItem {
                id: rec.id.clone(),
                label: rec.label,
                family: rec.family.clone(),
                score,
            }),
            Err(e) => set.skipped.push((rec.id.clone(), e.to_string())),
        }
    }
    if set.items.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "no records of split {split} could be scored"
        )));
    }
    Ok(set)
}

/// One row of a robustness sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub perturbation: String,
    pub auc: f64,
    pub accuracy_at_half: f64,
    pub scored: usize,
    pub skipped: usize,
}

/// Evaluate the detector under each test-time perturbation in turn.
pub fn robustness_sweep(
    net: &DetectorNetwork,
    source: &dyn ImageSource,
    split: Split,
    crop_size: usize,
    perturbations: &[Perturbation],
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(perturbations.len());
    for p in perturbations {
        let set = score_dataset(net, source, split, crop_size, *p)?;
        let reals = set.real_scores();
        let fakes = set.fake_scores();
        out.push(SweepPoint {
            perturbation: p.label(),
            auc: auc(&reals, &fakes)?,
            accuracy_at_half: accuracy_at(&reals, &fakes, 0.5)?,
            scored: set.items.len(),
            skipped: set.skipped.len(),
        });
    }
    Ok(out)
}
