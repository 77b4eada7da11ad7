use crate::error::{Error, Result};
use crate::evaluation::metrics::{
    accuracy_at, auc, histogram, pd_at_far, per_family_threshold_spread, PdAtFar, ScoreSet,
    ThresholdSpread,
};
use crate::evaluation::score::SweepPoint;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const HISTOGRAM_BINS: usize = 20;

/// Aggregate evaluation summary for one scored split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_real: usize,
    pub n_fake: usize,
    pub n_skipped: usize,
    pub auc: f64,
    pub accuracy_at_half: f64,
    pub pd_at_far: Vec<PdAtFar>,
    pub threshold_spread: ThresholdSpread,
    /// Score histograms over [0, 1] with HISTOGRAM_BINS bins.
    pub real_histogram: Vec<usize>,
    pub fake_histogram: Vec<usize>,
    pub sweep: Vec<SweepPoint>,
}

/// Compute the full metric suite from a score set.
pub fn build_report(set: &ScoreSet, fars: &[f64], sweep: Vec<SweepPoint>) -> Result<EvalReport> {
    let reals = set.real_scores();
    let fakes = set.fake_scores();
    let mut pd = Vec::with_capacity(fars.len());
    for &far in fars {
        pd.push(pd_at_far(&reals, &fakes, far)?);
    }
    Ok(EvalReport {
        n_real: reals.len(),
        n_fake: fakes.len(),
        n_skipped: set.skipped.len(),
        auc: auc(&reals, &fakes)?,
        accuracy_at_half: accuracy_at(&reals, &fakes, 0.5)?,
        pd_at_far: pd,
        threshold_spread: per_family_threshold_spread(set)?,
        real_histogram: histogram(&reals, 0.0, 1.0, HISTOGRAM_BINS)?,
        fake_histogram: histogram(&fakes, 0.0, 1.0, HISTOGRAM_BINS)?,
        sweep,
    })
}

/// Pretty JSON summary; field order is fixed, so output is byte-stable
/// for identical inputs.
pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Per-item scores as CSV, in scoring order.
pub fn write_scores_csv(set: &ScoreSet, path: &Path) -> Result<()> {
    let mut out = String::from("id,label,family,score\n");
    for i in &set.items {
        out.push_str(&format!("{},{},{},{}\n", i.id, i.label, i.family, i.score));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::metrics::ScoredItem;

    fn sample_set() -> ScoreSet {
        let mut items = Vec::new();
        for i in 0..8 {
            items.push(ScoredItem {
                id: format!("r{i}"),
                label: 0,
                family: "none".into(),
                score: 0.05 * i as f64 + 0.1,
            });
            items.push(ScoredItem {
                id: format!("f{i}"),
                label: 1,
                family: if i % 2 == 0 { "a".into() } else { "b".into() },
                score: 0.05 * i as f64 + 0.55,
            });
        }
        ScoreSet {
            items,
            skipped: vec![("bad".into(), "unreadable".into())],
        }
    }

    #[test]
    fn report_aggregates_all_metrics() {
        let set = sample_set();
        let r = build_report(&set, &[0.0, 0.1], Vec::new()).unwrap();
        assert_eq!((r.n_real, r.n_fake, r.n_skipped), (8, 8, 1));
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.accuracy_at_half, 1.0);
        assert_eq!(r.pd_at_far.len(), 2);
        assert_eq!(r.threshold_spread.per_family.len(), 2);
        assert_eq!(r.real_histogram.iter().sum::<usize>(), 8);
        assert_eq!(r.fake_histogram.iter().sum::<usize>(), 8);
    }

    #[test]
    fn report_files_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let set = sample_set();
        let r = build_report(&set, &[0.1], Vec::new()).unwrap();
        let (j1, j2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_report_json(&r, &j1).unwrap();
        write_report_json(&r, &j2).unwrap();
        assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());

        let c1 = dir.path().join("scores.csv");
        write_scores_csv(&set, &c1).unwrap();
        let text = std::fs::read_to_string(&c1).unwrap();
        assert!(text.starts_with("id,label,family,score\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
