use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One scored test item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub label: u8,
    pub family: String,
    pub score: f64,
}

/// Scores for a dataset split plus the items that failed to score.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub items: Vec<ScoredItem>,
    /// (item id, error message) for records excluded from the metrics.
    pub skipped: Vec<(String, String)>,
}

impl ScoreSet {
    pub fn real_scores(&self) -> Vec<f64> {
        self.items
            .iter()
            .filter(|i| i.label == 0)
            .map(|i| i.score)
            .collect()
    }

    pub fn fake_scores(&self) -> Vec<f64> {
        self.items
            .iter()
            .filter(|i| i.label == 1)
            .map(|i| i.score)
            .collect()
    }

    pub fn families(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for i in &self.items {
            if i.label == 1 && !out.contains(&i.family) {
                out.push(i.family.clone());
            }
        }
        out
    }
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract(format!("{name} scores must be finite")));
    }
    Ok(())
}

/// Fraction of correct decisions at threshold t with the rule
/// "fake iff score > t".
pub fn accuracy_at(reals: &[f64], fakes: &[f64], t: f64) -> Result<f64> {
    check_scores("real", reals)?;
    check_scores("fake", fakes)?;
    let n = reals.len() + fakes.len();
    if n == 0 {
        return Err(Error::UndefinedMetric("accuracy over an empty set".into()));
    }
    let correct = fakes.iter().filter(|&&s| s > t).count()
        + reals.iter().filter(|&&s| s <= t).count();
    Ok(correct as f64 / n as f64)
}

/// Area under the ROC curve as an exact pair count: the probability that a
/// random fake outscores a random real, ties counted half. Computed with
/// integer arithmetic, so it equals the brute-force pair enumeration bit
/// for bit.
pub fn auc(reals: &[f64], fakes: &[f64]) -> Result<f64> {
    check_scores("real", reals)?;
    check_scores("fake", fakes)?;
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one real and one fake score".into(),
        ));
    }
    let mut sorted = reals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut units: u64 = 0; // 2 per win, 1 per tie
    for &f in fakes {
        let below = sorted.partition_point(|&r| r < f);
        let below_or_eq = sorted.partition_point(|&r| r <= f);
        units += 2 * below as u64 + (below_or_eq - below) as u64;
    }
    Ok(units as f64 / (2 * reals.len() as u64 * fakes.len() as u64) as f64)
}

/// Reference AUC by direct pair enumeration; used as the oracle in tests.
pub fn auc_brute(reals: &[f64], fakes: &[f64]) -> Result<f64> {
    check_scores("real", reals)?;
    check_scores("fake", fakes)?;
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one real and one fake score".into(),
        ));
    }
    let mut units: u64 = 0;
    for &f in fakes {
        for &r in reals {
            if f > r {
                units += 2;
            } else if f == r {
                units += 1;
            }
        }
    }
    Ok(units as f64 / (2 * reals.len() as u64 * fakes.len() as u64) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdAtFar {
    pub far: f64,
    /// Smallest observed real score whose exceedance fraction is <= far.
    pub threshold: f64,
    /// Fraction of real scores strictly above the threshold.
    pub achieved_far: f64,
    /// Detection probability: fraction of fakes strictly above threshold.
    pub pd: f64,
}

/// Detection probability at a false-alarm budget. The threshold is taken
/// from the empirical real-score distribution with no interpolation.
pub fn pd_at_far(reals: &[f64], fakes: &[f64], far: f64) -> Result<PdAtFar> {
    check_scores("real", reals)?;
    check_scores("fake", fakes)?;
    if !(0.0..=1.0).contains(&far) {
        return Err(Error::Contract(format!("far must lie in [0,1], got {far}")));
    }
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::UndefinedMetric(
            "Pd@FAR needs at least one real and one fake score".into(),
        ));
    }
    let mut sorted = reals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = sorted.len();
    let mut threshold = sorted[n - 1]; // exceedance 0, always admissible
    for i in 0..n {
        if i > 0 && sorted[i] == sorted[i - 1] {
            continue;
        }
        let above = sorted.partition_point(|&r| r <= sorted[i]);
        let frac = (n - above) as f64 / n as f64;
        if frac <= far {
            threshold = sorted[i];
            break;
        }
    }
    let achieved_far = reals.iter().filter(|&&r| r > threshold).count() as f64 / n as f64;
    let pd = fakes.iter().filter(|&&f| f > threshold).count() as f64 / fakes.len() as f64;
    Ok(PdAtFar {
        far,
        threshold,
        achieved_far,
        pd,
    })
}

/// Histogram over [lo, hi) with `bins` equal-width half-open bins; the
/// last bin additionally includes hi. Out-of-range values are an error.
pub fn histogram(scores: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<usize>> {
    check_scores("histogram", scores)?;
    if bins == 0 || !(lo < hi) {
        return Err(Error::Contract(format!(
            "histogram needs bins >= 1 and lo < hi, got bins={bins}, [{lo}, {hi}]"
        )));
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &s in scores {
        if s < lo || s > hi {
            return Err(Error::Contract(format!(
                "histogram value {s} outside [{lo}, {hi}]"
            )));
        }
        let idx = (((s - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Threshold maximizing balanced accuracy (mean of true-positive and
/// true-negative rates) under the rule "fake iff score > t". Candidates
/// are the observed scores; ties resolve to the lowest threshold.
pub fn balanced_threshold(reals: &[f64], fakes: &[f64]) -> Result<f64> {
    check_scores("real", reals)?;
    check_scores("fake", fakes)?;
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::UndefinedMetric(
            "threshold search needs both classes".into(),
        ));
    }
    let mut candidates: Vec<f64> = reals.iter().chain(fakes).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    candidates.dedup();
    let mut best_t = candidates[0];
    let mut best_ba = f64::NEG_INFINITY;
    for &t in &candidates {
        let tpr = fakes.iter().filter(|&&s| s > t).count() as f64 / fakes.len() as f64;
        let tnr = reals.iter().filter(|&&s| s <= t).count() as f64 / reals.len() as f64;
        let ba = (tpr + tnr) / 2.0;
        if ba > best_ba {
            best_ba = ba;
            best_t = t;
        }
    }
    Ok(best_t)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyThreshold {
    pub family: String,
    pub count: usize,
    pub auc: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSpread {
    pub per_family: Vec<FamilyThreshold>,
    /// Max minus min of the per-family balanced thresholds. Small spread
    /// means one global operating point serves every generator family.
    pub spread: f64,
}

/// Per-family optimal thresholds against the shared real pool, and their
/// spread. Families are ordered by first appearance.
pub fn per_family_threshold_spread(set: &ScoreSet) -> Result<ThresholdSpread> {
    let reals = set.real_scores();
    let families = set.families();
    if reals.is_empty() || families.is_empty() {
        return Err(Error::UndefinedMetric(
            "threshold spread needs real scores and at least one fake family".into(),
        ));
    }
    let mut per_family = Vec::with_capacity(families.len());
    for fam in families {
        let fakes: Vec<f64> = set
            .items
            .iter()
            .filter(|i| i.label == 1 && i.family == fam)
            .map(|i| i.score)
            .collect();
        per_family.push(FamilyThreshold {
            auc: auc(&reals, &fakes)?,
            threshold: balanced_threshold(&reals, &fakes)?,
            count: fakes.len(),
            family: fam,
        });
    }
    let lo = per_family.iter().map(|f| f.threshold).fold(f64::INFINITY, f64::min);
    let hi = per_family
        .iter()
        .map(|f| f.threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ThresholdSpread {
        per_family,
        spread: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_hand_examples() {
        assert_eq!(auc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.4], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        // one win, one tie, two losses out of 4 pairs: (2 + 1) / 8
        assert_eq!(auc(&[0.2, 0.6], &[0.2, 0.4]).unwrap(), 0.375);
    }

    #[test]
    fn auc_requires_both_classes_and_finite_scores() {
        assert!(auc(&[], &[0.5]).is_err());
        assert!(auc(&[0.5], &[]).is_err());
        assert!(auc(&[f64::NAN], &[0.5]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_at(&[0.2, 0.4], &[0.6, 0.8], 0.5).unwrap(), 1.0);
        // score exactly at threshold counts as real
        assert_eq!(accuracy_at(&[0.5], &[0.5], 0.5).unwrap(), 0.5);
        assert!(accuracy_at(&[], &[], 0.5).is_err());
    }

    #[test]
    fn pd_at_far_uses_empirical_real_quantiles() {
        let reals = [0.1, 0.2, 0.3, 0.4, 0.5];
        let fakes = [0.25, 0.45, 0.6, 0.7];
        // far = 0: threshold is the max real score
        let p = pd_at_far(&reals, &fakes, 0.0).unwrap();
        assert_eq!(p.threshold, 0.5);
        assert_eq!(p.pd, 0.5);
        // far = 0.25: smallest t with exceedance <= 1/5 is 0.4
        let p = pd_at_far(&reals, &fakes, 0.25).unwrap();
        assert_eq!(p.threshold, 0.4);
        assert_eq!(p.achieved_far, 0.2);
        assert_eq!(p.pd, 0.75);
        // far = 1: lowest real score qualifies
        let p = pd_at_far(&reals, &fakes, 1.0).unwrap();
        assert_eq!(p.threshold, 0.1);
        assert_eq!(p.pd, 1.0);
    }

    #[test]
    fn histogram_bins_are_half_open_with_inclusive_end() {
        let h = histogram(&[0.0, 0.24, 0.25, 0.5, 0.99, 1.0], 0.0, 1.0, 4).unwrap();
        assert_eq!(h, vec![2, 1, 1, 2]);
        assert!(histogram(&[1.5], 0.0, 1.0, 4).is_err());
        assert!(histogram(&[0.5], 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn balanced_threshold_prefers_the_lowest_tie() {
        // any t in {0.2, 0.3} separates perfectly; lowest wins
        let t = balanced_threshold(&[0.1, 0.2], &[0.4, 0.5]).unwrap();
        assert_eq!(t, 0.2);
        // interleaved scores: t = 0.1 and t = 0.5 both reach BA 0.75
        let t = balanced_threshold(&[0.1, 0.5], &[0.3, 0.7]).unwrap();
        assert_eq!(t, 0.1);
    }

    fn item(id: &str, label: u8, family: &str, score: f64) -> ScoredItem {
        ScoredItem {
            id: id.into(),
            label,
            family: family.into(),
            score,
        }
    }

    #[test]
    fn threshold_spread_across_two_families() {
        let set = ScoreSet {
            items: vec![
                item("r0", 0, "none", 0.1),
                item("r1", 0, "none", 0.2),
                item("a0", 1, "a", 0.5),
                item("a1", 1, "a", 0.6),
                item("b0", 1, "b", 0.9),
            ],
            skipped: vec![],
        };
        let s = per_family_threshold_spread(&set).unwrap();
        assert_eq!(s.per_family.len(), 2);
        assert_eq!(s.per_family[0].family, "a");
        assert_eq!(s.per_family[0].threshold, 0.2);
        assert_eq!(s.per_family[1].threshold, 0.2);
        assert_eq!(s.spread, 0.0);
        assert_eq!(s.per_family[0].auc, 1.0);
    }

    proptest! {
        #[test]
        fn fast_auc_equals_brute_force(
            reals in proptest::collection::vec(0.0f64..1.0, 1..60),
            fakes in proptest::collection::vec(0.0f64..1.0, 1..60),
        ) {
            let a = auc(&reals, &fakes).unwrap();
            let b = auc_brute(&reals, &fakes).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_label_flip_symmetry(
            reals in proptest::collection::vec(0.0f64..1.0, 1..40),
            fakes in proptest::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let a = auc(&reals, &fakes).unwrap();
            let b = auc(&fakes, &reals).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pd_is_monotone_in_far(
            reals in proptest::collection::vec(0.0f64..1.0, 1..40),
            fakes in proptest::collection::vec(0.0f64..1.0, 1..40),
            f1 in 0.0f64..1.0,
            f2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = pd_at_far(&reals, &fakes, lo).unwrap();
            let b = pd_at_far(&reals, &fakes, hi).unwrap();
            prop_assert!(a.pd <= b.pd);
            prop_assert!(a.achieved_far <= a.far + 1e-12);
        }

        #[test]
        fn histogram_counts_every_sample_once(
            scores in proptest::collection::vec(0.0f64..=1.0, 0..100),
            bins in 1usize..20,
        ) {
            let h = histogram(&scores, 0.0, 1.0, bins).unwrap();
            prop_assert_eq!(h.iter().sum::<usize>(), scores.len());
        }
    }
}
