//! Overlap and boundary metrics, and interaction-normalised summaries of
//! per-iteration metric curves.

mod edt;
mod surface;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelMask;

pub use edt::{feature_transform, FeatureTransform};
pub use surface::{nsd, nsd_with, surface_extract};

/// Score assigned when both prediction and reference are empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// Two empty masks agree perfectly (1.0).
    #[default]
    Match,
    /// Two empty masks score 0.0.
    Strict,
}

impl EmptyPolicy {
    pub(crate) fn score(self) -> f64 {
        match self {
            EmptyPolicy::Match => 1.0,
            EmptyPolicy::Strict => 0.0,
        }
    }
}

/// Dice overlap `2|P∩R| / (|P|+|R|)` of two binary masks (non-zero is
/// foreground). Both empty scores 1.0.
pub fn dice(pred: &LabelMask, reference: &LabelMask) -> Result<f64> {
    dice_with(pred, reference, EmptyPolicy::Match)
}

pub fn dice_with(pred: &LabelMask, reference: &LabelMask, empty: EmptyPolicy) -> Result<f64> {
    pred.same_shape(reference)?;
    let (mut inter, mut p, mut r) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.voxels().iter().zip(reference.voxels()) {
        let (a, b) = (a != 0, b != 0);
        p += a as usize;
        r += b as usize;
        inter += (a && b) as usize;
    }
    if p + r == 0 {
        return Ok(empty.score());
    }
    Ok(2.0 * inter as f64 / (p + r) as f64)
}

/// Dice and NSD per iteration; index 0 is the initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub dice: Vec<f64>,
    pub nsd: Vec<f64>,
}

impl MetricSeries {
    pub fn new(dice: Vec<f64>, nsd: Vec<f64>) -> Result<Self> {
        if dice.len() != nsd.len() {
            return Err(Error::LengthMismatch(format!(
                "dice has {} entries, nsd has {}",
                dice.len(),
                nsd.len()
            )));
        }
        if let Some(bad) = dice.iter().chain(&nsd).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("metric value {bad} outside [0, 1]")));
        }
        Ok(MetricSeries { dice, nsd })
    }

    /// Interaction budget N (series length minus one).
    pub fn budget(&self) -> usize {
        self.dice.len().saturating_sub(1)
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dice_init: f64,
    pub dice_final: f64,
    pub dice_nauc: f64,
    pub nsd_init: f64,
    pub nsd_final: f64,
    pub nsd_nauc: f64,
    pub nnoi: f64,
    pub nof_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    Configured,
    ComputedFromBaseline,
}

/// Per-sample Dice level that counts as converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTarget {
    pub task_id: String,
    pub target_dice: f64,
    pub source: TargetSource,
}

impl ConvergenceTarget {
    pub fn configured(task_id: impl Into<String>, target_dice: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target_dice) {
            return Err(Error::InvalidArgument(format!("target Dice {target_dice} outside [0, 1]")));
        }
        Ok(ConvergenceTarget {
            task_id: task_id.into(),
            target_dice,
            source: TargetSource::Configured,
        })
    }

    /// Lower quartile of an automated baseline's per-sample Dice scores.
    pub fn from_baseline(task_id: impl Into<String>, baseline_dice: &[f64]) -> Result<Self> {
        let q = quantile(baseline_dice, 0.25)?;
        Ok(ConvergenceTarget {
            source: TargetSource::ComputedFromBaseline,
            ..Self::configured(task_id, q)?
        })
    }
}

/// Compensated (Neumaier) sum.
fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Trapezoidal area under `series` over iterations `0..=N`, divided by N.
pub fn nauc(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InsufficientSeries(series.len()));
    }
    let n = series.len() - 1;
    let interior = stable_sum(series[1..n].iter().copied());
    let ends = (series[0] + series[n]) / 2.0;
    Ok(stable_sum([interior, ends]) / n as f64)
}

/// First iteration at which `dice` reaches `target`.
pub fn first_crossing(dice: &[f64], target: f64) -> Option<usize> {
    dice.iter().position(|&d| d >= target)
}

/// Number of interactions until `dice` reaches `target`; `budget` when it
/// never does.
pub fn noi(dice: &[f64], target: f64, budget: usize) -> usize {
    first_crossing(dice, target).unwrap_or(budget)
}

/// Linear-interpolation quantile (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac)
    }
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Middle element, taking the upper one for even counts. Used for
/// interaction counts, where interpolating towards the failure sentinel has
/// no meaning.
fn upper_median(values: &mut [usize]) -> usize {
    values.sort_unstable();
    values[values.len() / 2]
}

/// Dataset-level summary of per-sample curves sharing budget `budget`.
pub fn summarize(per_sample: &[MetricSeries], target: &ConvergenceTarget, budget: usize) -> Result<SummaryRow> {
    if per_sample.is_empty() {
        return Err(Error::EmptyInput("no samples to summarize"));
    }
    if budget == 0 {
        return Err(Error::InsufficientSeries(1));
    }
    if let Some(s) = per_sample.iter().find(|s| s.dice.len() != budget + 1 || s.nsd.len() != budget + 1) {
        return Err(Error::LengthMismatch(format!(
            "series of length {} for budget {budget}",
            s.dice.len()
        )));
    }
    let column = |f: &dyn Fn(&MetricSeries) -> Result<f64>| -> Result<f64> {
        let v = per_sample.iter().map(f).collect::<Result<Vec<_>>>()?;
        median(&v)
    };
    let mut nois: Vec<usize> = per_sample
        .iter()
        .map(|s| noi(&s.dice, target.target_dice, budget))
        .collect();
    let failures = per_sample
        .iter()
        .filter(|s| first_crossing(&s.dice, target.target_dice).is_none())
        .count();

    Ok(SummaryRow {
        dice_init: column(&|s| Ok(s.dice[0]))?,
        dice_final: column(&|s| Ok(s.dice[budget]))?,
        dice_nauc: column(&|s| nauc(&s.dice))?,
        nsd_init: column(&|s| Ok(s.nsd[0]))?,
        nsd_final: column(&|s| Ok(s.nsd[budget]))?,
        nsd_nauc: column(&|s| nauc(&s.nsd))?,
        nnoi: upper_median(&mut nois) as f64 / budget as f64,
        nof_pct: 100.0 * failures as f64 / per_sample.len() as f64,
    })
}

/// Per-iteration median curve across samples.
pub fn median_curve(per_sample: &[MetricSeries]) -> Result<MetricSeries> {
    let first = per_sample.first().ok_or(Error::EmptyInput("no samples for a median curve"))?;
    let len = first.dice.len();
    if let Some(s) = per_sample.iter().find(|s| s.dice.len() != len || s.nsd.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "series lengths {} and {} differ",
            len,
            s.dice.len()
        )));
    }
    let at = |i: usize, pick: fn(&MetricSeries) -> &[f64]| {
        let v: Vec<f64> = per_sample.iter().map(|s| pick(s)[i]).collect();
        median(&v)
    };
    let dice = (0..len).map(|i| at(i, |s| &s.dice)).collect::<Result<_>>()?;
    let nsd = (0..len).map(|i| at(i, |s| &s.nsd)).collect::<Result<_>>()?;
    Ok(MetricSeries { dice, nsd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn mask(bits: &[u32]) -> LabelMask {
        LabelMask::new(Dims::new(bits.len(), 1, 1), [1.0; 3], bits.to_vec()).unwrap()
    }

    fn series(dice: Vec<f64>) -> MetricSeries {
        let nsd = dice.clone();
        MetricSeries::new(dice, nsd).unwrap()
    }

    #[test]
    fn dice_examples() {
        assert_eq!(dice(&mask(&[1, 1, 0]), &mask(&[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(dice(&mask(&[1, 1, 0, 0]), &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&mask(&[1, 1, 0]), &mask(&[0, 1, 1])).unwrap(), 0.5);
        assert_eq!(dice(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
        assert_eq!(dice_with(&mask(&[0, 0]), &mask(&[0, 0]), EmptyPolicy::Strict).unwrap(), 0.0);
        assert!(matches!(
            dice(&mask(&[0, 0]), &mask(&[0, 0, 0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn nauc_examples() {
        assert!((nauc(&[0.37; 101]).unwrap() - 0.37).abs() < 1e-12);
        let ramp: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(nauc(&ramp).unwrap(), 0.5);
        let mut step = vec![1.0; 101];
        step[0] = 0.0;
        // (0.5 + 99) / 100
        assert!((nauc(&step).unwrap() - 0.995).abs() < 1e-15);
        assert!(matches!(nauc(&[0.4]), Err(Error::InsufficientSeries(1))));
    }

    #[test]
    fn noi_examples() {
        let s = [0.1, 0.5, 0.8, 0.9];
        assert_eq!(noi(&s, 0.7, 3), 2);
        assert_eq!(noi(&s, 0.05, 3), 0);
        assert_eq!(noi(&s, 0.95, 3), 3);
        assert_eq!(first_crossing(&s, 0.95), None);
    }

    #[test]
    fn quantile_examples() {
        assert!((quantile(&[0.2, 0.4, 0.6, 0.8], 0.25).unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(quantile(&[0.9, 0.1, 0.5], 0.0).unwrap(), 0.1);
        assert_eq!(quantile(&[0.42], 0.73).unwrap(), 0.42);
        assert!(matches!(quantile(&[], 0.5), Err(Error::EmptyInput(_))));
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn baseline_target_is_lower_quartile() {
        let t = ConvergenceTarget::from_baseline("t", &[0.8, 0.2, 0.6, 0.4]).unwrap();
        assert!((t.target_dice - 0.35).abs() < 1e-15);
        assert_eq!(t.source, TargetSource::ComputedFromBaseline);
    }

    #[test]
    fn summarize_all_converged_at_init() {
        let target = ConvergenceTarget::configured("t", 0.5).unwrap();
        let samples = vec![series(vec![0.9, 0.9, 0.9]), series(vec![0.6, 0.7, 0.8])];
        let row = summarize(&samples, &target, 2).unwrap();
        assert_eq!(row.nnoi, 0.0);
        assert_eq!(row.nof_pct, 0.0);
        assert!((row.dice_init - 0.75).abs() < 1e-15);
    }

    #[test]
    fn summarize_all_fail() {
        let target = ConvergenceTarget::configured("t", 0.95).unwrap();
        let samples = vec![series(vec![0.1, 0.2, 0.3]), series(vec![0.0, 0.0, 0.0])];
        let row = summarize(&samples, &target, 2).unwrap();
        assert_eq!(row.nnoi, 1.0);
        assert_eq!(row.nof_pct, 100.0);
    }

    #[test]
    fn summarize_single_sample_is_pointwise() {
        let target = ConvergenceTarget::configured("t", 0.6).unwrap();
        let s = MetricSeries::new(vec![0.1, 0.5, 0.7, 0.9], vec![0.2, 0.3, 0.4, 1.0]).unwrap();
        let row = summarize(std::slice::from_ref(&s), &target, 3).unwrap();
        assert_eq!(row.dice_init, 0.1);
        assert_eq!(row.dice_final, 0.9);
        assert_eq!(row.nsd_init, 0.2);
        assert_eq!(row.nsd_final, 1.0);
        assert_eq!(row.dice_nauc, nauc(&s.dice).unwrap());
        assert_eq!(row.nsd_nauc, nauc(&s.nsd).unwrap());
        assert_eq!(row.nnoi, 2.0 / 3.0);
        assert_eq!(row.nof_pct, 0.0);
    }

    #[test]
    fn summarize_rejects_bad_input() {
        let target = ConvergenceTarget::configured("t", 0.6).unwrap();
        assert!(matches!(summarize(&[], &target, 3), Err(Error::EmptyInput(_))));
        assert!(summarize(&[series(vec![0.1, 0.2])], &target, 3).is_err());
    }

    #[test]
    fn median_curve_examples() {
        let single = series(vec![0.1, 0.4, 0.2]);
        assert_eq!(median_curve(std::slice::from_ref(&single)).unwrap(), single);
        let flat = [0.2, 0.5, 0.9].map(|v| series(vec![v; 4]));
        assert_eq!(median_curve(&flat).unwrap().dice, vec![0.5; 4]);
        assert!(median_curve(&[series(vec![0.1]), series(vec![0.1, 0.2])]).is_err());
        assert!(median_curve(&[]).is_err());
    }

    #[test]
    fn median_curve_matches_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<MetricSeries> = (0..5)
            .map(|_| {
                let d = (0..21).map(|_| rng.random::<f64>()).collect();
                let n = (0..21).map(|_| rng.random::<f64>()).collect();
                MetricSeries::new(d, n).unwrap()
            })
            .collect();
        let curve = median_curve(&samples).unwrap();
        for i in 0..21 {
            let mut col: Vec<f64> = samples.iter().map(|s| s.dice[i]).collect();
            col.sort_by(f64::total_cmp);
            assert_eq!(curve.dice[i], col[2]);
            let mut col: Vec<f64> = samples.iter().map(|s| s.nsd[i]).collect();
            col.sort_by(f64::total_cmp);
            assert_eq!(curve.nsd[i], col[2]);
        }
    }

    #[test]
    fn series_validation() {
        assert!(MetricSeries::new(vec![0.1], vec![0.1, 0.2]).is_err());
        assert!(MetricSeries::new(vec![1.1], vec![0.1]).is_err());
        assert_eq!(MetricSeries::new(vec![0.0; 101], vec![0.0; 101]).unwrap().budget(), 100);
    }
}
