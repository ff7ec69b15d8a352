//! Threshold metrics from the confusion matrix plus rank-based AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Predicted positive iff `p >= threshold`.
pub fn confusion(y: &[u8], p: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if y.len() != p.len() {
        return Err(Error::LengthMismatch(y.len(), p.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &q) in y.iter().zip(p) {
        match (t == 1, q >= threshold) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Probability that a random positive outranks a random negative, ties counting half.
/// `None` when one class is absent.
pub fn auc(y: &[u8], p: &[f64]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    // average ranks over tied groups (1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && p[idx[j + 1]] == p[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if y[k] == 1 {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

pub const METRIC_NAMES: [&str; 7] = ["accuracy", "precision", "recall", "f1", "auc", "mcc", "kappa"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub fold: Option<usize>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub mcc: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl MetricsReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "accuracy" => self.accuracy,
            "precision" => self.precision,
            "recall" => self.recall,
            "f1" => self.f1,
            "auc" => self.auc,
            "mcc" => self.mcc,
            "kappa" => self.kappa,
            _ => return None,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [self.accuracy, self.precision, self.recall, self.f1, self.auc, self.mcc, self.kappa]
    }

    pub fn tagged(mut self, model: &str, fold: Option<usize>) -> Self {
        self.model = model.to_string();
        self.fold = fold;
        self
    }
}

pub fn metrics(cm: &ConfusionMatrix, y: &[u8], p: &[f64]) -> Result<MetricsReport> {
    if y.len() != p.len() {
        return Err(Error::LengthMismatch(y.len(), p.len()));
    }
    if cm.total() != y.len() as u64 {
        return Err(Error::LengthMismatch(cm.total() as usize, y.len()));
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let n = tp + tn + fp + fn_;
    let accuracy = ratio(tp + tn, n);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let mcc = ratio(tp * tn - fp * fn_, ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt());
    let p_e = ratio((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn), n * n);
    let kappa = ratio(accuracy - p_e, 1.0 - p_e);
    let auc = auc(y, p).unwrap_or_else(|| {
        degenerate = true;
        0.0
    });
    Ok(MetricsReport {
        model: String::new(),
        fold: None,
        accuracy,
        precision,
        recall,
        f1,
        auc,
        mcc: mcc.clamp(-1.0, 1.0),
        kappa: kappa.clamp(-1.0, 1.0),
        confusion: *cm,
        degenerate,
    })
}

/// Confusion at `threshold` followed by [`metrics`].
pub fn evaluate(y: &[u8], p: &[f64], threshold: f64) -> Result<MetricsReport> {
    metrics(&confusion(y, p, threshold)?, y, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Probabilities hitting tp=6, fp=1, fn=2, tn=3 at threshold 0.5 (8 positives, 4 negatives).
    fn fixture() -> (Vec<u8>, Vec<f64>) {
        let y = vec![1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1];
        let p = vec![0.9, 0.8, 0.2, 0.6, 0.7, 0.3, 0.95, 0.55, 0.1, 0.4, 0.2, 0.65];
        (y, p)
    }

    #[test]
    fn fixture_counts_and_metrics() {
        let (y, p) = fixture();
        let cm = confusion(&y, &p, 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 6, tn: 3, fp: 1, fn_: 2 });
        let r = metrics(&cm, &y, &p).unwrap();
        // hand computation
        let (tp, tn, fp, fn_) = (6.0f64, 3.0f64, 1.0f64, 2.0f64);
        let prec = tp / (tp + fp);
        let rec = tp / (tp + fn_);
        let po = (tp + tn) / 12.0;
        let pe = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / 144.0;
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.precision - prec).abs() < 1e-12);
        assert!((r.recall - rec).abs() < 1e-12);
        assert!((r.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-12);
        assert!((r.mcc - 16.0 / 1120f64.sqrt()).abs() < 1e-12);
        assert!((r.kappa - (po - pe) / (1.0 - pe)).abs() < 1e-12);
        assert!((r.precision - 0.8571).abs() < 1e-4 && (r.f1 - 0.8).abs() < 1e-4);
        assert!((r.mcc - 0.4781).abs() < 1e-4 && (r.kappa - 0.4706).abs() < 1e-4);
        assert!(!r.degenerate);
    }

    #[test]
    fn auc_fixture() {
        assert_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]), Some(0.75));
        assert_eq!(auc(&[0, 0, 1, 1], &[0.9, 0.8, 0.2, 0.1]), Some(0.0));
        assert_eq!(auc(&[0, 1], &[0.5, 0.5]), Some(0.5));
        assert_eq!(auc(&[1, 1], &[0.5, 0.5]), None);
    }

    #[test]
    fn boundary_thresholds() {
        let cm = confusion(&[1, 0], &[0.9, 0.1], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 });
        let cm = confusion(&[1, 0, 1, 0], &[0.3, 0.0, 0.9, 0.2], 0.0).unwrap();
        assert_eq!((cm.tn, cm.fn_), (0, 0));
        assert!(matches!(confusion(&[1], &[0.1, 0.2], 0.5), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn perfect_predictor() {
        let r = evaluate(&[0, 1, 0, 1], &[0.1, 0.9, 0.2, 0.7], 0.5).unwrap();
        assert_eq!(r.values(), [1.0; 7]);
    }

    #[test]
    fn zero_denominators_flagged() {
        let r = evaluate(&[0, 0, 1], &[0.1, 0.1, 0.1], 0.5).unwrap();
        assert_eq!(r.precision, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn constant_predictor_accuracy_is_base_rate() {
        let y = [1, 0, 0, 0, 1, 0, 0, 0];
        let r = evaluate(&y, &[0.0; 8], 0.5).unwrap();
        assert_eq!(r.accuracy, 6.0 / 8.0);
    }

    proptest! {
        #[test]
        fn mcc_kappa_invariant_under_role_swap(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let a = ConfusionMatrix { tp, tn, fp, fn_ };
            let b = ConfusionMatrix { tp: tn, tn: tp, fp: fn_, fn_: fp };
            let n = a.total() as usize;
            let y = vec![0u8; n];
            let p = vec![0.0; n];
            let (ra, rb) = (metrics(&a, &y, &p).unwrap(), metrics(&b, &y, &p).unwrap());
            prop_assert!((ra.mcc - rb.mcc).abs() < 1e-12);
            prop_assert!((ra.kappa - rb.kappa).abs() < 1e-12);
            for v in [ra.accuracy, ra.precision, ra.recall, ra.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((-1.0..=1.0).contains(&ra.mcc) && (-1.0..=1.0).contains(&ra.kappa));
        }

        #[test]
        fn auc_in_unit_interval(data in prop::collection::vec((0u8..2, 0.0f64..1.0), 2..40)) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            let p: Vec<f64> = data.iter().map(|d| d.1).collect();
            if let Some(a) = auc(&y, &p) {
                prop_assert!((0.0..=1.0).contains(&a));
                // brute-force pair count
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..y.len() {
                    for j in 0..y.len() {
                        if y[i] == 1 && y[j] == 0 {
                            den += 1.0;
                            num += if p[i] > p[j] { 1.0 } else if p[i] == p[j] { 0.5 } else { 0.0 };
                        }
                    }
                }
                prop_assert!((a - num / den).abs() < 1e-12);
            }
        }
    }
}
