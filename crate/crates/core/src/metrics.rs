//! Confusion matrix, overall accuracy, Cohen's kappa and per-class
//! precision / recall / F1.
//!
//! Ratios are computed from integer counts with a single final division, so
//! closed-form cases such as kappa = 2000 / 5000 come out exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CLASS_NAMES, NUM_CLASSES};

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: [[0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl ConfusionMatrix {
    /// Builds a matrix from a square block of counts; classes beyond the
    /// block stay zero.
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n > NUM_CLASSES || rows.iter().any(|r| r.len() != n) {
            return Err(Error::dims("confusion counts must be square and at most 14x14"));
        }
        let mut cm = ConfusionMatrix::default();
        for (t, row) in rows.iter().enumerate() {
            cm.counts[t][..n].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: u8, predicted: u8) -> Result<()> {
        for l in [truth, predicted] {
            if l as usize >= NUM_CLASSES {
                return Err(Error::InvalidLabel(l as u32));
            }
        }
        self.counts[truth as usize][predicted as usize] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.iter().map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }

    fn require_nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::invalid("confusion matrix is empty")),
            n => Ok(n),
        }
    }
}

/// Tallies `(truth, predicted)` pairs.
pub fn confusion(predicted: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.require_nonempty()?;
    Ok(cm.trace() as f64 / n as f64)
}

/// `(p_o - p_e) / (1 - p_e)`, evaluated as
/// `(N * trace - sum_k row_k * col_k) / (N^2 - sum_k row_k * col_k)`.
/// Returns 0 when chance agreement is total (`p_e = 1`).
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.require_nonempty()? as i128;
    let chance: i128 = (0..NUM_CLASSES)
        .map(|k| cm.row_sum(k) as i128 * cm.col_sum(k) as i128)
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok((n * cm.trace() as i128 - chance) as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision `TP / (TP + FP)`, recall `TP / (TP + FN)` and
/// `F1 = 2 TP / (2 TP + FP + FN)` (the harmonic mean of the two). Any 0/0 is
/// reported as 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..NUM_CLASSES)
        .map(|k| {
            let tp = cm.counts[k][k];
            let fp = cm.col_sum(k) - tp;
            let fn_ = cm.row_sum(k) - tp;
            ClassScores {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// All statistics of one evaluation. Serializes to
/// `{oa, kappa, classes: [{name, precision, recall, f1}], matrix}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub kappa: f64,
    pub classes: Vec<ClassReport>,
    pub matrix: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let classes = per_class_f1(cm)
            .into_iter()
            .zip(CLASS_NAMES)
            .map(|(s, name)| ClassReport {
                name: name.to_string(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            })
            .collect();
        Ok(MetricsReport {
            oa: overall_accuracy(cm)?,
            kappa: kappa(cm)?,
            classes,
            matrix: cm.rows(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Per-class F1 rows followed by O.A. and Kappa.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:>9} {:>9} {:>9}\n", "Class", "Precision", "Recall", "F1");
        for c in &self.classes {
            out.push_str(&format!(
                "{:<8} {:>9.2} {:>9.2} {:>9.2}\n",
                c.name, c.precision, c.recall, c.f1
            ));
        }
        out.push_str(&format!("{:<8} {:>9.2}\n", "O.A.", self.oa));
        out.push_str(&format!("{:<8} {:>9.2}\n", "Kappa", self.kappa));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_class() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&[vec![40, 10], vec![20, 30]]).unwrap()
    }

    #[test]
    fn closed_forms() {
        let cm = two_class();
        assert_eq!(overall_accuracy(&cm).unwrap(), 0.70);
        assert_eq!(kappa(&cm).unwrap(), 0.4);
        let s = per_class_f1(&cm);
        assert_eq!(s[0].precision, 40.0 / 60.0);
        assert_eq!(s[0].recall, 0.8);
        assert!((s[0].f1 - 8.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_chance() {
        let diag = ConfusionMatrix::from_counts(&[vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(overall_accuracy(&diag).unwrap(), 1.0);
        assert_eq!(kappa(&diag).unwrap(), 1.0);
        let s = per_class_f1(&diag);
        assert!(s[..3].iter().all(|c| c.f1 == 1.0));
        // Class 5 never occurs and is never predicted.
        assert_eq!(
            s[5],
            ClassScores {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );

        let chance = ConfusionMatrix::from_counts(&[vec![25, 25], vec![25, 25]]).unwrap();
        assert_eq!(kappa(&chance).unwrap(), 0.0);

        let off = ConfusionMatrix::from_counts(&[vec![0, 3], vec![4, 0]]).unwrap();
        assert_eq!(overall_accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_kappa_is_zero() {
        let one = ConfusionMatrix::from_counts(&[vec![9]]).unwrap();
        assert_eq!(kappa(&one).unwrap(), 0.0);
        assert!(kappa(&ConfusionMatrix::default()).is_err());
        assert!(overall_accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn confusion_shapes() {
        let truth = [0u8, 1, 2, 3];
        let cm = confusion(&truth, &truth).unwrap();
        for t in 0..14 {
            for p in 0..14 {
                assert_eq!(cm.get(t, p), u64::from(t == p && t < 4));
            }
        }
        let cm = confusion(&[0, 0, 0, 0], &truth).unwrap();
        assert_eq!((0..14).map(|t| cm.get(t, 0)).sum::<u64>(), 4);
        assert_eq!(cm.total(), 4);
        assert!(confusion(&[0, 1], &[0]).is_err());
        assert!(confusion(&[14], &[0]).is_err());
    }

    #[test]
    fn tally_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pred: Vec<u8> = (0..1000).map(|_| rng.random_range(0..14)).collect();
        let truth: Vec<u8> = (0..1000).map(|_| rng.random_range(0..14)).collect();
        let cm = confusion(&pred, &truth).unwrap();
        assert_eq!(cm.total(), 1000);
        let mut tally = std::collections::HashMap::new();
        for (p, t) in pred.iter().zip(&truth) {
            *tally.entry((*t, *p)).or_insert(0u64) += 1;
        }
        for t in 0..14u8 {
            for p in 0..14u8 {
                assert_eq!(cm.get(t as usize, p as usize), *tally.get(&(t, p)).unwrap_or(&0));
            }
        }
    }

    #[test]
    fn report_json_shape() {
        let r = MetricsReport::from_confusion(&two_class()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["oa"], 0.7);
        assert_eq!(v["kappa"], 0.4);
        assert_eq!(v["classes"].as_array().unwrap().len(), 14);
        assert_eq!(v["classes"][0]["name"], "LCZ 2");
        assert_eq!(v["classes"][13]["name"], "LCZ G");
        assert_eq!(v["matrix"][1][0], 20);
        assert!(r.to_text().contains("Kappa"));
    }

    #[test]
    fn macro_recall_equals_oa_on_balanced_symmetric() {
        let cm = ConfusionMatrix::from_counts(&[vec![8, 1, 1], vec![1, 8, 1], vec![1, 1, 8]]).unwrap();
        let s = per_class_f1(&cm);
        let macro_recall = s[..3].iter().map(|c| c.recall).sum::<f64>() / 3.0;
        assert!((macro_recall - overall_accuracy(&cm).unwrap()).abs() < 1e-15);
    }

    fn small_matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..6).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0u64..50, n), n))
    }

    proptest! {
        #[test]
        fn invariants(rows in small_matrix(), rot in 0usize..6) {
            let cm = ConfusionMatrix::from_counts(&rows).unwrap();
            prop_assume!(cm.total() > 0);
            let k = kappa(&cm).unwrap();
            prop_assert!(k <= 1.0 + 1e-12);
            let oa = overall_accuracy(&cm).unwrap();

            // Same permutation of rows and columns.
            let n = rows.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted: Vec<Vec<u64>> = (0..n)
                .map(|i| (0..n).map(|j| rows[perm[i]][perm[j]]).collect())
                .collect();
            let pm = ConfusionMatrix::from_counts(&permuted).unwrap();
            prop_assert_eq!(overall_accuracy(&pm).unwrap(), oa);
            prop_assert_eq!(kappa(&pm).unwrap(), k);

            for s in per_class_f1(&cm) {
                if s.precision > 0.0 && s.recall > 0.0 {
                    prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
                    prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
                    let harmonic = 2.0 * s.precision * s.recall / (s.precision + s.recall);
                    prop_assert!((s.f1 - harmonic).abs() < 1e-12);
                }
            }

            let off_diag: u64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j).map(|(i, j)| rows[i][j]).sum();
            if off_diag == 0 && k != 0.0 {
                prop_assert_eq!(k, 1.0);
            }
            if k == 1.0 {
                prop_assert_eq!(off_diag, 0);
            }
        }
    }
}
