//! Binary classification metrics and closed-form baselines.
//!
//! Undefined precision or recall (0/0) counts as 0, and so does the F1 of a
//! class whose precision and recall are both 0. Macro scores average the two
//! classes without weights; weighted-F1 uses the true-class frequencies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

pub const DISPLAY_DECIMALS: u32 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, gold: Label, predicted: Label) {
        match (gold, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }

    /// The same counts with the roles of the two classes exchanged.
    pub fn relabeled(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

pub fn confusion(gold: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::invalid(
            "confusion input",
            format!("{} gold labels but {} predictions", gold.len(), predicted.len()),
        ));
    }
    if gold.is_empty() {
        return Err(Error::Empty("confusion needs at least one prediction"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(predicted) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub f1_weighted: f64,
    pub accuracy: f64,
    /// Number of scored instances; 0 for analytic baselines.
    pub support: u64,
    pub unmapped_rate: f64,
    pub rounding: u32,
}

impl MetricsReport {
    /// The six table columns in display order.
    pub fn columns(&self) -> [f64; 6] {
        [
            self.precision_macro,
            self.recall_macro,
            self.f1_macro,
            self.f1_micro,
            self.f1_weighted,
            self.accuracy,
        ]
    }

    pub fn display_columns(&self) -> [String; 6] {
        self.columns().map(|v| format_rounded(v, self.rounding))
    }
}

pub const COLUMN_NAMES: [&str; 6] = [
    "Precision",
    "Recall",
    "macro-F1",
    "micro-F1",
    "weighted-F1",
    "Accuracy",
];

/// Half-up rounding that treats values within float noise of a .5 boundary as on it.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value * scale;
    let nudged = scaled + 0.5 + 1e-9 * scaled.abs().max(1.0);
    nudged.floor() / scale
}

pub fn format_rounded(value: f64, decimals: u32) -> String {
    format!("{:.*}", decimals as usize, round_half_up(value, decimals))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let total = cm.total();
    let (tp, fp, fn_, tn) = (cm.tp, cm.fp, cm.fn_, cm.tn);

    let p_pos = ratio(tp, tp + fp);
    let r_pos = ratio(tp, tp + fn_);
    let p_neg = ratio(tn, tn + fn_);
    let r_neg = ratio(tn, tn + fp);
    let f1_pos = harmonic(p_pos, r_pos);
    let f1_neg = harmonic(p_neg, r_neg);

    // pooled over both classes: every error is one false positive and one false negative
    let pooled_tp = tp + tn;
    let pooled_err = fp + fn_;
    let micro_p = ratio(pooled_tp, pooled_tp + pooled_err);
    let micro_r = ratio(pooled_tp, pooled_tp + pooled_err);

    let w_pos = ratio(tp + fn_, total);
    let w_neg = ratio(tn + fp, total);

    MetricsReport {
        precision_macro: (p_pos + p_neg) / 2.0,
        recall_macro: (r_pos + r_neg) / 2.0,
        f1_macro: (f1_pos + f1_neg) / 2.0,
        f1_micro: harmonic(micro_p, micro_r),
        f1_weighted: w_pos * f1_pos + w_neg * f1_neg,
        accuracy: ratio(tp + tn, total),
        support: total,
        unmapped_rate: 0.0,
        rounding: DISPLAY_DECIMALS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Minority,
    Majority,
    RandomUniform,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::Minority,
        BaselineKind::Majority,
        BaselineKind::RandomUniform,
    ];

    pub fn row_name(self) -> &'static str {
        match self {
            BaselineKind::Minority => "minority class",
            BaselineKind::Majority => "majority class",
            BaselineKind::RandomUniform => "random class",
        }
    }
}

/// Expected metrics of a constant or uniformly random predictor when a
/// fraction `p` of the instances belongs to the majority class.
pub fn expected_baseline(kind: BaselineKind, p: f64) -> Result<MetricsReport> {
    if !(0.5..=1.0).contains(&p) {
        return Err(Error::invalid(
            "majority fraction",
            format!("{p} is outside [0.5, 1]"),
        ));
    }
    let q = 1.0 - p;
    let (precision_macro, recall_macro, f1_macro, accuracy, f1_weighted) = match kind {
        BaselineKind::Majority => (p / 2.0, 0.5, p / (1.0 + p), p, p * 2.0 * p / (1.0 + p)),
        BaselineKind::Minority => (q / 2.0, 0.5, q / (1.0 + q), q, q * 2.0 * q / (1.0 + q)),
        BaselineKind::RandomUniform => {
            let f1_maj = p / (p + 0.5);
            let f1_min = q / (q + 0.5);
            (0.5, 0.5, (f1_maj + f1_min) / 2.0, 0.5, p * f1_maj + q * f1_min)
        }
    };
    Ok(MetricsReport {
        precision_macro,
        recall_macro,
        f1_macro,
        f1_micro: accuracy,
        f1_weighted,
        accuracy,
        support: 0,
        unmapped_rate: 0.0,
        rounding: DISPLAY_DECIMALS,
    })
}

/// Binomial(n, 1/2) probabilities, dropping the negligible tails.
fn half_binomial(n: u64) -> Vec<(u64, f64)> {
    let ln2 = std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64;
    let mut out = Vec::new();
    for k in 0..=n {
        let w = (ln_choose - n as f64 * ln2).exp();
        if w > 1e-18 {
            out.push((k, w));
        }
        if k < n {
            ln_choose += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    out
}

/// Exact expected metrics of a uniformly random predictor over a split with
/// the given class counts. Unlike [`expected_baseline`], which evaluates the
/// metrics at the expected confusion counts, this averages the metrics over
/// every possible confusion matrix, so macro and weighted F1 carry the small
/// finite-sample bias of a real coin-flip run.
pub fn exact_random_baseline(positives: u64, negatives: u64) -> Result<MetricsReport> {
    if positives + negatives == 0 {
        return Err(Error::Empty("random baseline needs at least one instance"));
    }
    let tp_dist = half_binomial(positives);
    let fp_dist = half_binomial(negatives);
    let mut acc = [0.0f64; 6];
    let mut mass = 0.0;
    for &(tp, wt) in &tp_dist {
        for &(fp, wf) in &fp_dist {
            let w = wt * wf;
            let cm = ConfusionMatrix { tp, fp, fn_: positives - tp, tn: negatives - fp };
            for (a, v) in acc.iter_mut().zip(compute_metrics(&cm).columns()) {
                *a += w * v;
            }
            mass += w;
        }
    }
    let [precision_macro, recall_macro, f1_macro, f1_micro, f1_weighted, accuracy] = acc.map(|a| a / mass);
    Ok(MetricsReport {
        precision_macro,
        recall_macro,
        f1_macro,
        f1_micro,
        f1_weighted,
        accuracy,
        support: 0,
        unmapped_rate: 0.0,
        rounding: DISPLAY_DECIMALS,
    })
}

/// Expected baseline metrics for a split with the given class counts. The
/// constant predictors are exact in closed form; the random predictor is
/// averaged over every outcome of the coin flips.
pub fn expected_baseline_counts(kind: BaselineKind, majority: u64, minority: u64) -> Result<MetricsReport> {
    let n = majority + minority;
    if n == 0 {
        return Err(Error::Empty("baseline needs at least one instance"));
    }
    if minority > majority {
        return Err(Error::invalid(
            "class counts",
            format!("majority count {majority} is below minority count {minority}"),
        ));
    }
    match kind {
        BaselineKind::RandomUniform => exact_random_baseline(majority, minority),
        _ => expected_baseline(kind, majority as f64 / n as f64),
    }
}

/// Uniform coin-flip predictions from a seeded generator.
pub fn simulate_random_baseline(gold: &[Label], seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gold.iter()
        .map(|_| {
            if rng.random_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect()
}
