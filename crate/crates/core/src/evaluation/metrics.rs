use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, LabelScheme};

fn check_lengths(preds: &[Label], golds: &[Label]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData("no scored predictions".into()));
    }
    Ok(())
}

pub fn accuracy(preds: &[Label], golds: &[Label]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl LabelCounts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    /// 2TP / (2TP + FP + FN); zero when the label never occurs.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.predicted())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.support())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// One-vs-rest counts per scheme label, in scheme order.
pub fn confusion_counts(preds: &[Label], golds: &[Label], scheme: LabelScheme) -> Vec<(Label, LabelCounts)> {
    scheme
        .labels()
        .iter()
        .map(|&label| {
            let mut c = LabelCounts::default();
            for (&p, &g) in preds.iter().zip(golds) {
                match (p == label, g == label) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => {}
                }
            }
            (label, c)
        })
        .collect()
}

/// Macro-averaged F1 over the scheme's labels. Labels that occur in
/// neither predictions nor golds are left out of the average.
pub fn macro_f1(preds: &[Label], golds: &[Label], scheme: LabelScheme) -> Result<f64> {
    check_lengths(preds, golds)?;
    let present: Vec<f64> = confusion_counts(preds, golds, scheme)
        .into_iter()
        .filter(|(_, c)| c.support() + c.predicted() > 0)
        .map(|(_, c)| c.f1())
        .collect();
    if present.is_empty() {
        return Err(Error::InvalidInput(format!("no labels from the {scheme} scheme present")));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn label_metrics(preds: &[Label], golds: &[Label], scheme: LabelScheme) -> Result<Vec<LabelMetrics>> {
    check_lengths(preds, golds)?;
    Ok(confusion_counts(preds, golds, scheme)
        .into_iter()
        .map(|(label, c)| LabelMetrics {
            label,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.support(),
        })
        .collect())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval: `resamples` n-out-of-n draws of
/// (pred, gold) pairs, returning the alpha/2 and 1 - alpha/2 quantiles.
pub fn bootstrap_ci<F>(preds: &[Label], golds: &[Label], metric: F, resamples: usize, alpha: f64, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[Label], &[Label]) -> Result<f64>,
{
    check_lengths(preds, golds)?;
    if resamples < 100 {
        return Err(Error::InvalidInput(format!("{resamples} resamples; at least 100 required")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let n = preds.len();
    let n64 = n as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        p.clear();
        g.clear();
        for _ in 0..n {
            let i = rng.gen_range(0..n64) as usize;
            p.push(preds[i]);
            g.push(golds[i]);
        }
        values.push(metric(&p, &g)?);
    }
    values.sort_by(f64::total_cmp);
    Ok((quantile(&values, alpha / 2.0), quantile(&values, 1.0 - alpha / 2.0)))
}
