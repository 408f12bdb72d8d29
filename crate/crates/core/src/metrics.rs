//! Multi-label evaluation: Jaccard (multi-label accuracy) and micro/macro F1.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(preds: usize, golds: usize) -> Result<()> {
    if preds != golds {
        return Err(Error::invalid(format!(
            "{preds} predictions for {golds} gold label sets"
        )));
    }
    Ok(())
}

/// Mean per-sample `|Y ∩ Ŷ| / |Y ∪ Ŷ|`. A sample where both sets are empty
/// counts as perfect agreement.
pub fn jaccard(preds: &[Vec<usize>], golds: &[Vec<usize>]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    if preds.is_empty() {
        return Err(Error::invalid("jaccard over an empty evaluation set"));
    }
    let total: f64 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| {
            let p: BTreeSet<_> = p.iter().collect();
            let g: BTreeSet<_> = g.iter().collect();
            let union = p.union(&g).count();
            if union == 0 {
                1.0
            } else {
                p.intersection(&g).count() as f64 / union as f64
            }
        })
        .sum();
    Ok(total / preds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub micro: f64,
    pub macro_: f64,
    pub per_label: Vec<LabelScores>,
}

/// Micro F1 from pooled counts, macro F1 as the unweighted mean over all `n`
/// labels. Zero denominators give 0.
pub fn micro_macro_f1(preds: &[Vec<usize>], golds: &[Vec<usize>], n: usize) -> Result<F1Summary> {
    check_lengths(preds.len(), golds.len())?;
    let mut counts = vec![(0usize, 0usize, 0usize); n];
    for (p, g) in preds.iter().zip(golds) {
        let p: BTreeSet<usize> = p.iter().copied().collect();
        let g: BTreeSet<usize> = g.iter().copied().collect();
        if let Some(bad) = p.iter().chain(&g).find(|&&j| j >= n) {
            return Err(Error::invalid(format!("label index {bad} out of range for {n} labels")));
        }
        for j in p.intersection(&g) {
            counts[*j].0 += 1;
        }
        for j in p.difference(&g) {
            counts[*j].1 += 1;
        }
        for j in g.difference(&p) {
            counts[*j].2 += 1;
        }
    }
    let per_label: Vec<LabelScores> = counts
        .iter()
        .enumerate()
        .map(|(label, &(tp, fp, fn_))| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            LabelScores {
                label,
                tp,
                fp,
                fn_,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let micro = f1(ratio(tp, tp + fp), ratio(tp, tp + fn_));
    let macro_ = if n == 0 {
        0.0
    } else {
        per_label.iter().map(|l| l.f1).sum::<f64>() / n as f64
    };
    Ok(F1Summary {
        micro,
        macro_,
        per_label,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub jaccard: f64,
    pub samples: usize,
    pub label_names: Vec<String>,
    pub per_label: Vec<LabelScores>,
}

impl EvalReport {
    pub fn compute(preds: &[Vec<usize>], golds: &[Vec<usize>], label_names: &[String]) -> Result<Self> {
        let f = micro_macro_f1(preds, golds, label_names.len())?;
        Ok(Self {
            micro_f1: f.micro,
            macro_f1: f.macro_,
            jaccard: jaccard(preds, golds)?,
            samples: preds.len(),
            label_names: label_names.to_vec(),
            per_label: f.per_label,
        })
    }

    /// One metric per line, then a per-label table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "samples {}", self.samples).unwrap();
        writeln!(s, "micro_f1 {:.6}", self.micro_f1).unwrap();
        writeln!(s, "macro_f1 {:.6}", self.macro_f1).unwrap();
        writeln!(s, "jaccard {:.6}", self.jaccard).unwrap();
        writeln!(s, "label\tprecision\trecall\tf1\ttp\tfp\tfn").unwrap();
        for l in &self.per_label {
            let name = self.label_names.get(l.label).map_or("?", String::as_str);
            writeln!(
                s,
                "{name}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                l.precision, l.recall, l.f1, l.tp, l.fp, l.fn_
            )
            .unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
