//! Attack metrics (accuracy, confidence, attack success rate), α sweeps,
//! budget and interpolation studies, and their reports and plots.

mod plot;
mod study;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use plot::{curve_svg, write_curves, ContactSheet, Series};
pub use study::{
    budget_study, classify_clean, contact_sheet, interpolation_study, paired_configs, sweep, BudgetPoint,
    PairedReports,
};

use crate::error::{Error, Result};
use crate::model::ClassificationResult;
use crate::scalar::Scalar;
use crate::vae::AttackConfig;

/// Outcome of classifying one test sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub true_label: usize,
    pub predicted: usize,
    pub confidence: f32,
}

impl SampleRecord {
    pub fn new<T: Scalar>(result: &ClassificationResult<T>, true_label: usize) -> Self {
        Self {
            true_label,
            predicted: result.predicted_class,
            confidence: result.confidence.as_f32(),
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted == self.true_label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceFilter {
    #[default]
    All,
    MisclassifiedOnly,
}

pub fn accuracy(records: &[SampleRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty result list".into()));
    }
    Ok(records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}

/// Mean max-probability over the records kept by `filter`.
pub fn mean_confidence(records: &[SampleRecord], filter: ConfidenceFilter) -> Result<f64> {
    let kept: Vec<f64> = records
        .iter()
        .filter(|r| filter == ConfidenceFilter::All || !r.correct())
        .map(|r| r.confidence as f64)
        .collect();
    if kept.is_empty() {
        return Err(Error::UndefinedMetric(match filter {
            ConfidenceFilter::All => "confidence of an empty result list".into(),
            ConfidenceFilter::MisclassifiedOnly => "no misclassified samples".into(),
        }));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Attack success rate: the percentage drop of `attacked` accuracy relative
/// to `baseline`, clamped at 0.
pub fn asr(baseline: f64, attacked: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&baseline) || !(0.0..=1.0).contains(&attacked) {
        return Err(Error::Precondition(format!(
            "accuracies must lie in [0, 1], got baseline {baseline}, attacked {attacked}"
        )));
    }
    if baseline == 0.0 {
        return Err(Error::UndefinedMetric("ASR against a zero baseline".into()));
    }
    Ok(((baseline - attacked) / baseline).max(0.0) * 100.0)
}

/// Which accuracy the ASR is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Accuracy of the unattacked model on the test set.
    #[default]
    CleanAccuracy,
    /// Accuracy on VAE reconstructions (α = 0).
    Alpha0Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub alpha: f64,
    pub accuracy: f64,
    pub mean_confidence: f64,
    /// Mean confidence over misclassified samples; `None` when every sample
    /// was classified correctly.
    pub misclassified_confidence: Option<f64>,
    pub asr: f64,
    pub n_samples_evaluated: usize,
}

impl EvalPoint {
    pub fn from_records(alpha: f64, records: &[SampleRecord], baseline: f64) -> Result<Self> {
        let acc = accuracy(records)?;
        Ok(Self {
            alpha,
            accuracy: acc,
            mean_confidence: mean_confidence(records, ConfidenceFilter::All)?,
            misclassified_confidence: mean_confidence(records, ConfidenceFilter::MisclassifiedOnly).ok(),
            asr: asr(baseline, acc)?,
            n_samples_evaluated: records.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub cut_index: usize,
    pub baseline_mode: BaselineMode,
    pub baseline_value: f64,
    pub clean_accuracy: f64,
    pub alpha0_accuracy: f64,
    /// Attack settings; each point overrides `alpha`.
    pub config: AttackConfig,
    pub points: Vec<EvalPoint>,
    #[serde(skip)]
    pub clean_records: Vec<SampleRecord>,
    /// Per-point records, aligned with `points`.
    #[serde(skip)]
    pub point_records: Vec<Vec<SampleRecord>>,
}

fn create(path: &Path) -> Result<fs::File> {
    Ok(fs::OpenOptions::new().write(true).create_new(true).open(path)?)
}

impl EvalReport {
    pub fn point(&self, alpha: f64) -> Option<&EvalPoint> {
        self.points.iter().find(|p| p.alpha == alpha)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// One row per point: `alpha,accuracy,mean_confidence,misclassified_confidence,asr,n`.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("alpha,accuracy,mean_confidence,misclassified_confidence,asr,n_samples_evaluated\n");
        for p in &self.points {
            let mis = p.misclassified_confidence.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.alpha, p.accuracy, p.mean_confidence, mis, p.asr, p.n_samples_evaluated
            ));
        }
        out
    }

    /// Per-sample rows: `pass,alpha,index,true_label,predicted,confidence`.
    /// Clean-pass rows leave `alpha` empty.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("pass,alpha,index,true_label,predicted,confidence\n");
        for (i, r) in self.clean_records.iter().enumerate() {
            out.push_str(&format!("clean,,{i},{},{},{}\n", r.true_label, r.predicted, r.confidence));
        }
        for (p, records) in self.points.iter().zip(&self.point_records) {
            for (i, r) in records.iter().enumerate() {
                out.push_str(&format!(
                    "attack,{},{i},{},{},{}\n",
                    p.alpha, r.true_label, r.predicted, r.confidence
                ));
            }
        }
        out
    }

    pub fn write_csvs(&self, points: &Path, records: &Path) -> Result<()> {
        create(points)?.write_all(self.points_csv().as_bytes())?;
        create(records)?.write_all(self.records_csv().as_bytes())?;
        Ok(())
    }

    /// Recomputes every aggregate from per-sample records, e.g. ones read
    /// back with [`parse_records_csv`].
    pub fn recompute(&self, records: &RecordTable) -> Result<(f64, Vec<EvalPoint>)> {
        let clean = accuracy(&records.clean)?;
        let baseline = match self.baseline_mode {
            BaselineMode::CleanAccuracy => clean,
            BaselineMode::Alpha0Accuracy => self.alpha0_accuracy,
        };
        let points = records
            .attack
            .iter()
            .map(|(alpha, r)| EvalPoint::from_records(*alpha, r, baseline))
            .collect::<Result<_>>()?;
        Ok((clean, points))
    }
}

/// Per-sample records grouped by pass, as persisted next to a report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordTable {
    pub clean: Vec<SampleRecord>,
    /// `(alpha, records)` in file order.
    pub attack: Vec<(f64, Vec<SampleRecord>)>,
}

pub fn parse_records_csv(text: &str) -> Result<RecordTable> {
    let bad = |line: usize, what: &str| Error::Format(format!("records line {line}: {what}"));
    let mut table = RecordTable::default();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n + 1, "expected 6 fields"));
        }
        let record = SampleRecord {
            true_label: f[3].parse().map_err(|_| bad(n + 1, "true_label"))?,
            predicted: f[4].parse().map_err(|_| bad(n + 1, "predicted"))?,
            confidence: f[5].parse().map_err(|_| bad(n + 1, "confidence"))?,
        };
        match f[0] {
            "clean" => table.clean.push(record),
            "attack" => {
                let alpha: f64 = f[1].parse().map_err(|_| bad(n + 1, "alpha"))?;
                match table.attack.last_mut() {
                    Some((a, r)) if *a == alpha => r.push(record),
                    _ => table.attack.push((alpha, vec![record])),
                }
            }
            other => return Err(bad(n + 1, &format!("unknown pass {other:?}"))),
        }
    }
    Ok(table)
}
