//! Prediction, metrics and the running-evaluation protocol.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::adf::{process_batch, EngineConfig};
use crate::bnn::output_moments;
use crate::error::{Error, Result};
use crate::posterior::ModelState;
use crate::special::cdf;
use crate::tensor::{EntryBatch, ObservedEntry, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    /// Predictive mean `α` and variance `β + b/a`.
    Continuous { mean: f64, var: f64 },
    /// `P(y = 1) = Φ(α / sqrt(1 + β))`.
    Binary { prob: f64 },
}

impl Prediction {
    /// The mean for continuous data, the probability for binary data.
    pub fn point(&self) -> f64 {
        match *self {
            Prediction::Continuous { mean, .. } => mean,
            Prediction::Binary { prob } => prob,
        }
    }
}

pub fn predict_entry(state: &ModelState, index: &[usize]) -> Result<Prediction> {
    let input = state.gather_entry(index)?;
    let w = state.weights();
    let m = output_moments(state.network(), w.means(), w.vars(), &input.means, &input.vars)?;
    Ok(match (state.kind(), state.gamma()) {
        (ValueKind::Continuous, Some(g)) => Prediction::Continuous { mean: m.alpha, var: m.beta + g.noise_var() },
        (ValueKind::Continuous, None) => return Err(Error::arg("continuous model without a noise posterior")),
        (ValueKind::Binary, _) => Prediction::Binary { prob: cdf(m.alpha / (1.0 + m.beta).sqrt()) },
    })
}

/// Predicts many cells in parallel; output order follows `indices`.
pub fn predict_many<I: AsRef<[usize]> + Sync>(state: &ModelState, indices: &[I]) -> Result<Vec<Prediction>> {
    indices.par_iter().map(|i| predict_entry(state, i.as_ref())).collect()
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(Error::arg("rmse needs two non-empty vectors of equal length"));
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Area under the ROC curve as the Mann–Whitney statistic; tied scores
/// count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::arg("auc needs two non-empty vectors of equal length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("auc scores contain NaN"));
    }
    for &l in labels {
        ValueKind::Binary.check_value(l)?;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as f64 * midrank;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// RMSE for continuous models, AUC for binary ones.
pub fn evaluate(state: &ModelState, test: &[ObservedEntry]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::arg("evaluation needs a non-empty test set"));
    }
    let idx: Vec<&[usize]> = test.iter().map(|e| e.index.as_slice()).collect();
    let preds: Vec<f64> = predict_many(state, &idx)?.iter().map(Prediction::point).collect();
    let truth: Vec<f64> = test.iter().map(|e| e.value).collect();
    match state.kind() {
        ValueKind::Continuous => rmse(&preds, &truth),
        ValueKind::Binary => auc(&preds, &truth),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub batch: u64,
    pub seen: u64,
    pub metric: f64,
    /// Training time of the batch, when timing is recorded.
    pub ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.batch <= prev.batch {
                return Err(Error::arg(format!("batch ordinal {} does not follow {}", row.batch, prev.batch)));
            }
        }
        if !row.metric.is_finite() {
            return Err(Error::Numeric(format!("metric {} after batch {}", row.metric, row.batch)));
        }
        self.rows.push(row);
        Ok(())
    }

    /// CSV with header `batch,seen,metric,ms`; `ms` is empty when timing
    /// was not recorded.
    pub fn write_csv<W: Write>(&self, mut w: W, with_header: bool) -> Result<()> {
        if with_header {
            writeln!(w, "batch,seen,metric,ms")?;
        }
        for r in &self.rows {
            match r.ms {
                Some(ms) => writeln!(w, "{},{},{},{:.3}", r.batch, r.seen, r.metric, ms)?,
                None => writeln!(w, "{},{},{},", r.batch, r.seen, r.metric)?,
            }
        }
        Ok(())
    }
}

/// Processes each batch and scores the whole test set after it.
pub fn running_eval<'a, I>(
    state: &mut ModelState,
    batches: I,
    test: &[ObservedEntry],
    cfg: &EngineConfig,
    record_timing: bool,
) -> Result<MetricSeries>
where
    I: IntoIterator<Item = &'a EntryBatch>,
{
    if test.is_empty() {
        return Err(Error::arg("running evaluation needs a non-empty test set"));
    }
    cfg.validate()?;
    let mut series = MetricSeries::new();
    for batch in batches {
        let start = Instant::now();
        let report = process_batch(state, batch, cfg)?;
        let ms = record_timing.then(|| start.elapsed().as_secs_f64() * 1e3);
        if report.skipped > 0 || report.clamped > 0 {
            log::info!("batch {}: {} skipped, {} clamped", batch.ordinal, report.skipped, report.clamped);
        }
        let metric = evaluate(state, test)?;
        series.push(MetricRow { batch: batch.ordinal, seen: state.entries_seen(), metric, ms })?;
    }
    Ok(series)
}
