//! Forecast scoring: some-risk recall (SRR), highest-risk precision (HRP),
//! and risk area ratio (RAR) against ground-truth wet/dry rasters, with
//! per-event and pooled aggregation.

use thiserror::Error;

use crate::raster::{check_same_geo, MaskGrid, RasterError};
use crate::risk::RiskMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("cannot aggregate an empty report list")]
    EmptyReports,
}

/// Scores for one forecast/truth pair. A metric whose denominator is zero
/// is carried as `None`, never as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// |some ∩ truth| / |truth|.
    pub srr: Option<f64>,
    /// |highest ∩ truth| / |highest|.
    pub hrp: Option<f64>,
    /// |some| / |highest|.
    pub rar: Option<f64>,
    /// Truth-wet pixels among the valid ones.
    pub wet_total: u64,
    /// Some-region pixels that are truth-wet.
    pub some_hits: u64,
    /// Some-region pixels among the valid ones.
    pub some_total: u64,
    /// Highest-region pixels that are truth-wet.
    pub highest_hits: u64,
    /// Highest-region pixels among the valid ones.
    pub highest_total: u64,
    pub n_valid_pixels: u64,
}

/// Mean of one metric across reports, counting only reports where it is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricMean {
    pub mean: Option<f64>,
    pub contributors: usize,
}

/// Seasonal summary: unweighted per-event means plus a pooled
/// (pixel-weighted) report computed from the summed confusion counts.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub n_reports: usize,
    pub srr: MetricMean,
    pub hrp: MetricMean,
    pub rar: MetricMean,
    pub pooled: EvalReport,
}

fn ratio(numerator: u64, denominator: u64) -> Option<f64> {
    (denominator > 0).then(|| numerator as f64 / denominator as f64)
}

fn report_from_counts(
    wet_total: u64,
    some_hits: u64,
    some_total: u64,
    highest_hits: u64,
    highest_total: u64,
    n_valid_pixels: u64,
) -> EvalReport {
    EvalReport {
        srr: ratio(some_hits, wet_total),
        hrp: ratio(highest_hits, highest_total),
        rar: ratio(some_total, highest_total),
        wet_total,
        some_hits,
        some_total,
        highest_hits,
        highest_total,
        n_valid_pixels,
    }
}

/// Score a risk map against a ground-truth wet mask, restricted to `valid`
/// pixels (observed, cloud-free ground truth).
pub fn evaluate(
    risk: &RiskMap,
    truth_wet: &MaskGrid,
    valid: &MaskGrid,
) -> Result<EvalReport, EvalError> {
    check_same_geo(&risk.some.geo, &truth_wet.geo)?;
    check_same_geo(&risk.some.geo, &valid.geo)?;
    let mut wet_total = 0;
    let mut some_hits = 0;
    let mut some_total = 0;
    let mut highest_hits = 0;
    let mut highest_total = 0;
    let mut n_valid_pixels = 0;
    for (r, c) in valid.iter_set() {
        n_valid_pixels += 1;
        let wet = truth_wet.get(r, c);
        let some = risk.some.get(r, c);
        let highest = risk.highest.get(r, c);
        wet_total += u64::from(wet);
        some_total += u64::from(some);
        highest_total += u64::from(highest);
        some_hits += u64::from(some && wet);
        highest_hits += u64::from(highest && wet);
    }
    Ok(report_from_counts(
        wet_total,
        some_hits,
        some_total,
        highest_hits,
        highest_total,
        n_valid_pixels,
    ))
}

/// Combine per-event reports into per-event means (each metric averaged
/// over the reports where it is defined) and a pooled report.
pub fn aggregate(reports: &[EvalReport]) -> Result<Aggregate, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyReports);
    }
    let mean_of = |metric: fn(&EvalReport) -> Option<f64>| {
        let defined: Vec<f64> = reports.iter().filter_map(metric).collect();
        MetricMean {
            mean: (!defined.is_empty())
                .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            contributors: defined.len(),
        }
    };
    let sum_of = |count: fn(&EvalReport) -> u64| reports.iter().map(count).sum::<u64>();
    Ok(Aggregate {
        n_reports: reports.len(),
        srr: mean_of(|r| r.srr),
        hrp: mean_of(|r| r.hrp),
        rar: mean_of(|r| r.rar),
        pooled: report_from_counts(
            sum_of(|r| r.wet_total),
            sum_of(|r| r.some_hits),
            sum_of(|r| r.some_total),
            sum_of(|r| r.highest_hits),
            sum_of(|r| r.highest_total),
            sum_of(|r| r.n_valid_pixels),
        ),
    })
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "undefined".into(),
    }
}

impl EvalReport {
    /// `key: value` lines, one per field; undefined metrics spelled out.
    pub fn key_value_lines(&self) -> String {
        format!(
            "srr: {}\nhrp: {}\nrar: {}\nwet_total: {}\nsome_hits: {}\nsome_total: {}\n\
             highest_hits: {}\nhighest_total: {}\nn_valid_pixels: {}\n",
            fmt_metric(self.srr),
            fmt_metric(self.hrp),
            fmt_metric(self.rar),
            self.wet_total,
            self.some_hits,
            self.some_total,
            self.highest_hits,
            self.highest_total,
            self.n_valid_pixels,
        )
    }
}

impl Aggregate {
    /// `key: value` lines for the per-event means, contributor counts, and
    /// the pooled report (prefixed `pooled_`).
    pub fn key_value_lines(&self) -> String {
        let mut out = format!(
            "n_reports: {}\nmean_srr: {}\nsrr_contributors: {}\nmean_hrp: {}\n\
             hrp_contributors: {}\nmean_rar: {}\nrar_contributors: {}\n",
            self.n_reports,
            fmt_metric(self.srr.mean),
            self.srr.contributors,
            fmt_metric(self.hrp.mean),
            self.hrp.contributors,
            fmt_metric(self.rar.mean),
            self.rar.contributors,
        );
        for line in self.pooled.key_value_lines().lines() {
            out.push_str("pooled_");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
