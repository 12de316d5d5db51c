//! Per-`n` evaluations of a subset-averaged quantity.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRecord {
    pub n: usize,
    /// Conditioning-window margin, when the quantity is conditional.
    #[serde(rename = "V")]
    pub v: Option<usize>,
    pub value: f64,
    /// Standard error of a Monte-Carlo estimate; 0 in exact mode.
    pub stderr: f64,
    pub certified: bool,
    /// `"exact"` or `"mc"`.
    pub mode: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalEstimate {
    pub last_value: f64,
    /// `|a_n - a_{n-2}|` over the last three records of the final margin.
    pub cauchy_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationSeries {
    pub quantity: String,
    pub coeffs: String,
    /// Set when values come from locally admissible (over-approximated) languages.
    pub upper_approximation: bool,
    pub records: Vec<SeriesRecord>,
    pub final_estimate: Option<FinalEstimate>,
    /// Why the series stopped early, if it did.
    pub failure: Option<String>,
}

impl TruncationSeries {
    pub fn new(quantity: impl Into<String>, coeffs: impl Into<String>) -> Self {
        Self {
            quantity: quantity.into(),
            coeffs: coeffs.into(),
            upper_approximation: false,
            records: Vec::new(),
            final_estimate: None,
            failure: None,
        }
    }

    pub fn push(&mut self, record: SeriesRecord) {
        self.records.push(record);
        self.refresh_estimate();
    }

    fn refresh_estimate(&mut self) {
        let Some(last) = self.records.last() else {
            self.final_estimate = None;
            return;
        };
        let same: Vec<&SeriesRecord> = self.records.iter().filter(|r| r.v == last.v).collect();
        let cauchy_gap = if same.len() >= 3 {
            Some((last.value - same[same.len() - 3].value).abs())
        } else {
            None
        };
        self.final_estimate = Some(FinalEstimate {
            last_value: last.value,
            cauchy_gap,
        });
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    /// The record for `n` (and margin `v`).
    pub fn at(&self, n: usize, v: Option<usize>) -> Option<&SeriesRecord> {
        self.records.iter().find(|r| r.n == n && r.v == v)
    }

    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.records.iter().find(|r| r.n == n).map(|r| r.value)
    }

    pub fn all_certified(&self) -> bool {
        self.records.iter().all(|r| r.certified)
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}
