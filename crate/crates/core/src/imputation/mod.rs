//! Seasonal DTW-based imputation of long missing runs.
//!
//! For a gap of `T` days the query window `Q` is the run of observed values
//! right next to the gap. Every complete window of the same length inside the
//! gap's seasonal search space is scored against `Q` with plain DTW and with
//! derivative DTW; windows whose derivative cost does not exceed their plain
//! cost are kept, the best one (lowest derivative cost) is located, and the `T`
//! values that continue it towards the gap are used as the fill. With both
//! sides available the two completions are averaged.

mod dtw;

pub use dtw::{derivative_transform, dtw_cost, DtwCostMatrix, LocalCost};

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{row_gaps, ConsumptionMatrix, Gap, SeasonCalendar};

#[derive(Debug, thiserror::Error)]
pub enum ImputeError {
    #[error("sequence of length {len} is shorter than the required {min}")]
    SequenceTooShort { len: usize, min: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("no complete query window of length >= 3 next to the gap on the {0:?} side")]
    NoQueryWindow(Side),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Which side of the gap the query window sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Before,
    After,
}

/// A scored candidate window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMatch {
    /// First column of the candidate window.
    pub position: usize,
    /// Window length, equal to the query length.
    pub len: usize,
    pub dtw_cost: f64,
    pub ddtw_cost: f64,
    pub side: Side,
}

/// How a gap was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMethod {
    /// Derivative-filtered DTW match on one or both sides.
    Edtwbi,
    /// Short gap, linear interpolation between neighbours.
    Linear,
    /// No candidate passed the derivative filter; best plain-DTW candidate used.
    MinDtw,
    /// Mean of the row's observed values in the gap's season.
    SeasonalMean,
    /// Mean of the row's observed values.
    RowMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    /// Number of same-season blocks (the gap's own block first, then the
    /// nearest ones in either direction) that candidates may come from.
    pub search_size: usize,
    /// Gaps shorter than this are linearly interpolated. Must be >= 3.
    pub min_gap: usize,
    /// Search on both sides of the gap; `false` only uses the preceding side.
    pub two_sided: bool,
    pub calendar: SeasonCalendar,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            search_size: 1,
            min_gap: 3,
            two_sided: true,
            calendar: SeasonCalendar::default(),
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<(), ImputeError> {
        if self.search_size < 1 {
            return Err(ImputeError::Config("search_size must be >= 1".into()));
        }
        if self.min_gap < 3 {
            return Err(ImputeError::Config("min_gap must be >= 3".into()));
        }
        Ok(())
    }
}

/// One row prepared for candidate search.
pub struct RowSearch<'a> {
    values: &'a [Option<f64>],
    blocks: Vec<i64>,
    /// `missing_prefix[i]` = number of missing cells in `values[..i]`.
    missing_prefix: Vec<usize>,
}

impl<'a> RowSearch<'a> {
    pub fn new(values: &'a [Option<f64>], dates: &[NaiveDate], calendar: &SeasonCalendar) -> Self {
        assert_eq!(values.len(), dates.len(), "one date per value");
        let mut missing_prefix = Vec::with_capacity(values.len() + 1);
        missing_prefix.push(0);
        for v in values {
            missing_prefix.push(missing_prefix.last().unwrap() + v.is_none() as usize);
        }
        Self {
            values,
            blocks: calendar.ordinals(dates),
            missing_prefix,
        }
    }

    fn complete(&self, start: usize, len: usize) -> bool {
        start + len <= self.values.len() && self.missing_prefix[start + len] == self.missing_prefix[start]
    }

    fn slice(&self, start: usize, len: usize) -> Vec<f64> {
        self.values[start..start + len].iter().map(|v| v.expect("complete window")).collect()
    }

    /// Same-season block ordinals making up the search space of a gap.
    pub fn search_blocks(&self, gap_start: usize, search_size: usize) -> Vec<i64> {
        let own = self.blocks[gap_start];
        let mut present: Vec<i64> = self.blocks.clone();
        present.dedup();
        let mut same_season: Vec<i64> = present.into_iter().filter(|b| (b - own).rem_euclid(4) == 0).collect();
        // Nearest first; equal distance resolves to the earlier block.
        same_season.sort_by_key(|&b| ((b - own).abs(), b));
        same_season.truncate(search_size);
        same_season
    }

    /// Query window next to the gap: up to `gap_len` observed values, at least 3.
    pub fn query(&self, gap_start: usize, gap_len: usize, side: Side) -> Option<(usize, usize)> {
        let n = self.values.len();
        let mut run = 0;
        match side {
            Side::Before => {
                while run < gap_len && run < gap_start && self.values[gap_start - run - 1].is_some() {
                    run += 1;
                }
                (run >= 3).then(|| (gap_start - run, run))
            }
            Side::After => {
                let end = gap_start + gap_len;
                while run < gap_len && end + run < n && self.values[end + run].is_some() {
                    run += 1;
                }
                (run >= 3).then_some((end, run))
            }
        }
    }

    /// Where the fill values sit for a candidate window at `position`.
    fn completion_start(position: usize, window_len: usize, gap_len: usize, side: Side) -> Option<usize> {
        match side {
            Side::Before => Some(position + window_len),
            Side::After => position.checked_sub(gap_len),
        }
    }

    /// Every admissible candidate with both costs, unfiltered.
    pub fn scan(&self, gap_start: usize, gap_len: usize, search_size: usize, side: Side) -> Result<Vec<WindowMatch>, ImputeError> {
        let (q_start, q_len) = self.query(gap_start, gap_len, side).ok_or(ImputeError::NoQueryWindow(side))?;
        let query = self.slice(q_start, q_len);
        let query_deriv = derivative_transform(&query)?;
        let allowed = self.search_blocks(gap_start, search_size);
        let n = self.values.len();
        let mut out = Vec::new();
        for position in 0..n.saturating_sub(q_len - 1) {
            let overlaps_query = position < q_start + q_len && q_start < position + q_len;
            if overlaps_query || !self.complete(position, q_len) {
                continue;
            }
            let Some(fill_start) = Self::completion_start(position, q_len, gap_len, side) else {
                continue;
            };
            if !self.complete(fill_start, gap_len) {
                continue;
            }
            let span_start = position.min(fill_start);
            let span_end = (position + q_len).max(fill_start + gap_len);
            if !self.blocks[span_start..span_end].iter().all(|b| allowed.contains(b)) {
                continue;
            }
            let window = self.slice(position, q_len);
            let dtw = dtw_cost(&query, &window, LocalCost::SquaredDifference)?;
            let ddtw = dtw_cost(&query_deriv, &derivative_transform(&window)?, LocalCost::SquaredDifference)?;
            out.push(WindowMatch {
                position,
                len: q_len,
                dtw_cost: dtw,
                ddtw_cost: ddtw,
                side,
            });
        }
        Ok(out)
    }

    /// The `gap_len` values continuing a candidate towards the gap.
    pub fn completion(&self, m: &WindowMatch, gap_len: usize) -> Vec<f64> {
        let start = Self::completion_start(m.position, m.len, gap_len, m.side).expect("scanned candidate");
        self.slice(start, gap_len)
    }

    fn seasonal_mean(&self, gap_start: usize) -> Option<f64> {
        let season = self.blocks[gap_start].rem_euclid(4);
        mean(self
            .values
            .iter()
            .zip(&self.blocks)
            .filter(|(_, b)| b.rem_euclid(4) == season)
            .filter_map(|(v, _)| *v))
    }

    fn row_mean(&self) -> Option<f64> {
        mean(self.values.iter().filter_map(|v| *v))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Candidates on one side whose derivative cost does not exceed their plain
/// DTW cost.
///
/// The comparison is non-strict so that an exact copy of the query
/// (both costs zero) is retained.
pub fn find_candidates(
    series: &[Option<f64>],
    dates: &[NaiveDate],
    calendar: &SeasonCalendar,
    gap: &Gap,
    search_size: usize,
    side: Side,
) -> Result<Vec<WindowMatch>, ImputeError> {
    let search = RowSearch::new(series, dates, calendar);
    filter_candidates(search.scan(gap.start, gap.len, search_size, side)?)
}

fn filter_candidates(all: Vec<WindowMatch>) -> Result<Vec<WindowMatch>, ImputeError> {
    Ok(all.into_iter().filter(|m| m.ddtw_cost <= m.dtw_cost).collect())
}

fn best_by<F: Fn(&WindowMatch) -> f64>(candidates: &[WindowMatch], key: F) -> Option<WindowMatch> {
    candidates.iter().copied().fold(None, |best: Option<WindowMatch>, c| match best {
        Some(b) if key(&b) <= key(&c) => Some(b),
        _ => Some(c),
    })
}

fn linear_fill(search: &RowSearch<'_>, start: usize, len: usize) -> Option<Vec<f64>> {
    let left = start.checked_sub(1).and_then(|i| search.values[i]);
    let right = search.values.get(start + len).copied().flatten();
    Some(match (left, right) {
        (Some(a), Some(b)) => (1..=len).map(|k| a + (b - a) * k as f64 / (len + 1) as f64).collect(),
        (Some(a), None) => vec![a; len],
        (None, Some(b)) => vec![b; len],
        (None, None) => return None,
    })
}

/// Fills one gap of a prepared row.
pub fn impute_gap_in(search: &RowSearch<'_>, gap_start: usize, gap_len: usize, config: &ImputeConfig) -> (Vec<f64>, FillMethod) {
    let (mut fill, method) = fill_unclamped(search, gap_start, gap_len, config);
    fill.iter_mut().for_each(|v| *v = v.max(0.0));
    (fill, method)
}

fn fill_unclamped(search: &RowSearch<'_>, gap_start: usize, gap_len: usize, config: &ImputeConfig) -> (Vec<f64>, FillMethod) {
    if gap_len < config.min_gap {
        if let Some(fill) = linear_fill(search, gap_start, gap_len) {
            return (fill, FillMethod::Linear);
        }
    }
    let sides: &[Side] = if config.two_sided { &[Side::Before, Side::After] } else { &[Side::Before] };
    let mut scanned = Vec::new();
    let mut completions = Vec::new();
    for &side in sides {
        let Ok(all) = search.scan(gap_start, gap_len, config.search_size, side) else {
            continue;
        };
        let passing: Vec<_> = all.iter().copied().filter(|m| m.ddtw_cost <= m.dtw_cost).collect();
        if let Some(best) = best_by(&passing, |m| m.ddtw_cost) {
            completions.push(search.completion(&best, gap_len));
        }
        scanned.extend(all);
    }
    if !completions.is_empty() {
        let k = completions.len() as f64;
        let fill = (0..gap_len).map(|i| completions.iter().map(|c| c[i]).sum::<f64>() / k).collect();
        return (fill, FillMethod::Edtwbi);
    }
    if let Some(best) = best_by(&scanned, |m| m.dtw_cost) {
        return (search.completion(&best, gap_len), FillMethod::MinDtw);
    }
    if let Some(mu) = search.seasonal_mean(gap_start) {
        return (vec![mu; gap_len], FillMethod::SeasonalMean);
    }
    (vec![search.row_mean().unwrap_or(0.0); gap_len], FillMethod::RowMean)
}

/// Fills one gap of a row. Returns the `gap.len` fill values and the method used.
pub fn impute_gap(
    series: &[Option<f64>],
    dates: &[NaiveDate],
    gap: &Gap,
    config: &ImputeConfig,
) -> (Vec<f64>, FillMethod) {
    let search = RowSearch::new(series, dates, &config.calendar);
    impute_gap_in(&search, gap.start, gap.len, config)
}

/// Fills every gap of a row. Candidate windows are always taken from the
/// originally observed values, never from earlier fills.
pub fn impute_row(series: &[Option<f64>], dates: &[NaiveDate], config: &ImputeConfig) -> (Vec<f64>, Vec<FillMethod>) {
    let search = RowSearch::new(series, dates, &config.calendar);
    let mut out: Vec<f64> = series.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let mut methods = Vec::new();
    for (start, len) in row_gaps(series) {
        let (fill, method) = impute_gap_in(&search, start, len, config);
        out[start..start + len].copy_from_slice(&fill);
        methods.push(method);
    }
    (out, methods)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeSummary {
    pub gaps_filled: usize,
    pub cells_filled: usize,
    pub fallback_counts: BTreeMap<FillMethod, usize>,
}

/// Fills every missing cell of the matrix. Rows are processed independently.
pub fn impute_matrix(m: &ConsumptionMatrix, config: &ImputeConfig) -> Result<(ConsumptionMatrix, ImputeSummary), ImputeError> {
    config.validate()?;
    let work = |row: usize| impute_row(m.row(row), m.dates(), config);
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..m.n_rows()).into_par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..m.n_rows()).map(work).collect();

    let mut summary = ImputeSummary {
        cells_filled: m.missing_count(),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(results.len());
    for (values, methods) in results {
        summary.gaps_filled += methods.len();
        for method in methods {
            *summary.fallback_counts.entry(method).or_default() += 1;
        }
        rows.push(values.into_iter().map(Some).collect());
    }
    let filled = m.with_rows(rows).map_err(|e| ImputeError::Config(e.to_string()))?;
    Ok((filled, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::daily_dates;

    fn dates(n: usize) -> Vec<NaiveDate> {
        // Starts on the first day of summer so the whole row is one block for n <= 92.
        daily_dates("2015-06-01".parse().unwrap(), n)
    }

    fn periodic(n: usize, period: usize) -> Vec<f64> {
        (0..n).map(|i| 2.0 + ((i % period) as f64 * 1.7).sin() + (i % period) as f64 * 0.1).collect()
    }

    fn mask(values: &[f64], start: usize, len: usize) -> Vec<Option<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| if (start..start + len).contains(&i) { None } else { Some(v) })
            .collect()
    }

    #[test]
    fn exact_copy_is_found_with_zero_cost() {
        let truth = periodic(90, 9);
        let row = mask(&truth, 50, 5);
        let gap = Gap { row: 0, start: 50, len: 5 };
        let found = find_candidates(&row, &dates(90), &SeasonCalendar::default(), &gap, 1, Side::Before).unwrap();
        // Query is columns 45..50; copies start every 9 columns before it.
        let exact: Vec<_> = found.iter().filter(|m| m.dtw_cost == 0.0).map(|m| m.position).collect();
        assert!(exact.contains(&36), "{exact:?}");
        assert!(found.iter().all(|m| m.len == 5 && m.ddtw_cost <= m.dtw_cost));
    }

    #[test]
    fn periodic_gap_recovered_exactly() {
        let truth = periodic(90, 11);
        let row = mask(&truth, 40, 7);
        let gap = Gap { row: 0, start: 40, len: 7 };
        let (fill, method) = impute_gap(&row, &dates(90), &gap, &ImputeConfig::default());
        assert_eq!(method, FillMethod::Edtwbi);
        for (f, t) in fill.iter().zip(&truth[40..47]) {
            assert!((f - t).abs() < 1e-9);
        }
    }

    #[test]
    fn no_query_window_is_an_error() {
        let row = vec![Some(1.0), None, None, None, Some(1.0), Some(2.0)];
        let gap = Gap { row: 0, start: 1, len: 3 };
        let err = find_candidates(&row, &dates(6), &SeasonCalendar::default(), &gap, 1, Side::Before).unwrap_err();
        assert!(matches!(err, ImputeError::NoQueryWindow(Side::Before)));
    }

    #[test]
    fn nearly_empty_row_uses_seasonal_mean() {
        let mut row = vec![None; 30];
        row[10] = Some(4.0);
        let (out, methods) = impute_row(&row, &dates(30), &ImputeConfig::default());
        assert_eq!(methods, vec![FillMethod::SeasonalMean, FillMethod::SeasonalMean]);
        assert!(out.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn short_gap_is_linear() {
        let row = vec![Some(1.0), None, None, Some(4.0)];
        let (out, methods) = impute_row(&row, &dates(4), &ImputeConfig::default());
        assert_eq!(methods, vec![FillMethod::Linear]);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_row_uses_zero() {
        let row = vec![None; 10];
        let (out, methods) = impute_row(&row, &dates(10), &ImputeConfig::default());
        assert_eq!(methods, vec![FillMethod::RowMean]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn search_blocks_nearest_first() {
        // Three years of daily dates from 2014-01-01.
        let d = daily_dates("2014-01-01".parse().unwrap(), 3 * 365);
        let values = vec![Some(1.0); d.len()];
        let search = RowSearch::new(&values, &d, &SeasonCalendar::default());
        let cal = SeasonCalendar::default();
        let summer15 = d.iter().position(|x| *x == "2015-07-01".parse().unwrap()).unwrap();
        let own = cal.season_of(d[summer15]).ordinal();
        assert_eq!(search.search_blocks(summer15, 1), vec![own]);
        assert_eq!(search.search_blocks(summer15, 2), vec![own, own - 4]);
        assert_eq!(search.search_blocks(summer15, 4), vec![own, own - 4, own + 4]);
    }

    #[test]
    fn config_validation() {
        let bad = ImputeConfig { min_gap: 2, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ImputeConfig { search_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
