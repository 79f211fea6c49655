//! Ingestion, validation, and splitting of panels of count series.
//!
//! A panel is rectangular: N schools observed over the same consecutive
//! calendar years, each school assigned to exactly one geographic state.
//! Schools with gaps in their year coverage are rejected at ingest; the
//! recursions downstream require a complete lag structure.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular panel of counts with covariates and state grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSeries {
    school_ids: Vec<String>,
    /// Distinct state labels; indices into this vector are state ids.
    state_labels: Vec<String>,
    /// school index -> state index in 0..n_states-1
    state_of: Vec<usize>,
    /// Strictly increasing consecutive calendar years.
    years: Vec<i32>,
    /// Row-major N x T counts.
    counts: Vec<u64>,
    /// Row-major N x T x r covariates.
    covariates: Vec<f64>,
    covariate_dim: usize,
}

impl PanelSeries {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        school_ids: Vec<String>,
        state_labels: Vec<String>,
        state_of: Vec<usize>,
        years: Vec<i32>,
        counts: Vec<u64>,
        covariates: Vec<f64>,
        covariate_dim: usize,
    ) -> Result<Self> {
        let n = school_ids.len();
        let t = years.len();
        if n == 0 || t == 0 {
            return Err(Error::Data("panel must be non-empty".into()));
        }
        if state_of.len() != n {
            return Err(Error::Data("state map must cover every school".into()));
        }
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::Data(format!(
                    "years must be strictly increasing consecutive integers; found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if counts.len() != n * t {
            return Err(Error::Data(format!(
                "counts must be N*T = {} values, got {}",
                n * t,
                counts.len()
            )));
        }
        if state_of.iter().any(|&s| s >= state_labels.len()) {
            return Err(Error::Data("state index out of range".into()));
        }
        if covariates.len() != n * t * covariate_dim {
            return Err(Error::Data("covariate array has wrong size".into()));
        }
        Ok(PanelSeries {
            school_ids,
            state_labels,
            state_of,
            years,
            counts,
            covariates,
            covariate_dim,
        })
    }

    pub fn n_schools(&self) -> usize {
        self.school_ids.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn school_ids(&self) -> &[String] {
        &self.school_ids
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn state_of(&self, school: usize) -> usize {
        self.state_of[school]
    }

    pub fn count(&self, school: usize, t: usize) -> u64 {
        self.counts[school * self.n_years() + t]
    }

    pub fn counts_for(&self, school: usize) -> &[u64] {
        let t = self.n_years();
        &self.counts[school * t..(school + 1) * t]
    }

    pub fn covariate(&self, school: usize, t: usize) -> &[f64] {
        let r = self.covariate_dim;
        let start = (school * self.n_years() + t) * r;
        &self.covariates[start..start + r]
    }

    /// Restrict the panel to its first `t_end` years.
    pub fn truncate_years(&self, t_end: usize) -> Result<PanelSeries> {
        if t_end == 0 || t_end > self.n_years() {
            return Err(Error::Data(format!(
                "cannot truncate panel of {} years to {t_end}",
                self.n_years()
            )));
        }
        let n = self.n_schools();
        let t = self.n_years();
        let r = self.covariate_dim;
        let mut counts = Vec::with_capacity(n * t_end);
        let mut covs = Vec::with_capacity(n * t_end * r);
        for i in 0..n {
            counts.extend_from_slice(&self.counts[i * t..i * t + t_end]);
            covs.extend_from_slice(&self.covariates[i * t * r..(i * t + t_end) * r]);
        }
        PanelSeries::from_parts(
            self.school_ids.clone(),
            self.state_labels.clone(),
            self.state_of.clone(),
            self.years[..t_end].to_vec(),
            counts,
            covs,
            r,
        )
    }

    /// Replace the covariates with the default intercept plus scaled linear
    /// trend: x_{i,t} = (1, (year_t - year_1)/(year_T - year_1)).
    pub fn with_default_covariates(&self) -> Result<PanelSeries> {
        let t = self.n_years();
        if t < 2 {
            return Err(Error::Data(
                "default trend covariate undefined for a single-year panel".into(),
            ));
        }
        let n = self.n_schools();
        let span = f64::from(self.years[t - 1] - self.years[0]);
        let mut covs = Vec::with_capacity(n * t * 2);
        for _ in 0..n {
            for k in 0..t {
                covs.push(1.0);
                covs.push(f64::from(self.years[k] - self.years[0]) / span);
            }
        }
        let mut out = self.clone();
        out.covariates = covs;
        out.covariate_dim = 2;
        Ok(out)
    }
}

/// Set default covariates (intercept + scaled trend) on a panel.
pub fn default_covariates(panel: &PanelSeries) -> Result<PanelSeries> {
    panel.with_default_covariates()
}

/// Rolling-origin split: one-step forecasts for `horizon` successive years
/// starting at year index `train_end_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Number of years in the first training window (1-based count).
    pub train_end_index: usize,
    /// Number of successive one-step forecasts.
    pub horizon: usize,
}

impl SplitPlan {
    pub fn new(train_end_index: usize, horizon: usize, n_years: usize) -> Result<Self> {
        if train_end_index == 0 || train_end_index >= n_years {
            return Err(Error::Config(format!(
                "train_end_index must satisfy 1 <= train_end_index < T = {n_years}, got {train_end_index}"
            )));
        }
        if horizon == 0 || train_end_index + horizon > n_years {
            return Err(Error::Config(format!(
                "train_end_index + horizon must be <= T = {n_years}, got {train_end_index} + {horizon}"
            )));
        }
        Ok(SplitPlan {
            train_end_index,
            horizon,
        })
    }
}

/// Load a long-format panel CSV with header
/// `school_id,state,year,count[,x1,x2,...]`.
///
/// When covariate columns are absent the panel is returned with the default
/// intercept-plus-trend covariates.
pub fn load_panel<P: AsRef<Path>>(path: P) -> Result<PanelSeries> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "school_id" || cols[1] != "state" || cols[2] != "year" || cols[3] != "count" {
        return Err(Error::Data(format!(
            "panel CSV must start with columns school_id,state,year,count; got {:?}",
            cols
        )));
    }
    let n_x = cols.len() - 4;

    struct Row {
        school: String,
        state: String,
        year: i32,
        count: u64,
        xs: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let school = rec
            .get(0)
            .ok_or_else(|| Error::Data(format!("row {}: missing school_id", line + 2)))?
            .to_string();
        let state = rec
            .get(1)
            .ok_or_else(|| Error::Data(format!("row {}: missing state", line + 2)))?
            .to_string();
        let year: i32 = rec
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("row {}: unparseable year", line + 2)))?;
        let raw_count: i64 = rec
            .get(3)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("row {}: unparseable count", line + 2)))?;
        if raw_count < 0 {
            return Err(Error::Data(format!(
                "negative count at (school {school}, year {year})"
            )));
        }
        let mut xs = Vec::with_capacity(n_x);
        for k in 0..n_x {
            let v: f64 = rec
                .get(4 + k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("row {}: unparseable covariate", line + 2)))?;
            xs.push(v);
        }
        rows.push(Row {
            school,
            state,
            year,
            count: raw_count as u64,
            xs,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("panel CSV contains no data rows".into()));
    }

    let year_min = rows.iter().map(|r| r.year).min().unwrap();
    let year_max = rows.iter().map(|r| r.year).max().unwrap();
    let t = (year_max - year_min + 1) as usize;
    let years: Vec<i32> = (year_min..=year_max).collect();

    // Group rows per school, preserving first-appearance order.
    let mut school_order: Vec<String> = Vec::new();
    let mut per_school: BTreeMap<String, (String, Vec<Option<u64>>, Vec<Option<Vec<f64>>>)> =
        BTreeMap::new();
    for row in &rows {
        if !per_school.contains_key(&row.school) {
            school_order.push(row.school.clone());
            per_school.insert(
                row.school.clone(),
                (row.state.clone(), vec![None; t], vec![None; t]),
            );
        }
        let entry = per_school.get_mut(&row.school).unwrap();
        if entry.0 != row.state {
            return Err(Error::Data(format!(
                "school {} maps to more than one state ({} and {})",
                row.school, entry.0, row.state
            )));
        }
        let idx = (row.year - year_min) as usize;
        if entry.1[idx].is_some() {
            return Err(Error::Data(format!(
                "duplicate (school {}, year {})",
                row.school, row.year
            )));
        }
        entry.1[idx] = Some(row.count);
        entry.2[idx] = Some(row.xs.clone());
    }

    // Reject ragged coverage, listing offenders.
    let mut ragged = Vec::new();
    for school in &school_order {
        let (_, counts, _) = &per_school[school];
        let missing: Vec<i32> = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(k, _)| years[k])
            .collect();
        if !missing.is_empty() {
            ragged.push(format!("{school} missing years {missing:?}"));
        }
    }
    if !ragged.is_empty() {
        return Err(Error::Data(format!(
            "ragged year coverage: {}",
            ragged.join("; ")
        )));
    }

    let mut state_labels: Vec<String> = Vec::new();
    let mut state_of = Vec::with_capacity(school_order.len());
    let mut counts = Vec::with_capacity(school_order.len() * t);
    let mut covariates = Vec::new();
    for school in &school_order {
        let (state, cs, xs) = &per_school[school];
        let sid = match state_labels.iter().position(|s| s == state) {
            Some(i) => i,
            None => {
                state_labels.push(state.clone());
                state_labels.len() - 1
            }
        };
        state_of.push(sid);
        for c in cs {
            counts.push(c.unwrap());
        }
        if n_x > 0 {
            for x in xs {
                covariates.extend_from_slice(x.as_ref().unwrap());
            }
        }
    }

    let panel = PanelSeries::from_parts(
        school_order,
        state_labels,
        state_of,
        years,
        counts,
        covariates,
        n_x,
    )?;
    if n_x == 0 {
        panel.with_default_covariates()
    } else {
        Ok(panel)
    }
}

/// Write a panel in the long CSV format accepted by [`load_panel`].
pub fn save_panel<P: AsRef<Path>>(panel: &PanelSeries, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let r = panel.covariate_dim();
    let mut header = vec![
        "school_id".to_string(),
        "state".to_string(),
        "year".to_string(),
        "count".to_string(),
    ];
    for k in 0..r {
        header.push(format!("x{}", k + 1));
    }
    writer.write_record(&header)?;
    for i in 0..panel.n_schools() {
        for t in 0..panel.n_years() {
            let mut rec = vec![
                panel.school_ids()[i].clone(),
                panel.state_labels()[panel.state_of(i)].clone(),
                panel.years()[t].to_string(),
                panel.count(i, t).to_string(),
            ];
            for v in panel.covariate(i, t) {
                rec.push(format!("{v:?}"));
            }
            writer.write_record(&rec)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Cross-school averages of per-school sample means and sample variances
/// (variance denominator T - 1).
pub fn overdispersion_summary(panel: &PanelSeries) -> Result<(f64, f64)> {
    let t = panel.n_years();
    if t < 2 {
        return Err(Error::Data(
            "overdispersion summary requires at least two years".into(),
        ));
    }
    let n = panel.n_schools();
    let mut mean_of_means = 0.0;
    let mut mean_of_vars = 0.0;
    for i in 0..n {
        let ys = panel.counts_for(i);
        let mean = ys.iter().map(|&y| y as f64).sum::<f64>() / t as f64;
        let var = ys
            .iter()
            .map(|&y| (y as f64 - mean).powi(2))
            .sum::<f64>()
            / (t - 1) as f64;
        mean_of_means += mean;
        mean_of_vars += var;
    }
    Ok((mean_of_means / n as f64, mean_of_vars / n as f64))
}
