//! Pareto filtering and operating-point selection over utility/privacy
//! metric tables.
//!
//! Each setting is measured by a triplet: anomaly-detection AUC (higher is
//! better) and two privacy-leakage scores, F1 and cMAP (lower is better).
//! Selection proceeds in three steps: drop dominated settings, min-max
//! normalize so that 1 is best in every coordinate, then choose an operating
//! point by distance to the ideal point `(1,1,1)`, by weighted score, or by
//! maximum AUC under privacy thresholds.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

/// Scores closer than this are treated as tied for ranking and argmin/argmax.
pub const TIE_EPSILON: f64 = 1e-12;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Header of the metric table CSV, in column order.
pub const METRICS_HEADER: [&str; 4] = ["setting", "auc", "cmap", "f1"];

/// The 14 published settings: CUHK Avenue AUC with PA-HMDB cMAP and F1.
pub const TABLE1_CSV: &str = include_str!("../data/table1.csv");

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("setting id must not be empty")]
    EmptyId,
    #[error("setting {id}: {field}={value} outside {range}")]
    OutOfRange {
        id: String,
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("duplicate setting id {0:?}")]
    DuplicateId(String),
    #[error("metric table must contain at least one setting")]
    EmptyTable,
    #[error("invalid weights ({0}, {1}, {2}): must be non-negative and sum to 1")]
    InvalidWeights(f64, f64, f64),
    #[error("invalid threshold {name}={value}: must be non-negative")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("metrics header must be `setting,auc,cmap,f1`, got `{0}`")]
    BadHeader(String),
    #[error("malformed metrics CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scope {0:?} (expected `all` or `pareto`)")]
    UnknownScope(String),
}

pub type Result<T, E = SelectError> = std::result::Result<T, E>;

/// One setting's measurement triplet. `auc` and `cmap` are percentages,
/// `f1` is a fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub setting_id: String,
    pub auc: f64,
    pub f1: f64,
    pub cmap: f64,
}

fn check_range(id: &str, field: &'static str, value: f64, hi: f64, range: &'static str) -> Result<()> {
    if value.is_finite() && (0.0..=hi).contains(&value) {
        Ok(())
    } else {
        Err(SelectError::OutOfRange {
            id: id.to_owned(),
            field,
            value,
            range,
        })
    }
}

impl MetricRecord {
    pub fn new(setting_id: impl Into<String>, auc: f64, f1: f64, cmap: f64) -> Result<Self> {
        let setting_id = setting_id.into();
        if setting_id.trim().is_empty() {
            return Err(SelectError::EmptyId);
        }
        check_range(&setting_id, "auc", auc, 100.0, "[0, 100]")?;
        check_range(&setting_id, "f1", f1, 1.0, "[0, 1]")?;
        check_range(&setting_id, "cmap", cmap, 100.0, "[0, 100]")?;
        Ok(Self {
            setting_id,
            auc,
            f1,
            cmap,
        })
    }
}

/// True iff `a` is at least as good as `b` in every objective and strictly
/// better in at least one.
pub fn dominates(a: &MetricRecord, b: &MetricRecord) -> bool {
    let no_worse = a.auc >= b.auc && a.f1 <= b.f1 && a.cmap <= b.cmap;
    let better = a.auc > b.auc || a.f1 < b.f1 || a.cmap < b.cmap;
    no_worse && better
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    records: Vec<MetricRecord>,
}

#[derive(Deserialize)]
struct CsvRow {
    setting: String,
    auc: f64,
    cmap: f64,
    f1: f64,
}

impl MetricTable {
    pub fn new(records: Vec<MetricRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(SelectError::EmptyTable);
        }
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.setting_id.as_str()) {
                return Err(SelectError::DuplicateId(r.setting_id.clone()));
            }
        }
        Ok(Self { records })
    }

    /// Parses a `setting,auc,cmap,f1` CSV document.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != METRICS_HEADER {
            return Err(SelectError::BadHeader(header.join(",")));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            records.push(MetricRecord::new(row.setting, row.auc, row.f1, row.cmap)?);
        }
        Self::new(records)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_csv_reader(text.as_bytes())
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| SelectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    /// The bundled published table.
    pub fn table1() -> Self {
        Self::from_csv_str(TABLE1_CSV).expect("bundled table is valid")
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.setting_id == id)
    }
}

/// Positions (into `table.records()`) of the non-dominated records.
///
/// Records are visited best-AUC first; a record can only be dominated by one
/// visited before it, and by transitivity it suffices to test it against the
/// frontier found so far.
pub fn pareto_indices(table: &MetricTable) -> Vec<usize> {
    let recs = table.records();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&recs[i], &recs[j]);
        b.auc
            .total_cmp(&a.auc)
            .then(a.f1.total_cmp(&b.f1))
            .then(a.cmap.total_cmp(&b.cmap))
    });
    let mut frontier: Vec<usize> = Vec::new();
    for i in order {
        if !frontier.iter().any(|&p| dominates(&recs[p], &recs[i])) {
            frontier.push(i);
        }
    }
    frontier.sort_unstable();
    frontier
}

/// Ids of the non-dominated settings, in table order.
pub fn pareto_set(table: &MetricTable) -> Vec<String> {
    pareto_indices(table)
        .into_iter()
        .map(|i| table.records()[i].setting_id.clone())
        .collect()
}

/// Which records define the min/max range for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    #[default]
    All,
    ParetoOnly,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::All => "all",
            Scope::ParetoOnly => "pareto",
        }
    }
}

impl FromStr for Scope {
    type Err = SelectError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Scope::All),
            "pareto" | "pareto-only" => Ok(Scope::ParetoOnly),
            other => Err(SelectError::UnknownScope(other.to_owned())),
        }
    }
}

/// Normalized triplet, each coordinate in `[0,1]` with 1 best.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub setting_id: String,
    pub a_norm: f64,
    pub f_norm: f64,
    pub c_norm: f64,
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        values.fold(
            Range {
                lo: f64::INFINITY,
                hi: f64::NEG_INFINITY,
            },
            |r, v| Range {
                lo: r.lo.min(v),
                hi: r.hi.max(v),
            },
        )
    }

    /// Position of `v` in the range, 1 at the top. A zero-width range maps
    /// everything to 1.
    fn up(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            1.0
        } else {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        }
    }

    /// Position of `v` in the range, 1 at the bottom.
    fn down(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            1.0
        } else {
            ((self.hi - v) / (self.hi - self.lo)).clamp(0.0, 1.0)
        }
    }
}

/// Min-max normalizes every record in the table, with the range taken over
/// `scope`. AUC keeps its direction; F1 and cMAP are reversed.
///
/// With [`Scope::ParetoOnly`], dominated records can fall outside the
/// frontier's AUC range; their values are clamped into `[0,1]`.
pub fn normalize(table: &MetricTable, scope: Scope) -> Vec<NormalizedRecord> {
    let recs = table.records();
    let in_scope: Vec<&MetricRecord> = match scope {
        Scope::All => recs.iter().collect(),
        Scope::ParetoOnly => pareto_indices(table).into_iter().map(|i| &recs[i]).collect(),
    };
    let a = Range::over(in_scope.iter().map(|r| r.auc));
    let f = Range::over(in_scope.iter().map(|r| r.f1));
    let c = Range::over(in_scope.iter().map(|r| r.cmap));
    recs.iter()
        .map(|r| NormalizedRecord {
            setting_id: r.setting_id.clone(),
            a_norm: a.up(r.auc),
            f_norm: f.down(r.f1),
            c_norm: c.down(r.cmap),
        })
        .collect()
}

/// Euclidean distance from a normalized triplet to `(1,1,1)`.
pub fn distance_to_ideal(norm: &NormalizedRecord) -> f64 {
    let da = 1.0 - norm.a_norm;
    let df = 1.0 - norm.f_norm;
    let dc = 1.0 - norm.c_norm;
    (da * da + df * df + dc * dc).sqrt()
}

/// Convex weights over (AUC, F1, cMAP).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionWeights {
    w_a: f64,
    w_f: f64,
    w_c: f64,
}

impl SelectionWeights {
    pub fn new(w_a: f64, w_f: f64, w_c: f64) -> Result<Self> {
        let ok = [w_a, w_f, w_c].iter().all(|w| w.is_finite() && *w >= 0.0)
            && (w_a + w_f + w_c - 1.0).abs() <= WEIGHT_SUM_TOLERANCE;
        if ok {
            Ok(Self { w_a, w_f, w_c })
        } else {
            Err(SelectError::InvalidWeights(w_a, w_f, w_c))
        }
    }

    pub fn equal() -> Self {
        Self {
            w_a: 1.0 / 3.0,
            w_f: 1.0 / 3.0,
            w_c: 1.0 / 3.0,
        }
    }

    pub fn w_a(&self) -> f64 {
        self.w_a
    }

    pub fn w_f(&self) -> f64 {
        self.w_f
    }

    pub fn w_c(&self) -> f64 {
        self.w_c
    }
}

impl Default for SelectionWeights {
    fn default() -> Self {
        Self::equal()
    }
}

impl FromStr for SelectionWeights {
    type Err = SelectError;

    /// Parses `A,F,C`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| SelectError::InvalidWeights(f64::NAN, f64::NAN, f64::NAN))?;
        match parts[..] {
            [a, f, c] => Self::new(a, f, c),
            _ => Err(SelectError::InvalidWeights(f64::NAN, f64::NAN, f64::NAN)),
        }
    }
}

pub fn weighted_score(norm: &NormalizedRecord, w: &SelectionWeights) -> f64 {
    w.w_a * norm.a_norm + w.w_f * norm.f_norm + w.w_c * norm.c_norm
}

/// Upper bounds on F1 and cMAP; `+∞` disables a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyThresholds {
    tau_f: f64,
    tau_c: f64,
}

impl PrivacyThresholds {
    pub fn new(tau_f: f64, tau_c: f64) -> Result<Self> {
        for (name, value) in [("tau_f", tau_f), ("tau_c", tau_c)] {
            if value.is_nan() || value < 0.0 {
                return Err(SelectError::InvalidThreshold { name, value });
            }
        }
        Ok(Self { tau_f, tau_c })
    }

    pub fn unbounded() -> Self {
        Self {
            tau_f: f64::INFINITY,
            tau_c: f64::INFINITY,
        }
    }

    pub fn tau_f(&self) -> f64 {
        self.tau_f
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    pub fn admits(&self, r: &MetricRecord) -> bool {
        r.f1 <= self.tau_f && r.cmap <= self.tau_c
    }
}

impl Default for PrivacyThresholds {
    fn default() -> Self {
        Self::unbounded()
    }
}

/// Picks the best candidate by `key`; `better(a, b)` is true when `a` beats
/// `b` by more than [`TIE_EPSILON`]. Ties go to the smallest id.
fn pick_best<'a>(
    candidates: impl Iterator<Item = (&'a str, f64)>,
    better: impl Fn(f64, f64) -> bool,
) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for (id, v) in candidates {
        best = match best {
            None => Some((id, v)),
            Some((bid, bv)) => {
                if better(v, bv) || (!better(bv, v) && id < bid) {
                    Some((id, v))
                } else {
                    Some((bid, bv))
                }
            }
        };
    }
    best.map(|(id, _)| id)
}

fn pareto_values<'a>(table: &'a MetricTable, values: &'a [f64]) -> impl Iterator<Item = (&'a str, f64)> + 'a {
    pareto_indices(table)
        .into_iter()
        .map(move |i| (table.records()[i].setting_id.as_str(), values[i]))
}

/// The Pareto member closest to the ideal point.
pub fn select_by_distance(table: &MetricTable, scope: Scope) -> String {
    let d: Vec<f64> = normalize(table, scope).iter().map(distance_to_ideal).collect();
    pick_best(pareto_values(table, &d), |a, b| a < b - TIE_EPSILON)
        .expect("pareto set is never empty")
        .to_owned()
}

/// The Pareto member with the highest weighted score.
pub fn select_by_weight(table: &MetricTable, w: &SelectionWeights, scope: Scope) -> String {
    let s: Vec<f64> = normalize(table, scope).iter().map(|n| weighted_score(n, w)).collect();
    pick_best(pareto_values(table, &s), |a, b| a > b + TIE_EPSILON)
        .expect("pareto set is never empty")
        .to_owned()
}

/// The highest-AUC setting among all settings within the thresholds, or
/// `None` when no setting is feasible.
pub fn select_by_constraint(table: &MetricTable, thresholds: &PrivacyThresholds) -> Option<String> {
    let feasible = table
        .records()
        .iter()
        .filter(|r| thresholds.admits(r))
        .map(|r| (r.setting_id.as_str(), r.auc));
    pick_best(feasible, |a, b| a > b + TIE_EPSILON).map(str::to_owned)
}

/// 1-based ranks with tied values sharing the mean of their positions.
/// `ascending` ranks the smallest value first.
pub fn fractional_ranks(values: &[f64], ascending: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        let o = values[i].total_cmp(&values[j]);
        if ascending {
            o
        } else {
            o.reverse()
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let anchor = values[order[start]];
        let mut end = start + 1;
        while end < order.len() && (values[order[end]] - anchor).abs() <= TIE_EPSILON {
            end += 1;
        }
        // positions start+1 ..= end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Mean of the distance rank and the weighted-score rank, over all settings.
pub fn combined_rank(table: &MetricTable, w: &SelectionWeights, scope: Scope) -> BTreeMap<String, f64> {
    let report = SelectionReport::build(table, w, scope, &PrivacyThresholds::unbounded());
    report
        .rows
        .into_iter()
        .map(|r| (r.setting_id, r.rank_combined))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub setting_id: String,
    pub a_norm: f64,
    pub f_norm: f64,
    pub c_norm: f64,
    pub pareto: bool,
    pub distance: f64,
    pub weighted_score: f64,
    pub rank_d: f64,
    pub rank_w: f64,
    pub rank_combined: f64,
}

/// Everything the selection procedure computes for one table, rows in table
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub weights: SelectionWeights,
    pub thresholds: PrivacyThresholds,
    pub scope: Scope,
    pub ideal: [f64; 3],
    pub by_distance: String,
    pub by_weight: String,
    pub by_constraint: Option<String>,
    pub by_combined: String,
}

impl SelectionReport {
    pub fn build(
        table: &MetricTable,
        weights: &SelectionWeights,
        scope: Scope,
        thresholds: &PrivacyThresholds,
    ) -> Self {
        let norm = normalize(table, scope);
        let pareto: HashSet<usize> = pareto_indices(table).into_iter().collect();
        let distance: Vec<f64> = norm.iter().map(distance_to_ideal).collect();
        let score: Vec<f64> = norm.iter().map(|n| weighted_score(n, weights)).collect();
        let rank_d = fractional_ranks(&distance, true);
        let rank_w = fractional_ranks(&score, false);
        let rows: Vec<SelectionRow> = norm
            .into_iter()
            .enumerate()
            .map(|(i, n)| SelectionRow {
                setting_id: n.setting_id,
                a_norm: n.a_norm,
                f_norm: n.f_norm,
                c_norm: n.c_norm,
                pareto: pareto.contains(&i),
                distance: distance[i],
                weighted_score: score[i],
                rank_d: rank_d[i],
                rank_w: rank_w[i],
                rank_combined: (rank_d[i] + rank_w[i]) / 2.0,
            })
            .collect();
        let by_combined = pick_best(
            rows.iter().map(|r| (r.setting_id.as_str(), r.rank_combined)),
            |a, b| a < b - TIE_EPSILON,
        )
        .expect("table is non-empty")
        .to_owned();
        Self {
            by_distance: select_by_distance(table, scope),
            by_weight: select_by_weight(table, weights, scope),
            by_constraint: select_by_constraint(table, thresholds),
            by_combined,
            rows,
            weights: *weights,
            thresholds: *thresholds,
            scope,
            ideal: [1.0, 1.0, 1.0],
        }
    }

    pub fn row(&self, id: &str) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.setting_id == id)
    }

    /// Rows by ascending combined rank, then id.
    pub fn sorted_rows(&self) -> Vec<&SelectionRow> {
        let mut rows: Vec<&SelectionRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            a.rank_combined
                .partial_cmp(&b.rank_combined)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.setting_id.cmp(&b.setting_id))
        });
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, auc: f64, f1: f64, cmap: f64) -> MetricRecord {
        MetricRecord::new(id, auc, f1, cmap).unwrap()
    }

    fn table(recs: Vec<MetricRecord>) -> MetricTable {
        MetricTable::new(recs).unwrap()
    }

    #[test]
    fn dominance_examples() {
        let t = MetricTable::table1();
        assert!(dominates(t.get("blur").unwrap(), t.get("ds2").unwrap()));
        let a = rec("a", 80.0, 0.2, 60.0);
        assert!(!dominates(&a, &a));
        let b = rec("b", 70.0, 0.1, 65.0);
        assert!(!dominates(&a, &b));
        assert!(!dominates(&b, &a));
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_set(&table(vec![rec("x", 50.0, 0.5, 50.0)])), vec!["x"]);
        let both = table(vec![rec("a", 50.0, 0.5, 50.0), rec("b", 50.0, 0.5, 50.0)]);
        assert_eq!(pareto_set(&both), vec!["a", "b"]);
    }

    #[test]
    fn pareto_table1() {
        let got = pareto_set(&MetricTable::table1());
        assert_eq!(
            got,
            vec!["raw", "ts5", "masking", "blur", "ts5_mask", "ts10_mask", "ts5_blur", "ts10_blur"]
        );
    }

    #[test]
    fn normalize_degenerate_and_endpoints() {
        let t = table(vec![rec("a", 50.0, 0.5, 50.0), rec("b", 50.0, 0.5, 50.0)]);
        for n in normalize(&t, Scope::All) {
            assert_eq!((n.a_norm, n.f_norm, n.c_norm), (1.0, 1.0, 1.0));
        }
        let t = table(vec![rec("best", 90.0, 0.1, 10.0), rec("worst", 10.0, 0.9, 90.0)]);
        let n = normalize(&t, Scope::All);
        assert_eq!((n[0].a_norm, n[0].f_norm, n[0].c_norm), (1.0, 1.0, 1.0));
        assert_eq!((n[1].a_norm, n[1].f_norm, n[1].c_norm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn normalize_ts5_blur() {
        let n = normalize(&MetricTable::table1(), Scope::All);
        let r = n.iter().find(|r| r.setting_id == "ts5_blur").unwrap();
        // range: A 48.88..83.01, F 0.184..0.396, C 56.94..70.20
        let a = (73.93 - 48.88) / (83.01 - 48.88);
        let f = (0.396 - 0.201) / (0.396 - 0.184);
        let c = (70.20 - 61.35) / (70.20 - 56.94);
        assert!((r.a_norm - a).abs() < 1e-12 && (a - 0.7340).abs() < 1e-4);
        assert!((r.f_norm - f).abs() < 1e-12 && (f - 0.9198).abs() < 1e-4);
        assert!((r.c_norm - c).abs() < 1e-12 && (c - 0.6674).abs() < 1e-4);
        assert!((distance_to_ideal(r) - 0.4334).abs() < 1e-3);
        assert!((weighted_score(r, &SelectionWeights::equal()) - 0.7737).abs() < 1e-3);
    }

    #[test]
    fn pareto_scope_clamps_dominated_rows() {
        let t = MetricTable::table1();
        let n = normalize(&t, Scope::ParetoOnly);
        let bgr = n.iter().find(|r| r.setting_id == "ts10_bgr").unwrap();
        // AUC 48.88 lies below the frontier's minimum (62.24)
        assert_eq!(bgr.a_norm, 0.0);
        assert!(n.iter().all(|r| [r.a_norm, r.f_norm, r.c_norm].iter().all(|v| (0.0..=1.0).contains(v))));
        let mask10 = n.iter().find(|r| r.setting_id == "ts10_mask").unwrap();
        assert_eq!(mask10.a_norm, 0.0);
    }

    #[test]
    fn distance_corners() {
        let n = |a, f, c| NormalizedRecord {
            setting_id: "x".into(),
            a_norm: a,
            f_norm: f,
            c_norm: c,
        };
        assert_eq!(distance_to_ideal(&n(1.0, 1.0, 1.0)), 0.0);
        assert!((distance_to_ideal(&n(0.0, 0.0, 0.0)) - 3f64.sqrt()).abs() < 1e-15);
        let w = SelectionWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(weighted_score(&n(0.3, 0.9, 0.1), &w), 0.3);
        let w = SelectionWeights::new(0.2, 0.5, 0.3).unwrap();
        assert!((weighted_score(&n(1.0, 1.0, 1.0), &w) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_validation() {
        assert!(SelectionWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(SelectionWeights::new(-0.1, 0.6, 0.5).is_err());
        assert!(SelectionWeights::new(f64::NAN, 0.5, 0.5).is_err());
        assert!(SelectionWeights::new(0.5, 0.25, 0.25).is_ok());
        assert!("0.5,0.25,0.25".parse::<SelectionWeights>().is_ok());
        assert!("0.5,0.5".parse::<SelectionWeights>().is_err());
        assert!("a,b,c".parse::<SelectionWeights>().is_err());
    }

    #[test]
    fn thresholds_validation() {
        assert!(PrivacyThresholds::new(-1.0, 1.0).is_err());
        assert!(PrivacyThresholds::new(0.1, f64::NAN).is_err());
        assert!(PrivacyThresholds::new(0.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn selection_table1() {
        let t = MetricTable::table1();
        assert_eq!(select_by_distance(&t, Scope::All), "ts5_blur");
        let w = |a, f, c| SelectionWeights::new(a, f, c).unwrap();
        assert_eq!(select_by_weight(&t, &w(1.0, 0.0, 0.0), Scope::All), "raw");
        assert_eq!(select_by_weight(&t, &w(0.0, 1.0, 0.0), Scope::All), "ts10_mask");
        assert_eq!(select_by_weight(&t, &w(0.0, 0.0, 1.0), Scope::All), "ts10_mask");
        assert_eq!(select_by_weight(&t, &SelectionWeights::equal(), Scope::All), "ts5_mask");
        let th = |f, c| PrivacyThresholds::new(f, c).unwrap();
        assert_eq!(select_by_constraint(&t, &PrivacyThresholds::unbounded()).as_deref(), Some("raw"));
        assert_eq!(select_by_constraint(&t, &th(0.25, 65.0)).as_deref(), Some("blur"));
        assert_eq!(select_by_constraint(&t, &th(0.0, 0.0)), None);
    }

    #[test]
    fn single_record_selection() {
        let t = table(vec![rec("only", 42.0, 0.3, 33.0)]);
        assert_eq!(select_by_distance(&t, Scope::All), "only");
        let r = SelectionReport::build(&t, &SelectionWeights::equal(), Scope::All, &PrivacyThresholds::unbounded());
        assert_eq!(r.rows[0].distance, 0.0);
        assert_eq!(r.rows[0].rank_combined, 1.0);
    }

    #[test]
    fn ties_break_on_smallest_id() {
        let t = table(vec![rec("zeta", 50.0, 0.5, 50.0), rec("alpha", 50.0, 0.5, 50.0)]);
        assert_eq!(select_by_distance(&t, Scope::All), "alpha");
        assert_eq!(select_by_weight(&t, &SelectionWeights::equal(), Scope::All), "alpha");
        assert_eq!(select_by_constraint(&t, &PrivacyThresholds::unbounded()).as_deref(), Some("alpha"));
        let ranks = combined_rank(&t, &SelectionWeights::equal(), Scope::All);
        assert_eq!(ranks["alpha"], 1.5);
        assert_eq!(ranks["zeta"], 1.5);
    }

    #[test]
    fn fractional_rank_rules() {
        assert_eq!(fractional_ranks(&[3.0, 1.0, 2.0], true), vec![3.0, 1.0, 2.0]);
        assert_eq!(fractional_ranks(&[3.0, 1.0, 2.0], false), vec![1.0, 3.0, 2.0]);
        assert_eq!(fractional_ranks(&[1.0, 1.0, 5.0, 1.0], true), vec![2.0, 2.0, 4.0, 2.0]);
    }

    #[test]
    fn combined_rank_utility_weighted() {
        let t = MetricTable::table1();
        let w = SelectionWeights::new(0.5, 0.25, 0.25).unwrap();
        let r = SelectionReport::build(&t, &w, Scope::All, &PrivacyThresholds::unbounded());
        let top = r.row("ts5_blur").unwrap();
        assert_eq!((top.rank_d, top.rank_w, top.rank_combined), (1.0, 1.0, 1.0));
        assert!(r.rows.iter().filter(|x| x.rank_combined == 1.0).count() == 1);
        assert_eq!(r.by_combined, "ts5_blur");
    }

    #[test]
    fn csv_parsing() {
        let t = MetricTable::from_csv_str("setting,auc,cmap,f1\nx, 70.0, 60.5, 0.2\n").unwrap();
        assert_eq!(t.records()[0], rec("x", 70.0, 0.2, 60.5));
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,f1,cmap\nx,70,0.2,60\n"),
            Err(SelectError::BadHeader(_))
        ));
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,cmap,f1\nx,70,60,0.2\nx,71,60,0.2\n"),
            Err(SelectError::DuplicateId(_))
        ));
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,cmap,f1\nx,170,60,0.2\n"),
            Err(SelectError::OutOfRange { field: "auc", .. })
        ));
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,cmap,f1\nx,70,60,1.5\n"),
            Err(SelectError::OutOfRange { field: "f1", .. })
        ));
        assert!(MetricTable::from_csv_str("setting,auc,cmap,f1\nx,seventy,60,0.2\n").is_err());
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,cmap,f1\n"),
            Err(SelectError::EmptyTable)
        ));
        assert!(matches!(
            MetricTable::from_csv_str("setting,auc,cmap,f1\n ,70,60,0.2\n"),
            Err(SelectError::EmptyId)
        ));
    }

    #[test]
    fn scope_parsing() {
        assert_eq!("all".parse::<Scope>().unwrap(), Scope::All);
        assert_eq!("pareto".parse::<Scope>().unwrap(), Scope::ParetoOnly);
        assert!("some".parse::<Scope>().is_err());
    }
}
