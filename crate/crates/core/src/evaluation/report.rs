use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::corpus::Language;
use crate::error::{Error, Result};

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }

    /// `mean(std)` with `decimals` digits on both.
    pub fn format(&self, decimals: usize) -> String {
        format!("{:.*}({:.*})", decimals, self.mean, decimals, self.std)
    }
}

impl FromStr for MeanStd {
    type Err = Error;

    /// Accepts `72.7(1.4)` and `64.8 (1.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected `mean(std)`, got {s:?}"));
        let (mean, rest) = s.split_once('(').ok_or_else(bad)?;
        let std = rest.trim().strip_suffix(')').ok_or_else(bad)?;
        Ok(MeanStd {
            mean: mean.trim().parse().map_err(|_| bad())?,
            std: std.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub per_seed: Vec<Metrics>,
    /// F1 across seeds, as a fraction.
    pub f1: MeanStd,
}

impl CellSummary {
    pub fn new(per_seed: Vec<Metrics>) -> Option<Self> {
        let f1s: Vec<f64> = per_seed.iter().map(|m| m.f1).collect();
        let f1 = MeanStd::from_values(&f1s)?;
        Some(CellSummary { per_seed, f1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub entities: String,
    pub cells: BTreeMap<Language, CellSummary>,
}

impl ReportRow {
    fn mean_over(&self, languages: &[Language]) -> Option<f64> {
        let values: Option<Vec<f64>> = languages
            .iter()
            .map(|l| self.cells.get(l).map(|c| c.f1.mean))
            .collect();
        values.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Unweighted mean F1 over the seven non-English languages.
    pub fn avg1(&self) -> Option<f64> {
        self.mean_over(&Language::NON_ENGLISH)
    }

    /// Unweighted mean F1 over all eight languages.
    pub fn avg2(&self) -> Option<f64> {
        self.mean_over(&Language::ALL)
    }
}

/// One file per seed for downstream aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub model: String,
    pub entities: String,
    pub metrics: BTreeMap<Language, Metrics>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<SeedRecord>,
}

/// Run `run(seed)` for every seed (in parallel on the current rayon pool)
/// and aggregate per-language F1 into a single report row.
pub fn multi_run<F>(model: &str, entities: &str, seeds: &[u64], run: F) -> Result<EvalReport>
where
    F: Fn(u64) -> Result<BTreeMap<Language, Metrics>> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "multi-run needs at least one seed".into(),
        ));
    }
    let results = seeds
        .par_iter()
        .map(|&seed| run(seed).map(|m| (seed, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(model, entities, results))
}

pub(crate) fn aggregate(
    model: &str,
    entities: &str,
    results: Vec<(u64, BTreeMap<Language, Metrics>)>,
) -> EvalReport {
    let mut by_language: BTreeMap<Language, Vec<Metrics>> = BTreeMap::new();
    for (_, metrics) in &results {
        for (&lang, &m) in metrics {
            by_language.entry(lang).or_default().push(m);
        }
    }
    let cells = by_language
        .into_iter()
        .filter_map(|(l, ms)| CellSummary::new(ms).map(|c| (l, c)))
        .collect();
    let runs = results
        .into_iter()
        .map(|(seed, metrics)| SeedRecord {
            seed,
            model: model.to_owned(),
            entities: entities.to_owned(),
            metrics,
        })
        .collect();
    EvalReport {
        rows: vec![ReportRow {
            model: model.to_owned(),
            entities: entities.to_owned(),
            cells,
        }],
        runs,
    }
}

impl EvalReport {
    pub fn merge(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.runs.extend(other.runs);
    }

    /// Rebuild a report from per-seed records, one row per (model, entities).
    pub fn from_seed_records(records: Vec<SeedRecord>) -> Self {
        type Runs = Vec<(u64, BTreeMap<Language, Metrics>)>;
        let mut groups: Vec<((String, String), Runs)> = Vec::new();
        for r in records {
            let key = (r.model, r.entities);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, runs)) => runs.push((r.seed, r.metrics)),
                None => groups.push((key, vec![(r.seed, r.metrics)])),
            }
        }
        let mut report = EvalReport::default();
        for ((model, entities), runs) in groups {
            report.merge(aggregate(&model, &entities, runs));
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

const MISSING: &str = "–";

fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn render_cell(cell: Option<&CellSummary>) -> String {
    match cell {
        None => MISSING.to_owned(),
        Some(c) if c.per_seed.len() > 1 => MeanStd {
            mean: 100.0 * c.f1.mean,
            std: 100.0 * c.f1.std,
        }
        .format(2),
        Some(c) => percent(c.f1.mean),
    }
}

/// Table with columns `ZH JA ES FR IT DE PT AVG1 EN AVG2`, F1 in percent.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut columns: Vec<String> = vec!["Model".into(), "Entities".into()];
    columns.extend(Language::NON_ENGLISH.iter().map(|l| l.to_string()));
    columns.extend(["AVG1".into(), "EN".into(), "AVG2".into()]);

    let mut body: Vec<Vec<String>> = Vec::new();
    for row in &report.rows {
        for lang in Language::ALL {
            if !row.cells.contains_key(&lang) {
                log::warn!(
                    "report row {:?}: no {lang} result, rendering {MISSING}",
                    row.model
                );
            }
        }
        let mut cells = vec![row.model.clone(), row.entities.clone()];
        cells.extend(
            Language::NON_ENGLISH
                .iter()
                .map(|l| render_cell(row.cells.get(l))),
        );
        let avg = |v: Option<f64>| v.map(percent).unwrap_or_else(|| MISSING.to_owned());
        cells.push(avg(row.avg1()));
        cells.push(render_cell(row.cells.get(&Language::En)));
        cells.push(avg(row.avg2()));
        body.push(cells);
    }

    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            let _ = writeln!(out, "{}", columns.join("\t"));
            for cells in body {
                let _ = writeln!(out, "{}", cells.join("\t"));
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", columns.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(columns.len()));
            for cells in body {
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn metrics_with_f1(tp: usize, fp: usize, fn_: usize) -> Metrics {
        Metrics::from_counts(tp, fp, fn_)
    }

    #[test]
    fn single_seed_has_zero_std() {
        let s = MeanStd::from_values(&[0.7]).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.7);
    }

    #[test]
    fn identical_values() {
        let s = MeanStd::from_values(&[0.3; 5]).unwrap();
        assert_relative_eq!(s.mean, 0.3, epsilon = 1e-15);
        assert_relative_eq!(s.std, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn population_std() {
        // deviations -2, 2, 0, -1, 1 → variance 2
        let s = MeanStd::from_values(&[70.7, 74.7, 72.7, 71.7, 73.7]).unwrap();
        assert_relative_eq!(s.mean, 72.7, epsilon = 1e-12);
        assert_relative_eq!(s.std, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(s.format(1), "72.7(1.4)");
    }

    #[test]
    fn parse_published_cells() {
        let s: MeanStd = "72.7(1.4)".parse().unwrap();
        assert_eq!((s.mean, s.std), (72.7, 1.4));
        assert_eq!(s.format(1), "72.7(1.4)");
        let s: MeanStd = "64.8 (1.5)".parse().unwrap();
        assert_eq!(s.format(1), "64.8(1.5)");
        assert!("72.7".parse::<MeanStd>().is_err());
    }

    #[test]
    fn all_zero_row() {
        let metrics: BTreeMap<Language, Metrics> = Language::ALL
            .iter()
            .map(|&l| (l, Metrics::default()))
            .collect();
        let report = aggregate("ECN", "HQA", vec![(0, metrics)]);
        let text = render_report(&report, ReportFormat::Tsv);
        let row = text.lines().nth(1).unwrap();
        assert_eq!(
            row,
            "ECN\tHQA\t0.00\t0.00\t0.00\t0.00\t0.00\t0.00\t0.00\t0.00\t0.00\t0.00"
        );
    }

    #[test]
    fn single_language_dashes_the_rest() {
        let metrics = [(Language::Fr, metrics_with_f1(1, 0, 0))].into();
        let report = aggregate("ECN", "HQA", vec![(0, metrics)]);
        let text = render_report(&report, ReportFormat::Tsv);
        let cells: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
        assert_eq!(cells[5], "100.00");
        assert_eq!(cells.iter().filter(|c| **c == "–").count(), 9);
    }

    #[test]
    fn averages_recompute_from_cells() {
        let counts = [
            (3, 1, 0),
            (2, 2, 1),
            (5, 0, 5),
            (1, 1, 1),
            (4, 0, 1),
            (2, 3, 2),
            (6, 1, 1),
            (7, 2, 2),
        ];
        let metrics: BTreeMap<Language, Metrics> = Language::ALL
            .iter()
            .zip(counts)
            .map(|(&l, (tp, fp, fn_))| (l, metrics_with_f1(tp, fp, fn_)))
            .collect();
        let report = aggregate("ECN", "HQA", vec![(0, metrics.clone())]);
        let text = render_report(&report, ReportFormat::Tsv);
        let cells: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split('\t')
            .skip(2)
            .map(|c| c.parse().unwrap())
            .collect();
        let avg1 = Language::NON_ENGLISH
            .iter()
            .map(|l| metrics[l].f1)
            .sum::<f64>()
            / 7.0;
        let avg2 = Language::ALL.iter().map(|l| metrics[l].f1).sum::<f64>() / 8.0;
        assert_eq!(format!("{:.2}", cells[7]), percent(avg1));
        assert_eq!(format!("{:.2}", cells[9]), percent(avg2));
        let printed_mean = cells[..7].iter().sum::<f64>() / 7.0;
        assert!(
            (printed_mean - cells[7]).abs() <= 0.01,
            "{printed_mean} vs {}",
            cells[7]
        );
    }

    #[test]
    fn multi_seed_cells_show_std() {
        let runs = vec![
            (1, [(Language::Zh, metrics_with_f1(1, 0, 0))].into()),
            (2, [(Language::Zh, metrics_with_f1(1, 1, 1))].into()),
        ];
        let report = aggregate("ECN", "HQA", runs);
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| 75.00(25.00) |"), "{md}");
        assert_eq!(report.runs.len(), 2);
    }

    #[test]
    fn multi_run_orders_by_seed() {
        let report = multi_run("m", "HQA", &[3, 1, 2], |seed| {
            Ok([(Language::De, Metrics::from_counts(seed as usize, 1, 0))].into())
        })
        .unwrap();
        let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![3, 1, 2]);
        assert!(multi_run("m", "HQA", &[], |_| Ok(BTreeMap::new())).is_err());
    }

    #[test]
    fn seed_records_regroup() {
        let report = aggregate(
            "m",
            "HQA",
            vec![(1, [(Language::It, Metrics::from_counts(1, 0, 1))].into())],
        );
        let back = EvalReport::from_seed_records(report.runs.clone());
        assert_eq!(back, report);
    }
}
