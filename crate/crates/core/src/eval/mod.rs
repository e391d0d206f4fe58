//! Accuracy tables per talking condition and gender, Student's t comparisons
//! between classifiers, and report rendering.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, TalkingCondition, UtteranceRecord};
use crate::error::{Error, Result};
use crate::speaker::IdentificationResult;

/// One-tailed critical value at the 0.05 level (normal approximation).
pub const DEFAULT_CRITICAL_VALUE: f64 = 1.645;

/// Accuracy of one talking condition. A gender with no trials has no cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub male_pct: Option<f64>,
    pub female_pct: Option<f64>,
    /// Mean of the present gender cells.
    pub average_pct: Option<f64>,
    pub male_trials: usize,
    pub female_trials: usize,
}

impl ConditionRow {
    /// Row from already computed percentages.
    pub fn from_pcts(male_pct: Option<f64>, female_pct: Option<f64>) -> Self {
        let present: Vec<f64> = [male_pct, female_pct].into_iter().flatten().collect();
        let average_pct = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Self {
            male_pct,
            female_pct,
            average_pct,
            male_trials: 0,
            female_trials: 0,
        }
    }

    fn from_counts(male: (usize, usize), female: (usize, usize)) -> Self {
        let pct = |(correct, total): (usize, usize)| (total > 0).then(|| 100.0 * correct as f64 / total as f64);
        Self {
            male_trials: male.1,
            female_trials: female.1,
            ..Self::from_pcts(pct(male), pct(female))
        }
    }

    pub fn trials(&self) -> usize {
        self.male_trials + self.female_trials
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    /// Name of the classifier the table describes.
    pub label: String,
    pub rows: BTreeMap<TalkingCondition, ConditionRow>,
    /// Mean of the condition averages.
    pub overall_average_pct: Option<f64>,
    pub n_trials: BTreeMap<TalkingCondition, usize>,
}

impl AccuracyTable {
    pub fn from_rows(label: impl Into<String>, rows: BTreeMap<TalkingCondition, ConditionRow>) -> Self {
        let averages: Vec<f64> = rows.values().filter_map(|r| r.average_pct).collect();
        let overall_average_pct =
            (!averages.is_empty()).then(|| averages.iter().sum::<f64>() / averages.len() as f64);
        let n_trials = rows.iter().map(|(&c, r)| (c, r.trials())).collect();
        Self {
            label: label.into(),
            rows,
            overall_average_pct,
            n_trials,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn total_trials(&self) -> usize {
        self.n_trials.values().sum()
    }

    /// Average accuracy over the given conditions (each weighted equally).
    pub fn mean_over(&self, conditions: &[TalkingCondition]) -> Option<f64> {
        let v: Option<Vec<f64>> = conditions
            .iter()
            .map(|c| self.rows.get(c).and_then(|r| r.average_pct))
            .collect();
        v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Percentage of correct identifications per condition and gender.
pub fn accuracy_table<F>(results: &[(UtteranceRecord, IdentificationResult<F>)]) -> Result<AccuracyTable> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no identification results"));
    }
    let mut counts: BTreeMap<(TalkingCondition, Gender), (usize, usize)> = BTreeMap::new();
    for (rec, res) in results {
        let c = counts.entry((rec.condition, rec.gender)).or_default();
        c.0 += usize::from(res.predicted_speaker == rec.speaker_id);
        c.1 += 1;
    }
    let conditions: Vec<TalkingCondition> = {
        let mut v: Vec<_> = counts.keys().map(|&(c, _)| c).collect();
        v.dedup();
        v
    };
    let rows = conditions
        .into_iter()
        .map(|c| {
            let get = |g| counts.get(&(c, g)).copied().unwrap_or((0, 0));
            (c, ConditionRow::from_counts(get(Gender::Male), get(Gender::Female)))
        })
        .collect();
    Ok(AccuracyTable::from_rows("", rows))
}

/// `sqrt((sd1^2 + sd2^2) / 2)`.
pub fn pooled_sd(sd1: f64, sd2: f64) -> f64 {
    ((sd1 * sd1 + sd2 * sd2) / 2.0).sqrt()
}

/// Which accuracies form the samples of a classifier comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonScope {
    /// The average of each of the six conditions.
    #[serde(alias = "all_conditions")]
    All,
    /// The average of each stressed condition.
    #[serde(alias = "stressful_only")]
    Stressful,
    /// Every (condition, gender) cell.
    #[serde(alias = "per_gender_cells")]
    PerGender,
}

impl ComparisonScope {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Stressful => "stressful",
            Self::PerGender => "per_gender",
        }
    }
}

impl fmt::Display for ComparisonScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComparisonScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" | "all_conditions" => Ok(Self::All),
            "stressful" | "stressful_only" => Ok(Self::Stressful),
            "per_gender" | "per_gender_cells" => Ok(Self::PerGender),
            _ => Err(format!("unknown scope `{s}` (expected all, stressful or per_gender)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestReport {
    /// What was compared, e.g. `hmm3 vs hmm1`.
    pub label: String,
    pub scope: Option<ComparisonScope>,
    pub sample1: Vec<f64>,
    pub sample2: Vec<f64>,
    pub mean1: f64,
    pub mean2: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub sd_pooled: f64,
    pub t_value: f64,
    pub critical_value: f64,
    pub significant: bool,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Student's t with the pooled standard deviation of two equal-size samples
/// and the default critical value.
pub fn t_statistic(sample1: &[f64], sample2: &[f64]) -> Result<TTestReport> {
    t_statistic_with(sample1, sample2, DEFAULT_CRITICAL_VALUE)
}

pub fn t_statistic_with(sample1: &[f64], sample2: &[f64], critical_value: f64) -> Result<TTestReport> {
    if sample1.len() != sample2.len() {
        return Err(Error::Statistics(format!(
            "samples differ in size ({} vs {})",
            sample1.len(),
            sample2.len()
        )));
    }
    if sample1.len() < 2 {
        return Err(Error::Statistics("samples need at least two values".into()));
    }
    let (mean1, sd1) = mean_sd(sample1);
    let (mean2, sd2) = mean_sd(sample2);
    let sd_pooled = pooled_sd(sd1, sd2);
    let diff = mean1 - mean2;
    let t_value = if sd_pooled > 0.0 {
        diff / sd_pooled
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(TTestReport {
        label: String::new(),
        scope: None,
        sample1: sample1.to_vec(),
        sample2: sample2.to_vec(),
        mean1,
        mean2,
        sd1,
        sd2,
        sd_pooled,
        t_value,
        critical_value,
        significant: t_value > critical_value,
    })
}

fn scope_sample(table: &AccuracyTable, scope: ComparisonScope) -> Result<Vec<f64>> {
    let missing = |c: TalkingCondition| Error::Statistics(format!("`{}` has no accuracy for {c}", table.label));
    let mut out = Vec::new();
    for (&c, row) in &table.rows {
        match scope {
            ComparisonScope::All => out.push(row.average_pct.ok_or_else(|| missing(c))?),
            ComparisonScope::Stressful if c.is_stressed() => out.push(row.average_pct.ok_or_else(|| missing(c))?),
            ComparisonScope::Stressful => {}
            ComparisonScope::PerGender => {
                out.push(row.male_pct.ok_or_else(|| missing(c))?);
                out.push(row.female_pct.ok_or_else(|| missing(c))?);
            }
        }
    }
    Ok(out)
}

/// t test of table `a` against table `b` on the accuracies selected by
/// `scope`.
pub fn compare_classifiers(
    a: &AccuracyTable,
    b: &AccuracyTable,
    scope: ComparisonScope,
    critical_value: f64,
) -> Result<TTestReport> {
    if !a.rows.keys().eq(b.rows.keys()) {
        return Err(Error::Statistics(format!(
            "`{}` and `{}` cover different talking conditions",
            a.label, b.label
        )));
    }
    let mut report = t_statistic_with(&scope_sample(a, scope)?, &scope_sample(b, scope)?, critical_value)?;
    report.label = format!("{} vs {}", a.label, b.label);
    report.scope = Some(scope);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

pub const ACCURACY_CSV_HEADER: &str = "condition,male_pct,female_pct,average_pct,n_trials";
pub const TTEST_CSV_HEADER: &str = "comparison,scope,mean1,mean2,sd1,sd2,sd_pooled,t,critical,significant";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.1}"))
}

fn ordered_rows(table: &AccuracyTable) -> impl Iterator<Item = (TalkingCondition, &ConditionRow)> {
    TalkingCondition::ALL
        .into_iter()
        .filter_map(|c| table.rows.get(&c).map(|r| (c, r)))
}

pub fn render_accuracy_csv(table: &AccuracyTable) -> String {
    let mut out = format!("{ACCURACY_CSV_HEADER}\n");
    for (c, r) in ordered_rows(table) {
        let _ = writeln!(
            out,
            "{c},{},{},{},{}",
            pct(r.male_pct),
            pct(r.female_pct),
            pct(r.average_pct),
            r.trials()
        );
    }
    if !table.rows.is_empty() {
        let _ = writeln!(out, "average,,,{},{}", pct(table.overall_average_pct), table.total_trials());
    }
    out
}

pub fn render_ttest_csv(tests: &[TTestReport]) -> String {
    let mut out = format!("{TTEST_CSV_HEADER}\n");
    for t in tests {
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
            t.label,
            t.scope.map_or("", ComparisonScope::as_str),
            t.mean1,
            t.mean2,
            t.sd1,
            t.sd2,
            t.sd_pooled,
            t.t_value,
            t.critical_value,
            t.significant
        );
    }
    out
}

fn render_markdown(tables: &[AccuracyTable], tests: &[TTestReport]) -> String {
    let mut out = String::from("# Speaker identification report\n");
    for table in tables {
        let title = if table.label.is_empty() { "Accuracy" } else { &table.label };
        let _ = write!(
            out,
            "\n## {title}\n\n| Condition | Males (%) | Females (%) | Average (%) | Trials |\n|---|---:|---:|---:|---:|\n"
        );
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.1}"));
        for (c, r) in ordered_rows(table) {
            let _ = writeln!(
                out,
                "| {c} | {} | {} | {} | {} |",
                cell(r.male_pct),
                cell(r.female_pct),
                cell(r.average_pct),
                r.trials()
            );
        }
        let _ = writeln!(
            out,
            "| **average** | | | {} | {} |",
            cell(table.overall_average_pct),
            table.total_trials()
        );
    }
    if !tests.is_empty() {
        out.push_str(
            "\n## Significance tests\n\n| Comparison | Scope | Mean 1 | Mean 2 | SD 1 | SD 2 | SD pooled | t | Critical | Significant |\n|---|---|---:|---:|---:|---:|---:|---:|---:|---|\n",
        );
        for t in tests {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {} |",
                t.label,
                t.scope.map_or("", ComparisonScope::as_str),
                t.mean1,
                t.mean2,
                t.sd1,
                t.sd2,
                t.sd_pooled,
                t.t_value,
                t.critical_value,
                if t.significant { "yes" } else { "no" }
            );
        }
    }
    out
}

/// Renders accuracy tables and t tests. CSV output is one block per table
/// followed by the t-test block, separated by blank lines.
pub fn render_report(tables: &[AccuracyTable], tests: &[TTestReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(tables, tests),
        ReportFormat::Csv => {
            let mut blocks: Vec<String> = tables.iter().map(render_accuracy_csv).collect();
            if blocks.is_empty() {
                blocks.push(format!("{ACCURACY_CSV_HEADER}\n"));
            }
            blocks.push(render_ttest_csv(tests));
            blocks.join("\n")
        }
    }
}
