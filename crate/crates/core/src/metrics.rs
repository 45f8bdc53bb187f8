//! Inter-rater statistics over binary approve/decline annotations.
//!
//! All pairwise figures are computed over the items both raters annotated;
//! missing cells are never imputed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Declined,
}

impl Verdict {
    pub fn parse(s: &str) -> Option<Verdict> {
        match s.trim().to_ascii_lowercase().as_str() {
            "approved" => Some(Verdict::Approved),
            "declined" => Some(Verdict::Declined),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Approved => "approved",
            Verdict::Declined => "declined",
        }
    }

    fn flipped(self) -> Verdict {
        match self {
            Verdict::Approved => Verdict::Declined,
            Verdict::Declined => Verdict::Approved,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("annotation matrix needs at least one item")]
    NoItems,
    #[error("annotation matrix needs at least two raters, got {0}")]
    TooFewRaters(usize),
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Items × raters grid of decisions; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    items: Vec<String>,
    raters: Vec<String>,
    cells: Vec<Vec<Option<Verdict>>>,
}

impl AnnotationMatrix {
    pub fn new(
        items: Vec<String>,
        raters: Vec<String>,
        cells: Vec<Vec<Option<Verdict>>>,
    ) -> Result<Self, MetricsError> {
        if items.is_empty() {
            return Err(MetricsError::NoItems);
        }
        if raters.len() < 2 {
            return Err(MetricsError::TooFewRaters(raters.len()));
        }
        assert_eq!(cells.len(), items.len(), "one row per item");
        assert!(
            cells.iter().all(|row| row.len() == raters.len()),
            "one column per rater"
        );
        Ok(AnnotationMatrix {
            items,
            raters,
            cells,
        })
    }

    /// Builds a matrix from `(item, rater, verdict)` triples. Items and raters
    /// keep their first-appearance order; a repeated `(item, rater)` pair keeps
    /// the last verdict.
    pub fn from_triples<I, S1, S2>(triples: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (S1, S2, Verdict)>,
        S1: Into<String>,
        S2: Into<String>,
    {
        let mut items: Vec<String> = Vec::new();
        let mut raters: Vec<String> = Vec::new();
        let mut item_idx: HashMap<String, usize> = HashMap::new();
        let mut rater_idx: HashMap<String, usize> = HashMap::new();
        let mut entries = Vec::new();
        for (item, rater, verdict) in triples {
            let item = item.into();
            let rater = rater.into();
            let i = *item_idx.entry(item.clone()).or_insert_with(|| {
                items.push(item);
                items.len() - 1
            });
            let r = *rater_idx.entry(rater.clone()).or_insert_with(|| {
                raters.push(rater);
                raters.len() - 1
            });
            entries.push((i, r, verdict));
        }
        let mut cells = vec![vec![None; raters.len()]; items.len()];
        for (i, r, v) in entries {
            cells[i][r] = Some(v);
        }
        Self::new(items, raters, cells)
    }

    /// Reads the `item_id,rater_id,decision` CSV layout.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, MetricsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (Some(ci), Some(cr), Some(cd)) = (col("item_id"), col("rater_id"), col("decision"))
        else {
            return Err(MetricsError::BadRow {
                line: 1,
                reason: "header must contain item_id, rater_id, decision".into(),
            });
        };
        let mut triples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or("").to_string();
            let decision = field(cd);
            let verdict = Verdict::parse(&decision).ok_or_else(|| MetricsError::BadRow {
                line,
                reason: format!("decision must be approved or declined, got {decision:?}"),
            })?;
            let (item, rater) = (field(ci), field(cr));
            if item.is_empty() || rater.is_empty() {
                return Err(MetricsError::BadRow {
                    line,
                    reason: "item_id and rater_id must be nonempty".into(),
                });
            }
            triples.push((item, rater, verdict));
        }
        Self::from_triples(triples)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn cell(&self, item: usize, rater: usize) -> Option<Verdict> {
        self.cells[item][rater]
    }

    fn rater_index(&self, rater: &str) -> Result<usize, MetricsError> {
        self.raters
            .iter()
            .position(|r| r == rater)
            .ok_or_else(|| MetricsError::UnknownRater(rater.to_string()))
    }

    fn column(&self, rater: usize) -> impl Iterator<Item = Option<Verdict>> + '_ {
        self.cells.iter().map(move |row| row[rater])
    }

    /// Decisions of both raters over their co-annotated items.
    fn co_annotated(&self, r1: usize, r2: usize) -> Vec<(Verdict, Verdict)> {
        self.cells
            .iter()
            .filter_map(|row| Some((row[r1]?, row[r2]?)))
            .collect()
    }

    /// The same matrix with approved and declined swapped everywhere.
    pub fn with_labels_swapped(&self) -> AnnotationMatrix {
        let mut swapped = self.clone();
        for row in &mut swapped.cells {
            for cell in row.iter_mut() {
                *cell = cell.map(Verdict::flipped);
            }
        }
        swapped
    }

    pub fn approval_counts(&self, rater: &str) -> Result<(usize, usize), MetricsError> {
        let r = self.rater_index(rater)?;
        let approved = self
            .column(r)
            .filter(|c| *c == Some(Verdict::Approved))
            .count();
        let declined = self
            .column(r)
            .filter(|c| *c == Some(Verdict::Declined))
            .count();
        Ok((approved, declined))
    }

    /// approved / (approved + declined); `None` when the rater annotated nothing.
    pub fn approval_rate(&self, rater: &str) -> Result<Option<f64>, MetricsError> {
        let (approved, declined) = self.approval_counts(rater)?;
        let total = approved + declined;
        Ok((total > 0).then(|| approved as f64 / total as f64))
    }

    /// Items with at least `threshold_m` approvals.
    pub fn consensus(&self, threshold_m: usize) -> BTreeSet<String> {
        self.items
            .iter()
            .zip(&self.cells)
            .filter(|(_, row)| {
                row.iter().filter(|c| **c == Some(Verdict::Approved)).count() >= threshold_m
            })
            .map(|(item, _)| item.clone())
            .collect()
    }

    /// Fraction of co-annotated items with equal decisions.
    pub fn pairwise_agreement(&self, r1: &str, r2: &str) -> Result<Option<f64>, MetricsError> {
        let (a, b) = (self.rater_index(r1)?, self.rater_index(r2)?);
        let pairs = self.co_annotated(a, b);
        if pairs.is_empty() {
            return Ok(None);
        }
        let equal = pairs.iter().filter(|(x, y)| x == y).count();
        Ok(Some(equal as f64 / pairs.len() as f64))
    }

    /// Two-rater Cohen's kappa. `None` when undefined: no co-annotated items,
    /// or chance agreement of 1 (both raters constant on the same category).
    pub fn cohen_kappa(&self, r1: &str, r2: &str) -> Result<Option<f64>, MetricsError> {
        let (a, b) = (self.rater_index(r1)?, self.rater_index(r2)?);
        Ok(kappa_of_pairs(&self.co_annotated(a, b)))
    }

    /// Unweighted mean of the defined pairwise kappas over all rater pairs.
    pub fn mean_pairwise_kappa(&self) -> Option<f64> {
        let n = self.raters.len();
        let kappas: Vec<f64> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| kappa_of_pairs(&self.co_annotated(a, b)))
            .collect();
        (!kappas.is_empty()).then(|| kappas.iter().sum::<f64>() / kappas.len() as f64)
    }

    /// Multi-rater binary Gwet's AC1.
    ///
    /// Observed agreement is the mean, over items rated by at least two raters,
    /// of agreeing rater pairs divided by possible rater pairs. Chance
    /// agreement is `2π(1−π)` with π the share of approved cells.
    pub fn gwet_ac1(&self) -> Option<f64> {
        let mut po_sum = 0.0;
        let mut rated_items = 0usize;
        let mut approved = 0usize;
        let mut non_missing = 0usize;
        for row in &self.cells {
            let yes = row.iter().filter(|c| **c == Some(Verdict::Approved)).count();
            let no = row.iter().filter(|c| **c == Some(Verdict::Declined)).count();
            approved += yes;
            non_missing += yes + no;
            let r = yes + no;
            if r < 2 {
                continue;
            }
            let possible = (r * (r - 1) / 2) as f64;
            let agreeing = (yes * yes.saturating_sub(1) / 2 + no * no.saturating_sub(1) / 2) as f64;
            po_sum += agreeing / possible;
            rated_items += 1;
        }
        if rated_items == 0 {
            return None;
        }
        let po = po_sum / rated_items as f64;
        let pi = approved as f64 / non_missing as f64;
        let pe = 2.0 * pi * (1.0 - pi);
        // pe ≤ 0.5, so the denominator never vanishes; pi ∈ {0,1} gives ac1 = po
        Some((po - pe) / (1.0 - pe))
    }

    /// The rater's row of the agreement matrix averaged, including the
    /// self-agreement of 1.0.
    pub fn per_rater_average(&self, rater: &str) -> Result<Option<f64>, MetricsError> {
        let r = self.rater_index(rater)?;
        let row = self.agreement_row(r);
        if row.iter().any(Option::is_none) {
            return Ok(None);
        }
        Ok(Some(row.iter().flatten().sum::<f64>() / row.len() as f64))
    }

    fn agreement_row(&self, r: usize) -> Vec<Option<f64>> {
        (0..self.raters.len())
            .map(|other| {
                if other == r {
                    Some(1.0)
                } else {
                    agreement_of_pairs(&self.co_annotated(r, other))
                }
            })
            .collect()
    }

    pub fn report(&self, threshold_m: usize) -> AgreementReport {
        let mut per_rater_approval = BTreeMap::new();
        let mut per_rater_counts = BTreeMap::new();
        for rater in &self.raters {
            per_rater_approval.insert(rater.clone(), self.approval_rate(rater).unwrap());
            per_rater_counts.insert(rater.clone(), self.approval_counts(rater).unwrap());
        }
        let pairwise_agreement: Vec<Vec<Option<f64>>> =
            (0..self.raters.len()).map(|r| self.agreement_row(r)).collect();
        let mut per_rater_average = BTreeMap::new();
        for rater in &self.raters {
            per_rater_average.insert(rater.clone(), self.per_rater_average(rater).unwrap());
        }
        let averages: Option<Vec<f64>> = self
            .raters
            .iter()
            .map(|r| per_rater_average[r])
            .collect();
        let overall_average =
            averages.map(|a| a.iter().sum::<f64>() / a.len() as f64);
        let accepted = self.consensus(threshold_m);
        let consensus_rate = accepted.len() as f64 / self.items.len() as f64;
        AgreementReport {
            raters: self.raters.clone(),
            item_count: self.items.len(),
            per_rater_counts: per_rater_counts
                .into_iter()
                .map(|(k, (a, d))| (k, RaterCounts { approved: a, declined: d }))
                .collect(),
            per_rater_approval,
            pairwise_agreement,
            per_rater_average,
            overall_average,
            cohen_kappa: self.mean_pairwise_kappa(),
            gwet_ac1: self.gwet_ac1(),
            threshold_m,
            consensus_accepted: accepted,
            consensus_rate,
        }
    }
}

fn agreement_of_pairs(pairs: &[(Verdict, Verdict)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().filter(|(a, b)| a == b).count() as f64 / pairs.len() as f64)
}

fn kappa_of_pairs(pairs: &[(Verdict, Verdict)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let po = agreement_of_pairs(pairs)?;
    let p1 = pairs.iter().filter(|(a, _)| *a == Verdict::Approved).count() as f64 / n;
    let p2 = pairs.iter().filter(|(_, b)| *b == Verdict::Approved).count() as f64 / n;
    let pe = p1 * p2 + (1.0 - p1) * (1.0 - p2);
    if (1.0 - pe).abs() < 1e-15 {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterCounts {
    pub approved: usize,
    pub declined: usize,
}

/// Everything the agreement tables show, for one annotation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub raters: Vec<String>,
    pub item_count: usize,
    pub per_rater_counts: BTreeMap<String, RaterCounts>,
    pub per_rater_approval: BTreeMap<String, Option<f64>>,
    /// Row-major, in `raters` order, unit diagonal.
    pub pairwise_agreement: Vec<Vec<Option<f64>>>,
    pub per_rater_average: BTreeMap<String, Option<f64>>,
    pub overall_average: Option<f64>,
    /// Mean pairwise Cohen's kappa.
    pub cohen_kappa: Option<f64>,
    pub gwet_ac1: Option<f64>,
    pub threshold_m: usize,
    pub consensus_accepted: BTreeSet<String>,
    pub consensus_rate: f64,
}

/// Formats a fraction as a percentage with two decimals, rounding half up.
pub fn format_percent(fraction: f64) -> String {
    let hundredths = (fraction * 10_000.0 + 0.5 + 1e-9).floor() as i64;
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

fn opt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), format_percent)
}

fn opt_fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl AgreementReport {
    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let width = self
            .raters
            .iter()
            .map(|r| r.len())
            .max()
            .unwrap_or(0)
            .max(9);
        let mut out = String::new();
        let _ = writeln!(out, "Approval by rater ({} items)", self.item_count);
        let _ = write!(out, "{:<14}", "");
        for r in &self.raters {
            let _ = write!(out, " {r:>width$}");
        }
        out.push('\n');
        for (label, approved) in [("Approved", true), ("Declined", false)] {
            let _ = write!(out, "{label:<14}");
            for r in &self.raters {
                let c = self.per_rater_counts[r];
                let n = if approved { c.approved } else { c.declined };
                let _ = write!(out, " {n:>width$}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<14}", "Approval Rate");
        for r in &self.raters {
            let _ = write!(out, " {:>width$}", opt_percent(self.per_rater_approval[r]));
        }
        out.push_str("\n\nPairwise agreement\n");
        let _ = write!(out, "{:<14}", "");
        for r in &self.raters {
            let _ = write!(out, " {r:>width$}");
        }
        out.push('\n');
        for (i, r) in self.raters.iter().enumerate() {
            let _ = write!(out, "{r:<14}");
            for v in &self.pairwise_agreement[i] {
                let _ = write!(out, " {:>width$}", opt_percent(*v));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<14}", "Average");
        for r in &self.raters {
            let _ = write!(out, " {:>width$}", opt_percent(self.per_rater_average[r]));
        }
        out.push('\n');
        let _ = writeln!(out, "\nOverall average agreement: {}", opt_percent(self.overall_average));
        let _ = writeln!(out, "Cohen's kappa (mean pairwise): {}", opt_fixed(self.cohen_kappa));
        let _ = writeln!(out, "Gwet's AC1: {}", opt_fixed(self.gwet_ac1));
        let _ = writeln!(
            out,
            "Consensus (>= {} approvals): {} of {} ({})",
            self.threshold_m,
            self.consensus_accepted.len(),
            self.item_count,
            format_percent(self.consensus_rate)
        );
        out
    }

    /// JSON-lines: one line per rater, one per rater pair, one summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.raters.iter().enumerate() {
            let c = self.per_rater_counts[r];
            let line = serde_json::json!({
                "kind": "rater",
                "rater": r,
                "approved": c.approved,
                "declined": c.declined,
                "approval_rate": self.per_rater_approval[r],
                "average_agreement": self.per_rater_average[r],
                "index": i,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        for a in 0..self.raters.len() {
            for b in (a + 1)..self.raters.len() {
                let line = serde_json::json!({
                    "kind": "pair",
                    "rater_a": self.raters[a],
                    "rater_b": self.raters[b],
                    "agreement": self.pairwise_agreement[a][b],
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
        let summary = serde_json::json!({
            "kind": "summary",
            "item_count": self.item_count,
            "overall_average": self.overall_average,
            "cohen_kappa": self.cohen_kappa,
            "gwet_ac1": self.gwet_ac1,
            "threshold_m": self.threshold_m,
            "consensus_count": self.consensus_accepted.len(),
            "consensus_rate": self.consensus_rate,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::{Approved as A, Declined as D};

    fn two_raters(pairs: &[(Verdict, Verdict)]) -> AnnotationMatrix {
        let items = (0..pairs.len()).map(|i| format!("i{i}")).collect();
        let cells = pairs.iter().map(|(a, b)| vec![Some(*a), Some(*b)]).collect();
        AnnotationMatrix::new(items, vec!["r1".into(), "r2".into()], cells).unwrap()
    }

    /// 40 both-approve, 40 both-decline, 10 + 10 disagreements.
    fn table_40_40_10_10() -> AnnotationMatrix {
        let mut pairs = Vec::new();
        pairs.extend(std::iter::repeat_n((A, A), 40));
        pairs.extend(std::iter::repeat_n((D, D), 40));
        pairs.extend(std::iter::repeat_n((A, D), 10));
        pairs.extend(std::iter::repeat_n((D, A), 10));
        two_raters(&pairs)
    }

    #[test]
    fn approval_rate_counts() {
        let m = AnnotationMatrix::from_triples(
            (0..4).map(|i| (format!("i{i}"), "e1", if i == 0 { A } else { D }))
                .chain((0..4).map(|i| (format!("i{i}"), "e2", A))),
        )
        .unwrap();
        assert_eq!(m.approval_rate("e1").unwrap(), Some(0.25));
        assert_eq!(m.approval_rate("e2").unwrap(), Some(1.0));
    }

    #[test]
    fn approval_rate_published_counts() {
        let mut triples = Vec::new();
        for i in 0..198 {
            triples.push((format!("i{i}"), "E1", if i < 165 { A } else { D }));
            triples.push((format!("i{i}"), "E2", A));
        }
        let m = AnnotationMatrix::from_triples(triples).unwrap();
        let rate = m.approval_rate("E1").unwrap().unwrap();
        assert!((rate - 165.0 / 198.0).abs() < 1e-12);
        assert_eq!(format_percent(rate), "83.33%");
    }

    #[test]
    fn kappa_and_ac1_hand_table() {
        let m = table_40_40_10_10();
        // p_o = 0.8, p_e = 0.5
        assert!((m.cohen_kappa("r1", "r2").unwrap().unwrap() - 0.6).abs() < 1e-12);
        // π = 0.5, p_e = 2·0.5·0.5 = 0.5
        assert!((m.gwet_ac1().unwrap() - 0.6).abs() < 1e-12);
        assert!((m.pairwise_agreement("r1", "r2").unwrap().unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn kappa_undefined_for_constant_equal_raters() {
        let m = two_raters(&[(A, A), (A, A), (A, A)]);
        assert_eq!(m.cohen_kappa("r1", "r2").unwrap(), None);
        // π = 1 ⇒ p_e = 0 ⇒ AC1 = p_o
        assert_eq!(m.gwet_ac1(), Some(1.0));
    }

    #[test]
    fn kappa_perfect_with_both_categories() {
        let m = two_raters(&[(A, A), (D, D), (A, A)]);
        assert!((m.cohen_kappa("r1", "r2").unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complementary_raters_disagree_fully() {
        let m = two_raters(&[(A, D), (D, A)]);
        assert_eq!(m.pairwise_agreement("r1", "r2").unwrap(), Some(0.0));
    }

    #[test]
    fn consensus_three_of_four() {
        let m = AnnotationMatrix::from_triples(vec![
            ("x", "e1", A), ("x", "e2", A), ("x", "e3", A), ("x", "e4", D),
            ("y", "e1", A), ("y", "e2", A), ("y", "e3", D), ("y", "e4", D),
            ("z", "e1", A), ("z", "e2", A), ("z", "e3", A), ("z", "e4", A),
        ])
        .unwrap();
        let accepted = m.consensus(3);
        assert!(accepted.contains("x"));
        assert!(!accepted.contains("y"));
        assert!(accepted.contains("z"));
    }

    #[test]
    fn missing_cells_excluded_pairwise() {
        let m = AnnotationMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["r1".into(), "r2".into()],
            vec![
                vec![Some(A), Some(A)],
                vec![Some(D), None],
                vec![Some(D), Some(D)],
            ],
        )
        .unwrap();
        assert_eq!(m.pairwise_agreement("r1", "r2").unwrap(), Some(1.0));
        assert_eq!(m.approval_rate("r2").unwrap(), Some(0.5));
    }

    #[test]
    fn identical_raters_average_one() {
        let m = two_raters(&[(A, A), (D, D)]);
        assert_eq!(m.per_rater_average("r1").unwrap(), Some(1.0));
        let report = m.report(2);
        assert_eq!(report.overall_average, Some(1.0));
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(format_percent(0.92929), "92.93%");
        assert_eq!(format_percent(0.88125), "88.13%");
        assert_eq!(format_percent(1.0), "100.00%");
        assert_eq!(format_percent(0.0), "0.00%");
    }

    #[test]
    fn matrix_shape_validated() {
        assert!(matches!(
            AnnotationMatrix::from_triples(vec![("a", "r1", A)]),
            Err(MetricsError::TooFewRaters(1))
        ));
        let empty: Vec<(String, String, Verdict)> = Vec::new();
        assert!(matches!(AnnotationMatrix::from_triples(empty), Err(MetricsError::NoItems)));
    }

    #[test]
    fn csv_layout() {
        let csv = "item_id,rater_id,decision\n1,E1,approved\n1,E2,declined\n2,E1,approved\n2,E2,approved\n";
        let m = AnnotationMatrix::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(m.raters(), ["E1", "E2"]);
        assert_eq!(m.pairwise_agreement("E1", "E2").unwrap(), Some(0.5));
        let bad = "item_id,rater_id,decision\n1,E1,maybe\n";
        let err = AnnotationMatrix::from_csv_reader(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, MetricsError::BadRow { line: 2, .. }), "{err}");
    }
}
