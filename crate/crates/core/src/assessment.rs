//! Learning-gain arithmetic over pre/post test scores.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GainError {
    #[error("gain undefined for a pre-test score of 100")]
    Ceiling,
    #[error("score {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("group {0:?} has no students with a defined gain")]
    EmptyGroup(String),
    #[error("no score records")]
    NoRecords,
}

/// `(post - pre) / (100 - pre)`, with scores in percent.
pub fn normalized_gain(test2: f64, test3: f64) -> Result<f64, GainError> {
    for s in [test2, test3] {
        if !(0.0..=100.0).contains(&s) {
            return Err(GainError::OutOfRange(s));
        }
    }
    if test2 == 100.0 {
        return Err(GainError::Ceiling);
    }
    Ok((test3 - test2) / (100.0 - test2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub student: String,
    pub group: String,
    pub test2: f64,
    pub test3: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean of the per-student gains.
    #[default]
    PerStudent,
    /// Gain computed from the group's mean pre and post scores.
    GroupMean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::PerStudent => "per-student",
            Aggregation::GroupMean => "group-mean",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-student" => Ok(Aggregation::PerStudent),
            "group-mean" => Ok(Aggregation::GroupMean),
            other => Err(format!("unknown aggregation {other:?}; expected per-student or group-mean")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainReport {
    pub group: String,
    /// Students with a defined gain.
    pub n: usize,
    pub mean_gain: f64,
    pub gains: Vec<(String, f64)>,
    /// Students left out because their pre-test score was 100.
    pub excluded: Vec<String>,
    pub aggregation: Aggregation,
}

/// One report per group, sorted by group label.
pub fn group_gain(records: &[ScoreRecord], aggregation: Aggregation) -> Result<Vec<GainReport>, GainError> {
    if records.is_empty() {
        return Err(GainError::NoRecords);
    }
    let mut groups: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.group.as_str()).or_default().push(r);
    }

    let mut reports = Vec::with_capacity(groups.len());
    for (group, members) in groups {
        let mut gains = Vec::new();
        let mut excluded = Vec::new();
        let (mut sum2, mut sum3) = (0.0, 0.0);
        for r in members {
            match normalized_gain(r.test2, r.test3) {
                Ok(g) => {
                    gains.push((r.student.clone(), g));
                    sum2 += r.test2;
                    sum3 += r.test3;
                }
                Err(GainError::Ceiling) => excluded.push(r.student.clone()),
                Err(e) => return Err(e),
            }
        }
        if gains.is_empty() {
            return Err(GainError::EmptyGroup(group.to_string()));
        }
        let n = gains.len();
        let mean_gain = match aggregation {
            Aggregation::PerStudent => gains.iter().map(|(_, g)| g).sum::<f64>() / n as f64,
            Aggregation::GroupMean => normalized_gain(sum2 / n as f64, sum3 / n as f64)?,
        };
        reports.push(GainReport {
            group: group.to_string(),
            n,
            mean_gain,
            gains,
            excluded,
            aggregation,
        });
    }
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineError {
    /// 1-based line in the input, header included.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("empty input")]
    Empty,
    #[error("bad header: expected student,group,test2,test3, got {0}")]
    Header(String),
    #[error("{}", format_line_errors(.0))]
    Rows(Vec<LineError>),
}

fn format_line_errors(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("\n")
}

const HEADER: [&str; 4] = ["student", "group", "test2", "test3"];

/// Parses a score table. Any bad row rejects the whole input, with every
/// failing line listed.
pub fn load_scores<R: Read>(input: R) -> Result<Vec<ScoreRecord>, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);

    let header = reader
        .headers()
        .map_err(|e| LoadError::Header(e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(LoadError::Empty);
    }
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(LoadError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let fallback_line = i as u64 + 2;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(fallback_line, |p| p.line());
                errors.push(LineError { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(fallback_line, |p| p.line());
        match parse_row(&row) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(LineError { line, message }),
        }
    }

    if !errors.is_empty() {
        return Err(LoadError::Rows(errors));
    }
    if records.is_empty() {
        return Err(LoadError::Empty);
    }
    Ok(records)
}

fn parse_row(row: &csv::StringRecord) -> Result<ScoreRecord, String> {
    if row.len() != HEADER.len() {
        return Err(format!("expected 4 fields, found {}", row.len()));
    }
    let score = |idx: usize| -> Result<f64, String> {
        let name = HEADER[idx];
        let v: f64 = row[idx]
            .parse()
            .map_err(|_| format!("{name}: not a number: {:?}", &row[idx]))?;
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("{name}: {v} outside [0, 100]"));
        }
        Ok(v)
    };
    if row[0].is_empty() {
        return Err("student: empty".into());
    }
    Ok(ScoreRecord {
        student: row[0].to_string(),
        group: row[1].to_string(),
        test2: score(2)?,
        test3: score(3)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(student: &str, group: &str, test2: f64, test3: f64) -> ScoreRecord {
        ScoreRecord {
            student: student.into(),
            group: group.into(),
            test2,
            test3,
        }
    }

    #[test]
    fn gain_examples() {
        assert!((normalized_gain(50.0, 59.1).unwrap() - 0.182).abs() < 1e-12);
        assert!((normalized_gain(80.0, 78.0).unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(normalized_gain(40.0, 100.0).unwrap(), 1.0);
        assert_eq!(normalized_gain(37.0, 37.0).unwrap(), 0.0);
        assert_eq!(normalized_gain(100.0, 90.0), Err(GainError::Ceiling));
        assert_eq!(normalized_gain(50.0, 105.0), Err(GainError::OutOfRange(105.0)));
    }

    #[test]
    fn single_student_group() {
        let r = group_gain(&[rec("s1", "A", 50.0, 59.1)], Aggregation::PerStudent).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].mean_gain - 0.182).abs() < 1e-12);
        assert_eq!(r[0].n, 1);
    }

    #[test]
    fn opposite_gains_cancel() {
        let r = group_gain(
            &[rec("s1", "A", 50.0, 60.0), rec("s2", "A", 50.0, 40.0)],
            Aggregation::PerStudent,
        )
        .unwrap();
        assert!(r[0].mean_gain.abs() < 1e-15);
    }

    #[test]
    fn ceiling_student_excluded_and_listed() {
        let r = group_gain(
            &[rec("top", "A", 100.0, 95.0), rec("s1", "A", 50.0, 59.1)],
            Aggregation::PerStudent,
        )
        .unwrap();
        assert!((r[0].mean_gain - 0.182).abs() < 1e-12);
        assert_eq!(r[0].excluded, vec!["top".to_string()]);
        assert_eq!(r[0].n, 1);
    }

    #[test]
    fn group_of_only_ceiling_students_is_an_error() {
        let err = group_gain(&[rec("top", "B", 100.0, 100.0)], Aggregation::PerStudent).unwrap_err();
        assert_eq!(err, GainError::EmptyGroup("B".into()));
        assert_eq!(group_gain(&[], Aggregation::PerStudent).unwrap_err(), GainError::NoRecords);
    }

    #[test]
    fn aggregations_differ_and_are_labelled() {
        let records = [rec("s1", "A", 0.0, 50.0), rec("s2", "A", 80.0, 90.0)];
        let per = group_gain(&records, Aggregation::PerStudent).unwrap();
        let mean = group_gain(&records, Aggregation::GroupMean).unwrap();
        assert!((per[0].mean_gain - 0.5).abs() < 1e-15);
        // Means 40 -> 70: 30/60.
        assert!((mean[0].mean_gain - 0.5).abs() < 1e-15);
        let skewed = [rec("s1", "A", 0.0, 10.0), rec("s2", "A", 90.0, 100.0)];
        let per = group_gain(&skewed, Aggregation::PerStudent).unwrap();
        let mean = group_gain(&skewed, Aggregation::GroupMean).unwrap();
        assert!((per[0].mean_gain - 0.55).abs() < 1e-12);
        assert!((mean[0].mean_gain - 10.0 / 55.0).abs() < 1e-12);
        assert_eq!(mean[0].aggregation, Aggregation::GroupMean);
        assert_eq!("group-mean".parse::<Aggregation>(), Ok(Aggregation::GroupMean));
    }

    #[test]
    fn groups_come_back_sorted() {
        let r = group_gain(
            &[rec("a", "B", 10.0, 20.0), rec("b", "A", 10.0, 20.0)],
            Aggregation::PerStudent,
        )
        .unwrap();
        assert_eq!(r.iter().map(|g| g.group.as_str()).collect::<Vec<_>>(), ["A", "B"]);
    }

    #[test]
    fn loads_valid_table() {
        let csv = "student,group,test2,test3\ns1,A,50,59.1\n";
        let r = load_scores(csv.as_bytes()).unwrap();
        assert_eq!(r, vec![rec("s1", "A", 50.0, 59.1)]);
    }

    #[test]
    fn out_of_range_row_rejects_file_citing_line() {
        let csv = "student,group,test2,test3\ns1,A,50,59\ns2,A,50,105\ns3,A,x,1\n";
        match load_scores(csv.as_bytes()) {
            Err(LoadError::Rows(errs)) => {
                assert_eq!(errs.len(), 2);
                assert_eq!(errs[0].line, 3);
                assert!(errs[0].message.contains("test3"));
                assert_eq!(errs[1].line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_is_a_line_error() {
        let csv = "student,group,test2,test3\ns1,A,50\n";
        assert!(matches!(load_scores(csv.as_bytes()), Err(LoadError::Rows(e)) if e[0].line == 2));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(load_scores("".as_bytes()), Err(LoadError::Empty));
        assert_eq!(load_scores("student,group,test2,test3\n".as_bytes()), Err(LoadError::Empty));
        assert!(matches!(load_scores("a,b\n1,2\n".as_bytes()), Err(LoadError::Header(_))));
    }

    proptest! {
        #[test]
        fn gain_never_exceeds_one(t2 in 0.0..99.999f64, t3 in 0.0..=100.0f64) {
            prop_assert!(normalized_gain(t2, t3).unwrap() <= 1.0);
        }

        #[test]
        fn perfect_post_test_is_unit_gain(t2 in 0.0..99.999f64) {
            prop_assert_eq!(normalized_gain(t2, 100.0).unwrap(), 1.0);
        }

        #[test]
        fn unit_gain_only_at_full_marks(t2 in 0.0..99.999f64, t3 in 0.0..99.999f64) {
            prop_assert!(normalized_gain(t2, t3).unwrap() < 1.0);
        }

        #[test]
        fn zero_gain_iff_unchanged(t2 in 0.0..99.999f64, t3 in 0.0..=100.0f64) {
            let g = normalized_gain(t2, t3).unwrap();
            prop_assert_eq!(g == 0.0, t3 == t2);
            prop_assert_eq!(normalized_gain(t2, t2).unwrap(), 0.0);
        }

        #[test]
        fn gain_strictly_increases_with_post_score(t2 in 0.0..99.0f64, a in 0.0..100.0f64, b in 0.0..100.0f64) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(normalized_gain(t2, lo).unwrap() < normalized_gain(t2, hi).unwrap());
        }

        #[test]
        fn mean_gain_is_mean_of_gains(scores in prop::collection::vec((0.0..99.0f64, 0.0..=100.0f64), 1..20)) {
            let records: Vec<_> = scores.iter().enumerate()
                .map(|(i, &(a, b))| rec(&format!("s{i}"), "G", a, b)).collect();
            let r = &group_gain(&records, Aggregation::PerStudent).unwrap()[0];
            let mean = r.gains.iter().map(|(_, g)| g).sum::<f64>() / r.n as f64;
            prop_assert_eq!(r.mean_gain, mean);
            prop_assert!(r.gains.iter().all(|(_, g)| *g <= 1.0));
        }
    }
}
