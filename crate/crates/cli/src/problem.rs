//! Problem files: a JSON description of a design, its noise and optionally
//! the observation to add.

use serde::{Deserialize, Serialize};
use vrp_core::model::{AugmentedProblem, DesignMatrix, NoiseModel, NoiseSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// Full design rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Vec<f64>>>,
    /// Points of an intercept-plus-slope design; expanded to rows `(1, h)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept_line: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<NextBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseBlock {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NextBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_cov: Option<Vec<f64>>,
}

/// Parses problem JSON, reporting the field path and position on failure.
pub fn parse_problem(text: &str) -> Result<ProblemFile, CliError> {
    let file = deserialize(text)?;
    file.check_shape()?;
    Ok(file)
}

fn deserialize(text: &str) -> Result<ProblemFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse(format!(
            "line {}, column {}, field `{}`: {}",
            inner.line(),
            inner.column(),
            path,
            inner
        ))
    })
}

/// Design rows from CSV: one column per parameter, one row per observation.
/// A leading non-numeric row is taken as a header.
pub fn parse_csv_design(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("csv: {e}")))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Parse(format!("csv line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Parse("csv: no design rows".into()));
    }
    Ok(rows)
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub design: DesignMatrix,
    /// Set when the design is an intercept-plus-slope line.
    pub line: Option<Vec<f64>>,
    pub noise: Option<NoiseModel>,
    pub next: Option<ResolvedNext>,
}

#[derive(Debug, Clone)]
pub struct ResolvedNext {
    pub row: Vec<f64>,
    pub variance: f64,
    pub cross_cov: Option<Vec<f64>>,
}

impl ResolvedNext {
    /// The next point on the line, when the row is `(1, h)`.
    pub fn line_point(&self) -> Option<f64> {
        (self.row.len() == 2 && self.row[0] == 1.0).then_some(self.row[1])
    }
}

impl ProblemFile {
    fn check_shape(&self) -> Result<(), CliError> {
        if self.design.is_some() == self.intercept_line.is_some() {
            return Err(CliError::Parse(
                "exactly one of `design` and `intercept_line` must be given".into(),
            ));
        }
        if let Some(next) = &self.next {
            if next.row.is_some() == next.h.is_some() {
                return Err(CliError::Parse(
                    "field `next`: exactly one of `row` and `h` must be given".into(),
                ));
            }
        }
        Ok(())
    }

    /// Replaces the design block with rows read elsewhere.
    pub fn with_design(mut self, rows: Vec<Vec<f64>>) -> Result<Self, CliError> {
        if self.design.is_some() || self.intercept_line.is_some() {
            return Err(CliError::Parse(
                "the design is given both in the problem file and by --csv".into(),
            ));
        }
        self.design = Some(rows);
        Ok(self)
    }

    /// A file whose design block is supplied separately.
    pub fn parse_without_design(text: &str) -> Result<Self, CliError> {
        deserialize(text)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.check_shape()?;
        let (design, line) = match (&self.design, &self.intercept_line) {
            (Some(rows), None) => {
                let d = DesignMatrix::new(rows)?;
                let line = d.line_points();
                (d, line)
            }
            (None, Some(h)) => {
                // Zero spread is reported as such rather than as rank loss.
                vrp_core::straightline::LinePlanner::new(h)?;
                (DesignMatrix::intercept_line(h)?, Some(h.clone()))
            }
            _ => unreachable!("checked above"),
        };
        let noise = match &self.noise {
            Some(NoiseBlock::Diagonal(v)) => Some(NoiseModel::validate(&NoiseSpec::Diagonal(v.clone()), design.n())?),
            Some(NoiseBlock::Full(m)) => Some(NoiseModel::validate(&NoiseSpec::Full(m.clone()), design.n())?),
            None => None,
        };
        let next = self.next.as_ref().map(|nb| ResolvedNext {
            row: match (&nb.row, nb.h) {
                (Some(r), _) => r.clone(),
                (None, Some(h)) => vec![1.0, h],
                _ => unreachable!("checked above"),
            },
            variance: nb.variance,
            cross_cov: nb.cross_cov.clone(),
        });
        Ok(Resolved {
            design,
            line,
            noise,
            next,
        })
    }
}

impl Resolved {
    pub fn require_noise(&self) -> Result<&NoiseModel, CliError> {
        self.noise
            .as_ref()
            .ok_or_else(|| CliError::Parse("this command needs a `noise` block".into()))
    }

    pub fn require_next(&self) -> Result<&ResolvedNext, CliError> {
        self.next
            .as_ref()
            .ok_or_else(|| CliError::Parse("this command needs a `next` block".into()))
    }

    pub fn augmented_problem(&self) -> Result<AugmentedProblem, CliError> {
        let next = self.require_next()?;
        Ok(AugmentedProblem::new(
            self.design.clone(),
            next.row.clone(),
            self.require_noise()?.clone(),
            next.variance,
            next.cross_cov.clone(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{
        "intercept_line": [0.62, 1.24, 1.80],
        "noise": {"diagonal": [1.56, 1.26, 0.78]},
        "next": {"h": 1.96, "variance": 0.28}
    }"#;

    #[test]
    fn parses_line_problem() {
        let p = parse_problem(LINE).unwrap();
        let r = p.resolve().unwrap();
        assert_eq!(r.design.n(), 3);
        assert_eq!(r.line.as_deref(), Some(&[0.62, 1.24, 1.80][..]));
        assert_eq!(r.next.unwrap().row, vec![1.0, 1.96]);
    }

    #[test]
    fn round_trip() {
        let p = parse_problem(LINE).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(parse_problem(&text).unwrap(), p);
    }

    #[test]
    fn field_diagnostics() {
        let bad = r#"{"intercept_line": [1, 2], "noise": {"diagonal": [1, "x"]}}"#;
        let err = parse_problem(bad).unwrap_err().to_string();
        assert!(err.contains("noise"), "{err}");
        assert!(err.contains("line 1"), "{err}");
        let both = r#"{"intercept_line": [1, 2], "design": [[1, 2]]}"#;
        assert!(parse_problem(both).is_err());
        let unknown = r#"{"intercept_line": [1, 2], "noize": {}}"#;
        assert!(parse_problem(unknown).unwrap_err().to_string().contains("noize"));
    }

    #[test]
    fn csv_with_and_without_header() {
        let rows = parse_csv_design("a,b\n1,0.5\n1,2\n").unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.5], vec![1.0, 2.0]]);
        let rows = parse_csv_design("1, 0.5\n1, 2\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert!(parse_csv_design("1,x\n1,y\n").is_err());
    }
}
