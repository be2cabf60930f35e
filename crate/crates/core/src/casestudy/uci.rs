//! Reading the student-performance table.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};

/// Columns parsed as integers. Everything else is kept as text.
pub const NUMERIC_COLUMNS: [&str; 16] = [
    "age", "Medu", "Fedu", "traveltime", "studytime", "failures", "famrel", "freetime", "goout", "Dalc", "Walc",
    "health", "absences", "G1", "G2", "G3",
];

/// Columns the case study reads.
pub const REQUIRED_COLUMNS: [&str; 16] = [
    "sex", "health", "studytime", "absences", "traveltime", "paid", "freetime", "romantic", "Medu", "Fedu", "famrel",
    "Mjob", "Fjob", "G1", "G2", "G3",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTable {
    pub columns: Vec<String>,
    pub rows: Vec<BTreeMap<String, Cell>>,
}

impl StudentTable {
    pub fn from_reader<R: std::io::Read>(input: R, delimiter: u8) -> Result<StudentTable> {
        let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(input);
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            // Row numbers count data lines from 1.
            let row = i + 1;
            let mut cells = BTreeMap::new();
            for (name, value) in columns.iter().zip(record.iter()) {
                let cell = if NUMERIC_COLUMNS.contains(&name.as_str()) {
                    Cell::Int(value.parse().map_err(|_| EquityError::BadCell {
                        row,
                        column: name.clone(),
                        value: value.to_string(),
                    })?)
                } else {
                    Cell::Text(value.to_string())
                };
                cells.insert(name.clone(), cell);
            }
            rows.push(cells);
        }
        Ok(StudentTable { columns, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn require(&self, names: &[&str]) -> Result<()> {
        match names.iter().find(|n| !self.columns.iter().any(|c| c == *n)) {
            Some(missing) => Err(EquityError::MissingColumn(missing.to_string())),
            None => Ok(()),
        }
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn int(&self, row: usize, column: &str) -> Result<i64> {
        match self.rows[row].get(column) {
            Some(Cell::Int(v)) => Ok(*v),
            Some(Cell::Text(v)) => v.parse().map_err(|_| EquityError::BadCell {
                row: row + 1,
                column: column.to_string(),
                value: v.clone(),
            }),
            None => Err(EquityError::MissingColumn(column.to_string())),
        }
    }

    pub fn text(&self, row: usize, column: &str) -> Result<String> {
        match self.rows[row].get(column) {
            Some(Cell::Text(v)) => Ok(v.clone()),
            Some(Cell::Int(v)) => Ok(v.to_string()),
            None => Err(EquityError::MissingColumn(column.to_string())),
        }
    }
}

pub fn load_uci_students(path: &Path) -> Result<StudentTable> {
    load_with_delimiter(path, b';')
}

pub fn load_with_delimiter(path: &Path, delimiter: u8) -> Result<StudentTable> {
    let file = File::open(path).map_err(|e| EquityError::io(path, e))?;
    StudentTable::from_reader(std::io::BufReader::new(file), delimiter)
}

const HEADER: [&str; 33] = [
    "school", "sex", "age", "address", "famsize", "Pstatus", "Medu", "Fedu", "Mjob", "Fjob", "reason", "guardian",
    "traveltime", "studytime", "failures", "schoolsup", "famsup", "paid", "activities", "nursery", "higher",
    "internet", "romantic", "famrel", "freetime", "goout", "Dalc", "Walc", "health", "absences", "G1", "G2", "G3",
];

const JOBS: [&str; 5] = ["at_home", "other", "services", "health", "teacher"];

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// A synthetic table in the distributed semicolon format, for exercising the
/// pipeline without the real file. Family background drives a hidden support
/// level, which in turn shifts study habits, absences and grades.
pub fn synthetic_uci_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let quote = |s: &str| format!("\"{s}\"");
    let mut out = HEADER.map(quote).join(";");
    out.push('\n');
    for _ in 0..n {
        let ability: f64 = noise.sample(&mut rng);
        let support: f64 = noise.sample(&mut rng);
        let female = rng.random::<bool>();
        let level = |rng: &mut ChaCha8Rng, lo: i64, hi: i64, shift: f64| -> i64 {
            let mid = (lo + hi) as f64 / 2.0;
            let spread = (hi - lo) as f64 / 4.0;
            (mid + spread * (shift + noise.sample(rng))).round().clamp(lo as f64, hi as f64) as i64
        };
        let medu = level(&mut rng, 0, 4, support);
        let fedu = level(&mut rng, 0, 4, support);
        let mjob = JOBS[level(&mut rng, 0, 4, support) as usize];
        let fjob = JOBS[level(&mut rng, 0, 4, support) as usize];
        let famrel = level(&mut rng, 1, 5, 0.5 * support);
        let paid = rng.random::<f64>() < 0.3 + 0.2 * support.tanh();
        let studytime = level(&mut rng, 1, 4, 0.5 * ability + 0.5 * support);
        let health = level(&mut rng, 1, 5, 0.5 * support);
        let freetime = level(&mut rng, 1, 5, 0.3 * support);
        let traveltime = level(&mut rng, 1, 4, -0.3 * support);
        let absences = (4.0 - 3.0 * support - 2.0 * ability + 3.0 * noise.sample(&mut rng)).round().clamp(0.0, 40.0) as i64;
        let base = 10.5 + 3.0 * ability + 1.0 * support;
        let grade = |rng: &mut ChaCha8Rng| (base + 1.5 * noise.sample(rng)).round().clamp(0.0, 20.0) as i64;
        let (g1, g2) = (grade(&mut rng), grade(&mut rng));
        let g3 = (base + 0.3 * (studytime as f64 - 2.5) - 0.05 * absences as f64 + 1.0 * noise.sample(&mut rng))
            .round()
            .clamp(0.0, 20.0) as i64;
        let row: Vec<String> = vec![
            quote("GP"),
            quote(if female { "F" } else { "M" }),
            (15 + rng.random_range(0..5)).to_string(),
            quote("U"),
            quote("GT3"),
            quote("T"),
            medu.to_string(),
            fedu.to_string(),
            quote(mjob),
            quote(fjob),
            quote("course"),
            quote("mother"),
            traveltime.to_string(),
            studytime.to_string(),
            "0".into(),
            quote("no"),
            quote("yes"),
            quote(yes_no(paid)),
            quote(yes_no(rng.random::<bool>())),
            quote("yes"),
            quote("yes"),
            quote("yes"),
            quote(yes_no(rng.random::<f64>() < 0.3)),
            famrel.to_string(),
            freetime.to_string(),
            "3".into(),
            "1".into(),
            "1".into(),
            health.to_string(),
            absences.to_string(),
            quote(&g1.to_string()),
            quote(&g2.to_string()),
            g3.to_string(),
        ];
        out.push_str(&row.join(";"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let t = StudentTable::from_reader("\"sex\";\"age\"\n".as_bytes(), b';').unwrap();
        assert!(t.is_empty());
        assert_eq!(t.columns, vec!["sex", "age"]);
    }

    #[test]
    fn non_numeric_age_names_row_and_column() {
        let err = StudentTable::from_reader("sex;age\n\"F\";18\n\"M\";old\n".as_bytes(), b';').unwrap_err();
        match err {
            EquityError::BadCell { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "age", "old"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn synthetic_table_parses() {
        let text = synthetic_uci_csv(50, 1);
        let t = StudentTable::from_reader(text.as_bytes(), b';').unwrap();
        assert_eq!(t.len(), 50);
        t.require(&REQUIRED_COLUMNS).unwrap();
        assert_eq!(text, synthetic_uci_csv(50, 1));
        assert!(matches!(t.require(&["nope"]), Err(EquityError::MissingColumn(_))));
    }
}
