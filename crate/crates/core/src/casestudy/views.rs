//! Obstacle flags and the proxy/intended feature views.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::uci::{StudentTable, REQUIRED_COLUMNS};
use super::RunConfig;
use crate::error::{EquityError, Result};
use crate::obstacle::{Group, Individual, ObstacleModel, Population};

pub const PROXY_FEATURES: [&str; 6] =
    ["sex", "test_scores", "essay", "grades", "letter_of_recommendation", "extracurricular"];
pub const PROXY_AFFECTED: [&str; 3] = ["test_scores", "essay", "grades"];

pub const INTENDED_FEATURES: [&str; 10] = [
    "sex",
    "health",
    "study_time",
    "school_absences",
    "travel_time",
    "paid",
    "free_time",
    "romantic",
    "mothers_education",
    "fathers_education",
];
pub const INTENDED_AFFECTED: [&str; 4] = ["health", "study_time", "school_absences", "free_time"];

/// Ordinal code for the job columns; higher means more advantage.
pub fn job_level(job: &str) -> Option<i64> {
    match job {
        "at_home" => Some(0),
        "other" => Some(1),
        "services" => Some(2),
        "health" => Some(3),
        "teacher" => Some(4),
        _ => None,
    }
}

fn yes_no(table: &StudentTable, row: usize, column: &str) -> Result<i64> {
    match table.text(row, column)?.as_str() {
        "yes" => Ok(1),
        "no" => Ok(0),
        other => Err(EquityError::UnknownLevel { column: column.into(), level: other.into() }),
    }
}

fn job(table: &StudentTable, row: usize, column: &str) -> Result<i64> {
    let level = table.text(row, column)?;
    job_level(&level).ok_or(EquityError::UnknownLevel { column: column.into(), level })
}

/// Sum of paid tutoring, family relationship, both parents' jobs and education.
pub fn background_sums(table: &StudentTable) -> Result<Vec<i64>> {
    table.require(&["paid", "famrel", "Mjob", "Fjob", "Medu", "Fedu"])?;
    (0..table.len())
        .map(|r| {
            Ok(yes_no(table, r, "paid")?
                + table.int(r, "famrel")?
                + job(table, r, "Mjob")?
                + job(table, r, "Fjob")?
                + table.int(r, "Medu")?
                + table.int(r, "Fedu")?)
        })
        .collect()
}

fn median(values: &[i64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Flags every student whose background sum is strictly below the median.
pub fn flags_from_sums(sums: &[i64]) -> Vec<bool> {
    if sums.is_empty() {
        return Vec::new();
    }
    let m = median(sums);
    sums.iter().map(|&s| (s as f64) < m).collect()
}

pub fn derive_obstacle_flags(table: &StudentTable) -> Result<Vec<bool>> {
    Ok(flags_from_sums(&background_sums(table)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyViews {
    pub proxy_view: Population,
    pub intended_view: Population,
    pub proxy_obstacles: ObstacleModel,
    pub intended_obstacles: ObstacleModel,
    pub obstacle_flags: Vec<bool>,
}

/// Column range and how alleviation raises a value.
#[derive(Clone, Copy)]
enum Uplift {
    /// One ordinal step, clipped at `max`.
    Step { max: f64 },
    /// A multiple of the column's population standard deviation, clipped at `max`.
    Spread { max: f64 },
}

struct Column {
    values: Vec<f64>,
    uplift: Option<Uplift>,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Alleviated value of one cell; `spread` is the precomputed uplift for `Spread` columns.
fn raised(col: &Column, row: usize, spread: f64) -> f64 {
    let x = col.values[row];
    match col.uplift {
        None => x,
        Some(Uplift::Step { max }) => (x + 1.0).min(max).max(x),
        Some(Uplift::Spread { max }) => (x + spread).min(max).max(x),
    }
}

fn build_population(
    columns: &[Column],
    names: &[&str],
    flags: &[bool],
    ids: &[String],
    groups: &[Group],
    labels: &[(bool, bool)],
    sd_multiple: f64,
) -> Result<Population> {
    let spreads: Vec<f64> = columns.iter().map(|c| sd_multiple * std_dev(&c.values)).collect();
    let individuals = (0..ids.len())
        .map(|r| {
            let x: Vec<f64> = columns.iter().map(|c| c.values[r]).collect();
            let z: Vec<f64> = if flags[r] {
                columns.iter().zip(&spreads).map(|(c, &s)| raised(c, r, s)).collect()
            } else {
                x.clone()
            };
            let (y, y_prime) = labels[r];
            Individual { id: ids[r].clone(), z, x, y_prime, y, grp: groups[r] }
        })
        .collect();
    Population::new(individuals, names.iter().map(|s| s.to_string()).collect(), "sex")
}

fn obstacle_model(names: &[&str], affected: &[&str]) -> Result<ObstacleModel> {
    let idx = affected.iter().map(|a| names.iter().position(|n| n == a).expect("affected feature listed"));
    ObstacleModel::uniform(names.len(), idx, 1.0)
}

pub fn build_case_study_views(table: &StudentTable, cfg: &RunConfig) -> Result<CaseStudyViews> {
    table.require(&REQUIRED_COLUMNS)?;
    let n = table.len();
    let flags = derive_obstacle_flags(table)?;
    let ids: Vec<String> = (0..n).map(|r| format!("s{}", r + 1)).collect();
    let int = |col: &str| -> Result<Vec<f64>> { (0..n).map(|r| table.int(r, col).map(|v| v as f64)).collect() };
    let binary = |col: &str| -> Result<Vec<f64>> { (0..n).map(|r| yes_no(table, r, col).map(|v| v as f64)).collect() };

    let mut groups = Vec::with_capacity(n);
    for r in 0..n {
        groups.push(match table.text(r, "sex")?.as_str() {
            "F" => Group::One,
            "M" => Group::Zero,
            other => return Err(EquityError::UnknownLevel { column: "sex".into(), level: other.into() }),
        });
    }
    let sex: Vec<f64> = groups.iter().map(|g| g.index() as f64).collect();
    let (g1, g2, g3) = (int("G1")?, int("G2")?, int("G3")?);
    let studytime = int("studytime")?;
    let famrel = int("famrel")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let essay: Vec<f64> = studytime
        .iter()
        .zip(&famrel)
        .map(|(s, f)| {
            let base = 10.0 * (s - 1.0) / 3.0 + 10.0 * (f - 1.0) / 4.0;
            (base + 2.0 * noise.sample(&mut rng)).clamp(0.0, 20.0)
        })
        .collect();
    let extracurricular = if table.has_column("activities") {
        binary("activities")?
    } else {
        let coin = Bernoulli::new(0.5).expect("fair coin");
        (0..n).map(|_| f64::from(u8::from(coin.sample(&mut rng)))).collect()
    };

    let pass = cfg.pass_mark as f64;
    let g3_spread = if n > 0 { cfg.uplift_sd * std_dev(&g3) } else { 0.0 };
    let labels: Vec<(bool, bool)> = (0..n)
        .map(|r| {
            let y = g3[r] >= pass;
            let y_prime = if flags[r] { (g3[r] + g3_spread).min(20.0) >= pass } else { y };
            (y, y_prime)
        })
        .collect();

    let spread = |values: Vec<f64>, max: f64| Column { values, uplift: Some(Uplift::Spread { max }) };
    let step = |values: Vec<f64>, max: f64| Column { values, uplift: Some(Uplift::Step { max }) };
    let fixed = |values: Vec<f64>| Column { values, uplift: None };

    let proxy_columns = [
        fixed(sex.clone()),
        spread(g1.iter().zip(&g2).map(|(a, b)| (a + b) / 2.0).collect(), 20.0),
        spread(essay, 20.0),
        spread(g1.clone(), 20.0),
        fixed(famrel.clone()),
        fixed(extracurricular),
    ];
    // Absences are negated so that alleviation raises the value.
    let intended_columns = [
        fixed(sex),
        step(int("health")?, 5.0),
        step(studytime, 4.0),
        spread(int("absences")?.iter().map(|a| -a).collect(), 0.0),
        fixed(int("traveltime")?),
        fixed(binary("paid")?),
        step(int("freetime")?, 5.0),
        fixed(binary("romantic")?),
        fixed(int("Medu")?),
        fixed(int("Fedu")?),
    ];
    let proxy_view = build_population(&proxy_columns, &PROXY_FEATURES, &flags, &ids, &groups, &labels, cfg.uplift_sd)?;
    let intended_view =
        build_population(&intended_columns, &INTENDED_FEATURES, &flags, &ids, &groups, &labels, cfg.uplift_sd)?;
    Ok(CaseStudyViews {
        proxy_view,
        intended_view,
        proxy_obstacles: obstacle_model(&PROXY_FEATURES, &PROXY_AFFECTED)?,
        intended_obstacles: obstacle_model(&INTENDED_FEATURES, &INTENDED_AFFECTED)?,
        obstacle_flags: flags,
    })
}
