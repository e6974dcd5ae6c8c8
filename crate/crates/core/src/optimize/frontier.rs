use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_evar, solve_min_variance};
use crate::error::{Error, Result};
use crate::linalg::serde_vector;
use crate::model::ReturnModel;
use crate::risk::{evar_model, stdev_portfolio, RiskLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    Evar,
    Stdev,
}

impl std::fmt::Display for RiskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RiskKind::Evar => "evar",
            RiskKind::Stdev => "stdev",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub target_return: f64,
    #[serde(with = "serde_vector")]
    pub weights: DVector<f64>,
    pub s_star: f64,
    pub evar_value: f64,
    pub stdev_value: f64,
}

/// Outcome for one target: a point or the error that prevented it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub target_return: f64,
    pub point: Option<FrontierPoint>,
    pub error: Option<FrontierError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for FrontierError {
    fn from(e: &Error) -> Self {
        Self { kind: e.code().to_string(), message: e.to_string() }
    }
}

fn solve_point<M: ReturnModel + ?Sized>(model: &M, level: RiskLevel, target: f64, kind: RiskKind) -> Result<FrontierPoint> {
    let cov = model.covariance();
    match kind {
        RiskKind::Evar => {
            let sol = solve_evar(model, level, target)?;
            let stdev = stdev_portfolio(&cov, &sol.portfolio.weights)?;
            Ok(FrontierPoint {
                target_return: target,
                weights: sol.portfolio.weights,
                s_star: sol.evar.s_star,
                evar_value: sol.evar.value,
                stdev_value: stdev,
            })
        }
        RiskKind::Stdev => {
            let p = solve_min_variance(&cov, &model.mean(), target)?;
            let stdev = stdev_portfolio(&cov, &p.weights)?;
            let evar = evar_model(model, &p.weights, level)?;
            Ok(FrontierPoint {
                target_return: target,
                weights: p.weights,
                s_star: evar.s_star,
                evar_value: evar.value,
                stdev_value: stdev,
            })
        }
    }
}

/// Solves each target independently on the current rayon pool. Entries come
/// back in target order; a failed target carries its error instead of a point.
pub fn efficient_frontier<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    targets: &[f64],
    kind: RiskKind,
) -> Vec<FrontierEntry> {
    targets
        .par_iter()
        .map(|&t| match solve_point(model, level, t, kind) {
            Ok(p) => FrontierEntry { target_return: t, point: Some(p), error: None },
            Err(e) => FrontierEntry { target_return: t, point: None, error: Some((&e).into()) },
        })
        .collect()
}

/// Evenly spaced grid of `count` targets from `min` to `max` inclusive.
pub fn target_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !min.is_finite() || !max.is_finite() || (count > 1 && max < min) {
        return Err(Error::InvalidParameter(format!("bad target grid {min}:{max}:{count}")));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { max } else { min + step * i as f64 }).collect())
}

/// Writes the frontier as CSV with header
/// `target_return,evar,stdev,s_star,w_1..w_n`. Failed targets keep their row
/// with empty value cells.
pub fn write_frontier_csv<W: Write>(out: W, entries: &[FrontierEntry], n_assets: usize, preamble: &[String]) -> Result<()> {
    let mut out = out;
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["target_return".to_string(), "evar".into(), "stdev".into(), "s_star".into()];
    header.extend((1..=n_assets).map(|i| format!("w_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for e in entries {
        let mut row = vec![fmt(e.target_return)];
        match &e.point {
            Some(p) => {
                row.extend([fmt(p.evar_value), fmt(p.stdev_value), fmt(p.s_star)]);
                row.extend(p.weights.iter().map(|&v| fmt(v)));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 3 + n_assets)),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.10}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model2Params;
    use nalgebra::DMatrix;

    fn model() -> Model2Params {
        Model2Params::new(
            DVector::from_vec(vec![0.01, 0.03, 0.02]),
            DMatrix::from_row_slice(3, 3, &[0.02, 0.002, 0.0, 0.002, 0.04, 0.003, 0.0, 0.003, 0.03]),
            0.2,
            DVector::from_vec(vec![-0.02, -0.04, 0.01]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02, 0.01])),
        )
        .unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = target_grid(0.04, 0.112, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.04);
        assert_eq!(g[9], 0.112);
        assert_eq!(target_grid(0.1, 0.2, 1).unwrap(), vec![0.1]);
        assert!(target_grid(0.1, 0.2, 0).is_err());
    }

    #[test]
    fn single_target_matches_direct_solve() {
        let m = model();
        let level = RiskLevel::new(0.05).unwrap();
        let target = 0.5 * (m.mean().min() + m.mean().max());
        let entries = efficient_frontier(&m, level, &[target], RiskKind::Evar);
        let direct = solve_evar(&m, level, target).unwrap();
        let p = entries[0].point.as_ref().unwrap();
        assert_eq!(p.weights, direct.portfolio.weights);
        assert_eq!(p.evar_value, direct.evar.value);
    }

    #[test]
    fn infeasible_targets_are_collected() {
        let m = model();
        let level = RiskLevel::new(0.05).unwrap();
        let entries = efficient_frontier(&m, level, &[10.0, m.mean()[0]], RiskKind::Stdev);
        assert_eq!(entries[0].error.as_ref().unwrap().kind, "INFEASIBLE_TARGET");
        assert!(entries[1].point.is_some());
        let mut buf = Vec::new();
        write_frontier_csv(&mut buf, &entries, 3, &["note".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# note");
        assert_eq!(lines[1], "target_return,evar,stdev,s_star,w_1,w_2,w_3");
        assert_eq!(lines[2].split(',').count(), 7);
    }
}
