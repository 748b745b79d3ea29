//! Built-in acceptance targets and run-report aggregation.
//!
//! Every quantitative verb writes a `result.json` carrying the measured
//! value, its target, and the tolerance it was judged against, so `report`
//! can merge any set of run directories into one pass/fail table without
//! recomputing anything.

use crate::{PI2_OVER_2, PI2_OVER_8};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A named target with its tolerance (relative unless `abs_tol`).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TargetSpec {
    pub id: &'static str,
    pub description: &'static str,
    pub target: f64,
    pub rel_tol: f64,
}

/// Versioned table of the built-in acceptance targets.
pub fn targets() -> Vec<TargetSpec> {
    vec![
        TargetSpec {
            id: "confine-a-slope",
            description: "interval confinement decay",
            target: -PI2_OVER_2,
            rel_tol: 0.02,
        },
        TargetSpec {
            id: "confine-b-slope",
            description: "reflected confinement decay",
            target: -PI2_OVER_8,
            rel_tol: 0.05,
        },
        TargetSpec {
            id: "floor-ratio-slope",
            description: "floored/unfloored reflected ratio decay",
            target: -3.0 * PI2_OVER_8,
            rel_tol: 0.20,
        },
        TargetSpec {
            id: "jumpprob-2",
            description: "P(x(1) = x(2)) for Brownian environments",
            target: (5.0 - 2.0 * (-1.0f64).exp()) / 12.0,
            rel_tol: f64::NAN, // judged in standard errors, not relative
        },
        TargetSpec {
            id: "corollary-r0",
            description: "weighted-integral variational value at r = 0",
            target: 32.0 / (27.0 * std::f64::consts::PI.powi(2)),
            rel_tol: 1e-6,
        },
        TargetSpec {
            id: "tightness-slope-a2",
            description: "escape decay from the tightness set, a = 2",
            target: -2.0 * PI2_OVER_8,
            rel_tol: 0.20,
        },
    ]
}

/// One quantitative outcome of a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub verb: String,
    pub criterion: Option<String>,
    pub name: String,
    pub measured: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl RunResult {
    pub fn informational(verb: &str, name: &str, measured: f64) -> Self {
        RunResult {
            verb: verb.into(),
            criterion: None,
            name: name.into(),
            measured,
            target: None,
            tolerance: None,
            pass: None,
        }
    }

    pub fn judged(verb: &str, criterion: &str, name: &str, measured: f64, target: f64, tol: f64) -> Self {
        let pass = (measured - target).abs() <= tol * target.abs().max(1e-300);
        RunResult {
            verb: verb.into(),
            criterion: Some(criterion.into()),
            name: name.into(),
            measured,
            target: Some(target),
            tolerance: Some(tol),
            pass: Some(pass),
        }
    }
}

/// Reads every `result.json` under the given run directories.
pub fn aggregate(dirs: &[impl AsRef<Path>]) -> Vec<RunResult> {
    let mut out = Vec::new();
    for d in dirs {
        let p = d.as_ref().join("result.json");
        if let Ok(bytes) = std::fs::read(&p) {
            if let Ok(mut rows) = serde_json::from_slice::<Vec<RunResult>>(&bytes) {
                out.append(&mut rows);
            }
        }
    }
    // group rows by criterion id, informational rows last
    out.sort_by(|a, b| {
        a.criterion
            .clone()
            .unwrap_or_else(|| "~".into())
            .cmp(&b.criterion.clone().unwrap_or_else(|| "~".into()))
    });
    out
}

pub fn render_table(rows: &[RunResult]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<22} {:<28} {:>14} {:>14} {:>8} {:>6}\n",
        "criterion", "name", "measured", "target", "tol", "pass"
    ));
    for r in rows {
        let pass: String = match r.pass {
            None => "-".into(),
            Some(true) => "ok".into(),
            Some(false) => "FAIL".into(),
        };
        s.push_str(&format!(
            "{:<22} {:<28} {:>14.6} {:>14} {:>8} {:>6}\n",
            r.criterion.as_deref().unwrap_or("-"),
            r.name,
            r.measured,
            r.target.map_or_else(|| "-".into(), |t| format!("{t:.6}")),
            r.tolerance.map_or_else(|| "-".into(), |t| format!("{t:.3}")),
            pass,
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_aggregate_is_empty() {
        let rows = aggregate(&[std::path::PathBuf::from("/nonexistent")]);
        assert!(rows.is_empty());
        assert!(render_table(&rows).lines().count() == 1);
    }

    #[test]
    fn judged_rows_compare_against_tolerance() {
        let ok = RunResult::judged("confine", "confine-a-slope", "slope", -4.93, -PI2_OVER_2, 0.02);
        assert_eq!(ok.pass, Some(true));
        let bad = RunResult::judged("confine", "confine-a-slope", "slope", -4.0, -PI2_OVER_2, 0.02);
        assert_eq!(bad.pass, Some(false));
    }

    #[test]
    fn targets_table_is_consistent() {
        let t = targets();
        assert!(t.iter().any(|x| x.id == "confine-a-slope"));
        for spec in &t {
            assert!(spec.target.is_finite());
        }
    }
}
