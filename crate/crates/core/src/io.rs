//! Deterministic serialization of grids, metrics, curves and solve reports:
//! JSON documents with fixed field order and CSV tables, every float
//! rendered with 17 significant digits so outputs are byte-stable and
//! round-trip exactly.

use crate::conformal::MmsCase;
use crate::domain::{Metric, RadialGrid};
use crate::prescribe::{SolveReport, StageRecord};
use crate::spectral::LambdaCurve;
use crate::yamabe::SuiteResult;

/// 17-significant-digit rendering (`d.16 more digits` in scientific
/// notation); round-trips every finite `f64` exactly.
pub fn format_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number: 17 significant digits, `null` for non-finite values.
fn json_num(x: f64) -> String {
    if x.is_finite() {
        format_g17(x)
    } else {
        "null".to_string()
    }
}

fn json_array(values: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&json_num(v));
    }
    s.push(']');
    s
}

/// Metric document: `{"n":…, "nodes":[…], "phi":[…], "R":[…], "H":…}` with
/// that exact field order.
pub fn metric_to_json(metric: &Metric) -> String {
    let grid = metric.grid();
    format!(
        "{{\"n\":{},\"nodes\":{},\"phi\":{},\"R\":{},\"H\":{}}}",
        grid.dims.n,
        json_array(&grid.nodes),
        json_array(&metric.phi),
        json_array(&metric.scalar_curvature),
        json_num(metric.mean_curvature),
    )
}

/// Grid document: the metric schema restricted to `n` and `nodes`.
pub fn grid_to_json(grid: &RadialGrid) -> String {
    format!(
        "{{\"n\":{},\"nodes\":{}}}",
        grid.dims.n,
        json_array(&grid.nodes)
    )
}

/// Manufactured case: the metric schema plus the exact solution array.
pub fn mms_to_json(grid: &RadialGrid, case: &MmsCase) -> String {
    format!(
        "{{\"n\":{},\"nodes\":{},\"phi\":{},\"R\":{},\"H\":{},\"u_exact\":{}}}",
        grid.dims.n,
        json_array(&grid.nodes),
        json_array(case.phi.values()),
        json_array(&case.target.scalar),
        json_num(case.target.mean),
        json_array(case.u_exact.values()),
    )
}

/// Eigenvalue-curve table: columns `s, lambda, sign`.
pub fn lambda_curve_csv(curve: &LambdaCurve) -> String {
    let mut out = String::from("s,lambda,sign\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            format_g17(p.s),
            if p.lambda.is_finite() {
                format_g17(p.lambda)
            } else {
                "inf".to_string()
            },
            p.sign.as_str()
        ));
    }
    out
}

/// Sign-independence table: columns `b, r, value_upper_bound, sign`.
pub fn suite_csv(suite: &SuiteResult) -> String {
    let mut out = String::from("b,r,value_upper_bound,sign\n");
    for row in &suite.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_g17(row.b),
            format_g17(row.r),
            if row.value.is_finite() {
                format_g17(row.value)
            } else {
                "inf".to_string()
            },
            row.sign.as_str()
        ));
    }
    out
}

/// Solution table: columns `r, u, R_readback`.
pub fn solution_csv(grid: &RadialGrid, u: &[f64], readback: &[f64]) -> String {
    let mut out = String::from("r,u,R_readback\n");
    for i in 0..grid.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            format_g17(grid.nodes[i]),
            format_g17(u[i]),
            format_g17(readback[i])
        ));
    }
    out
}

fn stage_json(stage: &StageRecord) -> String {
    format!(
        "{{\"name\":{:?},\"q\":{},\"r\":{},\"converged\":{},\"iterations\":{},\"residual_interior\":{},\"residual_boundary\":{},\"energy_norm\":{}}}",
        stage.name,
        json_num(stage.q),
        json_num(stage.r),
        stage.converged,
        stage.iterations,
        json_num(stage.residual_interior),
        json_num(stage.residual_boundary),
        json_num(stage.energy_norm),
    )
}

/// Solve report with per-stage records.
pub fn solve_report_json(report: &SolveReport) -> String {
    let stages: Vec<String> = report.stages.iter().map(stage_json).collect();
    format!(
        "{{\"gate\":\"{}\",\"converged\":{},\"ordering_ok\":{},\"iterations\":{},\"residual_interior\":{},\"residual_boundary\":{},\"stages\":[{}],\"solution\":{}}}",
        report.gate.as_str(),
        report.converged,
        report.ordering_ok,
        report.iterations,
        json_num(report.residual_interior),
        json_num(report.residual_boundary),
        stages.join(","),
        json_array(report.solution.values()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, well_metric, Spacing};
    use proptest::prelude::*;

    #[test]
    fn metric_json_field_order() {
        let grid = build_grid(3, 10.0, 16, Spacing::Log).unwrap();
        let metric = well_metric(&grid, 1.0, 2.0, 3.0);
        let json = metric_to_json(&metric);
        let n_pos = json.find("\"n\"").unwrap();
        let nodes_pos = json.find("\"nodes\"").unwrap();
        let phi_pos = json.find("\"phi\"").unwrap();
        let r_pos = json.find("\"R\"").unwrap();
        let h_pos = json.find("\"H\"").unwrap();
        assert!(n_pos < nodes_pos && nodes_pos < phi_pos && phi_pos < r_pos && r_pos < h_pos);
        // well depth is rendered in full precision
        assert!(json.contains(&format_g17(-3.0)));
    }

    #[test]
    fn serialization_is_deterministic() {
        let grid = build_grid(3, 100.0, 32, Spacing::Log).unwrap();
        let metric = well_metric(&grid, 1.5, 3.0, 7.25);
        assert_eq!(metric_to_json(&metric), metric_to_json(&metric));
        assert_eq!(grid_to_json(&grid), grid_to_json(&grid));
    }

    proptest! {
        #[test]
        fn g17_round_trips(x in proptest::num::f64::NORMAL) {
            let s = format_g17(x);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
