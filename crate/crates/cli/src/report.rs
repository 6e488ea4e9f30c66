//! Report rendering: publication-style human tables and machine-readable JSON
//! lines. The machine records are the source of truth for tests.

use agentiv_core::diagnostics::DiagnosticReport;
use agentiv_core::estimator::EstimateReport;
use agentiv_core::pipeline::EstimationOutput;
use serde_json::json;

/// Significance stars at the 0.10 / 0.05 / 0.01 levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Thousands separator for observation counts.
pub fn group_digits(n: usize) -> String {
    let raw = n.to_string();
    let mut out = String::new();
    for (i, c) in raw.chars().enumerate() {
        if i > 0 && (raw.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn fmt_or_dash(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Side-by-side OLS / 2SLS table in the four-row layout of the main
/// results tables.
pub fn estimate_table(out: &EstimationOutput) -> String {
    let ols = &out.ols;
    let tsls = &out.tsls;
    let label = format!("Call {}", ols.regressor.to_uppercase());
    let mut s = String::new();
    s.push_str(&format!(
        "Outcome: {} (window {} spans, {} estimation rows)\n",
        ols.outcome,
        group_digits(out.nonempty_spans),
        group_digits(out.design_rows)
    ));
    s.push_str(&"-".repeat(64));
    s.push('\n');
    s.push_str(&format!("{:<24}{:>18}{:>18}\n", "", "(1) OLS", "(2) 2SLS"));
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        label,
        format!("{:.4}{}", ols.coef, stars(ols.p_value)),
        format!("{:.4}{}", tsls.coef, stars(tsls.p_value)),
    ));
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "",
        format!("({:.4})", ols.se),
        format!("({:.4})", tsls.se),
    ));
    s.push_str(&"-".repeat(64));
    s.push('\n');
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "Time controls", "Yes", "Yes"
    ));
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "Observations",
        group_digits(ols.n_obs),
        group_digits(tsls.n_obs)
    ));
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "Instrument",
        "-",
        tsls.instrument.as_deref().unwrap_or("-")
    ));
    s.push_str(&format!(
        "{:<24}{:>18}{:>18}\n",
        "First-stage F",
        "-",
        fmt_or_dash(tsls.first_stage_f)
    ));
    if tsls.weak_instrument {
        s.push_str("Warning: first-stage F below the weak-instrument threshold\n");
    }
    if ols.variance_truncated || tsls.variance_truncated {
        s.push_str("Note: two-way cluster variance was spectrally truncated\n");
    }
    s.push('\n');
    s.push_str(&format!(
        "Sample: {} parsed, {} transferred, {} unidentified, {} abandoned, {} kept; \
         {} families ({} agency-flagged); identification gain {:.1}%\n",
        group_digits(out.filter_counts.input),
        group_digits(out.filter_counts.transferred),
        group_digits(out.filter_counts.missing_identity),
        group_digits(out.filter_counts.abandoned),
        group_digits(out.filter_counts.kept),
        group_digits(out.n_families),
        group_digits(out.n_agency_families),
        100.0 * out.coverage.gain()
    ));
    s.push_str(&format!(
        "2SLS drops {} singleton-agent rows relative to OLS.\n",
        group_digits(tsls.dropped_singletons)
    ));
    s
}

/// One machine-readable JSON object per fit.
pub fn fit_json(report: &EstimateReport) -> serde_json::Value {
    json!({
        "method": report.method.label(),
        "outcome": report.outcome,
        "regressor": report.regressor,
        "instrument": report.instrument,
        "coef": report.coef,
        "se": report.se,
        "t_stat": report.t_stat,
        "p_value": report.p_value,
        "first_stage_f": report.first_stage_f,
        "n_obs": report.n_obs,
        "n_spans": report.n_spans,
        "n_clusters_agent": report.n_clusters_agent,
        "n_clusters_span": report.n_clusters_span,
        "dropped_singletons": report.dropped_singletons,
        "absorb_iterations": report.convergence.iterations,
        "absorb_max_delta": report.convergence.max_delta,
        "variance_truncated": report.variance_truncated,
        "weak_instrument": report.weak_instrument,
        "inference_dof": report.inference_dof,
    })
}

pub fn estimation_json(out: &EstimationOutput) -> Vec<serde_json::Value> {
    let mut rows = vec![fit_json(&out.ols), fit_json(&out.tsls)];
    for row in rows.iter_mut() {
        row["design_rows"] = json!(out.design_rows);
        row["outcome_mean"] = json!(out.outcome_mean);
        row["nonempty_spans"] = json!(out.nonempty_spans);
        row["mean_calls_per_span"] = json!(out.mean_calls_per_span);
        row["n_families"] = json!(out.n_families);
        row["n_agency_families"] = json!(out.n_agency_families);
        row["filter_input"] = json!(out.filter_counts.input);
        row["filter_kept"] = json!(out.filter_counts.kept);
    }
    rows
}

/// Waiting-time table (conditional-independence assessment layout).
pub fn waiting_table(reports: &[DiagnosticReport]) -> String {
    let mut s = String::new();
    s.push_str("Conditional independence assessment: waiting-time models\n");
    s.push_str(&"-".repeat(64));
    s.push('\n');
    s.push_str(&format!("{:<40}{:>10}{:>10}\n", "", "(1)", "(2)"));
    let row = |name: &str, f: &dyn Fn(&DiagnosticReport) -> String| {
        format!("{:<40}{:>10}{:>10}\n", name, f(&reports[0]), f(&reports[1]))
    };
    s.push_str(&row("Agent coefficients joint F", &|r| {
        format!("{:.2}{}", r.joint_f, stars(r.p_value))
    }));
    s.push_str(&row("  p-value", &|r| format!("{:.3}", r.p_value)));
    s.push_str(&row("Time controls", &|r| {
        if r.with_time_controls { "Yes" } else { "No" }.to_string()
    }));
    s.push_str(&row("Model R2", &|r| format!("{:.3}", r.r2_full)));
    s.push_str(&row("Net variation from agent dummies", &|r| {
        format!("{:.3}", r.net_variation)
    }));
    s.push_str(&row("Observations", &|r| group_digits(r.n_obs)));
    s
}

/// Randomization-test table in the four-column layout: raw score and
/// leave-one-out instrument, each without and with time controls.
pub fn balance_table(reports: &[DiagnosticReport]) -> String {
    let mut s = String::new();
    s.push_str("Test of randomization: baseline characteristics\n");
    s.push_str(&"-".repeat(76));
    s.push('\n');
    s.push_str(&format!(
        "{:<28}{:>12}{:>12}{:>12}{:>12}\n",
        "", "(1) score", "(2) loo", "(3) score", "(4) loo"
    ));
    // Per-covariate rows: coefficient with the standard error beneath.
    let names: Vec<&str> = reports[0]
        .per_covariate
        .iter()
        .map(|(n, _, _)| n.as_str())
        .collect();
    for (i, name) in names.iter().enumerate() {
        let mut coef_row = format!("{name:<28}");
        let mut se_row = " ".repeat(28);
        for r in reports {
            let (_, coef, se) = &r.per_covariate[i];
            coef_row.push_str(&format!("{:>12}", format!("{coef:.3}")));
            se_row.push_str(&format!("{:>12}", format!("({se:.3})")));
        }
        s.push_str(&coef_row);
        s.push('\n');
        s.push_str(&se_row);
        s.push('\n');
    }
    s.push_str(&"-".repeat(76));
    s.push('\n');
    let mut tc = format!("{:<28}", "Time fixed effects");
    let mut f_row = format!("{:<28}", "F-test");
    let mut p_row = format!("{:<28}", "  p-value");
    let mut n_row = format!("{:<28}", "Observations");
    for r in reports {
        tc.push_str(&format!(
            "{:>12}",
            if r.with_time_controls { "Yes" } else { "No" }
        ));
        f_row.push_str(&format!(
            "{:>12}",
            format!("{:.3}{}", r.joint_f, stars(r.p_value))
        ));
        p_row.push_str(&format!("{:>12}", format!("{:.3}", r.p_value)));
        n_row.push_str(&format!("{:>12}", group_digits(r.n_obs)));
    }
    for line in [tc, f_row, p_row, n_row] {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn diagnostic_json(report: &DiagnosticReport) -> serde_json::Value {
    json!({
        "test": report.test_name,
        "time_controls": report.with_time_controls,
        "joint_f": report.joint_f,
        "p_value": report.p_value,
        "df1": report.df1,
        "df2": report.df2,
        "r2_full": report.r2_full,
        "r2_restricted": report.r2_restricted,
        "net_variation": report.net_variation,
        "n_obs": report.n_obs,
        "dropped_columns": report.dropped_columns,
        "per_covariate": report.per_covariate.iter().map(|(n, c, s)| {
            json!({"name": n, "coef": c, "se": s})
        }).collect::<Vec<_>>(),
    })
}

/// Sweep grid: one column per sweep point.
pub fn sweep_table(axis: &str, points: &[(String, EstimationOutput)]) -> String {
    let mut s = String::new();
    s.push_str(&format!("Robustness sweep over {axis}\n"));
    s.push_str(&"-".repeat(16 + 14 * points.len()));
    s.push('\n');
    let mut header = format!("{:<16}", axis);
    let mut coef = format!("{:<16}", "2SLS coef");
    let mut se = format!("{:<16}", "");
    let mut f = format!("{:<16}", "First-stage F");
    let mut n = format!("{:<16}", "Observations");
    let mut base = format!("{:<16}", "Outcome mean");
    for (label, out) in points {
        header.push_str(&format!("{label:>14}"));
        coef.push_str(&format!(
            "{:>14}",
            format!("{:.4}{}", out.tsls.coef, stars(out.tsls.p_value))
        ));
        se.push_str(&format!("{:>14}", format!("({:.4})", out.tsls.se)));
        f.push_str(&format!("{:>14}", fmt_or_dash(out.tsls.first_stage_f)));
        n.push_str(&format!("{:>14}", group_digits(out.tsls.n_obs)));
        base.push_str(&format!("{:>14}", format!("{:.4}", out.outcome_mean)));
    }
    for line in [header, coef, se, f, n, base] {
        s.push_str(&line);
        s.push('\n');
    }
    s
}
