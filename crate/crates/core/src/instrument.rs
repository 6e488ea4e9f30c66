//! The residualized leave-one-out agent satisfaction instrument.
//!
//! The score is first residualized on the controls (time-span fixed
//! effects and, by default, the baseline covariates); each call's
//! instrument is then the mean of its agent's *other* residualized scores.
//! Leaving the own call out removes the mechanical correlation between
//! the instrument and the call's own survey noise. Computed with
//! per-agent totals in O(n); calls whose agent has no other surveyed call
//! are dropped rather than imputed, which also mirrors the observation
//! count drop between OLS and 2SLS samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::absorb::absorb_fixed_effects;
use crate::linalg::{qr_decompose, Mat};
use crate::panel::DesignMatrix;
use crate::{Error, Result};

/// Residualize the satisfaction score on the span fixed effects and
/// (optionally) the baseline covariates. Returns residuals aligned to the
/// design rows; with spans absorbed they sum to zero within every span.
pub fn residualize(design: &DesignMatrix, include_baseline: bool) -> Result<Vec<f64>> {
    residualize_with(design, true, include_baseline)
}

/// Residualization with explicit control over both blocks. Leaving the
/// span fixed effects out reproduces the naive instrument that ignores
/// the multi-queue timing structure, which the randomization diagnostics
/// need for their no-time-controls columns.
pub fn residualize_with(
    design: &DesignMatrix,
    include_spans: bool,
    include_baseline: bool,
) -> Result<Vec<f64>> {
    let n = design.n_rows();
    if n == 0 {
        return Ok(vec![]);
    }
    let k = design.w.cols();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(1 + k);
    cols.push(design.sat.clone());
    if include_baseline {
        for j in 0..k {
            cols.push(design.w.col(j).to_vec());
        }
    }
    let zeros = vec![0u32; n];
    let factor: &[u32] = if include_spans {
        &design.span_ids
    } else {
        &zeros
    };
    absorb_fixed_effects(&mut cols, &[factor])?;
    let sat_tilde = cols.remove(0);
    if !include_baseline || k == 0 {
        return Ok(sat_tilde);
    }
    let w_tilde = Mat::from_cols(&cols);
    let qr = qr_decompose(&w_tilde);
    if qr.rank() < k {
        let names: Vec<&str> = qr
            .collinear_columns()
            .into_iter()
            .map(|j| design.w_names[j].as_str())
            .collect();
        return Err(Error::numerical(format!(
            "rank-deficient covariate block in residualization; collinear columns: {}",
            names.join(", ")
        )));
    }
    let delta = qr.solve(&sat_tilde).expect("full rank checked");
    let fitted = w_tilde.mat_vec(&delta);
    Ok(sat_tilde.iter().zip(fitted).map(|(s, f)| s - f).collect())
}

/// Leave-one-out instrument aligned to design rows.
#[derive(Debug, Clone)]
pub struct InstrumentVector {
    /// Instrument values; only meaningful where `keep` is true.
    pub z: Vec<f64>,
    /// Row mask: true where the agent has at least two scored calls.
    pub keep: Vec<bool>,
    /// Calls dropped because their agent has no other scored call.
    pub dropped_rows: Vec<String>,
    /// Scored call count per agent label.
    pub agent_call_counts: BTreeMap<String, u32>,
}

impl InstrumentVector {
    pub fn n_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// z\[i\] = (sum of agent a(i)'s residuals − residual\[i\]) / (count − 1),
/// via per-agent totals. Rows of singleton agents are masked out.
pub fn leave_one_out(
    residuals: &[f64],
    agent_ids: &[u32],
    agent_names: &[String],
    row_call_ids: &[String],
) -> InstrumentVector {
    assert_eq!(residuals.len(), agent_ids.len());
    let n_agents = agent_names.len();
    let mut totals = vec![0.0f64; n_agents];
    let mut counts = vec![0u32; n_agents];
    for (i, &a) in agent_ids.iter().enumerate() {
        totals[a as usize] += residuals[i];
        counts[a as usize] += 1;
    }
    let mut z = vec![0.0; residuals.len()];
    let mut keep = vec![false; residuals.len()];
    let mut dropped = vec![];
    for (i, &a) in agent_ids.iter().enumerate() {
        let c = counts[a as usize];
        if c >= 2 {
            z[i] = (totals[a as usize] - residuals[i]) / f64::from(c - 1);
            keep[i] = true;
        } else {
            dropped.push(row_call_ids[i].clone());
        }
    }
    let agent_call_counts = agent_names
        .iter()
        .enumerate()
        .filter(|(a, _)| counts[*a] > 0)
        .map(|(a, name)| (name.clone(), counts[a]))
        .collect();
    InstrumentVector {
        z,
        keep,
        dropped_rows: dropped,
        agent_call_counts,
    }
}

/// Full instrument construction from a design: residualize, then
/// leave-one-out by agent.
pub fn build_instrument(design: &DesignMatrix, include_baseline: bool) -> Result<InstrumentVector> {
    let residuals = residualize(design, include_baseline)?;
    Ok(leave_one_out(
        &residuals,
        &design.agent_ids,
        &design.agent_names,
        &design.row_call_ids,
    ))
}

/// The naive variant that skips the span fixed effects, for validity
/// diagnostics of the unconditioned design.
pub fn build_instrument_no_spans(
    design: &DesignMatrix,
    include_baseline: bool,
) -> Result<InstrumentVector> {
    let residuals = residualize_with(design, false, include_baseline)?;
    Ok(leave_one_out(
        &residuals,
        &design.agent_ids,
        &design.agent_names,
        &design.row_call_ids,
    ))
}
