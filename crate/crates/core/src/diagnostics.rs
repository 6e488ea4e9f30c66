//! Instrument-validity evidence: waiting-time/agent-dummy models and
//! randomization (balance) tests.
//!
//! Neither test can prove the exclusion restriction; they probe the two
//! observable symptoms of multi-queue confounding. If agent assignment
//! were random, no agent should systematically face longer waiting times,
//! and neither the raw score nor the leave-one-out instrument should be
//! predictable from baseline call characteristics once time spans are
//! controlled for.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::absorb::absorb_fixed_effects;
use crate::dist::f_upper_p;
use crate::estimator::{robust_vcov, ClusterSpec};
use crate::ingest::CallRecord;
use crate::instrument::InstrumentVector;
use crate::linalg::{qr_decompose, quad_form_inv, sym_eigen, Mat};
use crate::panel::{DesignMatrix, TimeSpanIndex};
use crate::{Error, Result};

/// Joint-test report in the layout of the publication-style diagnostic tables.
#[derive(Debug, Clone)]
pub struct DiagnosticReport {
    pub test_name: String,
    pub with_time_controls: bool,
    pub joint_f: f64,
    pub p_value: f64,
    /// Numerator degrees of freedom (number of tested coefficients).
    pub df1: f64,
    /// Denominator degrees of freedom used for the p-value.
    pub df2: f64,
    pub r2_full: f64,
    pub r2_restricted: f64,
    /// Net share of variation explained by the tested block.
    pub net_variation: f64,
    pub per_covariate: Vec<(String, f64, f64)>,
    /// Block columns dropped as non-estimable (constant within spans).
    pub dropped_columns: Vec<String>,
    pub n_obs: usize,
}

/// Regress `y` on a block of columns (optionally absorbing span effects)
/// and jointly test that every block coefficient is zero, with the
/// requested cluster-robust variance.
fn block_joint_test(
    test_name: &str,
    y: &[f64],
    block_cols: &[Vec<f64>],
    block_names: &[String],
    span: &[u32],
    agent: &[u32],
    with_time_controls: bool,
    cluster: &ClusterSpec,
    drop_collinear: bool,
    time_cluster: Option<&[u32]>,
    min_support: f64,
) -> Result<DiagnosticReport> {
    let n = y.len();
    let k = block_cols.len();
    if n == 0 || k == 0 {
        return Err(Error::data("empty diagnostic regression"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();

    // Absorb spans (or just the grand mean) from y and the block.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(1 + k);
    cols.push(y.to_vec());
    cols.extend(block_cols.iter().cloned());
    let zeros = vec![0u32; n];
    let factor: &[u32] = if with_time_controls { span } else { &zeros };
    let absorbed = absorb_fixed_effects(&mut cols, &[factor])?;
    let y_tilde = cols.remove(0);
    let rss_restricted: f64 = y_tilde.iter().map(|v| v * v).sum();

    let mut block_names: Vec<String> = block_names.to_vec();
    let mut dropped_columns: Vec<String> = vec![];
    let mut x = Mat::from_cols(&cols);
    let mut qr = qr_decompose(&x);
    if qr.rank() < block_names.len() {
        let collinear = qr.collinear_columns();
        if !drop_collinear {
            let names: Vec<&str> = collinear.iter().map(|&j| block_names[j].as_str()).collect();
            return Err(Error::numerical(format!(
                "rank-deficient diagnostic block; collinear columns: {}",
                names.join(", ")
            )));
        }
        // Drop non-estimable columns (e.g. an agent whose calls are
        // alone in their spans) and refit the reduced block.
        for &j in collinear.iter().rev() {
            dropped_columns.push(block_names.remove(j));
            cols.remove(j);
        }
        dropped_columns.reverse();
        if cols.is_empty() {
            return Ok(DiagnosticReport {
                test_name: test_name.to_string(),
                with_time_controls,
                joint_f: 0.0,
                p_value: 1.0,
                df1: 0.0,
                df2: 0.0,
                r2_full: if tss > 0.0 {
                    1.0 - rss_restricted / tss
                } else {
                    0.0
                },
                r2_restricted: if tss > 0.0 {
                    1.0 - rss_restricted / tss
                } else {
                    0.0
                },
                net_variation: 0.0,
                per_covariate: vec![],
                dropped_columns,
                n_obs: n,
            });
        }
        x = Mat::from_cols(&cols);
        qr = qr_decompose(&x);
    }
    let k = block_names.len();
    let beta = qr.solve(&y_tilde).expect("full rank checked");
    let fitted = x.mat_vec(&beta);
    let resid: Vec<f64> = y_tilde.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss_full: f64 = resid.iter().map(|v| v * v).sum();

    let (r2_full, r2_restricted) = if tss > 0.0 {
        (1.0 - rss_full / tss, 1.0 - rss_restricted / tss)
    } else {
        (0.0, 0.0)
    };

    let bread = qr.xtx_inverse().expect("full rank checked");
    let time_ids = time_cluster.unwrap_or(span);
    let k_total = crate::estimator::effective_k(k, &absorbed, &[factor], cluster, agent, time_ids);
    let vcov = robust_vcov(&x, &resid, &bread, k_total, cluster, agent, time_ids)?;

    // Restrict the test to well-supported directions of the absorbed
    // block design: an eigenvalue of the gram matrix is the effective
    // observation count behind that contrast, and contrasts resting on a
    // handful of boundary calls cannot be priced by the cluster variance.
    let (wald, q_eff) = if beta.iter().all(|b| *b == 0.0) {
        (0.0, k)
    } else if min_support > 0.0 {
        // The floor scales down for small samples where even fully mixed
        // contrasts carry modest gram mass.
        let floor = min_support.min(0.02 * n as f64);
        let (evals, evecs) = sym_eigen(&x.gram());
        let keep: Vec<usize> = (0..k).filter(|&j| evals[j] >= floor).collect();
        if keep.is_empty() {
            (0.0, 0)
        } else {
            let q_eff = keep.len();
            let mut proj_b = vec![0.0; q_eff];
            for (r, &j) in keep.iter().enumerate() {
                for i in 0..k {
                    proj_b[r] += evecs.get(i, j) * beta[i];
                }
            }
            let mut proj_v = Mat::zeros(q_eff, q_eff);
            for (ra, &ja) in keep.iter().enumerate() {
                for (rb, &jb) in keep.iter().enumerate() {
                    let mut s = 0.0;
                    for i in 0..k {
                        for l in 0..k {
                            s += evecs.get(i, ja) * vcov.v.get(i, l) * evecs.get(l, jb);
                        }
                    }
                    proj_v.set(ra, rb, s);
                }
            }
            let w = quad_form_inv(&proj_v, &proj_b).ok_or_else(|| {
                Error::numerical("joint test variance matrix has no usable spectrum")
            })?;
            (w, q_eff)
        }
    } else {
        let w = quad_form_inv(&vcov.v, &beta)
            .ok_or_else(|| Error::numerical("joint test variance matrix has no usable spectrum"))?;
        (w, k)
    };
    // Hotelling-style correction: with G clusters, a Wald on q
    // restrictions follows q(G-1)/(G-q) * F(q, G-q), not chi2(q)/q.
    let df1 = (q_eff.max(1)) as f64;
    let g_eff = vcov.inference_dof + 1.0;
    let (joint_f, df2) = if q_eff == 0 {
        (0.0, 1.0)
    } else if g_eff > df1 + 1.0 {
        (wald * (g_eff - df1) / (df1 * (g_eff - 1.0)), g_eff - df1)
    } else {
        // Too few clusters to size the test; fall back to the raw scaling.
        (wald / df1, 1.0)
    };

    let per_covariate = block_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), beta[j], sqrt(vcov.v.get(j, j).max(0.0))))
        .collect();

    Ok(DiagnosticReport {
        test_name: test_name.to_string(),
        with_time_controls,
        joint_f,
        p_value: if joint_f == 0.0 {
            1.0
        } else {
            f_upper_p(joint_f, df1, df2)
        },
        df1,
        df2,
        r2_full,
        r2_restricted,
        net_variation: r2_full - r2_restricted,
        per_covariate,
        dropped_columns,
        n_obs: n,
    })
}

/// Regress waiting time on agent dummies (absorbing span effects when
/// requested) and jointly test that all agent coefficients are zero.
/// Under random assignment no agent should face systematically different
/// waiting times.
pub fn waiting_time_check(
    calls: &[CallRecord],
    spans: &TimeSpanIndex,
    with_time_controls: bool,
) -> Result<DiagnosticReport> {
    // Queue states are serially correlated far beyond a span, so the
    // variance clusters on calendar days (the autocorrelation correction
    // this test needs); agent clustering would leave fewer clusters than
    // tested coefficients.
    let cluster = ClusterSpec::OneWay(crate::estimator::ClusterField::Span);
    // Keep served calls of agents with at least two calls.
    let mut agent_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in calls.iter().filter(|c| !c.abandoned) {
        *agent_counts.entry(c.agent_id.as_str()).or_default() += 1;
    }
    let rows: Vec<&CallRecord> = calls
        .iter()
        .filter(|c| {
            !c.abandoned && agent_counts.get(c.agent_id.as_str()).copied().unwrap_or(0) >= 2
        })
        .collect();
    let mut agents: Vec<&str> = rows.iter().map(|c| c.agent_id.as_str()).collect();
    agents.sort_unstable();
    agents.dedup();
    if agents.len() < 2 {
        return Err(Error::data("waiting-time check needs at least 2 agents"));
    }

    // Reference agent: the one with the most calls (ties to the smallest
    // label), dropped from the dummy block.
    let reference = agents
        .iter()
        .max_by_key(|a| (agent_counts[**a], core::cmp::Reverse(**a)))
        .copied()
        .expect("nonempty agent set");

    let y: Vec<f64> = rows.iter().map(|c| c.waiting_time).collect();
    let mut block_cols = vec![];
    let mut block_names = vec![];
    for a in agents.iter().filter(|a| **a != reference) {
        block_names.push(format!("agent:{a}"));
        block_cols.push(
            rows.iter()
                .map(|c| f64::from(u8::from(c.agent_id == *a)))
                .collect(),
        );
    }

    // Dense span and agent factors for absorption and clustering.
    let mut span_raw = Vec::with_capacity(rows.len());
    for c in &rows {
        span_raw.push(
            spans.span_of(&c.call_id).ok_or_else(|| {
                Error::data(format!("call {:?} has no span assignment", c.call_id))
            })?,
        );
    }
    let span_levels: BTreeMap<u64, u32> = {
        let mut distinct: Vec<u64> = span_raw.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i as u32))
            .collect()
    };
    let span: Vec<u32> = span_raw.iter().map(|s| span_levels[s]).collect();
    let agent_levels: BTreeMap<&str, u32> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| (*a, i as u32))
        .collect();
    let agent: Vec<u32> = rows
        .iter()
        .map(|c| agent_levels[c.agent_id.as_str()])
        .collect();

    // Queue states are serially correlated well past one span, so the
    // time dimension of the cluster-robust variance uses calendar days.
    let day_ids = day_factor(rows.iter().map(|c| c.start_time));

    block_joint_test(
        "waiting_time",
        &y,
        &block_cols,
        &block_names,
        &span,
        &agent,
        with_time_controls,
        &cluster,
        true,
        Some(&day_ids),
        200.0,
    )
}

/// Dense calendar-day factor from timestamps.
fn day_factor(times: impl Iterator<Item = i64>) -> Vec<u32> {
    let raw: Vec<i64> = times.map(|t| t.div_euclid(86_400)).collect();
    let levels: BTreeMap<i64, u32> = {
        let mut d: Vec<i64> = raw.clone();
        d.sort_unstable();
        d.dedup();
        d.into_iter()
            .enumerate()
            .map(|(i, v)| (v, i as u32))
            .collect()
    };
    raw.into_iter().map(|d| levels[&d]).collect()
}

/// Which variable the randomization test explains from baseline
/// covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceTarget {
    /// The raw normalized score.
    Sat,
    /// The leave-one-out instrument.
    Instrument,
}

impl BalanceTarget {
    pub fn label(self) -> &'static str {
        match self {
            BalanceTarget::Sat => "sat",
            BalanceTarget::Instrument => "instrument",
        }
    }
}

/// Randomization test: regress the score (or the instrument) on the
/// baseline covariates and jointly test all covariate coefficients.
/// Conditional independence predicts a null result once time spans are
/// controlled for.
pub fn balance_test(
    design: &DesignMatrix,
    target: BalanceTarget,
    iv: Option<&InstrumentVector>,
    with_time_controls: bool,
    cluster: &ClusterSpec,
) -> Result<DiagnosticReport> {
    let k = design.w.cols();
    if k == 0 {
        return Err(Error::data("balance test needs baseline covariates"));
    }
    let (y, mask): (Vec<f64>, Option<&[bool]>) = match target {
        BalanceTarget::Sat => (design.sat.clone(), None),
        BalanceTarget::Instrument => {
            let iv = iv.ok_or_else(|| {
                Error::config("balance test on the instrument needs the instrument vector")
            })?;
            (iv.z.clone(), Some(&iv.keep))
        }
    };
    let keep = |v: &[f64]| -> Vec<f64> {
        match mask {
            None => v.to_vec(),
            Some(m) => v
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(x, _)| *x)
                .collect(),
        }
    };
    let keep_u = |v: &[u32]| -> Vec<u32> {
        match mask {
            None => v.to_vec(),
            Some(m) => v
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(x, _)| *x)
                .collect(),
        }
    };
    let y = keep(&y);
    let block_cols: Vec<Vec<f64>> = (0..k).map(|j| keep(design.w.col(j))).collect();
    let span = keep_u(&design.span_ids);
    let agent = keep_u(&design.agent_ids);

    block_joint_test(
        &format!("balance:{}", target.label()),
        &y,
        &block_cols,
        &design.w_names,
        &span,
        &agent,
        with_time_controls,
        cluster,
        false,
        None,
        0.0,
    )
}
