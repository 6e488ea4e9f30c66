//! OLS and 2SLS with fixed-effect absorption, heteroskedasticity-robust
//! and cluster-robust sandwich inference, and first-stage strength.
//!
//! The solver is QR on the absorbed (low-dimensional) columns; fixed
//! effects are never materialized as dense dummies outside of test
//! oracles. Two-way clustering combines variances by inclusion-exclusion
//! over the intersection clustering, with spectral truncation if the
//! target variance comes out negative. With a single instrument, the
//! robust first-stage F equals the squared robust t-statistic of the
//! instrument, which is the effective-F equivalence reported here.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::absorb::{absorb_fixed_effects, AbsorbOutcome};
use crate::dist::t_two_sided_p;
use crate::instrument::InstrumentVector;
use crate::linalg::{qr_decompose, truncate_psd, Mat, PivotedQr};
use crate::panel::DesignMatrix;
use crate::{Error, Result};

/// Cap for degenerate first-stage F statistics.
pub const FIRST_STAGE_F_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ols,
    Tsls,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Ols => "OLS",
            Method::Tsls => "2SLS",
        }
    }
}

/// Cluster dimension, resolved against the design's factor vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterField {
    Agent,
    Span,
}

/// Requested variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterSpec {
    /// Heteroskedasticity-robust sandwich (HC1 scaling).
    HetRobust,
    OneWay(ClusterField),
    TwoWay(ClusterField, ClusterField),
}

/// Fit request for one model.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub method: Method,
    /// Spans are always absorbed; agent effects optionally.
    pub absorb_agent: bool,
    /// Baseline covariate selection by name; None keeps all.
    pub covariates: Option<Vec<String>>,
    pub cluster: ClusterSpec,
    /// First-stage F below this attaches a weak-instrument warning.
    pub weak_f_warn: f64,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            method: Method::Ols,
            absorb_agent: false,
            covariates: None,
            cluster: ClusterSpec::TwoWay(ClusterField::Agent, ClusterField::Span),
            weak_f_warn: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub iterations: u32,
    pub max_delta: f64,
}

/// One fitted model, ready for rendering or machine serialization.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub method: Method,
    pub outcome: String,
    pub regressor: String,
    pub instrument: Option<String>,
    pub coef: f64,
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub first_stage_f: Option<f64>,
    pub n_obs: usize,
    pub n_spans: usize,
    pub n_clusters_agent: Option<usize>,
    pub n_clusters_span: Option<usize>,
    /// Rows dropped because the agent had no other scored call.
    pub dropped_singletons: usize,
    pub convergence: Convergence,
    pub variance_truncated: bool,
    pub weak_instrument: bool,
    pub inference_dof: f64,
}

/// Data staged for one fit: masked, column-selected, not yet absorbed.
struct Prepared {
    y: Vec<f64>,
    sat: Vec<f64>,
    z: Option<Vec<f64>>,
    w_cols: Vec<Vec<f64>>,
    w_names: Vec<String>,
    span: Vec<u32>,
    agent: Vec<u32>,
    n_spans: usize,
    outcome: String,
    regressor: String,
}

fn distinct(ids: &[u32]) -> usize {
    let mut seen: BTreeMap<u32, ()> = BTreeMap::new();
    for &v in ids {
        seen.insert(v, ());
    }
    seen.len()
}

fn mask_f64(v: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    match mask {
        None => v.to_vec(),
        Some(m) => v
            .iter()
            .zip(m)
            .filter(|(_, &k)| k)
            .map(|(x, _)| *x)
            .collect(),
    }
}

fn mask_u32(v: &[u32], mask: Option<&[bool]>) -> Vec<u32> {
    match mask {
        None => v.to_vec(),
        Some(m) => v
            .iter()
            .zip(m)
            .filter(|(_, &k)| k)
            .map(|(x, _)| *x)
            .collect(),
    }
}

fn prepare(
    design: &DesignMatrix,
    spec: &FitSpec,
    mask: Option<&[bool]>,
    z: Option<&[f64]>,
) -> Result<Prepared> {
    let selected: Vec<usize> = match &spec.covariates {
        None => (0..design.w.cols()).collect(),
        Some(names) => {
            let mut idx = vec![];
            for name in names {
                let j = design
                    .w_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::config(format!("unknown covariate {name:?}")))?;
                idx.push(j);
            }
            idx
        }
    };
    let w_cols: Vec<Vec<f64>> = selected
        .iter()
        .map(|&j| mask_f64(design.w.col(j), mask))
        .collect();
    let w_names: Vec<String> = selected
        .iter()
        .map(|&j| design.w_names[j].clone())
        .collect();
    let span = mask_u32(&design.span_ids, mask);
    let n = span.len();
    if n == 0 {
        return Err(Error::data("empty estimation sample"));
    }
    Ok(Prepared {
        y: mask_f64(&design.y, mask),
        sat: mask_f64(&design.sat, mask),
        z: z.map(|v| mask_f64(v, mask)),
        w_cols,
        w_names,
        n_spans: distinct(&span),
        span,
        agent: mask_u32(&design.agent_ids, mask),
        outcome: design.outcome_name.clone(),
        regressor: design.score.label().to_string(),
    })
}

/// Absorb the span (and optionally agent) effects from every staged
/// column in place.
fn absorb_all(p: &mut Prepared, absorb_agent: bool) -> Result<AbsorbOutcome> {
    let had_z = p.z.is_some();
    let mut cols: Vec<Vec<f64>> = vec![core::mem::take(&mut p.y), core::mem::take(&mut p.sat)];
    if let Some(z) = p.z.take() {
        cols.push(z);
    }
    cols.append(&mut p.w_cols);
    let outcome = {
        let span = p.span.as_slice();
        let agent = p.agent.as_slice();
        let factors: Vec<&[u32]> = if absorb_agent {
            vec![span, agent]
        } else {
            vec![span]
        };
        absorb_fixed_effects(&mut cols, &factors)?
    };
    let mut iter = cols.into_iter();
    p.y = iter.next().unwrap();
    p.sat = iter.next().unwrap();
    if had_z {
        p.z = iter.next();
    }
    p.w_cols = iter.collect();
    Ok(outcome)
}

pub(crate) struct VcovResult {
    pub(crate) v: Mat,
    pub(crate) truncated: bool,
    pub(crate) inference_dof: f64,
    pub(crate) n_clusters_agent: Option<usize>,
    pub(crate) n_clusters_span: Option<usize>,
}

/// Meat matrix Σ_g s_g s_gᵀ with s_g = Σ_{i∈g} q_i e_i. `ids: None`
/// treats every row as its own group.
fn meat(q: &Mat, resid: &[f64], ids: Option<&[u32]>) -> Mat {
    let k = q.cols();
    let n = q.rows();
    let mut m = Mat::zeros(k, k);
    match ids {
        None => {
            for i in 0..n {
                let e = resid[i];
                for a in 0..k {
                    let qa = q.get(i, a) * e;
                    if qa == 0.0 {
                        continue;
                    }
                    for b in a..k {
                        let add = qa * q.get(i, b) * e;
                        let prev = m.get(a, b);
                        m.set(a, b, prev + add);
                    }
                }
            }
        }
        Some(ids) => {
            let n_groups = ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
            let mut scores = vec![0.0f64; n_groups * k];
            for i in 0..n {
                let e = resid[i];
                let base = ids[i] as usize * k;
                for a in 0..k {
                    scores[base + a] += q.get(i, a) * e;
                }
            }
            for g in 0..n_groups {
                let s = &scores[g * k..(g + 1) * k];
                for a in 0..k {
                    if s[a] == 0.0 {
                        continue;
                    }
                    for b in a..k {
                        let prev = m.get(a, b);
                        m.set(a, b, prev + s[a] * s[b]);
                    }
                }
            }
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let v = m.get(a, b);
            m.set(b, a, v);
        }
    }
    m
}

/// True when every level of `factor` maps into a single level of
/// `clusters` (the factor is nested within the clustering).
pub(crate) fn is_nested(factor: &[u32], clusters: &[u32]) -> bool {
    let mut seen: BTreeMap<u32, u32> = BTreeMap::new();
    for (&f, &c) in factor.iter().zip(clusters) {
        match seen.entry(f) {
            alloc::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            alloc::collections::btree_map::Entry::Occupied(e) => {
                if *e.get() != c {
                    return false;
                }
            }
        }
    }
    true
}

/// Parameter count for small-sample corrections: regression columns plus
/// absorbed fixed-effect dof, excluding factors nested within an active
/// cluster dimension (a nested factor does not reduce the effective
/// number of clusters, so it does not consume dof for clustered
/// inference).
pub(crate) fn effective_k(
    k_cols: usize,
    absorbed: &AbsorbOutcome,
    factors: &[&[u32]],
    spec: &ClusterSpec,
    agent: &[u32],
    span: &[u32],
) -> usize {
    let active: Vec<&[u32]> = match spec {
        ClusterSpec::HetRobust => vec![],
        ClusterSpec::OneWay(f) => vec![resolve(*f, agent, span)],
        ClusterSpec::TwoWay(a, b) => {
            vec![resolve(*a, agent, span), resolve(*b, agent, span)]
        }
    };
    fn resolve<'a>(f: ClusterField, agent: &'a [u32], span: &'a [u32]) -> &'a [u32] {
        match f {
            ClusterField::Agent => agent,
            ClusterField::Span => span,
        }
    }
    let mut df = absorbed.df_absorbed;
    for (i, factor) in factors.iter().enumerate() {
        if active.iter().any(|c| is_nested(factor, c)) {
            df = df.saturating_sub(absorbed.factor_levels[i]);
        }
    }
    k_cols + df
}

/// Dense ids for the intersection clustering of two factors.
fn intersection_ids(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut index: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut out = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let next = index.len() as u32;
        let id = *index.entry((x, y)).or_insert(next);
        out.push(id);
    }
    out
}

/// Sandwich covariance for the staged regression. `k_total` counts
/// estimated parameters including absorbed fixed effects. The agent and
/// span vectors carry the cluster assignments.
pub(crate) fn robust_vcov(
    q: &Mat,
    resid: &[f64],
    bread: &Mat,
    k_total: usize,
    spec: &ClusterSpec,
    agent: &[u32],
    span: &[u32],
) -> Result<VcovResult> {
    let cluster_ids = |field: ClusterField| -> &[u32] {
        match field {
            ClusterField::Agent => agent,
            ClusterField::Span => span,
        }
    };
    let n = q.rows() as f64;
    let k = k_total as f64;
    let mut n_clusters_agent = None;
    let mut n_clusters_span = None;
    let mut note_count = |field: ClusterField, g: usize| match field {
        ClusterField::Agent => n_clusters_agent = Some(g),
        ClusterField::Span => n_clusters_span = Some(g),
    };

    let check_groups = |field: ClusterField, g: usize| -> Result<()> {
        if g < 2 {
            Err(Error::numerical(format!(
                "cluster factor {:?} has a single cluster: no variation to estimate",
                field
            )))
        } else {
            Ok(())
        }
    };

    let (m, correction, dof) = match spec {
        ClusterSpec::HetRobust => {
            let m = meat(q, resid, None);
            (m, n / (n - k), n - k)
        }
        ClusterSpec::OneWay(f) => {
            let ids = cluster_ids(*f);
            let g = distinct(ids);
            check_groups(*f, g)?;
            note_count(*f, g);
            let gf = g as f64;
            let m = meat(q, resid, Some(ids));
            (m, gf / (gf - 1.0) * (n - 1.0) / (n - k), gf - 1.0)
        }
        ClusterSpec::TwoWay(fa, fb) => {
            let ids_a = cluster_ids(*fa);
            let ids_b = cluster_ids(*fb);
            let ga = distinct(ids_a);
            let gb = distinct(ids_b);
            check_groups(*fa, ga)?;
            check_groups(*fb, gb)?;
            note_count(*fa, ga);
            note_count(*fb, gb);
            let inter = intersection_ids(ids_a, ids_b);
            let mut m = meat(q, resid, Some(ids_a));
            m.add_scaled(&meat(q, resid, Some(ids_b)), 1.0);
            m.add_scaled(&meat(q, resid, Some(&inter)), -1.0);
            let gmin = ga.min(gb) as f64;
            (m, gmin / (gmin - 1.0) * (n - 1.0) / (n - k), gmin - 1.0)
        }
    };

    let mut v = bread.mul(&m).mul(bread);
    v.scale(correction);
    // Inclusion-exclusion can produce an indefinite matrix; repair by
    // spectral truncation when the target variance goes negative.
    let mut truncated = false;
    if v.get(0, 0) < 0.0 {
        let (fixed, t) = truncate_psd(&v);
        v = fixed;
        truncated = t;
    }
    Ok(VcovResult {
        v,
        truncated,
        inference_dof: dof,
        n_clusters_agent,
        n_clusters_span,
    })
}

fn rank_check(qr: &PivotedQr, names: &[String], context: &str) -> Result<()> {
    if qr.rank() < names.len() {
        let collinear: Vec<&str> = qr
            .collinear_columns()
            .into_iter()
            .map(|j| names[j].as_str())
            .collect();
        return Err(Error::numerical(format!(
            "rank-deficient {context}; collinear columns: {}",
            collinear.join(", ")
        )));
    }
    Ok(())
}

/// First-stage regression internals shared by `fit_tsls` and
/// `first_stage_f`.
struct FirstStage {
    fitted: Vec<f64>,
    f_stat: f64,
}

fn run_first_stage(p: &Prepared, spec: &FitSpec, k_total: usize) -> Result<FirstStage> {
    let z = p.z.as_ref().expect("first stage requires an instrument");
    let mut cols: Vec<Vec<f64>> = vec![z.clone()];
    cols.extend(p.w_cols.iter().cloned());
    let mut names: Vec<String> = vec!["instrument".to_string()];
    names.extend(p.w_names.iter().cloned());
    let x1 = Mat::from_cols(&cols);
    let qr = qr_decompose(&x1);
    rank_check(&qr, &names, "first stage")?;
    let gamma = qr.solve(&p.sat).expect("full rank checked");
    let fitted = x1.mat_vec(&gamma);
    let resid: Vec<f64> = p.sat.iter().zip(&fitted).map(|(s, f)| s - f).collect();
    let bread = qr.xtx_inverse().expect("full rank checked");
    let vcov = robust_vcov(
        &x1,
        &resid,
        &bread,
        k_total,
        &spec.cluster,
        &p.agent,
        &p.span,
    )?;
    let var_z = vcov.v.get(0, 0);
    let f_stat = if var_z > 0.0 {
        let f = gamma[0] * gamma[0] / var_z;
        if f.is_finite() {
            f.min(FIRST_STAGE_F_CAP)
        } else {
            FIRST_STAGE_F_CAP
        }
    } else {
        FIRST_STAGE_F_CAP
    };
    Ok(FirstStage { fitted, f_stat })
}

/// Ordinary least squares of the outcome on the (absorbed) score and
/// baseline covariates.
pub fn fit_ols(design: &DesignMatrix, spec: &FitSpec) -> Result<EstimateReport> {
    let mut p = prepare(design, spec, None, None)?;
    let absorbed = absorb_all(&mut p, spec.absorb_agent)?;

    let mut cols: Vec<Vec<f64>> = vec![p.sat.clone()];
    cols.extend(p.w_cols.iter().cloned());
    let mut names: Vec<String> = vec![p.regressor.clone()];
    names.extend(p.w_names.iter().cloned());
    let x = Mat::from_cols(&cols);
    let qr = qr_decompose(&x);
    rank_check(&qr, &names, "design after absorption")?;
    let beta = qr.solve(&p.y).expect("full rank checked");
    let fitted = x.mat_vec(&beta);
    let resid: Vec<f64> = p.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let bread = qr.xtx_inverse().expect("full rank checked");

    let k_total = {
        let factors: Vec<&[u32]> = if spec.absorb_agent {
            vec![&p.span, &p.agent]
        } else {
            vec![&p.span]
        };
        effective_k(
            x.cols(),
            &absorbed,
            &factors,
            &spec.cluster,
            &p.agent,
            &p.span,
        )
    };
    let vcov = robust_vcov(
        &x,
        &resid,
        &bread,
        k_total,
        &spec.cluster,
        &p.agent,
        &p.span,
    )?;
    let se = sqrt(vcov.v.get(0, 0).max(0.0));
    let t = if se > 0.0 {
        beta[0] / se
    } else {
        f64::INFINITY
    };

    Ok(EstimateReport {
        method: Method::Ols,
        outcome: p.outcome.clone(),
        regressor: p.regressor.clone(),
        instrument: None,
        coef: beta[0],
        se,
        t_stat: t,
        p_value: t_two_sided_p(t, vcov.inference_dof),
        first_stage_f: None,
        n_obs: p.y.len(),
        n_spans: p.n_spans,
        n_clusters_agent: vcov.n_clusters_agent,
        n_clusters_span: vcov.n_clusters_span,
        dropped_singletons: 0,
        convergence: Convergence {
            iterations: absorbed.iterations,
            max_delta: absorbed.max_delta,
        },
        variance_truncated: vcov.truncated,
        weak_instrument: false,
        inference_dof: vcov.inference_dof,
    })
}

/// Two-stage least squares with the leave-one-out instrument. Rows the
/// instrument dropped (singleton agents) are excluded consistently from
/// every column. Standard errors use the IV sandwich with residuals from
/// the original (not fitted) regressor.
pub fn fit_tsls(
    design: &DesignMatrix,
    iv: &InstrumentVector,
    spec: &FitSpec,
) -> Result<EstimateReport> {
    if iv.z.len() != design.n_rows() {
        return Err(Error::data(
            "instrument is not aligned with the design rows",
        ));
    }
    let mut p = prepare(design, spec, Some(&iv.keep), Some(&iv.z))?;
    let absorbed = absorb_all(&mut p, spec.absorb_agent)?;
    let k_total = {
        let factors: Vec<&[u32]> = if spec.absorb_agent {
            vec![&p.span, &p.agent]
        } else {
            vec![&p.span]
        };
        effective_k(
            1 + p.w_cols.len(),
            &absorbed,
            &factors,
            &spec.cluster,
            &p.agent,
            &p.span,
        )
    };

    let first = run_first_stage(&p, spec, k_total)?;
    let weak = first.f_stat < spec.weak_f_warn;

    // Second stage on the projected regressor.
    let mut cols: Vec<Vec<f64>> = vec![first.fitted.clone()];
    cols.extend(p.w_cols.iter().cloned());
    let mut names: Vec<String> = vec![format!("fitted {}", p.regressor)];
    names.extend(p.w_names.iter().cloned());
    let x2 = Mat::from_cols(&cols);
    let qr = qr_decompose(&x2);
    rank_check(&qr, &names, "second stage")?;
    let beta = qr.solve(&p.y).expect("full rank checked");
    let bread = qr.xtx_inverse().expect("full rank checked");

    // Structural residuals with the original regressor.
    let mut resid = p.y.clone();
    for i in 0..resid.len() {
        resid[i] -= beta[0] * p.sat[i];
        for (j, w) in p.w_cols.iter().enumerate() {
            resid[i] -= beta[j + 1] * w[i];
        }
    }

    let vcov = robust_vcov(
        &x2,
        &resid,
        &bread,
        k_total,
        &spec.cluster,
        &p.agent,
        &p.span,
    )?;
    let se = sqrt(vcov.v.get(0, 0).max(0.0));
    let t = if se > 0.0 {
        beta[0] / se
    } else {
        f64::INFINITY
    };

    Ok(EstimateReport {
        method: Method::Tsls,
        outcome: p.outcome.clone(),
        regressor: p.regressor.clone(),
        instrument: Some(format!("agent_loo_{}", p.regressor)),
        coef: beta[0],
        se,
        t_stat: t,
        p_value: t_two_sided_p(t, vcov.inference_dof),
        first_stage_f: Some(first.f_stat),
        n_obs: p.y.len(),
        n_spans: p.n_spans,
        n_clusters_agent: vcov.n_clusters_agent,
        n_clusters_span: vcov.n_clusters_span,
        dropped_singletons: iv.dropped_rows.len(),
        convergence: Convergence {
            iterations: absorbed.iterations,
            max_delta: absorbed.max_delta,
        },
        variance_truncated: vcov.truncated,
        weak_instrument: weak,
        inference_dof: vcov.inference_dof,
    })
}

/// Robust first-stage F: the squared robust t-statistic of the single
/// instrument, capped at 1e6 for degenerate fits.
pub fn first_stage_f(design: &DesignMatrix, iv: &InstrumentVector, spec: &FitSpec) -> Result<f64> {
    if iv.z.len() != design.n_rows() {
        return Err(Error::data(
            "instrument is not aligned with the design rows",
        ));
    }
    let mut p = prepare(design, spec, Some(&iv.keep), Some(&iv.z))?;
    let absorbed = absorb_all(&mut p, spec.absorb_agent)?;
    let k_total = {
        let factors: Vec<&[u32]> = if spec.absorb_agent {
            vec![&p.span, &p.agent]
        } else {
            vec![&p.span]
        };
        effective_k(
            1 + p.w_cols.len(),
            &absorbed,
            &factors,
            &spec.cluster,
            &p.agent,
            &p.span,
        )
    };
    Ok(run_first_stage(&p, spec, k_total)?.f_stat)
}
