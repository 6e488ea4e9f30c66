//! End-to-end orchestration: parse output -> filter -> families -> labels
//! -> spans -> design -> instrument -> fits / diagnostics.
//!
//! Recontact labels are computed over every identifiable call (including
//! transferred ones: a transferred call is still a contact), while the
//! estimation sample keeps only calls with quasi-random assignment. The
//! exclusion counts of both stages are carried along so sample sizes are
//! auditable.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diagnostics::{balance_test, waiting_time_check, BalanceTarget, DiagnosticReport};
use crate::estimator::{
    fit_ols, fit_tsls, ClusterField, ClusterSpec, EstimateReport, FitSpec, Method,
};
use crate::family::{build_partition, flag_agencies, FamilyPartition, IdCoverage};
use crate::ingest::{filter_calls, label_recontact, CallRecord, FilterCounts, OutcomeLabel};
use crate::instrument::{build_instrument, build_instrument_no_spans, InstrumentVector};
use crate::panel::{
    assign_spans, build_design, default_origin, DesignMatrix, Outcome, Score, TimeSpanIndex,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub window_minutes: u32,
    pub horizon_hours: u32,
    pub score: Score,
    pub outcome: Outcome,
    pub cluster: ClusterSpec,
    pub agency_threshold: u32,
    /// Span origin; defaults to midnight UTC of the first call.
    pub origin: Option<i64>,
    /// Residualize the score on baseline covariates as well as spans.
    pub residualize_baseline: bool,
    pub weak_f_warn: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            window_minutes: 20,
            horizon_hours: 24,
            score: Score::Csat,
            outcome: Outcome::Recontact,
            cluster: ClusterSpec::TwoWay(ClusterField::Agent, ClusterField::Span),
            agency_threshold: 25,
            origin: None,
            residualize_baseline: true,
            weak_f_warn: 10.0,
        }
    }
}

/// Everything the pipeline derives before fitting.
pub struct PipelineContext {
    pub filtered: Vec<CallRecord>,
    /// Estimation-sample calls (the design rows), the basis for the
    /// waiting-time diagnostics.
    pub analysis_calls: Vec<CallRecord>,
    pub filter_counts: FilterCounts,
    pub partition: FamilyPartition,
    pub coverage: IdCoverage,
    pub labels: Vec<OutcomeLabel>,
    pub spans: TimeSpanIndex,
    pub agency_families: BTreeSet<String>,
    pub design: DesignMatrix,
    pub instrument: InstrumentVector,
}

/// Stage the pipeline on parsed (unfiltered) calls.
pub fn prepare(calls: &[CallRecord], opts: &PipelineOptions) -> Result<PipelineContext> {
    // Labeling basis: every identifiable call, transferred or not.
    let identifiable: Vec<CallRecord> = calls
        .iter()
        .filter(|c| c.customer_id.is_some() || c.phone.is_some())
        .cloned()
        .collect();
    let partition = build_partition(&identifiable);
    let coverage = partition.coverage.clone();
    let labels = label_recontact(&identifiable, &partition, opts.horizon_hours)?;

    let outcome = filter_calls(calls.to_vec());
    let filtered = outcome.kept;
    let filter_counts = outcome.counts;
    if filtered.is_empty() {
        return Err(Error::data("no calls survive filtering"));
    }

    let origin = opts
        .origin
        .or_else(|| default_origin(calls))
        .ok_or_else(|| Error::data("cannot derive a span origin from an empty log"))?;
    let spans = assign_spans(&filtered, opts.window_minutes, origin)?;
    let agency_families = flag_agencies(&partition, opts.agency_threshold);
    let design = build_design(
        &filtered,
        &labels,
        &spans,
        &partition,
        &agency_families,
        &opts.outcome,
        opts.score,
    )?;
    let instrument = build_instrument(&design, opts.residualize_baseline)?;

    let in_design: BTreeSet<&str> = design.row_call_ids.iter().map(String::as_str).collect();
    let analysis_calls: Vec<CallRecord> = filtered
        .iter()
        .filter(|c| in_design.contains(c.call_id.as_str()))
        .cloned()
        .collect();

    Ok(PipelineContext {
        filtered,
        analysis_calls,
        filter_counts,
        partition,
        coverage,
        labels,
        spans,
        agency_families,
        design,
        instrument,
    })
}

#[derive(Debug, Clone)]
pub struct EstimationOutput {
    pub filter_counts: FilterCounts,
    pub coverage: IdCoverage,
    pub n_families: usize,
    pub n_agency_families: usize,
    pub design_rows: usize,
    pub nonempty_spans: usize,
    pub mean_calls_per_span: f64,
    /// Mean of the outcome column over the estimation rows.
    pub outcome_mean: f64,
    pub ols: EstimateReport,
    pub tsls: EstimateReport,
}

/// The publication-style side-by-side fit: OLS and 2SLS on the same design.
pub fn run_estimation(calls: &[CallRecord], opts: &PipelineOptions) -> Result<EstimationOutput> {
    let ctx = prepare(calls, opts)?;
    estimate_in_context(&ctx, opts)
}

/// Fit OLS and 2SLS against an already prepared context.
pub fn estimate_in_context(
    ctx: &PipelineContext,
    opts: &PipelineOptions,
) -> Result<EstimationOutput> {
    let ols_spec = FitSpec {
        method: Method::Ols,
        cluster: opts.cluster,
        weak_f_warn: opts.weak_f_warn,
        ..FitSpec::default()
    };
    let tsls_spec = FitSpec {
        method: Method::Tsls,
        ..ols_spec.clone()
    };
    let ols = fit_ols(&ctx.design, &ols_spec)?;
    let tsls = fit_tsls(&ctx.design, &ctx.instrument, &tsls_spec)?;
    let outcome_mean = if ctx.design.n_rows() == 0 {
        0.0
    } else {
        ctx.design.y.iter().sum::<f64>() / ctx.design.n_rows() as f64
    };
    Ok(EstimationOutput {
        filter_counts: ctx.filter_counts,
        coverage: ctx.coverage.clone(),
        n_families: ctx.partition.len(),
        n_agency_families: ctx.agency_families.len(),
        design_rows: ctx.design.n_rows(),
        nonempty_spans: ctx.spans.nonempty_spans,
        mean_calls_per_span: ctx.spans.mean_calls_per_span,
        outcome_mean,
        ols,
        tsls,
    })
}

#[derive(Debug, Clone)]
pub struct DiagnosticsOutput {
    /// Waiting-time/agent-dummy models without and with time controls.
    pub waiting: Vec<DiagnosticReport>,
    /// Randomization tests in the four-column layout: score and
    /// instrument, each without and with time controls.
    pub balance: Vec<DiagnosticReport>,
}

/// The validity evidence battery. The no-time-controls instrument column
/// uses the naive leave-one-out score built without span controls, the
/// failure mode the time fixed effects exist to repair.
pub fn run_diagnostics(calls: &[CallRecord], opts: &PipelineOptions) -> Result<DiagnosticsOutput> {
    let ctx = prepare(calls, opts)?;
    let naive_instrument = build_instrument_no_spans(&ctx.design, opts.residualize_baseline)?;
    let waiting = alloc::vec![
        waiting_time_check(&ctx.analysis_calls, &ctx.spans, false)?,
        waiting_time_check(&ctx.analysis_calls, &ctx.spans, true)?,
    ];
    let balance = alloc::vec![
        balance_test(&ctx.design, BalanceTarget::Sat, None, false, &opts.cluster)?,
        balance_test(
            &ctx.design,
            BalanceTarget::Instrument,
            Some(&naive_instrument),
            false,
            &opts.cluster
        )?,
        balance_test(&ctx.design, BalanceTarget::Sat, None, true, &opts.cluster)?,
        balance_test(
            &ctx.design,
            BalanceTarget::Instrument,
            Some(&ctx.instrument),
            true,
            &opts.cluster
        )?,
    ];
    Ok(DiagnosticsOutput { waiting, balance })
}

/// Export of family assignments for the filtered calls.
pub fn family_assignments(ctx: &PipelineContext) -> Vec<(String, String)> {
    ctx.filtered
        .iter()
        .filter_map(|c| {
            ctx.partition
                .family_of(&c.call_id)
                .map(|f| (c.call_id.clone(), String::from(f)))
        })
        .collect()
}

/// Export of the per-call instrument for the agent-ranking use case.
pub fn instrument_export(ctx: &PipelineContext) -> Vec<(String, String, f64)> {
    let design = &ctx.design;
    let iv = &ctx.instrument;
    (0..design.n_rows())
        .filter(|&i| iv.keep[i])
        .map(|i| {
            (
                design.row_call_ids[i].clone(),
                design.agent_names[design.agent_ids[i] as usize].clone(),
                iv.z[i],
            )
        })
        .collect()
}
