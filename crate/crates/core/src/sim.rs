//! Discrete-event multi-queue call-center simulator with known causal
//! ground truth.
//!
//! Calls arrive per queue as (optionally time-varying) Poisson processes
//! and are served first-come-first-served by certified, on-duty, idle
//! agents; multi-certified agents drain whichever of their queues has the
//! oldest waiting call. Reported satisfaction mixes agent skill with two
//! latent per-call customer traits (anger, which depresses the reported
//! score and raises recontact, and leniency, which raises both), so naive
//! OLS on the reported score is confounded while the true effect of the
//! score on recontact is the configured `beta_true`. Anger and the
//! covariate mix drift by hour of day, and a second queue's evening load
//! pulls the multi-certified (more skilled) agents away — exactly the
//! availability pattern that invalidates the design without time-span
//! controls.
//!
//! Determinism: identical seed and config produce byte-identical logs.
//! Every call draws from its own substreams keyed by a stable call uid,
//! so changing the agent roster never perturbs arrival or attribute
//! draws.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use libm::{exp, floor, round, sqrt};

use crate::ingest::{CallRecord, STANDARD_FLAGS};
use crate::kv;
use crate::rng::Rng;
use crate::{Error, Result};

/// Half-open daily on-duty interval in fractional hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftInterval {
    pub start_hour: f64,
    pub end_hour: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueConfig {
    pub queue_id: String,
    /// Base arrival rate in calls per hour.
    pub arrival_rate_per_hour: f64,
    /// Optional per-hour-of-day multipliers on the base rate.
    pub hourly_profile: Option<[f64; 24]>,
    pub service_time_mean_minutes: f64,
    /// Overrides the global survey response rate for this queue.
    pub survey_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub agent_id: String,
    pub certifications: BTreeSet<String>,
    /// Skill in [0, 1]; raises delivered quality and shortens service.
    pub skill: f64,
    /// Daily recurring on-duty intervals; empty means always on duty.
    pub shifts: Vec<ShiftInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon_days: u32,
    /// Study start, UTC epoch seconds (midnight-aligned in the presets).
    pub start_epoch: i64,
    pub queues: Vec<QueueConfig>,
    pub agents: Vec<AgentConfig>,
    /// Causal effect of the reported normalized score on the recontact
    /// probability.
    pub beta_true: f64,
    /// Scales every loading of the latent customer traits on the score
    /// and on recontact. Zero switches confounding off entirely.
    pub confounder_strength: f64,
    /// Scales the hour-of-day drift of mean anger.
    pub anger_diurnal_amplitude: f64,
    pub survey_response_rate: f64,
    pub transfer_rate: f64,
    /// Share of fresh arrivals with no usable customer identification.
    pub missing_id_rate: f64,
    /// Share of fresh arrivals identified only by the calling phone
    /// number (no authenticated customer id).
    pub phone_only_rate: f64,
    /// Share of recontact calls placed by a relative: new customer id on
    /// the family phone.
    pub relative_recontact_share: f64,
    /// Share of same-customer recontacts arriving from a fresh phone.
    pub new_phone_share: f64,
    /// Share of fresh arrivals placed by travel-agency accounts.
    pub agency_call_share: f64,
    pub n_agency_accounts: u32,
    pub agency_customers_per_account: u32,
    /// Use a logistic recontact link instead of the clamped linear one.
    pub use_logistic_recontact: bool,
    pub seed: u64,
}

// Outcome process constants. The reported score propensity is
//   R = quality(skill) + call noise - k*A*anger + k*L*leniency + score noise
// and the recontact probability is
//   p = base + beta_true * (csat/5) + k*a*anger + k*l*leniency
// with k = confounder_strength. Anger carries an hour-of-day mean shift.
const QUALITY_BASE: f64 = 0.28;
const QUALITY_SKILL_GAIN: f64 = 0.55;
const CALL_NOISE_SD: f64 = 0.09;
const SCORE_NOISE_SD: f64 = 0.05;
const ANGER_SCORE_LOADING: f64 = 1.0;
const LENIENCY_SCORE_LOADING: f64 = 1.35;
const ANGER_OUTCOME_LOADING: f64 = 0.15;
const LENIENCY_OUTCOME_LOADING: f64 = 0.30;
const RECONTACT_BASE: f64 = 0.79;
/// Service time mean multiplier: skill 0.5 is neutral.
const SERVICE_SKILL_SLOPE: f64 = 0.9;
/// CSAT thresholds on the score propensity, chosen for the characteristic
/// 0/5-heavy bimodal shape of survey scores.
const CSAT_THRESHOLDS: [f64; 5] = [0.24, 0.36, 0.45, 0.51, 0.56];
/// Mean anger by hour of day (scaled by `anger_diurnal_amplitude`):
/// calm mornings, neutral midday, angry evenings.
const ANGER_HOURLY: [f64; 24] = [
    0.3, 0.3, 0.2, 0.2, 0.0, -0.2, -0.4, -0.5, -0.5, -0.4, -0.3, -0.1, 0.0, 0.0, -0.1, 0.0, 0.2,
    0.6, 0.8, 1.0, 1.0, 0.9, 0.7, 0.5,
];
/// Evening indicator used by the covariate mix.
fn is_evening(hour: usize) -> bool {
    (17..23).contains(&hour)
}

/// Overnight indicator used by the covariate mix.
fn is_night(hour: usize) -> bool {
    hour >= 23 || hour < 6
}

const HALF_WIDTH: f64 = 1.732_050_807_568_877_2; // sqrt(3): unit-variance uniform

/// Ground truth for one served call, for oracle checks.
#[derive(Debug, Clone)]
pub struct CallTruth {
    pub call_id: String,
    pub anger: f64,
    pub leniency: f64,
    /// Continuous score propensity before discretization.
    pub score_latent: f64,
    pub recontact_prob: f64,
    pub recontact_draw: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimSummary {
    pub arrivals: u64,
    pub served: u64,
    pub abandoned: u64,
    pub surveyed: u64,
    pub recontacts_scheduled: u64,
    /// Re-arrivals that congestion pushed outside the 24-hour window of
    /// their parent call (they would break the label-equals-draw oracle).
    pub late_recontacts: u64,
    /// Probability draws that hit the [0, 1] clamp.
    pub clamp_events: u64,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub calls: Vec<CallRecord>,
    pub truth: Vec<CallTruth>,
    pub summary: SimSummary,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for q in &self.queues {
            if !(q.arrival_rate_per_hour >= 0.0) || !q.arrival_rate_per_hour.is_finite() {
                return Err(Error::config(format!(
                    "queue {:?}: arrival rate must be finite and nonnegative",
                    q.queue_id
                )));
            }
            if !(q.service_time_mean_minutes > 0.0) {
                return Err(Error::config(format!(
                    "queue {:?}: service time mean must be positive",
                    q.queue_id
                )));
            }
            if let Some(profile) = &q.hourly_profile {
                if profile.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
                    return Err(Error::config(format!(
                        "queue {:?}: hourly profile must be nonnegative",
                        q.queue_id
                    )));
                }
            }
            if let Some(rate) = q.survey_rate {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::config(format!(
                        "queue {:?}: survey rate must be in [0, 1]",
                        q.queue_id
                    )));
                }
            }
            let certified = self
                .agents
                .iter()
                .any(|a| a.certifications.contains(&q.queue_id));
            if !certified {
                return Err(Error::config(format!(
                    "queue {:?} has no certified agent",
                    q.queue_id
                )));
            }
        }
        for a in &self.agents {
            if !(0.0..=1.0).contains(&a.skill) {
                return Err(Error::config(format!(
                    "agent {:?}: skill must be in [0, 1]",
                    a.agent_id
                )));
            }
            for s in &a.shifts {
                if !(0.0..=24.0).contains(&s.start_hour)
                    || !(0.0..=24.0).contains(&s.end_hour)
                    || s.start_hour >= s.end_hour
                {
                    return Err(Error::config(format!(
                        "agent {:?}: malformed shift interval",
                        a.agent_id
                    )));
                }
            }
        }
        for p in [
            self.survey_response_rate,
            self.transfer_rate,
            self.missing_id_rate,
            self.phone_only_rate,
            self.relative_recontact_share,
            self.new_phone_share,
            self.agency_call_share,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("rates and shares must be in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.confounder_strength) {
            return Err(Error::config("confounder_strength must be in [0, 1]"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Event machinery

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Arrival,
    ServiceEnd,
    ShiftStart,
}

#[derive(Debug, Clone)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
    /// Arrival: pending-call index. ServiceEnd: active-call index.
    /// ShiftStart: agent index.
    payload: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // Reversed for the max-heap: earliest time first, then insertion
        // sequence for deterministic tie-breaking.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
enum Identity {
    Fresh {
        family: u64,
        phone_only: bool,
    },
    Agency {
        account: u32,
        member: u32,
    },
    Anonymous,
    Recontact {
        family: u64,
        relative_seq: u32,
        phone_seq: u32,
        phone_only: bool,
    },
}

#[derive(Debug, Clone)]
struct PendingCall {
    uid: u64,
    queue: usize,
    arrival: f64,
    identity: Identity,
}

#[derive(Debug, Clone)]
struct ActiveCall {
    call: PendingCall,
    agent: usize,
    service_start: f64,
}

#[derive(Debug, Clone)]
struct FamilyState {
    market: String,
    tier: String,
    relatives: u32,
    phones: u32,
    /// The family is known only through its phone number.
    phone_only: bool,
}

struct Engine<'c> {
    config: &'c SimConfig,
    events: BinaryHeap<Event>,
    next_seq: u64,
    pending: Vec<PendingCall>,
    active: Vec<ActiveCall>,
    waiting: Vec<VecDeque<PendingCall>>,
    agent_busy: Vec<bool>,
    agent_idle_since: Vec<f64>,
    certified: Vec<Vec<usize>>, // queue -> agent indices
    families: BTreeMap<u64, FamilyState>,
    next_family: u64,
    fresh_counts: Vec<u64>,
    records: Vec<(f64, u64, CallRecord, Option<CallTruth>)>,
    summary: SimSummary,
    horizon_end: f64,
}

fn hour_of_day(start_epoch: i64, t: f64) -> usize {
    let epoch = start_epoch + floor(t) as i64;
    (epoch.rem_euclid(86_400) / 3_600) as usize
}

impl<'c> Engine<'c> {
    fn schedule(&mut self, time: f64, kind: Kind, payload: usize) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.push(Event {
            time,
            seq,
            kind,
            payload,
        });
    }

    fn on_duty(&self, agent: usize, t: f64) -> bool {
        let shifts = &self.config.agents[agent].shifts;
        if shifts.is_empty() {
            return true;
        }
        let epoch = self.config.start_epoch + floor(t) as i64;
        let hour = epoch.rem_euclid(86_400) as f64 / 3_600.0;
        shifts
            .iter()
            .any(|s| hour >= s.start_hour && hour < s.end_hour)
    }

    /// Piecewise-constant-rate Poisson arrival after `from` (seconds).
    fn next_arrival_time(&self, queue: usize, from: f64, rng: &mut Rng) -> Option<f64> {
        let q = &self.config.queues[queue];
        let base = q.arrival_rate_per_hour / 3_600.0;
        if base <= 0.0 {
            return None;
        }
        let profile = q.hourly_profile.unwrap_or([1.0; 24]);
        if profile.iter().all(|m| *m <= 0.0) {
            return None;
        }
        let mut target = rng.exponential(1.0);
        let mut t = from;
        loop {
            if t >= self.horizon_end {
                return None;
            }
            let hour = hour_of_day(self.config.start_epoch, t);
            let seg_end = {
                let epoch = self.config.start_epoch + floor(t) as i64;
                let into_hour = epoch.rem_euclid(3_600) as f64 + (t - floor(t));
                t + (3_600.0 - into_hour)
            };
            let rate = base * profile[hour];
            if rate > 0.0 {
                let capacity = rate * (seg_end - t);
                if target <= capacity {
                    return Some(t + target / rate);
                }
                target -= capacity;
            }
            t = seg_end;
        }
    }

    /// Pick the longest-idle certified on-duty idle agent for a queue.
    fn pick_agent(&self, queue: usize, t: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &a in &self.certified[queue] {
            if self.agent_busy[a] || !self.on_duty(a, t) {
                continue;
            }
            match best {
                None => best = Some(a),
                Some(b) => {
                    // Longest idle wins; ties go to the lower index.
                    if self.agent_idle_since[a] < self.agent_idle_since[b] {
                        best = Some(a);
                    }
                }
            }
        }
        best
    }

    fn start_service(&mut self, call: PendingCall, agent: usize, t: f64) {
        self.agent_busy[agent] = true;
        let mut svc = Rng::substream(self.config.seed, "svc", call.uid);
        let q = &self.config.queues[call.queue];
        let skill = self.config.agents[agent].skill;
        let mean_secs =
            q.service_time_mean_minutes * 60.0 * (1.0 + SERVICE_SKILL_SLOPE * (0.5 - skill));
        let duration = svc.exponential(mean_secs).max(1.0);
        let active = ActiveCall {
            call,
            agent,
            service_start: t,
        };
        self.active.push(active);
        self.schedule(t + duration, Kind::ServiceEnd, self.active.len() - 1);
    }

    /// After an agent frees up (or comes on shift), serve the oldest
    /// waiting call across the queues this agent is certified for.
    fn dispatch_agent(&mut self, agent: usize, t: f64) {
        if self.agent_busy[agent] || !self.on_duty(agent, t) {
            return;
        }
        let mut best_queue: Option<usize> = None;
        for (q, queue) in self.waiting.iter().enumerate() {
            if !self.config.agents[agent]
                .certifications
                .contains(&self.config.queues[q].queue_id)
            {
                continue;
            }
            if let Some(front) = queue.front() {
                let better = match best_queue {
                    None => true,
                    Some(bq) => front.arrival < self.waiting[bq].front().unwrap().arrival,
                };
                if better {
                    best_queue = Some(q);
                }
            }
        }
        if let Some(q) = best_queue {
            let call = self.waiting[q].pop_front().unwrap();
            self.start_service(call, agent, t);
        }
    }

    fn family_market_tier(&mut self, hour: usize, rng: &mut Rng) -> (String, String) {
        // Market mix drifts toward US/international in the evening and
        // overnight hours.
        let evening = is_evening(hour);
        let night = is_night(hour);
        let weights: [(&str, f64); 4] = [
            (
                "ES",
                if evening {
                    1.6
                } else if night {
                    2.2
                } else {
                    3.4
                },
            ),
            ("CO", 2.0),
            ("PE", 1.0),
            (
                "US",
                if evening {
                    2.6
                } else if night {
                    1.6
                } else {
                    0.4
                },
            ),
        ];
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut draw = rng.uniform() * total;
        let mut market = "ES";
        for (m, w) in weights {
            if draw < w {
                market = m;
                break;
            }
            draw -= w;
        }
        let tier_draw = rng.uniform();
        let no_info = if evening {
            0.36
        } else if night {
            0.30
        } else {
            0.20
        };
        let tier = if tier_draw < 0.97 - no_info {
            "D"
        } else if tier_draw < 0.97 {
            "NoInfo"
        } else if tier_draw < 0.99 {
            "A"
        } else {
            "B"
        };
        (market.to_string(), tier.to_string())
    }

    fn process_arrival(&mut self, idx: usize, t: f64) {
        let call = self.pending[idx].clone();
        self.summary.arrivals += 1;
        match self.pick_agent(call.queue, t) {
            Some(agent) => self.start_service(call, agent, t),
            None => self.waiting[call.queue].push_back(call),
        }
    }

    fn clamp01(&mut self, p: f64) -> f64 {
        if p < 0.0 {
            self.summary.clamp_events += 1;
            0.0
        } else if p > 1.0 {
            self.summary.clamp_events += 1;
            1.0
        } else {
            p
        }
    }

    fn process_service_end(&mut self, idx: usize, t: f64) {
        let ActiveCall {
            call,
            agent,
            service_start,
        } = self.active[idx].clone();
        self.summary.served += 1;
        self.agent_busy[agent] = false;
        self.agent_idle_since[agent] = t;

        let cfg = self.config;
        let hour = hour_of_day(cfg.start_epoch, call.arrival);
        let mut att = Rng::substream(cfg.seed, "att", call.uid);
        let mut out = Rng::substream(cfg.seed, "out", call.uid);

        // Latent traits. Anger's mean drifts by hour of day.
        let anger = cfg.anger_diurnal_amplitude * ANGER_HOURLY[hour]
            + att.uniform_in(-HALF_WIDTH, HALF_WIDTH);
        let leniency = att.uniform_in(-HALF_WIDTH, HALF_WIDTH);
        let skill = cfg.agents[agent].skill;
        let quality = QUALITY_BASE + QUALITY_SKILL_GAIN * skill + CALL_NOISE_SD * att.normal();
        let k = cfg.confounder_strength;
        let score_latent = quality - k * ANGER_SCORE_LOADING * anger
            + k * LENIENCY_SCORE_LOADING * leniency
            + SCORE_NOISE_SD * att.normal();
        let csat = CSAT_THRESHOLDS
            .iter()
            .filter(|th| score_latent >= **th)
            .count() as u8;
        let x = f64::from(csat) / 5.0;

        // Resolution report tracks the reported score level.
        let fcr = out.bernoulli(x);

        let recontact_prob = {
            let raw = RECONTACT_BASE
                + cfg.beta_true * x
                + k * ANGER_OUTCOME_LOADING * anger
                + k * LENIENCY_OUTCOME_LOADING * leniency;
            if cfg.use_logistic_recontact {
                1.0 / (1.0 + exp(-(4.0 * (raw - 0.5))))
            } else {
                self.clamp01(raw)
            }
        };
        let recontact_draw = out.bernoulli(recontact_prob);

        // Downstream outcome flags: small linear loadings on the reported
        // score and anger; generic columns for alternative outcomes.
        let p_claims7 = self.clamp01(0.020 + 0.030 * (1.0 - x) + 0.010 * k * anger);
        let claims_7d = out.bernoulli(p_claims7);
        let p_claims28 = self.clamp01(0.028 + 0.052 * (1.0 - x) + 0.012 * k * anger);
        let claims_28d = claims_7d || out.bernoulli(p_claims28);
        let p_refund = self.clamp01(0.012 + 0.010 * (1.0 - x));
        let refund_request = out.bernoulli(p_refund);
        let p_regulatory = self.clamp01(0.004 + 0.012 * (1.0 - x) + 0.006 * k * anger);
        let regulatory_claim = out.bernoulli(p_regulatory);
        let p_priority = self.clamp01(0.006 + 0.018 * (1.0 - x) + 0.008 * k * anger);
        let high_priority_claim = out.bernoulli(p_priority);

        let surveyed = {
            let rate = cfg.queues[call.queue]
                .survey_rate
                .unwrap_or(cfg.survey_response_rate);
            !call.identity_is_anonymous() && out.bernoulli(rate)
        };
        let transferred = att.bernoulli(cfg.transfer_rate);

        // Identity fields.
        let (customer_id, phone, market, tier) = match &call.identity {
            Identity::Anonymous => {
                let (m, t) = self.family_market_tier(hour, &mut att);
                (None, None, m, t)
            }
            Identity::Fresh { family, phone_only } => {
                let fam = self.families.get(family).expect("family registered");
                (
                    if *phone_only {
                        None
                    } else {
                        Some(format!("u{family:07}"))
                    },
                    Some(format!("p{family:07}")),
                    fam.market.clone(),
                    fam.tier.clone(),
                )
            }
            Identity::Agency { account, member } => (
                Some(format!("agency{account:02}-c{member:03}")),
                Some(format!("agency{account:02}-phone")),
                "ES".to_string(),
                "NoInfo".to_string(),
            ),
            Identity::Recontact {
                family,
                relative_seq,
                phone_seq,
                phone_only,
            } => {
                let fam = self.families.get(family).expect("family registered");
                let customer = if *phone_only {
                    None
                } else if *relative_seq > 0 {
                    Some(format!("u{family:07}-r{relative_seq}"))
                } else {
                    Some(format!("u{family:07}"))
                };
                let phone = if *phone_seq > 0 {
                    format!("p{family:07}-x{phone_seq}")
                } else {
                    format!("p{family:07}")
                };
                (customer, Some(phone), fam.market.clone(), fam.tier.clone())
            }
        };

        let log_hours = {
            let shift = if is_evening(hour) {
                1.2
            } else if is_night(hour) {
                0.7
            } else {
                0.0
            };
            (3.0 + shift + att.normal()).max(0.0)
        };
        let bookings = att.poisson(
            1.2 + if is_evening(hour) {
                1.3
            } else if is_night(hour) {
                0.7
            } else {
                0.0
            },
        );

        let mut flags = BTreeMap::new();
        for (name, value) in STANDARD_FLAGS.iter().zip([
            claims_7d,
            claims_28d,
            refund_request,
            regulatory_claim,
            high_priority_claim,
        ]) {
            flags.insert(name.to_string(), value);
        }

        if surveyed {
            self.summary.surveyed += 1;
        }
        let record = CallRecord {
            call_id: String::new(), // assigned after the chronological sort
            customer_id,
            phone,
            agent_id: cfg.agents[agent].agent_id.clone(),
            queue_id: cfg.queues[call.queue].queue_id.clone(),
            start_time: cfg.start_epoch + round(call.arrival) as i64,
            waiting_time: service_start - call.arrival,
            transferred,
            abandoned: false,
            surveyed,
            csat: if surveyed { Some(csat) } else { None },
            fcr: if surveyed { Some(fcr) } else { None },
            market,
            ffp_tier: tier,
            log_hours_from_last_call: log_hours,
            bookings_past_12m: bookings,
            outcome_flags: flags,
        };
        let truth = CallTruth {
            call_id: String::new(),
            anger,
            leniency,
            score_latent,
            recontact_prob,
            recontact_draw,
        };
        self.records
            .push((call.arrival, call.uid, record, Some(truth)));

        // The recontact chain: schedule a family re-arrival strictly
        // within 24 hours of this call's start.
        if recontact_draw {
            if let Some(family) = call.family_id() {
                self.summary.recontacts_scheduled += 1;
                let mut re = Rng::substream(cfg.seed, "re", call.uid);
                let delay_h = re.uniform_in(2.0, 20.0);
                let when = (call.arrival + delay_h * 3_600.0).max(t + 60.0);
                if when - call.arrival >= 24.0 * 3_600.0 {
                    self.summary.late_recontacts += 1;
                }
                let fam = self.families.get_mut(&family).expect("family registered");
                let identity = if matches!(call.identity, Identity::Agency { .. }) {
                    let account = match call.identity {
                        Identity::Agency { account, .. } => account,
                        _ => unreachable!(),
                    };
                    let member = re.below(u64::from(cfg.agency_customers_per_account)) as u32;
                    Identity::Agency { account, member }
                } else if fam.phone_only {
                    // A phone-identified family can only be recognized by
                    // the same number calling back.
                    Identity::Recontact {
                        family,
                        relative_seq: 0,
                        phone_seq: 0,
                        phone_only: true,
                    }
                } else if re.bernoulli(cfg.relative_recontact_share) {
                    fam.relatives += 1;
                    Identity::Recontact {
                        family,
                        relative_seq: fam.relatives,
                        phone_seq: 0,
                        phone_only: false,
                    }
                } else if re.bernoulli(cfg.new_phone_share) {
                    fam.phones += 1;
                    Identity::Recontact {
                        family,
                        relative_seq: 0,
                        phone_seq: fam.phones,
                        phone_only: false,
                    }
                } else {
                    Identity::Recontact {
                        family,
                        relative_seq: 0,
                        phone_seq: 0,
                        phone_only: false,
                    }
                };
                let uid = {
                    let mut s = call.uid ^ 0x5bd1_e995_9d1b_54a5;
                    crate::rng::splitmix64(&mut s)
                };
                self.pending.push(PendingCall {
                    uid,
                    queue: call.queue,
                    arrival: when,
                    identity,
                });
                self.schedule(when, Kind::Arrival, self.pending.len() - 1);
            }
        }

        self.dispatch_agent(agent, t);
    }
}

impl PendingCall {
    fn identity_is_anonymous(&self) -> bool {
        matches!(self.identity, Identity::Anonymous)
    }

    fn family_id(&self) -> Option<u64> {
        match &self.identity {
            Identity::Fresh { family, .. } | Identity::Recontact { family, .. } => Some(*family),
            // Agency accounts use their account id shifted into a
            // reserved range so they never collide with family ids.
            Identity::Agency { account, .. } => Some(u64::MAX - u64::from(*account)),
            Identity::Anonymous => None,
        }
    }
}

/// Run the simulation. The output records are chronologically sorted and
/// serialize to the exact ingest schema.
pub fn run(config: &SimConfig) -> Result<SimRun> {
    config.validate()?;
    let horizon_end = f64::from(config.horizon_days) * 86_400.0;
    let n_queues = config.queues.len();
    let certified: Vec<Vec<usize>> = config
        .queues
        .iter()
        .map(|q| {
            config
                .agents
                .iter()
                .enumerate()
                .filter(|(_, a)| a.certifications.contains(&q.queue_id))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut engine = Engine {
        config,
        events: BinaryHeap::new(),
        next_seq: 0,
        pending: vec![],
        active: vec![],
        waiting: vec![VecDeque::new(); n_queues],
        agent_busy: vec![false; config.agents.len()],
        agent_idle_since: vec![-1.0; config.agents.len()],
        certified,
        families: BTreeMap::new(),
        next_family: 0,
        fresh_counts: vec![0; n_queues],
        records: vec![],
        summary: SimSummary::default(),
        horizon_end,
    };

    // Seed the first fresh arrival per queue and the shift-start events.
    let drain_days = config.horizon_days + 14;
    for q in 0..n_queues {
        let mut arr = Rng::substream(config.seed, "arrivals", q as u64);
        if let Some(first) = engine.next_arrival_time(q, 0.0, &mut arr) {
            // Fresh arrival times depend only on the queue stream, so the
            // whole horizon can be generated up front.
            schedule_fresh_arrival(&mut engine, q, first);
            let mut t = first;
            while let Some(next) = engine.next_arrival_time(q, t, &mut arr) {
                schedule_fresh_arrival(&mut engine, q, next);
                t = next;
            }
        }
    }
    for (a, agent) in config.agents.iter().enumerate() {
        if agent.shifts.is_empty() {
            continue;
        }
        for day in 0..drain_days {
            for (k, s) in agent.shifts.iter().enumerate() {
                // Stagger backlog pickup at shift start by a small
                // deterministic per-agent-per-day jitter; otherwise the
                // roster order decides who drains the aged calls every
                // single day. Arrivals can still pick the agent from the
                // official start via the on-duty check.
                let mut key = config.seed
                    ^ (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    ^ u64::from(day).wrapping_mul(0x2545_f491_4f6c_dd1d)
                    ^ (k as u64) << 32;
                let jitter = (crate::rng::splitmix64(&mut key) % 8) as f64;
                let t = f64::from(day) * 86_400.0 + s.start_hour * 3_600.0 + jitter;
                engine.schedule(t, Kind::ShiftStart, a);
            }
        }
    }

    let event_cap: u64 = 50_000_000;
    let mut processed: u64 = 0;
    let mut last_time = 0.0f64;
    while let Some(ev) = engine.events.pop() {
        processed += 1;
        if processed > event_cap {
            return Err(Error::numerical("simulation event cap exceeded"));
        }
        debug_assert!(ev.time >= last_time - 1e-9, "event time regression");
        last_time = ev.time;
        match ev.kind {
            Kind::Arrival => engine.process_arrival(ev.payload, ev.time),
            Kind::ServiceEnd => engine.process_service_end(ev.payload, ev.time),
            Kind::ShiftStart => engine.dispatch_agent(ev.payload, ev.time),
        }
    }

    // Anything still waiting after the event queue drained can never be
    // served (no future shift will pick it up): emit as abandoned.
    let waiting: Vec<PendingCall> = engine
        .waiting
        .iter_mut()
        .flat_map(|q| q.drain(..))
        .collect();
    for call in waiting {
        engine.summary.abandoned += 1;
        let hour = hour_of_day(config.start_epoch, call.arrival);
        let mut att = Rng::substream(config.seed, "att", call.uid);
        let (customer_id, phone, market, tier) = match &call.identity {
            Identity::Anonymous => {
                let (m, t) = engine.family_market_tier(hour, &mut att);
                (None, None, m, t)
            }
            Identity::Fresh { family, phone_only } => (
                if *phone_only {
                    None
                } else {
                    Some(format!("u{family:07}"))
                },
                Some(format!("p{family:07}")),
                engine.families[family].market.clone(),
                engine.families[family].tier.clone(),
            ),
            Identity::Agency { account, member } => (
                Some(format!("agency{account:02}-c{member:03}")),
                Some(format!("agency{account:02}-phone")),
                "ES".to_string(),
                "NoInfo".to_string(),
            ),
            Identity::Recontact { family, .. } => (
                Some(format!("u{family:07}")),
                Some(format!("p{family:07}")),
                engine.families[family].market.clone(),
                engine.families[family].tier.clone(),
            ),
        };
        let record = CallRecord {
            call_id: String::new(),
            customer_id,
            phone,
            agent_id: String::new(),
            queue_id: config.queues[call.queue].queue_id.clone(),
            start_time: config.start_epoch + round(call.arrival) as i64,
            waiting_time: 0.0,
            transferred: false,
            abandoned: true,
            surveyed: false,
            csat: None,
            fcr: None,
            market,
            ffp_tier: tier,
            log_hours_from_last_call: 0.0,
            bookings_past_12m: 0,
            outcome_flags: STANDARD_FLAGS
                .iter()
                .map(|f| (f.to_string(), false))
                .collect(),
        };
        engine.records.push((call.arrival, call.uid, record, None));
    }

    // Chronological order with a deterministic uid tie-break, then assign
    // display call ids.
    engine
        .records
        .sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut calls = Vec::with_capacity(engine.records.len());
    let mut truth = Vec::with_capacity(engine.records.len());
    for (i, (_, _, mut record, t)) in engine.records.into_iter().enumerate() {
        let id = format!("c{:07}", i + 1);
        record.call_id = id.clone();
        calls.push(record);
        if let Some(mut tr) = t {
            tr.call_id = id;
            truth.push(tr);
        }
    }

    Ok(SimRun {
        calls,
        truth,
        summary: engine.summary,
    })
}

/// Register the identity of a fresh arrival and put it on the event queue.
fn schedule_fresh_arrival(engine: &mut Engine, queue: usize, t: f64) {
    let index = engine.fresh_counts[queue];
    engine.fresh_counts[queue] += 1;
    let uid = {
        let mut s = engine.config.seed ^ (queue as u64) << 48 ^ index;
        crate::rng::splitmix64(&mut s)
    };
    let mut att = Rng::substream(engine.config.seed, "id", uid);
    let identity = if att.bernoulli(engine.config.missing_id_rate) {
        Identity::Anonymous
    } else if engine.config.n_agency_accounts > 0 && att.bernoulli(engine.config.agency_call_share)
    {
        Identity::Agency {
            account: att.below(u64::from(engine.config.n_agency_accounts)) as u32,
            member: att.below(u64::from(engine.config.agency_customers_per_account.max(1))) as u32,
        }
    } else {
        let family = engine.next_family;
        engine.next_family += 1;
        let hour = hour_of_day(engine.config.start_epoch, t);
        let (market, tier) = engine.family_market_tier(hour, &mut att);
        let phone_only = att.bernoulli(engine.config.phone_only_rate);
        engine.families.insert(
            family,
            FamilyState {
                market,
                tier,
                relatives: 0,
                phones: 0,
                phone_only,
            },
        );
        Identity::Fresh { family, phone_only }
    };
    // Agency families need a registry entry too (shared across accounts).
    if let Identity::Agency { account, .. } = identity {
        let family = u64::MAX - u64::from(account);
        engine
            .families
            .entry(family)
            .or_insert_with(|| FamilyState {
                market: "ES".to_string(),
                tier: "NoInfo".to_string(),
                relatives: 0,
                phones: 0,
                phone_only: false,
            });
    }
    engine.pending.push(PendingCall {
        uid,
        queue,
        arrival: t,
        identity,
    });
    let idx = engine.pending.len() - 1;
    engine.schedule(t, Kind::Arrival, idx);
}

// ---------------------------------------------------------------------
// Presets

/// Study start for the presets: 2023-03-01T00:00:00Z.
pub const PRESET_START_EPOCH: i64 = 1_677_628_800;

fn ladder(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 0.5 * (lo + hi);
    }
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

/// The headline scenario: a primary queue plus a second queue whose load
/// peaks in the evening, pulling the multi-certified (more skilled)
/// agents away. Availability then correlates with the hour-of-day anger
/// and covariate drift, which breaks the design unless span fixed effects
/// are conditioned on.
pub fn scenario_multiqueue_bias(seed: u64) -> SimConfig {
    // Disruptions: quiet overnight (staffed only from mid-morning),
    // moderate midday, heavy evening surge handled by the dedicated
    // evening specialists.
    let mut disruptions_profile = [0.25f64; 24];
    for (h, slot) in disruptions_profile.iter_mut().enumerate() {
        if (16..23).contains(&h) {
            *slot = 3.8;
        }
    }
    // Changes: a hot morning rush handled by the day crew alone, lulls
    // before every shift handoff so queues are empty when crews change,
    // and a mild evening.
    let mut changes_profile = [0.35f64; 24];
    for (h, slot) in changes_profile.iter_mut().enumerate() {
        *slot = match h {
            5 => 0.2,
            6 => 0.15,
            7..=9 => 1.9,
            10 | 11 => 0.3,
            12 | 13 => 0.6,
            14 => 0.2,
            15..=21 => 0.9,
            22 => 0.2,
            // Night hours run warm relative to the lean night crew, so
            // overnight waits carry a congestion signature; the early
            // morning lull drains the queue before the day handoff.
            _ => 0.5,
        };
    }
    let day = vec![ShiftInterval {
        start_hour: 7.0,
        end_hour: 15.0,
    }];
    // The multi-certified crew starts mid-morning: it first drains the
    // overnight disruptions backlog and joins the primary queue during
    // the post-rush lull.
    let mid = vec![ShiftInterval {
        start_hour: 11.0,
        end_hour: 19.0,
    }];
    let evening = vec![ShiftInterval {
        start_hour: 15.0,
        end_hour: 23.0,
    }];
    let night = vec![
        ShiftInterval {
            start_hour: 0.0,
            end_hour: 7.0,
        },
        ShiftInterval {
            start_hour: 23.0,
            end_hour: 24.0,
        },
    ];
    let mut agents = Vec::new();
    let mut add = |prefix: &str, count: usize, shifts: &Vec<ShiftInterval>, lo: f64, hi: f64| {
        let start = agents.len();
        for i in 0..count {
            let certifications: BTreeSet<String> = match prefix {
                "M" => ["changes".to_string(), "disruptions".to_string()]
                    .into_iter()
                    .collect(),
                "D" => ["disruptions".to_string()].into_iter().collect(),
                _ => ["changes".to_string()].into_iter().collect(),
            };
            agents.push(AgentConfig {
                agent_id: format!("{prefix}{:02}", start + i),
                certifications,
                skill: ladder(lo, hi, i, count),
                shifts: shifts.clone(),
            });
        }
    };
    // Day crew is noticeably more skilled than the evening crew, and the
    // multi-certified agents more skilled still: when the evening surge
    // pulls certified capacity away, the primary queue is left to its
    // least skilled agents during the angriest hours.
    add("S", 7, &day, 0.35, 0.75);
    add("S", 7, &evening, 0.12, 0.55);
    add("S", 3, &night, 0.38, 0.38);
    add("M", 7, &mid, 0.50, 0.95);
    add("D", 7, &evening, 0.55, 0.90);
    SimConfig {
        horizon_days: 45,
        start_epoch: PRESET_START_EPOCH,
        queues: vec![
            QueueConfig {
                queue_id: "changes".to_string(),
                arrival_rate_per_hour: 15.0,
                hourly_profile: Some(changes_profile),
                service_time_mean_minutes: 6.0,
                survey_rate: Some(0.55),
            },
            QueueConfig {
                queue_id: "disruptions".to_string(),
                arrival_rate_per_hour: 6.0,
                hourly_profile: Some(disruptions_profile),
                service_time_mean_minutes: 11.0,
                survey_rate: Some(0.0),
            },
        ],
        agents,
        beta_true: -0.65,
        confounder_strength: 0.15,
        anger_diurnal_amplitude: 1.25,
        survey_response_rate: 0.55,
        transfer_rate: 0.02,
        missing_id_rate: 0.02,
        phone_only_rate: 0.10,
        relative_recontact_share: 0.30,
        new_phone_share: 0.25,
        agency_call_share: 0.015,
        n_agency_accounts: 2,
        agency_customers_per_account: 60,
        use_logistic_recontact: false,
        seed,
    }
}

/// Single queue, flat arrival profile, no diurnal anger drift: routing is
/// genuinely random, so balance tests should be null with or without time
/// controls.
pub fn scenario_random_routing(seed: u64) -> SimConfig {
    let mut config = scenario_multiqueue_bias(seed);
    config.queues.truncate(1);
    config.queues[0].hourly_profile = None;
    config.queues[0].arrival_rate_per_hour = 55.0;
    config.agents = (0..36)
        .map(|i| AgentConfig {
            agent_id: format!("A{i:02}"),
            certifications: ["changes".to_string()].into_iter().collect(),
            skill: ladder(0.25, 0.9, i, 36),
            shifts: vec![],
        })
        .collect();
    config.anger_diurnal_amplitude = 0.0;
    config
}

/// Look up a preset by name.
pub fn preset(name: &str, seed: u64) -> Option<SimConfig> {
    match name {
        "multiqueue_bias" => Some(scenario_multiqueue_bias(seed)),
        "random_routing" => Some(scenario_random_routing(seed)),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["multiqueue_bias", "random_routing"]
}

// ---------------------------------------------------------------------
// Config file round-trip (plain-text key-value format)

impl SimConfig {
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("horizon_days = {}\n", self.horizon_days));
        out.push_str(&format!(
            "start = {}\n",
            crate::time::format_utc(self.start_epoch)
        ));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("beta_true = {}\n", self.beta_true));
        out.push_str(&format!(
            "confounder_strength = {}\n",
            self.confounder_strength
        ));
        out.push_str(&format!(
            "anger_diurnal_amplitude = {}\n",
            self.anger_diurnal_amplitude
        ));
        out.push_str(&format!(
            "survey_response_rate = {}\n",
            self.survey_response_rate
        ));
        out.push_str(&format!("transfer_rate = {}\n", self.transfer_rate));
        out.push_str(&format!("missing_id_rate = {}\n", self.missing_id_rate));
        out.push_str(&format!("phone_only_rate = {}\n", self.phone_only_rate));
        out.push_str(&format!(
            "relative_recontact_share = {}\n",
            self.relative_recontact_share
        ));
        out.push_str(&format!("new_phone_share = {}\n", self.new_phone_share));
        out.push_str(&format!("agency_call_share = {}\n", self.agency_call_share));
        out.push_str(&format!("n_agency_accounts = {}\n", self.n_agency_accounts));
        out.push_str(&format!(
            "agency_customers_per_account = {}\n",
            self.agency_customers_per_account
        ));
        out.push_str(&format!(
            "use_logistic_recontact = {}\n",
            self.use_logistic_recontact
        ));
        for q in &self.queues {
            out.push_str(&format!("\n[queue {}]\n", q.queue_id));
            out.push_str(&format!("arrival_rate = {}\n", q.arrival_rate_per_hour));
            out.push_str(&format!(
                "service_time_mean = {}\n",
                q.service_time_mean_minutes
            ));
            if let Some(rate) = q.survey_rate {
                out.push_str(&format!("survey_rate = {rate}\n"));
            }
            if let Some(profile) = &q.hourly_profile {
                let joined: Vec<String> = profile.iter().map(|v| format!("{v}")).collect();
                out.push_str(&format!("hourly_profile = {}\n", joined.join(",")));
            }
        }
        for a in &self.agents {
            out.push_str(&format!("\n[agent {}]\n", a.agent_id));
            let certs: Vec<&str> = a.certifications.iter().map(String::as_str).collect();
            out.push_str(&format!("certifications = {}\n", certs.join(",")));
            out.push_str(&format!("skill = {}\n", a.skill));
            if !a.shifts.is_empty() {
                let shifts: Vec<String> = a
                    .shifts
                    .iter()
                    .map(|s| format!("{}-{}", s.start_hour, s.end_hour))
                    .collect();
                out.push_str(&format!("shift = {}\n", shifts.join(",")));
            }
        }
        out
    }

    pub fn from_kv_text(text: &str) -> Result<SimConfig> {
        let doc = kv::parse(text)?;
        let top = &doc.top;
        let mut config = SimConfig {
            horizon_days: top.get_u64("horizon_days")?.unwrap_or(30) as u32,
            start_epoch: match top.get("start") {
                Some(raw) => crate::time::parse_iso8601(raw)
                    .map_err(|e| Error::config(format!("start: {e}")))?,
                None => PRESET_START_EPOCH,
            },
            queues: vec![],
            agents: vec![],
            beta_true: top.get_f64("beta_true")?.unwrap_or(-0.65),
            confounder_strength: top.get_f64("confounder_strength")?.unwrap_or(0.15),
            anger_diurnal_amplitude: top.get_f64("anger_diurnal_amplitude")?.unwrap_or(1.0),
            survey_response_rate: top.get_f64("survey_response_rate")?.unwrap_or(0.55),
            transfer_rate: top.get_f64("transfer_rate")?.unwrap_or(0.02),
            missing_id_rate: top.get_f64("missing_id_rate")?.unwrap_or(0.02),
            phone_only_rate: top.get_f64("phone_only_rate")?.unwrap_or(0.10),
            relative_recontact_share: top.get_f64("relative_recontact_share")?.unwrap_or(0.3),
            new_phone_share: top.get_f64("new_phone_share")?.unwrap_or(0.25),
            agency_call_share: top.get_f64("agency_call_share")?.unwrap_or(0.0),
            n_agency_accounts: top.get_u64("n_agency_accounts")?.unwrap_or(0) as u32,
            agency_customers_per_account: top.get_u64("agency_customers_per_account")?.unwrap_or(60)
                as u32,
            use_logistic_recontact: matches!(top.get("use_logistic_recontact"), Some("true")),
            seed: top.get_u64("seed")?.unwrap_or(1),
        };
        for section in doc.sections_of("queue") {
            let mut profile = None;
            if let Some(raw) = section.get("hourly_profile") {
                let parts: Vec<&str> = raw.split(',').collect();
                if parts.len() != 24 {
                    return Err(Error::config(format!(
                        "queue {:?}: hourly_profile needs 24 values",
                        section.name
                    )));
                }
                let mut arr = [0.0f64; 24];
                for (slot, part) in arr.iter_mut().zip(parts) {
                    *slot = part.trim().parse().map_err(|_| {
                        Error::config(format!("queue {:?}: bad profile value", section.name))
                    })?;
                }
                profile = Some(arr);
            }
            config.queues.push(QueueConfig {
                queue_id: section.name.clone(),
                arrival_rate_per_hour: section.get_f64("arrival_rate")?.ok_or_else(|| {
                    Error::config(format!("queue {:?}: arrival_rate required", section.name))
                })?,
                hourly_profile: profile,
                service_time_mean_minutes: section.get_f64("service_time_mean")?.unwrap_or(6.0),
                survey_rate: section.get_f64("survey_rate")?,
            });
        }
        for section in doc.sections_of("agent") {
            let certs: BTreeSet<String> = section
                .require("certifications")?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let mut shifts = vec![];
            if let Some(raw) = section.get("shift") {
                for part in raw.split(',') {
                    let (a, b) = part.trim().split_once('-').ok_or_else(|| {
                        Error::config(format!("agent {:?}: shift must be start-end", section.name))
                    })?;
                    shifts.push(ShiftInterval {
                        start_hour: a.trim().parse().map_err(|_| {
                            Error::config(format!("agent {:?}: bad shift start", section.name))
                        })?,
                        end_hour: b.trim().parse().map_err(|_| {
                            Error::config(format!("agent {:?}: bad shift end", section.name))
                        })?,
                    });
                }
            }
            config.agents.push(AgentConfig {
                agent_id: section.name.clone(),
                certifications: certs,
                skill: section.get_f64("skill")?.unwrap_or(0.5),
                shifts,
            });
        }
        Ok(config)
    }
}

/// Serialize the ground-truth sidecar (one row per served call).
pub fn truth_to_csv(truth: &[CallTruth]) -> String {
    let mut out =
        String::from("call_id,anger,leniency,score_latent,recontact_prob,recontact_draw\n");
    for t in truth {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.call_id, t.anger, t.leniency, t.score_latent, t.recontact_prob, t.recontact_draw
        ));
    }
    out
}

/// Gauge of the score dispersion available to the instrument: the standard
/// deviation of the quality term across agents.
pub fn skill_dispersion(config: &SimConfig) -> f64 {
    let n = config.agents.len();
    if n == 0 {
        return 0.0;
    }
    let mean: f64 = config.agents.iter().map(|a| a.skill).sum::<f64>() / n as f64;
    let var: f64 = config
        .agents
        .iter()
        .map(|a| (a.skill - mean) * (a.skill - mean))
        .sum::<f64>()
        / n as f64;
    QUALITY_SKILL_GAIN * sqrt(var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Schema;

    fn tiny_config() -> SimConfig {
        let mut c = scenario_multiqueue_bias(7);
        c.horizon_days = 2;
        c.queues[0].arrival_rate_per_hour = 6.0;
        c.queues[1].arrival_rate_per_hour = 3.0;
        c
    }

    #[test]
    fn zero_rates_produce_zero_calls() {
        let mut c = tiny_config();
        for q in c.queues.iter_mut() {
            q.arrival_rate_per_hour = 0.0;
        }
        let run = run(&c).unwrap();
        assert!(run.calls.is_empty());
        assert_eq!(run.summary.arrivals, 0);
    }

    #[test]
    fn zero_horizon_produces_zero_calls() {
        let mut c = tiny_config();
        c.horizon_days = 0;
        let run = run(&c).unwrap();
        assert!(run.calls.is_empty());
    }

    #[test]
    fn agentless_queue_is_rejected_by_name() {
        let mut c = tiny_config();
        c.agents
            .retain(|a| !a.certifications.contains("disruptions"));
        let err = run(&c).unwrap_err();
        assert!(format!("{err}").contains("disruptions"));
    }

    #[test]
    fn identical_seed_gives_byte_identical_logs() {
        let c = tiny_config();
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        let schema = Schema::default();
        let encode = |r: &SimRun| -> String {
            let mut s = schema.header();
            for call in &r.calls {
                s.push('\n');
                s.push_str(&schema.encode_row(call));
            }
            s
        };
        assert_eq!(encode(&a), encode(&b));
        assert_eq!(truth_to_csv(&a.truth), truth_to_csv(&b.truth));
        // And a different seed gives a different log.
        let mut c2 = tiny_config();
        c2.seed = 8;
        let d = run(&c2).unwrap();
        assert_ne!(encode(&a), encode(&d));
    }

    #[test]
    fn conservation_served_plus_abandoned_is_arrivals() {
        let c = tiny_config();
        let r = run(&c).unwrap();
        assert_eq!(r.summary.served + r.summary.abandoned, r.summary.arrivals);
        assert_eq!(r.calls.len() as u64, r.summary.arrivals);
        assert_eq!(r.truth.len() as u64, r.summary.served);
    }

    #[test]
    fn idle_server_means_zero_waits_and_fcfs_order() {
        let mut c = tiny_config();
        c.queues.truncate(1);
        c.queues[0].arrival_rate_per_hour = 0.2;
        c.queues[0].hourly_profile = None;
        c.queues[0].service_time_mean_minutes = 0.5;
        c.horizon_days = 10;
        c.agents = vec![AgentConfig {
            agent_id: "solo".to_string(),
            certifications: ["changes".to_string()].into_iter().collect(),
            skill: 0.5,
            shifts: vec![],
        }];
        let r = run(&c).unwrap();
        assert!(
            r.calls.len() > 10,
            "want a non-trivial sample, got {}",
            r.calls.len()
        );
        for call in &r.calls {
            assert_eq!(call.waiting_time, 0.0, "call {} waited", call.call_id);
            assert_eq!(call.agent_id, "solo");
        }
        // Chronological output with zero waits means service order equals
        // arrival order.
        for pair in r.calls.windows(2) {
            assert!(pair[0].start_time <= pair[1].start_time);
        }
    }

    #[test]
    fn congested_system_produces_waiting() {
        let mut c = tiny_config();
        c.horizon_days = 1;
        c.queues[0].arrival_rate_per_hour = 40.0;
        // Keep a skeleton crew covering both queues around the clock.
        let keep = ["S00", "S07", "M17", "D24", "S14"];
        c.agents.retain(|a| keep.contains(&a.agent_id.as_str()));
        for a in c.agents.iter_mut() {
            a.shifts.clear();
        }
        let r = run(&c).unwrap();
        let waited = r.calls.iter().filter(|c| c.waiting_time > 0.0).count();
        assert!(waited > 0, "no queueing under heavy load?");
    }

    #[test]
    fn surveys_only_on_the_surveyed_queue() {
        let c = tiny_config();
        let r = run(&c).unwrap();
        for call in &r.calls {
            if call.queue_id == "disruptions" {
                assert!(!call.surveyed);
            }
            assert_eq!(call.csat.is_some(), call.surveyed);
            assert_eq!(call.fcr.is_some(), call.surveyed);
        }
        let surveyed = r.calls.iter().filter(|c| c.surveyed).count();
        assert!(surveyed > 0);
    }

    #[test]
    fn records_parse_through_the_ingest_schema() {
        let c = tiny_config();
        let r = run(&c).unwrap();
        let schema = Schema::default();
        let mut text = schema.header();
        for call in &r.calls {
            text.push('\n');
            text.push_str(&schema.encode_row(call));
        }
        text.push('\n');
        let report = crate::ingest::parse_calls(&text, &schema).unwrap();
        assert_eq!(report.records.len(), r.calls.len());
        assert!(
            report.rejects.is_empty(),
            "rejects: {:?}",
            report.rejects.first()
        );
        assert_eq!(&report.records, &r.calls);
    }

    #[test]
    fn recontact_scheduling_respects_the_24h_window() {
        let c = tiny_config();
        let r = run(&c).unwrap();
        // Each scheduled recontact arrives 2-20 hours after its parent,
        // so whenever a draw fired, some same-family call must start
        // within 24 hours.
        let part = crate::family::build_partition(&r.calls);
        let by_id: BTreeMap<&str, &CallRecord> =
            r.calls.iter().map(|c| (c.call_id.as_str(), c)).collect();
        for t in &r.truth {
            if !t.recontact_draw {
                continue;
            }
            let call = by_id[t.call_id.as_str()];
            if call.customer_id.is_none() && call.phone.is_none() {
                continue; // anonymous: no chain was scheduled
            }
            let fam = part.family_of(&call.call_id).unwrap();
            let has_followup = r.calls.iter().any(|other| {
                other.call_id != call.call_id
                    && part.family_of(&other.call_id) == Some(fam)
                    && other.start_time > call.start_time
                    && other.start_time - call.start_time < 24 * 3600
            });
            assert!(has_followup, "draw with no follow-up for {}", call.call_id);
        }
    }

    #[test]
    fn config_kv_round_trip() {
        let mut c = scenario_multiqueue_bias(42);
        c.agents[0].shifts = vec![ShiftInterval {
            start_hour: 6.0,
            end_hour: 15.5,
        }];
        let text = c.to_kv_text();
        let parsed = SimConfig::from_kv_text(&text).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn preset_lookup() {
        assert!(preset("multiqueue_bias", 1).is_some());
        assert!(preset("random_routing", 1).is_some());
        assert!(preset("nope", 1).is_none());
    }

    #[test]
    fn csat_distribution_is_bimodal() {
        let c = scenario_multiqueue_bias(3);
        let mut c = c;
        c.horizon_days = 4;
        let r = run(&c).unwrap();
        let mut counts = [0usize; 6];
        for call in r.calls.iter().filter(|c| c.surveyed) {
            counts[call.csat.unwrap() as usize] += 1;
        }
        let total: usize = counts.iter().sum();
        assert!(total > 500);
        let share = |k: usize| counts[k] as f64 / total as f64;
        // Extremes dominate the middle, as in survey data.
        assert!(share(5) > 0.3, "share(5) = {}", share(5));
        assert!(share(0) > 0.08, "share(0) = {}", share(0));
        for mid in 1..5 {
            assert!(share(mid) < share(5), "mid score {mid} too heavy");
        }
    }
}
