//! Monte Carlo evaluation of forwarding policies over simulated users.
//!
//! Each user has a relevance probability `theta_x ~ Beta(alpha0, beta0)` per
//! category, `N` visits with `P(N >= n) = gamma^n`, and queue lengths drawn
//! afresh at every visit. Policies are compared on common random numbers:
//! every policy sees the same `theta`, `N`, and queues for a given user, and
//! the `m`-th item shown from category `x` is relevant under one policy iff
//! it is relevant under every other policy.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::SolveConfig;
use crate::error::{Error, Result};
use crate::index::{compute_index_table, IndexTable};
use crate::model::{CategoryParams, ModelParams, PosteriorState};
use crate::policy::{DecisionScratch, MdpIfPolicy, Policy, PolicyDecision, PolicyState};
use crate::rng::{stream, Purpose, MAX_CATEGORIES, MAX_USERS};

/// Which per-visit reward is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `sum (Y - c Z)`: the cost-penalized objective.
    #[default]
    Net,
    /// `sum Y`: the budget-constrained objective. The scenario's cost is
    /// ignored by the reward and by the policies' cost gates.
    RelevantOnly,
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net" => Ok(Self::Net),
            "relevant_only" | "relevant-only" => Ok(Self::RelevantOnly),
            other => Err(Error::Config(format!(
                "unknown reward mode '{other}' (expected net or relevant_only)"
            ))),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Net => "net",
            Self::RelevantOnly => "relevant_only",
        })
    }
}

/// One simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: ModelParams,
    pub num_users: u64,
    pub seed: u64,
    pub reward_mode: RewardMode,
    /// Draw queues from a shared exponential gap between visits instead of
    /// independently per category.
    pub correlated_queues: bool,
}

impl ScenarioConfig {
    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model.common_gamma()?;
        if self.num_users == 0 {
            return Err(Error::Config("num_users must be positive".into()));
        }
        if self.num_users > MAX_USERS {
            return Err(Error::Config(format!("num_users must be below {MAX_USERS}")));
        }
        if self.k() > MAX_CATEGORIES {
            return Err(Error::Config(format!("at most {MAX_CATEGORIES} categories are supported")));
        }
        Ok(())
    }

    /// The model the policies optimize: the budget problem drops the cost.
    pub fn decision_model(&self) -> ModelParams {
        match self.reward_mode {
            RewardMode::Net => self.model.clone(),
            RewardMode::RelevantOnly => ModelParams {
                cost: None,
                ..self.model.clone()
            },
        }
    }
}

/// `N` with `P(N >= n) = gamma^n`, by inversion.
pub fn draw_visit_count<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> u32 {
    geometric_by_inversion(gamma, rng)
}

/// `L` with `P(L = i) = xi (1 - xi)^i`, by inversion.
pub fn draw_queue_length<R: Rng + ?Sized>(xi: f64, rng: &mut R) -> u32 {
    geometric_by_inversion(1.0 - xi, rng)
}

/// Number of failures before the first success when each trial continues
/// with probability `keep`.
fn geometric_by_inversion<R: Rng + ?Sized>(keep: f64, rng: &mut R) -> u32 {
    let u = 1.0 - rng.random::<f64>();
    let n = (u.ln() / keep.ln()).floor();
    if n >= u32::MAX as f64 {
        u32::MAX
    } else {
        n as u32
    }
}

/// Everything random about one user except item relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDraws {
    pub theta: Vec<f64>,
    pub visits: u32,
    /// `L_nx`, visit-major: `queues[(n - 1) * k + x]`.
    pub queues: Vec<u32>,
}

impl UserDraws {
    pub fn queue(&self, visit: u32, category: usize) -> u32 {
        self.queues[(visit as usize - 1) * self.theta.len() + category]
    }
}

/// Draws the user-level randomness shared by every policy.
pub fn draw_user(scenario: &ScenarioConfig, user: u64) -> Result<UserDraws> {
    let cats = &scenario.model.categories;
    let k = cats.len();
    let seed = scenario.seed;

    let mut theta_rng = stream(seed, user, Purpose::Theta, 0);
    let theta = cats
        .iter()
        .map(|c| {
            Beta::new(c.alpha0, c.beta0)
                .map(|d| d.sample(&mut theta_rng))
                .map_err(|e| Error::Domain(format!("Beta({}, {}): {e}", c.alpha0, c.beta0)))
        })
        .collect::<Result<Vec<_>>>()?;

    let gamma = scenario.model.common_gamma()?;
    let visits = draw_visit_count(gamma, &mut stream(seed, user, Purpose::Visits, 0));

    let mut queues = vec![0u32; visits as usize * k];
    if scenario.correlated_queues {
        let mut gap_rng = stream(seed, user, Purpose::Gap, 0);
        let gaps: Vec<f64> = (0..visits).map(|_| Exp1.sample(&mut gap_rng)).collect();
        for (x, c) in cats.iter().enumerate() {
            let mut rng = stream(seed, user, Purpose::Queue, x);
            let rate = c.arrival_rate();
            for (n, &gap) in gaps.iter().enumerate() {
                let mean = rate * gap;
                queues[n * k + x] = if mean > 0.0 {
                    let d = Poisson::new(mean)
                        .map_err(|e| Error::Domain(format!("Poisson({mean}): {e}")))?;
                    let draw: f64 = d.sample(&mut rng);
                    draw.min(u32::MAX as f64) as u32
                } else {
                    0
                };
            }
        }
    } else {
        for (x, c) in cats.iter().enumerate() {
            let mut rng = stream(seed, user, Purpose::Queue, x);
            for n in 0..visits as usize {
                queues[n * k + x] = draw_queue_length(c.xi, &mut rng);
            }
        }
    }
    Ok(UserDraws { theta, visits, queues })
}

/// Deepest posterior any category can reach for this user: at most `M`
/// items are shown per category per visit.
pub fn user_depth(draws: &UserDraws, max_forward: u32) -> usize {
    let k = draws.theta.len();
    (0..k)
        .map(|x| {
            (1..=draws.visits)
                .map(|n| draws.queue(n, x).min(max_forward) as usize)
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0)
}

/// Table depth that covers every state any policy can reach in `scenario`.
pub fn required_table_depth(scenario: &ScenarioConfig) -> Result<usize> {
    scenario.validate()?;
    let m = scenario.model.max_forward;
    (0..scenario.num_users)
        .into_par_iter()
        .map(|u| draw_user(scenario, u).map(|d| user_depth(&d, m)))
        .try_reduce(|| 0, |a, b| Ok(a.max(b)))
}

/// One visit of a traced user.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub visit: u32,
    pub decision: Vec<u32>,
    pub shown: Vec<u32>,
    pub relevant: Vec<u32>,
    /// Posteriors after the visit's feedback.
    pub posteriors: Vec<PosteriorState>,
    pub reward: f64,
}

/// Totals for one user under one policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UserOutcome {
    pub reward: f64,
    pub shown: u64,
    pub relevant: u64,
}

/// Buffers reused across users on one thread.
#[derive(Debug, Default)]
pub struct UserScratch {
    decision: PolicyDecision,
    decide: DecisionScratch,
    feedback: Vec<ChaCha8Rng>,
}

/// Runs `policy` for one user on pre-drawn randomness.
pub fn simulate_user(
    scenario: &ScenarioConfig,
    policy: &dyn Policy,
    user: u64,
    draws: &UserDraws,
    scratch: &mut UserScratch,
    mut trace: Option<&mut Vec<VisitRecord>>,
) -> Result<UserOutcome> {
    let model = scenario.decision_model();
    let k = model.k();
    let cost = match scenario.reward_mode {
        RewardMode::Net => scenario.model.cost_or_zero(),
        RewardMode::RelevantOnly => 0.0,
    };
    let m = model.max_forward;

    scratch.feedback.clear();
    scratch
        .feedback
        .extend((0..k).map(|x| stream(scenario.seed, user, Purpose::Feedback, x)));

    let mut state = PolicyState::initial(&model);
    let mut outcome = UserOutcome::default();
    for n in 1..=draws.visits {
        policy.decide(&state, &model, &mut scratch.decide, &mut scratch.decision)?;
        let u = &scratch.decision.u_per_category;
        if u.len() != k || u.iter().any(|&v| v > m) || (model.budget && u.iter().sum::<u32>() > m) {
            return Err(Error::Config(format!(
                "policy {} returned an infeasible decision {u:?}",
                policy.name()
            )));
        }
        let mut visit_reward = 0.0;
        let mut shown_row = Vec::new();
        let mut relevant_row = Vec::new();
        for x in 0..k {
            let z = u[x].min(draws.queue(n, x));
            let rng = &mut scratch.feedback[x];
            let theta = draws.theta[x];
            let y = (0..z).filter(|_| rng.random::<f64>() < theta).count() as u32;
            let s = &mut state.posteriors[x];
            s.alpha += y as f64;
            s.beta += (z - y) as f64;
            visit_reward += y as f64 - cost * z as f64;
            outcome.shown += z as u64;
            outcome.relevant += y as u64;
            state.shown_total += z as u64;
            if trace.is_some() {
                shown_row.push(z);
                relevant_row.push(y);
            }
        }
        outcome.reward += visit_reward;
        if let Some(t) = trace.as_deref_mut() {
            t.push(VisitRecord {
                visit: n,
                decision: u.clone(),
                shown: shown_row,
                relevant: relevant_row,
                posteriors: state.posteriors.clone(),
                reward: visit_reward,
            });
        }
    }
    Ok(outcome)
}

/// Per-policy aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub mean_reward: f64,
    pub sd: f64,
    /// 95% CI half-width `1.96 sd / sqrt(users)`.
    pub ci95: f64,
    pub items_shown: u64,
    pub relevant_shown: u64,
}

impl PolicySummary {
    fn from_outcomes<'a>(policy: &str, outcomes: impl Iterator<Item = &'a UserOutcome> + Clone) -> Self {
        let n = outcomes.clone().count() as f64;
        let mean = outcomes.clone().map(|o| o.reward).sum::<f64>() / n;
        let var = if n > 1.0 {
            outcomes.clone().map(|o| (o.reward - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        Self {
            policy: policy.to_string(),
            mean_reward: mean,
            sd,
            ci95: 1.96 * sd / n.sqrt(),
            items_shown: outcomes.clone().map(|o| o.shown).sum(),
            relevant_shown: outcomes.map(|o| o.relevant).sum(),
        }
    }
}

/// Result of [`run_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub k: usize,
    pub users: u64,
    pub seed: u64,
    pub reward_mode: RewardMode,
    pub correlated_queues: bool,
    pub policies: Vec<PolicySummary>,
}

impl SimulationReport {
    pub const CSV_HEADER: &'static str =
        "policy,k,users,mean_reward,sd,ci95,items_shown,relevant_shown,seed";

    pub fn summary(&self, policy: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    /// Data rows without the header, for concatenating several reports.
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in &self.policies {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.policy,
                self.k,
                self.users,
                p.mean_reward,
                p.sd,
                p.ci95,
                p.items_shown,
                p.relevant_shown,
                self.seed
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        self.write_csv_rows(out)
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "k={} users={} seed={} reward={}{}",
            self.k,
            self.users,
            self.seed,
            self.reward_mode,
            if self.correlated_queues { " correlated-queues" } else { "" }
        )?;
        for p in &self.policies {
            writeln!(
                f,
                "  {:<8} mean {:>10.4} ± {:.4} (sd {:.4}, shown {}, relevant {})",
                p.policy, p.mean_reward, p.ci95, p.sd, p.items_shown, p.relevant_shown
            )?;
        }
        Ok(())
    }
}

/// Simulates `num_users` users under every policy on common random numbers.
///
/// Users are spread over the current rayon pool; results are gathered in
/// user order, so the report does not depend on the number of threads.
pub fn run_scenario(scenario: &ScenarioConfig, policies: &[&dyn Policy]) -> Result<SimulationReport> {
    scenario.validate()?;
    if policies.is_empty() {
        return Err(Error::Config("at least one policy is required".into()));
    }
    let p = policies.len();
    let outcomes: Vec<UserOutcome> = (0..scenario.num_users)
        .into_par_iter()
        .map_init(UserScratch::default, |scratch, user| {
            let draws = draw_user(scenario, user)?;
            policies
                .iter()
                .map(|pol| simulate_user(scenario, *pol, user, &draws, scratch, None))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let summaries = policies
        .iter()
        .enumerate()
        .map(|(i, pol)| PolicySummary::from_outcomes(pol.name(), outcomes.iter().skip(i).step_by(p)))
        .collect();
    Ok(SimulationReport {
        k: scenario.k(),
        users: scenario.num_users,
        seed: scenario.seed,
        reward_mode: scenario.reward_mode,
        correlated_queues: scenario.correlated_queues,
        policies: summaries,
    })
}

/// Index tables shared across scenarios. A table serves any request for
/// the same category, `M`, solver settings, and grid step whose depth it
/// covers.
#[derive(Debug, Default)]
pub struct TableCache {
    tables: Mutex<HashMap<TableKey, Arc<IndexTable>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey {
    params: [u64; 4],
    max_forward: u32,
    boundary_mode: crate::dp::BoundaryMode,
    nu_step: u64,
}

impl TableKey {
    fn new(params: &CategoryParams, max_forward: u32, config: &SolveConfig, nu_step: f64) -> Self {
        Self {
            params: [
                params.gamma.to_bits(),
                params.xi.to_bits(),
                params.alpha0.to_bits(),
                params.beta0.to_bits(),
            ],
            max_forward,
            boundary_mode: config.boundary_mode,
            nu_step: nu_step.to_bits(),
        }
    }
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A table for `params` covering at least `config.horizon`.
    pub fn get_or_build(
        &self,
        params: &CategoryParams,
        max_forward: u32,
        config: &SolveConfig,
        nu_step: f64,
    ) -> Result<Arc<IndexTable>> {
        let key = TableKey::new(params, max_forward, config, nu_step);
        if let Some(t) = self.tables.lock().expect("table cache poisoned").get(&key) {
            if t.depth() >= config.horizon as usize {
                return Ok(Arc::clone(t));
            }
        }
        let table = Arc::new(compute_index_table(params, max_forward, config, nu_step, None)?);
        let mut tables = self.tables.lock().expect("table cache poisoned");
        let entry = tables.entry(key).or_insert_with(|| Arc::clone(&table));
        if entry.depth() < table.depth() {
            *entry = Arc::clone(&table);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.tables.lock().expect("table cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds MDP-IF for `scenario` with tables deep enough for every simulated
/// user: the required depth plus `margin` extra observations of lookahead.
pub fn build_mdpif_policy(
    scenario: &ScenarioConfig,
    boundary_mode: crate::dp::BoundaryMode,
    nu_step: f64,
    margin: u32,
    cache: &TableCache,
) -> Result<MdpIfPolicy> {
    let depth = required_table_depth(scenario)?;
    let m = scenario.model.max_forward;
    let horizon = (depth as u32).saturating_add(margin).max(m);
    let config = SolveConfig::new(horizon, boundary_mode);
    let tables = scenario
        .model
        .categories
        .iter()
        .map(|c| cache.get_or_build(c, m, &config, nu_step))
        .collect::<Result<Vec<_>>>()?;
    Ok(MdpIfPolicy::new(tables))
}
