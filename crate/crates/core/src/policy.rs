//! Per-visit forwarding policies: MDP-IF and the two comparison baselines.
//!
//! Every policy decides `U_x` for each category from the current posteriors
//! before the queue lengths of the visit are seen.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::index::{allocate, AllocScratch, IndexTable};
use crate::model::{posterior_quantile, ModelParams, PosteriorState};

/// `U_x` per category for one visit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyDecision {
    pub u_per_category: Vec<u32>,
}

impl PolicyDecision {
    pub fn total(&self) -> u32 {
        self.u_per_category.iter().sum()
    }
}

/// What a policy sees at a visit.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub posteriors: Vec<PosteriorState>,
    /// `t_n`: items shown over all categories so far.
    pub shown_total: u64,
}

impl PolicyState {
    pub fn initial(model: &ModelParams) -> Self {
        Self {
            posteriors: model.categories.iter().map(|c| c.prior()).collect(),
            shown_total: 0,
        }
    }
}

/// Reusable buffers handed to [`Policy::decide`]. They never influence the
/// decision itself.
#[derive(Debug, Default, Clone)]
pub struct DecisionScratch {
    alloc: AllocScratch,
    scores: Vec<f64>,
    quantiles: Vec<(PosteriorState, f64)>,
    slots: Vec<(usize, u32, f64)>,
}

/// A per-visit decision rule. Implementations must be pure functions of
/// `(state, model)` and their own immutable data.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn decide(
        &self,
        state: &PolicyState,
        model: &ModelParams,
        scratch: &mut DecisionScratch,
        out: &mut PolicyDecision,
    ) -> Result<()>;
}

/// How baseline scores become slot grants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotAllocation {
    /// Greedy on the expected one-step net value of each extra slot,
    /// `(s_x - c)(1 - xi_x)^j`.
    #[default]
    Marginal,
    /// Categories in score order, each filled up to `M` while the budget lasts.
    Naive,
}

/// Grants slots from per-category scores.
fn allocate_scores(
    scores: &[f64],
    model: &ModelParams,
    mode: SlotAllocation,
    slots: &mut Vec<(usize, u32, f64)>,
    out: &mut PolicyDecision,
) {
    let c = model.cost_or_zero();
    let m = model.max_forward;
    let budget = if model.budget { m } else { u32::MAX };
    out.u_per_category.clear();
    out.u_per_category.resize(scores.len(), 0);
    match mode {
        SlotAllocation::Marginal => {
            slots.clear();
            for (x, (&s, cat)) in scores.iter().zip(&model.categories).enumerate() {
                let margin = s - c;
                if margin <= 0.0 {
                    continue;
                }
                let mut survive = 1.0;
                for j in 1..=m {
                    survive *= 1.0 - cat.xi;
                    slots.push((x, j, margin * survive));
                }
            }
            slots.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
            let mut granted = 0;
            for &(x, j, value) in slots.iter() {
                if granted >= budget || value <= 0.0 {
                    break;
                }
                out.u_per_category[x] = out.u_per_category[x].max(j);
                granted += 1;
            }
        }
        SlotAllocation::Naive => {
            let mut order: Vec<usize> = (0..scores.len()).filter(|&x| scores[x] > c).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut left = budget;
            for x in order {
                if left == 0 {
                    break;
                }
                let u = m.min(left);
                out.u_per_category[x] = u;
                left -= u;
            }
        }
    }
}

/// Pure exploitation: scores are posterior means.
#[derive(Debug, Clone, Default)]
pub struct ExploitPolicy {
    pub allocation: SlotAllocation,
}

impl Policy for ExploitPolicy {
    fn name(&self) -> &str {
        "exploit"
    }

    fn decide(
        &self,
        state: &PolicyState,
        model: &ModelParams,
        scratch: &mut DecisionScratch,
        out: &mut PolicyDecision,
    ) -> Result<()> {
        scratch.scores.clear();
        scratch.scores.extend(state.posteriors.iter().map(|s| s.mean()));
        allocate_scores(&scratch.scores, model, self.allocation, &mut scratch.slots, out);
        Ok(())
    }
}

/// UCB: scores are posterior quantiles at level `1 - 1/max(t_n, 2)`.
#[derive(Debug, Clone, Default)]
pub struct UcbPolicy {
    pub allocation: SlotAllocation,
}

impl UcbPolicy {
    pub fn level(shown_total: u64) -> f64 {
        1.0 - 1.0 / shown_total.max(2) as f64
    }
}

impl Policy for UcbPolicy {
    fn name(&self) -> &str {
        "ucb"
    }

    fn decide(
        &self,
        state: &PolicyState,
        model: &ModelParams,
        scratch: &mut DecisionScratch,
        out: &mut PolicyDecision,
    ) -> Result<()> {
        let level = Self::level(state.shown_total);
        let c = model.cost_or_zero();
        scratch.scores.clear();
        // Many categories share a posterior (e.g. untouched priors); the
        // quantile is computed once per distinct state within the visit.
        scratch.quantiles.clear();
        for s in &state.posteriors {
            let q = match scratch.quantiles.iter().find(|(p, _)| p == s) {
                Some(&(_, q)) => q,
                None => {
                    // A quantile at or below the cost is never granted, and
                    // `P(theta <= c) >= level` decides that with one evaluation.
                    let q = if c > 0.0 && beta_reg(s.alpha, s.beta, c) >= level {
                        c
                    } else {
                        posterior_quantile(*s, level)?
                    };
                    scratch.quantiles.push((*s, q));
                    q
                }
            };
            scratch.scores.push(q);
        }
        allocate_scores(&scratch.scores, model, self.allocation, &mut scratch.slots, out);
        Ok(())
    }
}

/// MDP-IF: ranks `(category, slot)` pairs by `nu*` and grants them until the
/// budget is spent or the index drops below the cost.
#[derive(Debug, Clone)]
pub struct MdpIfPolicy {
    tables: Vec<Arc<IndexTable>>,
    pub allocation: SlotAllocation,
}

impl MdpIfPolicy {
    pub fn new(tables: Vec<Arc<IndexTable>>) -> Self {
        Self { tables, allocation: SlotAllocation::default() }
    }

    pub fn with_allocation(mut self, allocation: SlotAllocation) -> Self {
        self.allocation = allocation;
        self
    }

    pub fn tables(&self) -> &[Arc<IndexTable>] {
        &self.tables
    }

    /// Smallest depth covered by any category's table.
    pub fn covered_depth(&self) -> usize {
        self.tables.iter().map(|t| t.depth()).min().unwrap_or(0)
    }
}

impl Policy for MdpIfPolicy {
    fn name(&self) -> &str {
        "mdp-if"
    }

    fn decide(
        &self,
        state: &PolicyState,
        model: &ModelParams,
        scratch: &mut DecisionScratch,
        out: &mut PolicyDecision,
    ) -> Result<()> {
        if self.tables.len() != state.posteriors.len() {
            return Err(Error::Config(format!(
                "MDP-IF has {} tables for {} categories",
                self.tables.len(),
                state.posteriors.len()
            )));
        }
        let budget = model.budget.then_some(model.max_forward);
        if self.allocation == SlotAllocation::Marginal {
            return self.allocate_marginal(state, model, budget, scratch, out);
        }
        let refs: Vec<&IndexTable> = self.tables.iter().map(|t| t.as_ref()).collect();
        allocate(
            &state.posteriors,
            &refs,
            budget,
            model.cost,
            &mut scratch.alloc,
            &mut out.u_per_category,
        )
    }
}

impl MdpIfPolicy {
    /// Grants slots greedily by `(nu*(u) - c)(1 - xi)^u`: the index net of
    /// cost, weighted by the chance that the `u`-th slot finds a queued item.
    fn allocate_marginal(
        &self,
        state: &PolicyState,
        model: &ModelParams,
        budget: Option<u32>,
        scratch: &mut DecisionScratch,
        out: &mut PolicyDecision,
    ) -> Result<()> {
        let c = model.cost_or_zero();
        let mut row = Vec::new();
        scratch.slots.clear();
        for (x, (s, t)) in state.posteriors.iter().zip(&self.tables).enumerate() {
            t.fill_indices(*s, &mut row)?;
            let mut survive = 1.0;
            for (j, v) in row.iter().enumerate() {
                survive *= 1.0 - t.params.xi;
                match *v {
                    Some(nu) if model.cost.is_none_or(|c| nu >= c) => {
                        scratch.slots.push((x, j as u32 + 1, (nu - c) * survive));
                    }
                    _ => break,
                }
            }
        }
        let slots = &mut scratch.slots;
        slots.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        out.u_per_category.clear();
        out.u_per_category.resize(state.posteriors.len(), 0);
        let take = budget.map_or(slots.len(), |b| (b as usize).min(slots.len()));
        for &(x, j, _) in &slots[..take] {
            out.u_per_category[x] = out.u_per_category[x].max(j);
        }
        Ok(())
    }
}

/// Policy names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "mdp-if")]
    MdpIf,
    #[serde(rename = "ucb")]
    Ucb,
    #[serde(rename = "exploit")]
    Exploit,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::MdpIf, PolicyKind::Ucb, PolicyKind::Exploit];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MdpIf => "mdp-if",
            Self::Ucb => "ucb",
            Self::Exploit => "exploit",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdp-if" => Ok(Self::MdpIf),
            "ucb" => Ok(Self::Ucb),
            "exploit" => Ok(Self::Exploit),
            other => Err(Error::Config(format!(
                "unknown policy '{other}' (expected mdp-if, ucb, or exploit)"
            ))),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
