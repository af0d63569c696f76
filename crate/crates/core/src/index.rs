//! Lagrange-multiplier indices and the MDP-IF ranked list.
//!
//! `nu*(u, alpha, beta)` is the largest per-item cost at which forwarding at
//! least `u` items is still optimal in state `(alpha, beta)`. Tables are
//! built by solving the category's MDP on a grid of multipliers in `[0, 1]`
//! and recording, for every state and `u`, the largest grid multiplier with
//! `U*(nu) >= u`. Selected states can be refined further by bisection
//! between the bracketing grid points.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{self, BoundaryMode, Grid, SolveConfig};
use crate::error::{Error, Result};
use crate::model::{CategoryParams, PosteriorState};

/// Default multiplier grid resolution.
pub const DEFAULT_NU_STEP: f64 = 0.01;
/// Default bisection tolerance for refined entries.
pub const DEFAULT_REFINE_TOL: f64 = 1e-4;

const ABSENT: u16 = u16::MAX;

/// Bisection refinement settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refine {
    pub tol: f64,
    /// Refine every state with depth `<= max_depth` (0: the root only).
    pub max_depth: usize,
}

impl Refine {
    pub fn root(tol: f64) -> Self {
        Self { tol, max_depth: 0 }
    }
}

/// The multiplier grid `{0, step, 2 step, ..., 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuGrid {
    pub step: f64,
    points: u32,
    exact_divisor: bool,
}

impl NuGrid {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 0.1) {
            return Err(Error::Config(format!("nu_step must lie in (0, 0.1], got {step}")));
        }
        let n = (1.0 / step).round();
        let exact_divisor = (n * step - 1.0).abs() < 1e-9;
        let points = if exact_divisor { n as u32 } else { (1.0 / step).ceil() as u32 };
        if points >= ABSENT as u32 {
            return Err(Error::Config(format!("nu_step {step} is too fine")));
        }
        Ok(Self {
            step,
            points,
            exact_divisor,
        })
    }

    /// Index of the last grid point (the point at `nu = 1`).
    pub fn last(&self) -> u32 {
        self.points
    }

    pub fn value(&self, j: u32) -> f64 {
        if j >= self.points {
            1.0
        } else if self.exact_divisor {
            j as f64 / self.points as f64
        } else {
            j as f64 * self.step
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..=self.points).map(|j| self.value(j)).collect()
    }
}

/// `nu*(u, alpha, beta)` for `u = 1..=M` over every interior grid state.
#[derive(Debug, Clone)]
pub struct IndexTable {
    pub params: CategoryParams,
    pub max_forward: u32,
    pub config: SolveConfig,
    pub nu_grid: NuGrid,
    /// Grid point index per `(state, u)`, `ABSENT` when `U*(0) < u`.
    grid_idx: Vec<u16>,
    refined: HashMap<usize, f64>,
    refine: Option<Refine>,
}

impl IndexTable {
    pub fn nu_step(&self) -> f64 {
        self.nu_grid.step
    }

    pub fn refined(&self) -> bool {
        self.refine.is_some()
    }

    /// Deepest state covered.
    pub fn depth(&self) -> usize {
        self.config.horizon as usize
    }

    fn entry(&self, offset: usize, u: u32) -> usize {
        offset * self.max_forward as usize + (u as usize - 1)
    }

    fn value_at(&self, offset: usize, u: u32) -> Option<f64> {
        let e = self.entry(offset, u);
        if let Some(&v) = self.refined.get(&e) {
            return Some(v);
        }
        match self.grid_idx[e] {
            ABSENT => None,
            j => Some(self.nu_grid.value(j as u32)),
        }
    }

    /// Grid offset of `state`, or an off-grid/coverage error.
    pub fn offset_of(&self, state: PosteriorState) -> Result<usize> {
        let (i, j) = state.increments_from(&self.params).ok_or_else(|| Error::OffGrid {
            alpha: state.alpha,
            beta: state.beta,
            reason: format!(
                "not reachable from prior ({}, {})",
                self.params.alpha0, self.params.beta0
            ),
        })?;
        if i + j > self.depth() {
            return Err(Error::Coverage {
                depth: i + j,
                covered: self.depth(),
            });
        }
        Ok(Grid::offset(i, j))
    }

    /// `nu*(u, state)`; `None` marks the absent sentinel.
    pub fn nu_star(&self, u: u32, state: PosteriorState) -> Result<Option<f64>> {
        if u == 0 || u > self.max_forward {
            return Err(Error::Domain(format!(
                "index slot must lie in 1..={}, got {u}",
                self.max_forward
            )));
        }
        Ok(self.value_at(self.offset_of(state)?, u))
    }

    /// `nu*(u, state)` for `u = 1..=M`.
    pub fn indices_at(&self, state: PosteriorState) -> Result<Vec<Option<f64>>> {
        let off = self.offset_of(state)?;
        Ok((1..=self.max_forward).map(|u| self.value_at(off, u)).collect())
    }

    pub(crate) fn fill_indices(&self, state: PosteriorState, out: &mut Vec<Option<f64>>) -> Result<()> {
        let off = self.offset_of(state)?;
        out.clear();
        out.extend((1..=self.max_forward).map(|u| self.value_at(off, u)));
        Ok(())
    }

    /// Writes `alpha,beta,u,nu_star` for every interior state; absent
    /// entries have an empty `nu_star`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "alpha,beta,u,nu_star")?;
        for d in 0..=self.depth() {
            for i in 0..=d {
                let j = d - i;
                let off = Grid::offset(i, j);
                let a = self.params.alpha0 + i as f64;
                let b = self.params.beta0 + j as f64;
                for u in 1..=self.max_forward {
                    match self.value_at(off, u) {
                        Some(v) => writeln!(out, "{a},{b},{u},{v}")?,
                        None => writeln!(out, "{a},{b},{u},")?,
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the index table by a multiplier sweep, optionally refining the
/// states up to `refine.max_depth` by bisection.
pub fn compute_index_table(
    params: &CategoryParams,
    max_forward: u32,
    config: &SolveConfig,
    nu_step: f64,
    refine: Option<Refine>,
) -> Result<IndexTable> {
    params.validate()?;
    config.validate(max_forward)?;
    build_table(params, max_forward, config, nu_step, refine)
}

fn build_table(
    params: &CategoryParams,
    max_forward: u32,
    config: &SolveConfig,
    nu_step: f64,
    refine: Option<Refine>,
) -> Result<IndexTable> {
    if let Some(r) = refine {
        if !(r.tol > 0.0) {
            return Err(Error::Config(format!("refine tolerance must be positive, got {}", r.tol)));
        }
    }
    let nu_grid = NuGrid::new(nu_step)?;
    let m = max_forward as usize;
    let states = Grid {
        max_depth: config.horizon as usize,
    }
    .len();
    let mut grid_idx = vec![ABSENT; states * m];

    let chunk = rayon::current_num_threads().max(1);
    let points: Vec<u32> = (0..=nu_grid.last()).collect();
    for js in points.chunks(chunk) {
        if js.len() == 1 {
            let j = js[0];
            dp::sweep_lower_actions(
                params,
                nu_grid.value(j),
                max_forward,
                config.horizon,
                config.boundary_mode,
                |off, u| record(&mut grid_idx, m, off, u, j),
            )?;
            continue;
        }
        let actions: Vec<Vec<u16>> = js
            .par_iter()
            .map(|&j| {
                let mut acts = vec![0u16; states];
                dp::sweep_lower_actions(
                    params,
                    nu_grid.value(j),
                    max_forward,
                    config.horizon,
                    config.boundary_mode,
                    |off, u| acts[off] = u,
                )
                .map(|_| acts)
            })
            .collect::<Result<_>>()?;
        for (&j, acts) in js.iter().zip(&actions) {
            for (off, &u) in acts.iter().enumerate() {
                record(&mut grid_idx, m, off, u, j);
            }
        }
    }

    let mut table = IndexTable {
        params: *params,
        max_forward,
        config: *config,
        nu_grid,
        grid_idx,
        refined: HashMap::new(),
        refine,
    };
    if let Some(r) = refine {
        let max_depth = r.max_depth.min(table.depth());
        let offsets: Vec<usize> = (0..Grid { max_depth }.len()).collect();
        let refined: Vec<Vec<(usize, f64)>> = offsets
            .par_iter()
            .map(|&off| refine_state(&table, off, r.tol))
            .collect::<Result<_>>()?;
        table.refined = refined.into_iter().flatten().collect();
    }
    Ok(table)
}

#[inline]
fn record(grid_idx: &mut [u16], m: usize, off: usize, u_star: u16, j: u32) {
    let base = off * m;
    for slot in &mut grid_idx[base..base + u_star as usize] {
        *slot = j as u16;
    }
}

/// Optimal action at the root of a solve rooted at `state` whose
/// truncation depth matches the enclosing table.
fn root_action(
    params: &CategoryParams,
    state: PosteriorState,
    remaining: u32,
    max_forward: u32,
    mode: BoundaryMode,
    nu: f64,
) -> Result<u32> {
    let rooted = params.rooted_at(state);
    let mut act = 0u16;
    dp::sweep_lower_actions(&rooted, nu, max_forward, remaining, mode, |off, u| {
        if off == 0 {
            act = u;
        }
    })?;
    Ok(act as u32)
}

fn refine_state(table: &IndexTable, off: usize, tol: f64) -> Result<Vec<(usize, f64)>> {
    let (i, j) = Grid::coords(off);
    let state = PosteriorState {
        alpha: table.params.alpha0 + i as f64,
        beta: table.params.beta0 + j as f64,
    };
    let remaining = table.config.horizon - (i + j) as u32;
    // Probed (nu, U*) pairs, shared across slots.
    let mut probes: Vec<(f64, u32)> = Vec::new();
    let mut out = Vec::new();
    for u in 1..=table.max_forward {
        let e = table.entry(off, u);
        let g = table.grid_idx[e];
        if g == ABSENT || g as u32 >= table.nu_grid.last() {
            continue;
        }
        let mut lo = table.nu_grid.value(g as u32);
        let mut hi = table.nu_grid.value(g as u32 + 1);
        for &(nu, a) in &probes {
            if a >= u && nu > lo && nu < hi {
                lo = nu;
            } else if a < u && nu < hi && nu > lo {
                hi = nu;
            }
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let a = root_action(
                &table.params,
                state,
                remaining,
                table.max_forward,
                table.config.boundary_mode,
                mid,
            )?;
            probes.push((mid, a));
            if a >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push((e, lo));
    }
    Ok(out)
}

/// `nu*(u, state)` for `u = 1..=M`, with the full truncation depth below
/// `state` and bisection refinement when `refine_tol` is given.
pub fn indices_at_state(
    params: &CategoryParams,
    state: PosteriorState,
    max_forward: u32,
    config: &SolveConfig,
    nu_step: f64,
    refine_tol: Option<f64>,
) -> Result<Vec<Option<f64>>> {
    let rooted = params.rooted_at(PosteriorState::new(state.alpha, state.beta)?);
    let table = compute_index_table(
        &rooted,
        max_forward,
        config,
        nu_step,
        refine_tol.map(Refine::root),
    )?;
    table.indices_at(rooted.prior())
}

/// Optimal action `U*_nu(state)` for each multiplier in `nus`, each from a
/// solve rooted at `state`.
pub fn root_action_profile(
    params: &CategoryParams,
    state: PosteriorState,
    max_forward: u32,
    config: &SolveConfig,
    nus: &[f64],
) -> Result<Vec<u32>> {
    config.validate(max_forward)?;
    let state = PosteriorState::new(state.alpha, state.beta)?;
    nus.par_iter()
        .map(|&nu| root_action(params, state, config.horizon, max_forward, config.boundary_mode, nu))
        .collect()
}

/// Degenerate-queue discretization used for the Gittins comparison.
pub const GITTINS_XI: f64 = 1e-6;

/// `nu*(1, alpha, beta)` with `M = 1` and an almost-never-empty queue: the
/// Gittins index of a Bernoulli arm against a known arm paying 0.
pub fn gittins_cross_check(alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    let params = CategoryParams::new(gamma, GITTINS_XI, alpha, beta)?;
    let idx = indices_at_state(
        &params,
        params.prior(),
        1,
        &SolveConfig::default(),
        DEFAULT_NU_STEP,
        Some(DEFAULT_REFINE_TOL),
    )?;
    idx[0].ok_or_else(|| Error::Order("index absent at nu = 0".into()))
}

/// One `(category, slot)` entry of the ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankEntry {
    pub category: usize,
    pub slot: u32,
    pub nu_star: f64,
}

/// Entries ordered by descending `nu*`, ties by category then slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RankedList {
    pub entries: Vec<RankEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `rank,category,u,nu_star` rows (rank starts at 1).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "rank,category,u,nu_star")?;
        for (r, e) in self.entries.iter().enumerate() {
            writeln!(out, "{},{},{},{}", r + 1, e.category, e.slot, e.nu_star)?;
        }
        Ok(())
    }
}

/// A ranked list together with the slots granted from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub list: RankedList,
    /// Number of leading entries granted.
    pub granted: usize,
    /// `U_x`: largest slot granted per category.
    pub allocation: Vec<u32>,
}

impl Ranking {
    pub fn granted_entries(&self) -> &[RankEntry] {
        &self.list.entries[..self.granted]
    }
}

fn rank_order(a: &RankEntry, b: &RankEntry) -> std::cmp::Ordering {
    b.nu_star
        .total_cmp(&a.nu_star)
        .then(a.category.cmp(&b.category))
        .then(a.slot.cmp(&b.slot))
}

/// Ranks `(category, slot)` pairs by index and walks the list, stopping when
/// `budget` slots are granted or an entry falls below `cost`.
pub fn rank_from_indices(
    indices: &[Vec<Option<f64>>],
    budget: Option<u32>,
    cost: Option<f64>,
) -> Ranking {
    let mut entries: Vec<RankEntry> = indices
        .iter()
        .enumerate()
        .flat_map(|(x, row)| {
            row.iter().enumerate().filter_map(move |(u, v)| {
                v.map(|nu_star| RankEntry {
                    category: x,
                    slot: u as u32 + 1,
                    nu_star,
                })
            })
        })
        .collect();
    entries.sort_by(rank_order);
    let mut allocation = vec![0u32; indices.len()];
    let mut granted = 0;
    for e in &entries {
        if budget.is_some_and(|b| granted >= b as usize) || cost.is_some_and(|c| e.nu_star < c) {
            break;
        }
        allocation[e.category] = allocation[e.category].max(e.slot);
        granted += 1;
    }
    Ranking {
        list: RankedList { entries },
        granted,
        allocation,
    }
}

/// MDP-IF ranked list for categories at `states`, each with its own table.
pub fn build_ranked_list(
    states: &[PosteriorState],
    tables: &[&IndexTable],
    budget: Option<u32>,
    cost: Option<f64>,
) -> Result<Ranking> {
    if states.len() != tables.len() {
        return Err(Error::Domain(format!(
            "{} states but {} index tables",
            states.len(),
            tables.len()
        )));
    }
    let indices = states
        .iter()
        .zip(tables)
        .map(|(s, t)| t.indices_at(*s))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_from_indices(&indices, budget, cost))
}

/// Reusable buffers for [`allocate`].
#[derive(Debug, Default, Clone)]
pub struct AllocScratch {
    entries: Vec<RankEntry>,
    row: Vec<Option<f64>>,
}

/// Allocation of [`build_ranked_list`] without materializing the full
/// sorted list: only the granted prefix is ordered.
pub fn allocate(
    states: &[PosteriorState],
    tables: &[&IndexTable],
    budget: Option<u32>,
    cost: Option<f64>,
    scratch: &mut AllocScratch,
    allocation: &mut Vec<u32>,
) -> Result<()> {
    let AllocScratch { entries, row } = scratch;
    entries.clear();
    for (x, (s, t)) in states.iter().zip(tables).enumerate() {
        t.fill_indices(*s, row)?;
        push_entries(entries, x, row, cost);
    }
    select_allocation(entries, states.len(), budget, allocation);
    Ok(())
}

/// Appends the present entries of category `x` that pass the cost gate.
fn push_entries(entries: &mut Vec<RankEntry>, x: usize, row: &[Option<f64>], cost: Option<f64>) {
    for (u, v) in row.iter().enumerate() {
        if let Some(nu_star) = *v {
            if cost.is_none_or(|c| nu_star >= c) {
                entries.push(RankEntry {
                    category: x,
                    slot: u as u32 + 1,
                    nu_star,
                });
            }
        }
    }
}

/// Grants the best `budget` entries. Entries below the cost threshold were
/// dropped up front, so the granted set is exactly the leading prefix of the
/// full ranking.
fn select_allocation(entries: &mut [RankEntry], k: usize, budget: Option<u32>, allocation: &mut Vec<u32>) {
    allocation.clear();
    allocation.resize(k, 0);
    let take = budget.map_or(entries.len(), |b| (b as usize).min(entries.len()));
    if take == 0 {
        return;
    }
    if take < entries.len() {
        entries.select_nth_unstable_by(take - 1, rank_order);
    }
    for e in &entries[..take] {
        allocation[e.category] = allocation[e.category].max(e.slot);
    }
}
