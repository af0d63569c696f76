//! Truncated backward induction for the single-category forwarding MDP.
//!
//! States are posteriors `(alpha0 + i, beta0 + j)` reached after `i`
//! relevant and `j` irrelevant observations; `d = i + j` is the state's
//! depth. Interior states (`d <= horizon`) are solved by the Bellman
//! recursion, states with `horizon < d <= horizon + M` take boundary values
//! that bracket the true value function from below and above.
//!
//! An empty queue (`Z = 0`) leaves the posterior unchanged, so every
//! Q-factor refers back to the state being solved. For `u >= 1` that
//! self-term is `gamma * xi * V`, and the fixed point is taken in closed
//! form: `V = max(0, max_u A_u / (1 - gamma xi))`, where `A_u` collects the
//! immediate reward and the successors with `Z >= 1`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expected_min, expected_positive_part, CategoryParams, PosteriorState};

/// Relative tolerance used when comparing Q-factors against the optimum.
pub const TIE_REL_TOL: f64 = 1e-9;

/// Default truncation depth.
pub const DEFAULT_HORIZON: u32 = 200;

/// Terminal-value formulas used beyond the truncation depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// `E[min(M,L)] / ((1-gamma)(1-gamma xi))` times `max(0, mu - nu)` and 1.
    Paper,
    /// Commit-forever value below, perfect-information value above.
    #[default]
    Safe,
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "safe" => Ok(Self::Safe),
            other => Err(Error::Config(format!(
                "unknown boundary mode '{other}' (expected 'paper' or 'safe')"
            ))),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Safe => "safe",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Truncation depth: maximum number of observations solved exactly.
    pub horizon: u32,
    pub boundary_mode: BoundaryMode,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            boundary_mode: BoundaryMode::Safe,
        }
    }
}

impl SolveConfig {
    pub fn new(horizon: u32, boundary_mode: BoundaryMode) -> Self {
        Self {
            horizon,
            boundary_mode,
        }
    }

    pub fn validate(&self, max_forward: u32) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.horizon < max_forward {
            return Err(Error::Config(format!(
                "horizon {} must be at least max_forward {max_forward}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Which of the two value brackets to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

/// Triangular grid of `(i, j)` increments with `i + j <= max_depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub max_depth: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        triangle(self.max_depth + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn offset(i: usize, j: usize) -> usize {
        triangle(i + j) + i
    }

    /// Inverse of [`Grid::offset`].
    pub fn coords(offset: usize) -> (usize, usize) {
        // Largest d with d(d+1)/2 <= offset.
        let mut d = (((8 * offset + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
        while triangle(d + 1) <= offset {
            d += 1;
        }
        while triangle(d) > offset {
            d -= 1;
        }
        let i = offset - triangle(d);
        (i, d - i)
    }
}

#[inline]
fn triangle(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Per-category constants shared by every Bellman backup of one solve.
#[derive(Debug, Clone)]
pub(crate) struct Backup {
    gamma: f64,
    xi: f64,
    nu: f64,
    m: usize,
    /// `E[min(u, L)]` for `u = 0..=M`.
    emin: Vec<f64>,
    /// `(1 - xi)^i` for `i = 0..=M`.
    survive: Vec<f64>,
    /// `E[min(M, L)] / (1 - gamma)`: discounted visits weighted by shown items.
    commit_scale: f64,
    paper_scale: f64,
    mode: BoundaryMode,
}

/// Scratch space for one backup: beta-binomial rows and `W_i`.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    row: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(m: usize) -> Self {
        Self {
            row: vec![0.0; m + 1],
            w: vec![0.0; m + 1],
            a: vec![0.0; m + 1],
        }
    }
}

impl Backup {
    pub(crate) fn new(params: &CategoryParams, nu: f64, m: u32, mode: BoundaryMode) -> Result<Self> {
        params.validate()?;
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!("cost/multiplier must be >= 0, got {nu}")));
        }
        if m == 0 {
            return Err(Error::Domain("max_forward must be >= 1".into()));
        }
        let emin = (0..=m)
            .map(|u| expected_min(u, params.xi))
            .collect::<Result<Vec<_>>>()?;
        let survive = (0..=m).map(|i| (1.0 - params.xi).powi(i as i32)).collect();
        let commit_scale = emin[m as usize] / (1.0 - params.gamma);
        Ok(Self {
            gamma: params.gamma,
            xi: params.xi,
            nu,
            m: m as usize,
            emin,
            survive,
            commit_scale,
            paper_scale: commit_scale / (1.0 - params.gamma * params.xi),
            mode,
        })
    }

    pub(crate) fn boundary(&self, state: PosteriorState, bound: Bound) -> f64 {
        let mu = state.mean();
        match (self.mode, bound) {
            (BoundaryMode::Safe, Bound::Lower) => (mu - self.nu).max(0.0) * self.commit_scale,
            (BoundaryMode::Safe, Bound::Upper) => {
                expected_positive_part(state, self.nu) * self.commit_scale
            }
            (BoundaryMode::Paper, Bound::Lower) => (mu - self.nu).max(0.0) * self.paper_scale,
            (BoundaryMode::Paper, Bound::Upper) => self.paper_scale,
        }
    }

    /// Fills `scratch.w[i] = E[V(successor) | Z = i]` for `i = 1..=M`.
    #[inline]
    fn successor_means<F>(&self, alpha: f64, beta: f64, succ: &F, scratch: &mut Scratch)
    where
        F: Fn(usize, usize) -> f64,
    {
        let row = &mut scratch.row;
        let mut p0 = 1.0;
        for i in 1..=self.m {
            let fi = i as f64;
            // P(Y = 0 | Z = i) = prod_{j < i} (beta + j) / (alpha + beta + j)
            p0 *= (beta + fi - 1.0) / (alpha + beta + fi - 1.0);
            row[0] = p0;
            let mut acc = p0 * succ(i, 0);
            for k in 0..i {
                let fk = k as f64;
                row[k + 1] = row[k] * ((fi - fk) / (fk + 1.0)) * ((alpha + fk) / (beta + fi - fk - 1.0));
                acc += row[k + 1] * succ(i, k + 1);
            }
            scratch.w[i] = acc;
        }
    }

    /// Bellman backup at `(alpha, beta)`: returns the value and the largest
    /// maximizing action. `succ(i, k)` is the value after `i` shown items of
    /// which `k` were relevant.
    #[inline]
    pub(crate) fn solve_state<F>(
        &self,
        alpha: f64,
        beta: f64,
        succ: F,
        scratch: &mut Scratch,
    ) -> (f64, u16)
    where
        F: Fn(usize, usize) -> f64,
    {
        self.successor_means(alpha, beta, &succ, scratch);
        let mu = alpha / (alpha + beta);
        let net = mu - self.nu;

        // A_u = net E[min(u,L)] + gamma (sum_{i<u} (1-xi)^i xi W_i + (1-xi)^u W_u)
        let mut best = f64::NEG_INFINITY;
        let mut prefix = 0.0;
        for u in 1..=self.m {
            let au = net * self.emin[u] + self.gamma * (prefix + self.survive[u] * scratch.w[u]);
            scratch.a[u] = au;
            best = best.max(au);
            prefix += self.survive[u] * self.xi * scratch.w[u];
        }
        let v = (best / (1.0 - self.gamma * self.xi)).max(0.0);
        let tol = TIE_REL_TOL * v.abs();
        let self_term = self.gamma * self.xi * v;
        let u_star = (1..=self.m)
            .rev()
            .find(|&u| scratch.a[u] + self_term >= v - tol)
            .unwrap_or(0) as u16;
        (v, u_star)
    }
}

/// Solved value brackets and optimal actions over the state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub params: CategoryParams,
    /// Effective unit cost: the forwarding cost or a Lagrange multiplier.
    pub nu: f64,
    pub max_forward: u32,
    pub horizon: u32,
    pub boundary_mode: BoundaryMode,
    v_lower: Vec<f64>,
    v_upper: Vec<f64>,
    u_star: Vec<u16>,
}

/// Root value bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootValue {
    pub lower: f64,
    pub upper: f64,
    pub mid: f64,
    pub gap: f64,
}

impl ValueTable {
    pub fn grid(&self) -> Grid {
        Grid {
            max_depth: (self.horizon + self.max_forward) as usize,
        }
    }

    /// Grid coordinates of `state`, if it lies within `max_depth`.
    fn locate(&self, state: PosteriorState, max_depth: usize) -> Result<(usize, usize)> {
        let (i, j) = state.increments_from(&self.params).ok_or_else(|| Error::OffGrid {
            alpha: state.alpha,
            beta: state.beta,
            reason: format!(
                "not reachable from prior ({}, {})",
                self.params.alpha0, self.params.beta0
            ),
        })?;
        if i + j > max_depth {
            return Err(Error::OffGrid {
                alpha: state.alpha,
                beta: state.beta,
                reason: format!("depth {} exceeds {}", i + j, max_depth),
            });
        }
        Ok((i, j))
    }

    pub fn value(&self, state: PosteriorState, bound: Bound) -> Result<f64> {
        let (i, j) = self.locate(state, self.grid().max_depth)?;
        let off = Grid::offset(i, j);
        Ok(match bound {
            Bound::Lower => self.v_lower[off],
            Bound::Upper => self.v_upper[off],
        })
    }

    pub fn values(&self, bound: Bound) -> &[f64] {
        match bound {
            Bound::Lower => &self.v_lower,
            Bound::Upper => &self.v_upper,
        }
    }

    /// Writes `alpha,beta,v_lower,v_upper,u_star`; `u_star` is empty for
    /// boundary states.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "alpha,beta,v_lower,v_upper,u_star")?;
        let g = self.grid();
        for d in 0..=g.max_depth {
            for i in 0..=d {
                let j = d - i;
                let off = Grid::offset(i, j);
                let a = self.params.alpha0 + i as f64;
                let b = self.params.beta0 + j as f64;
                write!(out, "{a},{b},{},{},", self.v_lower[off], self.v_upper[off])?;
                if d <= self.horizon as usize {
                    writeln!(out, "{}", self.u_star[off])?;
                } else {
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }
}

/// Solves the category's MDP with unit cost `nu` and per-visit cap `max_forward`.
pub fn solve(
    params: &CategoryParams,
    nu: f64,
    max_forward: u32,
    config: &SolveConfig,
) -> Result<ValueTable> {
    config.validate(max_forward)?;
    solve_unchecked(params, nu, max_forward, config.horizon, config.boundary_mode)
}

/// As [`solve`] but allows any horizon, including 0 (root sits on the
/// truncation depth). Used for solves rooted at interior states.
pub(crate) fn solve_unchecked(
    params: &CategoryParams,
    nu: f64,
    max_forward: u32,
    horizon: u32,
    mode: BoundaryMode,
) -> Result<ValueTable> {
    let backup = Backup::new(params, nu, max_forward, mode)?;
    let m = max_forward as usize;
    let interior = horizon as usize;
    let grid = Grid {
        max_depth: interior + m,
    };
    let mut v_lower = vec![0.0; grid.len()];
    let mut v_upper = vec![0.0; grid.len()];
    let mut u_star = vec![0u16; triangle(interior + 1)];
    let mut scratch = Scratch::new(m);

    for d in (0..=grid.max_depth).rev() {
        for i in 0..=d {
            let j = d - i;
            let off = Grid::offset(i, j);
            let alpha = params.alpha0 + i as f64;
            let beta = params.beta0 + j as f64;
            if d > interior {
                let s = PosteriorState { alpha, beta };
                v_lower[off] = backup.boundary(s, Bound::Lower);
                v_upper[off] = backup.boundary(s, Bound::Upper);
                continue;
            }
            let (lo, act) = backup.solve_state(
                alpha,
                beta,
                |n, k| v_lower[Grid::offset(i + k, j + n - k)],
                &mut scratch,
            );
            let (hi, _) = backup.solve_state(
                alpha,
                beta,
                |n, k| v_upper[Grid::offset(i + k, j + n - k)],
                &mut scratch,
            );
            v_lower[off] = lo;
            v_upper[off] = hi;
            u_star[off] = act;
        }
    }

    Ok(ValueTable {
        params: *params,
        nu,
        max_forward,
        horizon,
        boundary_mode: mode,
        v_lower,
        v_upper,
        u_star,
    })
}

/// Lower-bound solve that keeps only `M + 1` diagonals in memory and
/// reports `(offset, u_star)` for every interior state. Used by the
/// multiplier sweep, which needs actions but not value tables.
pub(crate) fn sweep_lower_actions<F>(
    params: &CategoryParams,
    nu: f64,
    max_forward: u32,
    horizon: u32,
    mode: BoundaryMode,
    mut on_state: F,
) -> Result<f64>
where
    F: FnMut(usize, u16),
{
    let backup = Backup::new(params, nu, max_forward, mode)?;
    let m = max_forward as usize;
    let interior = horizon as usize;
    let max_depth = interior + m;
    let ring = m + 1;
    let mut diags: Vec<Vec<f64>> = (0..ring).map(|_| vec![0.0; max_depth + 1]).collect();
    let mut scratch = Scratch::new(m);
    let mut root = 0.0;

    for d in (0..=max_depth).rev() {
        let slot = d % ring;
        // Successor diagonals d+1..=d+M live at (d + n) % ring, never `slot`.
        let (before, rest) = diags.split_at_mut(slot);
        let (cur, after) = rest.split_first_mut().expect("ring slot");
        let read = |n: usize, i: usize| -> f64 {
            let s = (d + n) % ring;
            if s < slot {
                before[s][i]
            } else {
                after[s - slot - 1][i]
            }
        };
        for i in 0..=d {
            let j = d - i;
            let alpha = params.alpha0 + i as f64;
            let beta = params.beta0 + j as f64;
            if d > interior {
                cur[i] = backup.boundary(PosteriorState { alpha, beta }, Bound::Lower);
                continue;
            }
            let (v, act) = backup.solve_state(alpha, beta, |n, k| read(n, i + k), &mut scratch);
            cur[i] = v;
            on_state(Grid::offset(i, j), act);
        }
        if d == 0 {
            root = cur[0];
        }
    }
    Ok(root)
}

/// Q-factor of forwarding at most `u` items at an interior `state`, then
/// acting optimally with respect to the selected bound table.
pub fn q_factor(state: PosteriorState, u: u32, table: &ValueTable, bound: Bound) -> Result<f64> {
    if u > table.max_forward {
        return Err(Error::Domain(format!(
            "action {u} exceeds max_forward {}",
            table.max_forward
        )));
    }
    let (i, j) = table.locate(state, table.horizon as usize).map_err(|e| match e {
        Error::OffGrid { .. } => Error::Order(format!(
            "successors of ({}, {}) are not solved (state is not interior)",
            state.alpha, state.beta
        )),
        other => other,
    })?;
    let xi = table.params.xi;
    let values = table.values(bound);
    let mu = state.mean();
    let mut future = 0.0;
    for n in 0..=u as usize {
        let p_z = crate::model::truncated_queue_pmf(n as u32, u, xi)?;
        let mut w = 0.0;
        for k in 0..=n {
            let p_y = crate::model::beta_binomial_pmf(k as u32, n as u32, state.alpha, state.beta)?;
            w += p_y * values[Grid::offset(i + k, j + n - k)];
        }
        future += p_z * w;
    }
    Ok((mu - table.nu) * expected_min(u, xi)? + table.params.gamma * future)
}

/// Root bracket `(lower, upper, mid)` and its gap.
pub fn value_at_root(table: &ValueTable) -> RootValue {
    let lower = table.v_lower[0];
    let upper = table.v_upper[0];
    RootValue {
        lower,
        upper,
        mid: 0.5 * (lower + upper),
        gap: upper - lower,
    }
}

/// Optimal action at an interior state, extracted from the lower-bound table.
pub fn optimal_action(table: &ValueTable, state: PosteriorState) -> Result<u32> {
    let (i, j) = table.locate(state, table.horizon as usize)?;
    Ok(table.u_star[Grid::offset(i, j)] as u32)
}
