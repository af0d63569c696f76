//! Lagrangian-relaxation upper bound for the budget-constrained problem.
//!
//! Pricing every forwarded item at a common multiplier `nu` decouples the
//! categories: the relaxed value is the sum of single-category values with
//! unit cost `nu`, plus `M nu` per expected visit. Every `nu >= 0` gives an
//! upper bound on the best budget-feasible policy; the bound reported is
//! the minimum over `nu in [0, 1]`.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{self, value_at_root, SolveConfig};
use crate::error::Result;
use crate::model::{CategoryParams, ModelParams};

/// Coarse scan step used to seed the golden-section search.
pub const SCAN_STEP: f64 = 0.05;
/// Default golden-section interval width.
pub const DEFAULT_TOL: f64 = 1e-3;

/// Relaxed value at one multiplier, computed from lower and upper root
/// values of every category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub nu: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    /// Minimizing multiplier.
    pub nu_star_arg: f64,
    /// Relaxed value at `nu_star_arg` from the lower-bound tables.
    pub ub_lower: f64,
    /// Relaxed value at `nu_star_arg` from the upper-bound tables: a
    /// certified upper bound on the constrained problem.
    pub ub_upper: f64,
    /// Every evaluation, in evaluation order.
    pub trace: Vec<TracePoint>,
    /// Negative second differences found on the coarse scan.
    pub convexity_violations: usize,
    /// The scan was not unimodal and a fine grid replaced golden section.
    pub fine_grid_fallback: bool,
}

impl BoundResult {
    pub fn solver_gap(&self) -> f64 {
        self.ub_upper - self.ub_lower
    }

    /// Writes the `nu,lower,upper` trace sorted by `nu`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "nu,lower,upper")?;
        let mut pts = self.trace.clone();
        pts.sort_by(|a, b| a.nu.total_cmp(&b.nu));
        pts.dedup_by(|a, b| a.nu == b.nu);
        for p in pts {
            writeln!(out, "{},{},{}", p.nu, p.lower, p.upper)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for BoundResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "nu_star_arg: {}", self.nu_star_arg)?;
        writeln!(f, "ub_lower: {}", self.ub_lower)?;
        writeln!(f, "ub_upper: {}", self.ub_upper)?;
        writeln!(f, "solver_gap: {}", self.solver_gap())?;
        writeln!(f, "evaluations: {}", self.trace.len())?;
        writeln!(f, "convexity_violations: {}", self.convexity_violations)?;
        write!(f, "fine_grid_fallback: {}", self.fine_grid_fallback)
    }
}

/// Identical categories are solved once.
fn distinct_categories(model: &ModelParams) -> Vec<(CategoryParams, usize)> {
    let mut out: Vec<(CategoryParams, usize)> = Vec::new();
    for c in &model.categories {
        match out.iter_mut().find(|(p, _)| p == c) {
            Some((_, n)) => *n += 1,
            None => out.push((*c, 1)),
        }
    }
    out
}

/// `gamma * sum_x V_x^nu(prior_x) + M nu gamma / (1 - gamma)`, as a
/// `(lower, upper)` pair from the per-category root brackets.
///
/// `V_x` counts visits from the first one undiscounted; the relaxed
/// objective sums over the `N` visits that actually happen, which carries
/// one extra factor of `gamma`.
pub fn lagrangian_value(model: &ModelParams, nu: f64, config: &SolveConfig) -> Result<(f64, f64)> {
    model.validate()?;
    let gamma = model.common_gamma()?;
    let parts = distinct_categories(model)
        .par_iter()
        .map(|(p, n)| {
            let t = dp::solve(p, nu, model.max_forward, config)?;
            let r = value_at_root(&t);
            Ok((r.lower * *n as f64, r.upper * *n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = parts
        .iter()
        .fold((0.0, 0.0), |(a, b), (l, u)| (a + l, b + u));
    let constant = model.max_forward as f64 * nu * gamma / (1.0 - gamma);
    Ok((gamma * lo + constant, gamma * hi + constant))
}

struct Evaluator<'a> {
    model: &'a ModelParams,
    config: &'a SolveConfig,
    trace: Vec<TracePoint>,
    cache: HashMap<u64, TracePoint>,
}

impl Evaluator<'_> {
    fn eval(&mut self, nu: f64) -> Result<f64> {
        let key = nu.to_bits();
        let p = match self.cache.get(&key) {
            Some(p) => *p,
            None => {
                let (lower, upper) = lagrangian_value(self.model, nu, self.config)?;
                let p = TracePoint { nu, lower, upper };
                self.cache.insert(key, p);
                self.trace.push(p);
                p
            }
        };
        Ok(p.upper)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes the relaxed value over `nu in [0, 1]`.
///
/// A scan with step [`SCAN_STEP`] brackets the minimizer; golden-section
/// search then narrows the bracket to width `tol`. If the scan profile is not
/// unimodal, every point of a grid with step `tol` is evaluated instead.
pub fn upper_bound(model: &ModelParams, config: &SolveConfig, tol: f64) -> Result<BoundResult> {
    if !(tol > 0.0) {
        return Err(crate::Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    model.validate()?;
    model.common_gamma()?;
    let mut ev = Evaluator {
        model,
        config,
        trace: Vec::new(),
        cache: HashMap::new(),
    };

    let n_scan = (1.0 / SCAN_STEP).round() as usize;
    let scan_nu: Vec<f64> = (0..=n_scan).map(|j| j as f64 / n_scan as f64).collect();
    let scan: Vec<f64> = scan_nu.iter().map(|&nu| ev.eval(nu)).collect::<Result<_>>()?;

    let scale = scan.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let flat = 1e-9 * scale;
    let convexity_violations = scan
        .windows(3)
        .filter(|w| w[0] - 2.0 * w[1] + w[2] < -flat)
        .count();
    let unimodal = {
        // Once the profile rises it must not fall again.
        let mut rising = false;
        let mut ok = true;
        for w in scan.windows(2) {
            if w[1] > w[0] + flat {
                rising = true;
            } else if rising && w[1] < w[0] - flat {
                ok = false;
                break;
            }
        }
        ok
    };

    let (nu_star_arg, fine_grid_fallback) = if unimodal {
        let best = argmin(&scan);
        let mut a = scan_nu[best.saturating_sub(1)];
        let mut b = scan_nu[(best + 1).min(n_scan)];
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = ev.eval(c)?;
        let mut fd = ev.eval(d)?;
        while b - a > tol {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = ev.eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = ev.eval(d)?;
            }
        }
        (best_in_trace(&ev.trace), false)
    } else {
        let n = (1.0 / tol).ceil() as usize;
        for j in 0..=n {
            ev.eval((j as f64 / n as f64).min(1.0))?;
        }
        (best_in_trace(&ev.trace), true)
    };

    let p = ev.cache[&nu_star_arg.to_bits()];
    Ok(BoundResult {
        nu_star_arg,
        ub_lower: p.lower,
        ub_upper: p.upper,
        trace: ev.trace,
        convexity_violations,
        fine_grid_fallback,
    })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn best_in_trace(trace: &[TracePoint]) -> f64 {
    trace
        .iter()
        .min_by(|a, b| a.upper.total_cmp(&b.upper).then(a.nu.total_cmp(&b.nu)))
        .map(|p| p.nu)
        .unwrap_or(0.0)
}
