//! Subcommand implementations. Each writes its CSV output, the resolved
//! `run.toml`, and a `manifest.json` into the output directory, and prints a
//! short summary to stdout.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use mdpif::dp::{self, Bound, BoundaryMode, SolveConfig, ValueTable};
use mdpif::index::{self, Refine};
use mdpif::lagrangian;
use mdpif::model::PosteriorState;
use mdpif::policy::{ExploitPolicy, MdpIfPolicy, Policy, PolicyKind, UcbPolicy};
use mdpif::scenarios::ranking_example;
use mdpif::sim::{self, ScenarioConfig, SimulationReport, TableCache};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// Relative slack allowed when checking `v_lower <= v_upper`.
const SANDWICH_REL_TOL: f64 = 1e-9;

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(config: &RunConfig) -> Result<Self, CliError> {
        let dir = config.out_dir();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(path)
    }

    fn finish(mut self, command: &str, config: &RunConfig, summary: Value) -> Result<(), CliError> {
        self.write("run.toml", |w| w.write_all(config.to_toml().as_bytes()))?;
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": self.files,
            "summary": summary,
        });
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
        Ok(())
    }
}

/// Counts states where the bracket is inverted beyond round-off.
fn sandwich_violations(lower: &[f64], upper: &[f64]) -> usize {
    lower
        .iter()
        .zip(upper)
        .filter(|(l, u)| **l > **u + SANDWICH_REL_TOL * l.abs().max(1.0))
        .count()
}

fn contract_check(table: &ValueTable, config: &SolveConfig) -> Result<Vec<String>, CliError> {
    let mut problems = Vec::new();
    let n = sandwich_violations(table.values(Bound::Lower), table.values(Bound::Upper));
    if n > 0 {
        problems.push(format!("v_lower > v_upper at {n} states"));
    }
    if config.boundary_mode == BoundaryMode::Paper {
        let safe = dp::solve(
            &table.params,
            table.nu,
            table.max_forward,
            &SolveConfig::new(config.horizon, BoundaryMode::Safe),
        )?;
        let n = sandwich_violations(table.values(Bound::Lower), safe.values(Bound::Upper));
        if n > 0 {
            problems.push(format!(
                "paper-mode lower bound exceeds the certified upper bound at {n} states"
            ));
        }
    }
    Ok(problems)
}

pub fn solve(config: &RunConfig) -> Result<(), CliError> {
    let params = config.single_category()?;
    let nu = config.model.cost.unwrap_or(0.0);
    let sc = config.solve_config();
    let table = dp::solve(&params, nu, config.max_forward(), &sc)?;
    let root = dp::value_at_root(&table);

    let mut out = Outputs::new(config)?;
    let path = out.write("value_table.csv", |w| table.write_csv(w))?;
    let problems = contract_check(&table, &sc)?;
    let action = dp::optimal_action(&table, params.prior())?;
    println!("lower {} upper {} mid {} gap {}", root.lower, root.upper, root.mid, root.gap);
    println!("optimal action at the prior: {action}");
    println!("states: {} (table: {})", table.grid().len(), path.display());
    out.finish(
        "solve",
        config,
        json!({ "root": root, "optimal_action": action, "contract_violations": problems }),
    )?;
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Contract(problems.join("; ")))
    }
}

pub fn index(config: &RunConfig, state: Option<(f64, f64)>) -> Result<(), CliError> {
    let params = config.single_category()?;
    let m = config.max_forward();
    let sc = config.solve_config();
    let mut out = Outputs::new(config)?;
    let summary = match state {
        Some((alpha, beta)) => {
            let s = PosteriorState::new(alpha, beta)?;
            let nus = index::indices_at_state(&params, s, m, &sc, config.nu_step(), config.solver.refine_tol)?;
            let write_rows = |w: &mut dyn Write| -> std::io::Result<()> {
                writeln!(w, "alpha,beta,u,nu_star")?;
                for (u, v) in nus.iter().enumerate() {
                    writeln!(w, "{alpha},{beta},{},{}", u + 1, v.map_or(String::new(), |v| v.to_string()))?;
                }
                Ok(())
            };
            write_rows(&mut std::io::stdout().lock())?;
            out.write("index_state.csv", write_rows)?;
            json!({ "alpha": alpha, "beta": beta, "nu_star": nus })
        }
        None => {
            let refine = config.solver.refine_tol.map(|tol| Refine {
                tol,
                max_depth: config.solver.refine_depth.unwrap_or(0),
            });
            let table = index::compute_index_table(&params, m, &sc, config.nu_step(), refine)?;
            let path = out.write("index_table.csv", |w| table.write_csv(w))?;
            let root = table.indices_at(params.prior())?;
            println!("nu*(u, {}, {}) for u = 1..{m}: {}", params.alpha0, params.beta0, fmt_indices(&root));
            println!("table: {}", path.display());
            json!({ "depth": table.depth(), "root_nu_star": root })
        }
    };
    out.finish("index", config, summary)
}

fn fmt_indices(v: &[Option<f64>]) -> String {
    v.iter()
        .map(|x| x.map_or("-".to_string(), |x| format!("{x:.4}")))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn rank(config: &RunConfig, states: &[(f64, f64)], example: bool, budget: Option<u32>) -> Result<(), CliError> {
    let m = config.max_forward();
    let sc = config.solve_config();
    let (states, budget): (Vec<(f64, f64)>, Option<u32>) = if example {
        let s = ranking_example::states().map(|s| (s.alpha, s.beta)).to_vec();
        (s, budget.or(Some(ranking_example::BUDGET)))
    } else {
        (states.to_vec(), budget)
    };
    let base = if states.is_empty() { None } else { Some(config.single_category()?) };
    let indices = states
        .iter()
        .map(|&(a, b)| {
            let s = PosteriorState::new(a, b)?;
            let params = base.expect("categories exist when states do");
            Ok(index::indices_at_state(&params, s, m, &sc, config.nu_step(), config.solver.refine_tol)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let ranking = index::rank_from_indices(&indices, budget, config.model.cost);

    let label = |x: usize| {
        if example {
            ranking_example::LABELS[x].to_string()
        } else {
            x.to_string()
        }
    };
    let mut out = Outputs::new(config)?;
    out.write("ranked_list.csv", |w| ranking.list.write_csv(w))?;
    ranking.list.write_csv(std::io::stdout().lock())?;
    let prefix: Vec<String> = ranking.granted_entries().iter().map(|e| label(e.category)).collect();
    println!("granted: {{{}}}", prefix.join(","));
    println!("allocation: {:?}", ranking.allocation);
    out.finish(
        "rank",
        config,
        json!({ "granted": prefix, "allocation": ranking.allocation, "budget": budget }),
    )
}

pub fn upper_bound(config: &RunConfig) -> Result<(), CliError> {
    let k = *config.k_values()?.first().expect("k list is non-empty");
    let mut model = config.model_params(k)?;
    // The bound addresses the budget-constrained relevant-count problem.
    model.cost = None;
    let tol = config.solver.ub_tol.unwrap_or(lagrangian::DEFAULT_TOL);
    let result = lagrangian::upper_bound(&model, &config.solve_config(), tol)?;
    let mut out = Outputs::new(config)?;
    out.write("ub_trace.csv", |w| result.write_trace_csv(w))?;
    println!("{result}");
    let ok = result.ub_lower <= result.ub_upper + SANDWICH_REL_TOL * result.ub_upper.abs().max(1.0);
    out.finish("upper-bound", config, serde_json::to_value(&result).expect("bound serializes"))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Contract(format!(
            "ub_lower {} exceeds ub_upper {}",
            result.ub_lower, result.ub_upper
        )))
    }
}

pub fn simulate(config: &RunConfig) -> Result<(), CliError> {
    let sim_cfg = &config.simulation;
    let kinds = sim_cfg.policies.clone().unwrap_or_else(|| PolicyKind::ALL.to_vec());
    if kinds.is_empty() {
        return Err(CliError::Config("at least one policy is required".into()));
    }
    let allocation = sim_cfg.allocation.unwrap_or_default();
    let cache = TableCache::new();
    let mut reports = Vec::new();
    // Deepest first: its tables cover the smaller category counts.
    let mut ks = config.k_values()?;
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    for k in ks {
        let scenario = ScenarioConfig {
            model: config.model_params(k)?,
            num_users: sim_cfg.users.unwrap_or(crate::config::DEFAULT_USERS),
            seed: sim_cfg.seed.unwrap_or(crate::config::DEFAULT_SEED),
            reward_mode: sim_cfg.reward_mode.unwrap_or_default(),
            correlated_queues: sim_cfg.correlated_queues.unwrap_or(false),
        };
        scenario.validate()?;
        let mut owned: Vec<Box<dyn Policy>> = Vec::new();
        for kind in &kinds {
            owned.push(match kind {
                PolicyKind::MdpIf => Box::new(mdpif_policy(config, &scenario, &cache)?.with_allocation(allocation)),
                PolicyKind::Ucb => Box::new(UcbPolicy { allocation }),
                PolicyKind::Exploit => Box::new(ExploitPolicy { allocation }),
            });
        }
        let refs: Vec<&dyn Policy> = owned.iter().map(|p| p.as_ref()).collect();
        let report = sim::run_scenario(&scenario, &refs)?;
        print!("{report}");
        reports.push(report);
    }
    reports.sort_by_key(|r| r.k);

    let mut out = Outputs::new(config)?;
    out.write("simulation.csv", |w| {
        writeln!(w, "{}", SimulationReport::CSV_HEADER)?;
        reports.iter().try_for_each(|r| r.write_csv_rows(&mut *w))
    })?;
    out.finish("simulate", config, serde_json::to_value(&reports).expect("reports serialize"))
}

fn mdpif_policy(config: &RunConfig, scenario: &ScenarioConfig, cache: &TableCache) -> Result<MdpIfPolicy, CliError> {
    Ok(sim::build_mdpif_policy(
        scenario,
        config.solve_config().boundary_mode,
        config.nu_step(),
        config.simulation.table_margin.unwrap_or(crate::config::DEFAULT_TABLE_MARGIN),
        cache,
    )?)
}
