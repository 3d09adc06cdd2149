//! Benchmark sweeps comparing planner variants over seeded instances.
//!
//! Four variants: the full search with initialized priors, the same search
//! with flat priors, a greedy planner that always takes the best-valued
//! action with no backtracking, and uniform random action choice. Rows are
//! a pure function of the suite seed, and aggregation is a single-threaded
//! reduce, so reports are byte-identical across thread counts.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generate::{random_small, SmallConfig};
use crate::mcts::{run_search, PriorSource, SearchConfig};
use crate::model::{feasible_actions, goal_reached, AttackState, ExploitId, Scenario};
use crate::oracle;
use crate::sim::{ExecutionEnv, SimEnv};
use crate::value_init::{action_values, InitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MctsInit,
    MctsUniform,
    Greedy,
    Random,
}

impl Variant {
    pub fn all() -> [Variant; 4] {
        [Variant::MctsInit, Variant::MctsUniform, Variant::Greedy, Variant::Random]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::MctsInit => "mcts_init",
            Variant::MctsUniform => "mcts_uniform",
            Variant::Greedy => "greedy",
            Variant::Random => "random",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mcts_init" => Ok(Variant::MctsInit),
            "mcts_uniform" => Ok(Variant::MctsUniform),
            "greedy" => Ok(Variant::Greedy),
            "random" => Ok(Variant::Random),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Sweep definition.
#[derive(Debug, Clone)]
pub struct BenchmarkSuite {
    pub seeds: u32,
    pub base_seed: u64,
    pub budget: u32,
    pub variants: Vec<Variant>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Instance template; the per-seed instance seed overrides its seed.
    pub instance: SmallConfig,
    pub exploration_weight: f64,
    pub init: InitConfig,
}

impl Default for BenchmarkSuite {
    fn default() -> Self {
        BenchmarkSuite {
            seeds: 50,
            base_seed: 0,
            budget: 20,
            variants: Variant::all().to_vec(),
            threads: None,
            instance: SmallConfig {
                guarantee_path: true,
                planted_length: 2,
                ..SmallConfig::default()
            },
            exploration_weight: 0.3,
            init: InitConfig::default(),
        }
    }
}

/// One (seed, variant) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub seed_index: u32,
    pub variant: Variant,
    pub goal_reached: bool,
    pub executions_used: u32,
    /// Executions spent when the goal was reached.
    pub executions_to_goal: Option<u32>,
    /// Number of successful actions on the winning path.
    pub solution_depth: Option<u32>,
    pub simulated_hours: f64,
    /// Exact full (failure-term) value minus the realized discounted
    /// return; only available on oracle-sized instances.
    pub regret: Option<f64>,
}

/// Per-variant aggregate line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: u32,
    pub success_rate: f64,
    pub mean_executions_to_goal: Option<f64>,
    pub mean_simulated_hours: f64,
    pub mean_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summaries: Vec<VariantSummary>,
}

impl BenchmarkReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    /// Human-readable aggregate table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>6} {:>9} {:>12} {:>11} {:>10}\n",
            "variant", "runs", "success", "execs/goal", "sim hours", "regret"
        ));
        for s in &self.summaries {
            let execs = s
                .mean_executions_to_goal
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into());
            let regret =
                s.mean_regret.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<14} {:>6} {:>8.1}% {:>12} {:>11.2} {:>10}\n",
                s.variant.name(),
                s.runs,
                s.success_rate * 100.0,
                execs,
                s.mean_simulated_hours,
                regret
            ));
        }
        out
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(index.wrapping_mul(0x1000193))))
}

struct WalkResult {
    goal: bool,
    executions: u32,
    depth: u32,
    sim_seconds: f64,
}

/// Greedy baseline: always execute the action with the highest initialized
/// value from the current state, never revisiting a pair that failed there.
/// No backtracking: the walk only ever moves forward through states.
fn run_greedy(
    scenario: &Scenario,
    env: &mut SimEnv,
    init: &InitConfig,
    budget: u32,
    seed: u64,
) -> Result<WalkResult> {
    env.reseed(seed);
    let mut state = scenario.initial_state.clone();
    let mut dead: HashSet<(AttackState, ExploitId)> = HashSet::new();
    let mut executions = 0;
    let mut depth = 0;
    let mut sim_seconds = 0.0;
    while executions < budget && !goal_reached(&state, &scenario.goal) {
        let mut valued = action_values(&state, init, scenario)?;
        valued.retain(|(plan, _)| !dead.contains(&(state.clone(), plan.exploit_id.clone())));
        let best = valued.into_iter().max_by(|a, b| {
            a.1.partial_cmp(&b.1).expect("finite").then(b.0.exploit_id.cmp(&a.0.exploit_id))
        });
        let Some((plan, _)) = best else { break };
        let exploit = scenario.exploit(&plan.exploit_id).expect("catalog");
        let outcome = env.execute(exploit, &state, &plan.relays)?;
        executions += 1;
        sim_seconds += outcome.elapsed;
        if outcome.success && !outcome.shells_gained.is_empty() {
            let mut shells = state.shells.clone();
            shells.extend(outcome.shells_gained.iter().cloned());
            state = AttackState { shells };
            depth += 1;
        } else {
            dead.insert((state.clone(), plan.exploit_id.clone()));
        }
    }
    Ok(WalkResult {
        goal: goal_reached(&state, &scenario.goal),
        executions,
        depth,
        sim_seconds,
    })
}

/// Random baseline: uniform choice over the currently feasible actions.
fn run_random(
    scenario: &Scenario,
    env: &mut SimEnv,
    budget: u32,
    seed: u64,
) -> Result<WalkResult> {
    env.reseed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5eed));
    let mut state = scenario.initial_state.clone();
    let mut executions = 0;
    let mut depth = 0;
    let mut sim_seconds = 0.0;
    while executions < budget && !goal_reached(&state, &scenario.goal) {
        let actions = feasible_actions(&state, scenario);
        if actions.is_empty() {
            break;
        }
        let plan = &actions[rng.random_range(0..actions.len())];
        let exploit = scenario.exploit(&plan.exploit_id).expect("catalog");
        let outcome = env.execute(exploit, &state, &plan.relays)?;
        executions += 1;
        sim_seconds += outcome.elapsed;
        if outcome.success && !outcome.shells_gained.is_empty() {
            let mut shells = state.shells.clone();
            shells.extend(outcome.shells_gained.iter().cloned());
            state = AttackState { shells };
            depth += 1;
        }
    }
    Ok(WalkResult {
        goal: goal_reached(&state, &scenario.goal),
        executions,
        depth,
        sim_seconds,
    })
}

fn run_row(suite: &BenchmarkSuite, seed_index: u32, variant: Variant) -> Result<BenchmarkRow> {
    let instance_seed = derive_seed(suite.base_seed, 1, u64::from(seed_index));
    let scenario =
        random_small(&SmallConfig { seed: instance_seed, ..suite.instance.clone() })?;
    let run_seed = derive_seed(
        suite.base_seed,
        2 + variant as u64,
        u64::from(seed_index),
    );
    let mut env = SimEnv::new(&scenario, run_seed);

    let (goal, executions, depth, sim_seconds) = match variant {
        Variant::MctsInit | Variant::MctsUniform => {
            let config = SearchConfig {
                exploration_weight: suite.exploration_weight,
                init: suite.init,
                max_executions: suite.budget,
                rng_seed: run_seed,
                prior_source: if variant == Variant::MctsInit {
                    PriorSource::ValueInit
                } else {
                    PriorSource::Constant(0.5)
                },
                stop_signal: None,
            };
            let run = run_search(&scenario, &mut env, &config)?;
            (
                run.result.goal_reached,
                run.result.executions_used,
                run.result.best_path.len() as u32,
                run.simulated_seconds,
            )
        }
        Variant::Greedy => {
            let walk = run_greedy(&scenario, &mut env, &suite.init, suite.budget, run_seed)?;
            (walk.goal, walk.executions, walk.depth, walk.sim_seconds)
        }
        Variant::Random => {
            let walk = run_random(&scenario, &mut env, suite.budget, run_seed)?;
            (walk.goal, walk.executions, walk.depth, walk.sim_seconds)
        }
    };

    let regret = if scenario.hosts.len() <= 6 && scenario.exploits.len() <= 10 {
        let full = oracle::expectimax_value(&scenario, suite.init.gamma, suite.init.horizon)?;
        let realized =
            if goal { suite.init.gamma.powi(executions as i32) * suite.init.goal_value } else { 0.0 };
        Some(full - realized)
    } else {
        None
    };

    Ok(BenchmarkRow {
        seed_index,
        variant,
        goal_reached: goal,
        executions_used: executions,
        executions_to_goal: goal.then_some(executions),
        solution_depth: goal.then_some(depth),
        simulated_hours: sim_seconds / 3600.0,
        regret,
    })
}

fn summarize(variant: Variant, rows: &[BenchmarkRow]) -> VariantSummary {
    let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.variant == variant).collect();
    let runs = mine.len() as u32;
    let successes = mine.iter().filter(|r| r.goal_reached).count();
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    VariantSummary {
        variant,
        runs,
        success_rate: if runs == 0 { 0.0 } else { successes as f64 / f64::from(runs) },
        mean_executions_to_goal: mean(
            mine.iter().filter_map(|r| r.executions_to_goal.map(f64::from)).collect(),
        ),
        mean_simulated_hours: mine.iter().map(|r| r.simulated_hours).sum::<f64>()
            / f64::from(runs.max(1)),
        mean_regret: mean(mine.iter().filter_map(|r| r.regret).collect()),
    }
}

/// Runs the sweep. Rows are ordered seed-major, variant-minor regardless of
/// parallelism.
pub fn run_benchmark(suite: &BenchmarkSuite) -> Result<BenchmarkReport> {
    let mut specs = Vec::new();
    for seed_index in 0..suite.seeds {
        for &variant in &suite.variants {
            specs.push((seed_index, variant));
        }
    }

    let compute = || -> Result<Vec<BenchmarkRow>> {
        specs
            .par_iter()
            .map(|&(seed_index, variant)| run_row(suite, seed_index, variant))
            .collect()
    };
    let rows = match suite.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(compute),
        None => compute(),
    }?;

    let summaries = suite.variants.iter().map(|&v| summarize(v, &rows)).collect();
    Ok(BenchmarkReport { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_suite() -> BenchmarkSuite {
        BenchmarkSuite {
            seeds: 10,
            budget: 10,
            instance: SmallConfig {
                guarantee_path: true,
                planted_length: 2,
                p_true_range: (0.6, 1.0),
                ..SmallConfig::default()
            },
            ..BenchmarkSuite::default()
        }
    }

    #[test]
    fn rows_are_the_full_cartesian_product() {
        let report = run_benchmark(&small_suite()).unwrap();
        assert_eq!(report.rows.len(), 40);
        assert_eq!(report.summaries.len(), 4);
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run_benchmark(&small_suite()).unwrap();
        let b = run_benchmark(&small_suite()).unwrap();
        assert_eq!(a, b);
    }
}
