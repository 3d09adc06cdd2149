//! Tree search over expensive, stochastic, binary actions.
//!
//! Four phases per iteration: UCT selection down to an unexecuted action,
//! one real (here: simulated) execution, value backpropagation, and
//! expansion of the newly revealed state. Expansion follows execution
//! because an action's resulting state is only known after running it —
//! the reverse of the usual MCTS order, where rollouts are cheap.
//!
//! Failures prune: an action that failed from a state keeps q = 0 there
//! forever and is never retried from the same state, though it stays viable
//! from other states. With actions costing many minutes each there are no
//! rollouts; candidate values are seeded from the finite-horizon
//! initialization and refined by observed outcomes.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::connectivity::RelayPlan;
use crate::error::{Error, Result};
use crate::model::{
    apply_outcome, feasible_actions, goal_reached, ActionPlan, AttackState, ExploitId, Scenario,
};
use crate::sim::{ExecutionEnv, ExecutionOutcome};
use crate::validate::validate_scenario;
use crate::value_init::{compute_values, InitConfig, ValueTable};

/// Weight of the prior relative to one observation in the running mean.
const PRIOR_WEIGHT: f64 = 1.0;

/// Where candidate priors come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSource {
    /// Finite-horizon initialization over the attack graph.
    ValueInit,
    /// A flat constant, e.g. 0.5. Used as a baseline in benchmarks.
    Constant(f64),
}

/// Search parameters.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// UCT exploration weight C. Small values favour exploitation, which
    /// suits expensive actions.
    pub exploration_weight: f64,
    pub init: InitConfig,
    /// Execution budget: every iteration costs exactly one execution.
    pub max_executions: u32,
    /// Seed handed to the environment at the start of the run.
    pub rng_seed: u64,
    pub prior_source: PriorSource,
    /// External stop flag, polled between phases. An in-flight execution
    /// completes before the signal takes effect.
    pub stop_signal: Option<Arc<AtomicBool>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            exploration_weight: 0.3,
            init: InitConfig::default(),
            max_executions: 20,
            rng_seed: 0,
            prior_source: PriorSource::ValueInit,
            stop_signal: None,
        }
    }
}

/// An enumerated, not yet executed action at a node.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub action: ActionPlan,
    pub prior: f64,
    /// Set once executed, or blocked because the same (state, action) pair
    /// was already executed elsewhere in the tree.
    pub consumed: bool,
}

/// Statistics of the edge leading into a node.
#[derive(Debug, Clone, Serialize)]
pub struct IncomingEdge {
    pub action: ActionPlan,
    pub prior: f64,
    pub visits: u32,
    obs_sum: f64,
    /// Execution failed, or succeeded without changing state; q is
    /// permanently zero and the edge is never selected again.
    pub failed: bool,
    /// The subtree below has no live continuation left.
    pub exhausted: bool,
    pub outcome: ExecutionOutcome,
}

impl IncomingEdge {
    /// Prior-weighted running mean of observed values; zero once failed or
    /// exhausted.
    pub fn q(&self) -> f64 {
        if self.failed || self.exhausted {
            return 0.0;
        }
        (PRIOR_WEIGHT * self.prior + self.obs_sum) / (PRIOR_WEIGHT + f64::from(self.visits))
    }
}

/// One search-tree node: a concrete reached state plus the edge that
/// produced it.
#[derive(Debug, Clone, Serialize)]
pub struct SearchNode {
    pub state: AttackState,
    pub depth: u32,
    pub parent: Option<usize>,
    pub incoming: Option<IncomingEdge>,
    pub candidates: Vec<Candidate>,
    pub children: Vec<usize>,
    pub visits: u32,
}

/// Arena-allocated search tree; index 0 is the root.
#[derive(Debug, Clone, Serialize, Default)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }
}

/// What selection picked at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selected {
    /// Descend into an already executed child (node index).
    Child(usize),
    /// Execute this candidate (index into the node's candidate list).
    Fresh(usize),
}

/// UCT selection at one node: the argmax over live options of
/// `q_eff + C · sqrt(ln(N_parent + 1) / (n + 1))`, where an unvisited
/// candidate scores with its prior and n = 0. Ties break toward the
/// smallest exploit id. `None` means no option has positive value — the
/// caller treats the branch as dead.
pub fn uct_select(tree: &SearchTree, node: usize, config: &SearchConfig) -> Option<Selected> {
    let n = &tree.nodes[node];
    let parent_visits = f64::from(n.visits);
    let explore = |child_visits: f64| {
        config.exploration_weight * ((parent_visits + 1.0).ln() / (child_visits + 1.0)).sqrt()
    };

    let mut options: Vec<(f64, &ExploitId, Selected)> = Vec::new();
    for (i, candidate) in n.candidates.iter().enumerate() {
        if candidate.consumed || candidate.prior <= 0.0 {
            continue;
        }
        options.push((
            candidate.prior + explore(0.0),
            &candidate.action.exploit_id,
            Selected::Fresh(i),
        ));
    }
    for &child in &n.children {
        let edge = tree.nodes[child].incoming.as_ref().expect("non-root has an edge");
        let q = edge.q();
        if q <= 0.0 {
            continue;
        }
        options.push((q + explore(f64::from(edge.visits)), &edge.action.exploit_id, Selected::Child(child)));
    }
    options
        .into_iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores").then(b.1.cmp(a.1)))
        .map(|(_, _, pick)| pick)
}

/// Why a search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Goal,
    Exhausted,
    NoPositiveValue,
    Stopped,
}

/// One executed step along the reported best path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub exploit: ExploitId,
    pub relays: Vec<RelayPlan>,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub max_depth: u32,
}

/// Final report of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub goal_reached: bool,
    pub best_path: Vec<PathStep>,
    pub executions_used: u32,
    pub termination_reason: TerminationReason,
    pub tree_stats: TreeStats,
}

/// One record per phase transition, suitable for replay and assertions.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Started {
        seed: u64,
        exploration_weight: f64,
        gamma: f64,
        horizon: u32,
        budget: u32,
    },
    Selected {
        iteration: u32,
        path: Vec<ExploitId>,
    },
    Executed {
        iteration: u32,
        exploit: ExploitId,
        from_state: AttackState,
        success: bool,
        shells_gained: std::collections::BTreeSet<crate::model::ShellRef>,
        elapsed: f64,
    },
    NodeCreated {
        iteration: u32,
        node: usize,
        parent: usize,
        exploit: ExploitId,
        state: AttackState,
        failed: bool,
    },
    Expanded {
        iteration: u32,
        node: usize,
        actions: Vec<(ExploitId, f64)>,
    },
    QUpdated {
        iteration: u32,
        node: usize,
        exploit: ExploitId,
        q: f64,
        visits: u32,
    },
    CandidateBlocked {
        iteration: u32,
        node: usize,
        exploit: ExploitId,
    },
    BranchExhausted {
        iteration: u32,
        node: usize,
    },
    Terminated {
        iteration: u32,
        reason: TerminationReason,
        executions_used: u32,
    },
}

/// A completed run: result, event log, and the final tree.
#[derive(Debug, Clone)]
pub struct SearchRun {
    pub result: SearchResult,
    pub trace: Vec<TraceEvent>,
    pub tree: SearchTree,
    pub simulated_seconds: f64,
}

/// The ordered event log of a run.
pub fn extract_trace(run: &SearchRun) -> &[TraceEvent] {
    &run.trace
}

struct Engine<'a, E: ExecutionEnv> {
    scenario: &'a Scenario,
    env: &'a mut E,
    config: &'a SearchConfig,
    table: Option<ValueTable>,
    tree: SearchTree,
    executed: HashSet<(AttackState, ExploitId)>,
    trace: Vec<TraceEvent>,
    executions: u32,
    iteration: u32,
    simulated_seconds: f64,
}

/// Runs the full search loop. Deterministic given (scenario, config, seed):
/// the only randomness is the environment's seeded draw stream.
pub fn run_search<E: ExecutionEnv>(
    scenario: &Scenario,
    env: &mut E,
    config: &SearchConfig,
) -> Result<SearchRun> {
    let report = validate_scenario(scenario);
    if !report.is_valid() {
        return Err(Error::InvalidScenario(report.violations.len()));
    }
    config.init.validate()?;
    if config.max_executions == 0 {
        return Err(Error::UnsatisfiableConfig("max_executions must be at least 1".into()));
    }

    let table = match config.prior_source {
        PriorSource::ValueInit => Some(compute_values(scenario, &config.init)?),
        PriorSource::Constant(_) => None,
    };

    env.reseed(config.rng_seed);

    let engine = Engine {
        scenario,
        env,
        config,
        table,
        tree: SearchTree::default(),
        executed: HashSet::new(),
        trace: vec![TraceEvent::Started {
            seed: config.rng_seed,
            exploration_weight: config.exploration_weight,
            gamma: config.init.gamma,
            horizon: config.init.horizon,
            budget: config.max_executions,
        }],
        executions: 0,
        iteration: 0,
        simulated_seconds: 0.0,
    };
    engine.run()
}

impl<'a, E: ExecutionEnv> Engine<'a, E> {
    fn prior_for(&self, state: &AttackState, exploit: &ExploitId, depth: u32) -> f64 {
        match self.config.prior_source {
            PriorSource::ValueInit => {
                self.table.as_ref().expect("table computed").prior(state, exploit, depth)
            }
            PriorSource::Constant(c) => c,
        }
    }

    fn stopped(&self) -> bool {
        self.config
            .stop_signal
            .as_ref()
            .map(|flag| flag.load(Ordering::Relaxed))
            .unwrap_or(false)
    }

    /// Enumerates feasible actions of a node and attaches priors. Pairs
    /// already executed anywhere in the tree enter pre-consumed so the
    /// same (state, action) pair is never run twice.
    fn expand(&mut self, node: usize) {
        let state = self.tree.nodes[node].state.clone();
        let depth = self.tree.nodes[node].depth;
        let mut candidates = Vec::new();
        let mut summary = Vec::new();
        for action in feasible_actions(&state, self.scenario) {
            let prior = self.prior_for(&state, &action.exploit_id, depth);
            let consumed = self.executed.contains(&(state.clone(), action.exploit_id.clone()));
            summary.push((action.exploit_id.clone(), prior));
            candidates.push(Candidate { action, prior, consumed });
        }
        self.tree.nodes[node].candidates = candidates;
        self.trace.push(TraceEvent::Expanded {
            iteration: self.iteration,
            node,
            actions: summary,
        });
    }

    /// Value of a node as seen from its parent: the goal counts as the full
    /// terminal value, otherwise the best live option below it.
    fn node_value(&self, node: usize) -> f64 {
        let n = &self.tree.nodes[node];
        if goal_reached(&n.state, &self.scenario.goal) {
            return self.config.init.goal_value;
        }
        let mut best = 0.0_f64;
        for candidate in &n.candidates {
            if !candidate.consumed {
                best = best.max(candidate.prior);
            }
        }
        for &child in &n.children {
            let edge = self.tree.nodes[child].incoming.as_ref().expect("edge");
            best = best.max(edge.q());
        }
        best
    }

    fn has_live_option(&self, node: usize) -> bool {
        uct_select(&self.tree, node, self.config).is_some()
    }

    /// Marks edges exhausted upward from a dead node until an ancestor still
    /// has a live option. The root itself is never marked; running out of
    /// options there terminates the search instead.
    fn propagate_exhaustion(&mut self, mut node: usize) {
        while node != 0 {
            if goal_reached(&self.tree.nodes[node].state, &self.scenario.goal)
                || self.has_live_option(node)
            {
                return;
            }
            let already = self.tree.nodes[node]
                .incoming
                .as_ref()
                .map(|e| e.failed || e.exhausted)
                .unwrap_or(true);
            if !already {
                self.tree.nodes[node].incoming.as_mut().expect("edge").exhausted = true;
                self.trace.push(TraceEvent::BranchExhausted {
                    iteration: self.iteration,
                    node,
                });
            }
            node = self.tree.nodes[node].parent.expect("non-root has a parent");
        }
    }

    fn backpropagate(&mut self, path: &[usize]) {
        for &n in path {
            self.tree.nodes[n].visits += 1;
        }
        // Deepest edge first so ancestors observe refreshed descendants.
        for &n in path[1..].iter().rev() {
            let value = self.node_value(n);
            let gamma = self.config.init.gamma;
            let edge = self.tree.nodes[n].incoming.as_mut().expect("edge");
            edge.visits += 1;
            if !edge.failed {
                edge.obs_sum += gamma * value;
            }
            let (q, visits, exploit) = {
                let edge = self.tree.nodes[n].incoming.as_ref().expect("edge");
                (edge.q(), edge.visits, edge.action.exploit_id.clone())
            };
            self.trace.push(TraceEvent::QUpdated {
                iteration: self.iteration,
                node: n,
                exploit,
                q,
                visits,
            });
        }
    }

    fn best_executed_path(&self) -> Vec<PathStep> {
        let mut steps = Vec::new();
        let mut node = 0;
        loop {
            let next = self.tree.nodes[node]
                .children
                .iter()
                .filter_map(|&c| {
                    let edge = self.tree.nodes[c].incoming.as_ref()?;
                    let q = edge.q();
                    (q > 0.0).then_some((q, &edge.action.exploit_id, c))
                })
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(a.1)));
            match next {
                Some((_, _, child)) => {
                    steps.push(self.path_step(child));
                    node = child;
                }
                None => return steps,
            }
        }
    }

    fn path_step(&self, node: usize) -> PathStep {
        let edge = self.tree.nodes[node].incoming.as_ref().expect("edge");
        PathStep {
            exploit: edge.action.exploit_id.clone(),
            relays: edge.action.relays.clone(),
            outcome: edge.outcome.clone(),
        }
    }

    fn finish(mut self, reason: TerminationReason, best_path: Vec<PathStep>) -> SearchRun {
        self.trace.push(TraceEvent::Terminated {
            iteration: self.iteration,
            reason,
            executions_used: self.executions,
        });
        let max_depth = self.tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        SearchRun {
            result: SearchResult {
                goal_reached: reason == TerminationReason::Goal,
                best_path,
                executions_used: self.executions,
                termination_reason: reason,
                tree_stats: TreeStats { nodes: self.tree.nodes.len(), max_depth },
            },
            trace: self.trace,
            tree: self.tree,
            simulated_seconds: self.simulated_seconds,
        }
    }

    fn run(mut self) -> Result<SearchRun> {
        self.tree.nodes.push(SearchNode {
            state: self.scenario.initial_state.clone(),
            depth: 0,
            parent: None,
            incoming: None,
            candidates: Vec::new(),
            children: Vec::new(),
            visits: 0,
        });
        if goal_reached(&self.scenario.initial_state, &self.scenario.goal) {
            return Ok(self.finish(TerminationReason::Goal, Vec::new()));
        }
        self.expand(0);

        'search: loop {
            if self.stopped() {
                let path = self.best_executed_path();
                return Ok(self.finish(TerminationReason::Stopped, path));
            }
            if self.executions >= self.config.max_executions {
                let path = self.best_executed_path();
                return Ok(self.finish(TerminationReason::Exhausted, path));
            }

            // Selection: walk executed edges until an unexecuted action.
            let mut path_nodes = vec![0usize];
            let mut current = 0usize;
            let (exec_node, candidate_idx) = loop {
                match uct_select(&self.tree, current, self.config) {
                    None => {
                        if current == 0 {
                            let path = self.best_executed_path();
                            return Ok(self.finish(TerminationReason::NoPositiveValue, path));
                        }
                        self.tree.nodes[current]
                            .incoming
                            .as_mut()
                            .expect("edge")
                            .exhausted = true;
                        self.trace.push(TraceEvent::BranchExhausted {
                            iteration: self.iteration,
                            node: current,
                        });
                        let parent = self.tree.nodes[current].parent.expect("parent");
                        self.propagate_exhaustion(parent);
                        continue 'search;
                    }
                    Some(Selected::Child(child)) => {
                        path_nodes.push(child);
                        current = child;
                    }
                    Some(Selected::Fresh(idx)) => {
                        let key = (
                            self.tree.nodes[current].state.clone(),
                            self.tree.nodes[current].candidates[idx].action.exploit_id.clone(),
                        );
                        if self.executed.contains(&key) {
                            self.tree.nodes[current].candidates[idx].consumed = true;
                            self.trace.push(TraceEvent::CandidateBlocked {
                                iteration: self.iteration,
                                node: current,
                                exploit: key.1,
                            });
                            self.propagate_exhaustion(current);
                            continue 'search;
                        }
                        break (current, idx);
                    }
                }
            };

            self.iteration += 1;
            let action = self.tree.nodes[exec_node].candidates[candidate_idx].action.clone();
            let prior = self.tree.nodes[exec_node].candidates[candidate_idx].prior;
            let mut selected_ids: Vec<ExploitId> = path_nodes[1..]
                .iter()
                .map(|&n| {
                    self.tree.nodes[n].incoming.as_ref().expect("edge").action.exploit_id.clone()
                })
                .collect();
            selected_ids.push(action.exploit_id.clone());
            self.trace.push(TraceEvent::Selected {
                iteration: self.iteration,
                path: selected_ids,
            });

            // Execution: exactly one real attempt per iteration.
            let parent_state = self.tree.nodes[exec_node].state.clone();
            let scenario = self.scenario;
            let exploit = scenario
                .exploit(&action.exploit_id)
                .expect("catalog contains planned exploit");
            let outcome = match self.env.execute(exploit, &parent_state, &action.relays) {
                Ok(outcome) => outcome,
                Err(err) => {
                    let message = err.to_string();
                    let path = self.best_executed_path();
                    let partial = self.finish(TerminationReason::Stopped, path);
                    return Err(Error::EnvAborted {
                        message,
                        partial: Box::new(partial),
                    });
                }
            };
            self.executions += 1;
            self.simulated_seconds += outcome.elapsed;
            self.executed.insert((parent_state.clone(), action.exploit_id.clone()));
            self.tree.nodes[exec_node].candidates[candidate_idx].consumed = true;
            self.trace.push(TraceEvent::Executed {
                iteration: self.iteration,
                exploit: action.exploit_id.clone(),
                from_state: parent_state.clone(),
                success: outcome.success,
                shells_gained: outcome.shells_gained.clone(),
                elapsed: outcome.elapsed,
            });

            // A success that grants nothing new leaves the state unchanged;
            // such a branch is worth zero, exactly like a failure.
            let failed = !outcome.success || outcome.shells_gained.is_empty();
            let child_state = if failed {
                parent_state.clone()
            } else {
                let mut shells = parent_state.shells.clone();
                shells.extend(outcome.shells_gained.iter().cloned());
                AttackState { shells }
            };
            let child = self.tree.nodes.len();
            let depth = self.tree.nodes[exec_node].depth + 1;
            self.tree.nodes.push(SearchNode {
                state: child_state.clone(),
                depth,
                parent: Some(exec_node),
                incoming: Some(IncomingEdge {
                    action: action.clone(),
                    prior,
                    visits: 0,
                    obs_sum: 0.0,
                    failed,
                    exhausted: false,
                    outcome: outcome.clone(),
                }),
                candidates: Vec::new(),
                children: Vec::new(),
                visits: 0,
            });
            self.tree.nodes[exec_node].children.push(child);
            self.trace.push(TraceEvent::NodeCreated {
                iteration: self.iteration,
                node: child,
                parent: exec_node,
                exploit: action.exploit_id.clone(),
                state: child_state.clone(),
                failed,
            });

            let reached = !failed && goal_reached(&child_state, &self.scenario.goal);
            if !failed && !reached {
                self.expand(child);
            }

            path_nodes.push(child);
            self.backpropagate(&path_nodes);

            if reached {
                let steps =
                    path_nodes[1..].iter().map(|&n| self.path_step(n)).collect::<Vec<_>>();
                return Ok(self.finish(TerminationReason::Goal, steps));
            }
            self.propagate_exhaustion(if failed { exec_node } else { child });
        }
    }
}

/// Counts the distinct (state, action) pairs executable within `horizon`
/// steps of the initial state when every declared outcome is applied. This
/// is the budget at which a deterministic search exhausts the within-horizon
/// tree.
pub fn tree_edge_budget(scenario: &Scenario, horizon: u32) -> usize {
    let mut pairs: HashSet<(AttackState, ExploitId)> = HashSet::new();
    let mut seen: HashSet<AttackState> = HashSet::new();
    let mut frontier = vec![scenario.initial_state.clone()];
    seen.insert(scenario.initial_state.clone());
    for _ in 0..horizon {
        let mut next = Vec::new();
        for state in frontier {
            if goal_reached(&state, &scenario.goal) {
                continue;
            }
            for action in feasible_actions(&state, scenario) {
                let exploit = scenario.exploit(&action.exploit_id).expect("catalog");
                pairs.insert((state.clone(), action.exploit_id.clone()));
                for outcome in &exploit.outcomes {
                    let grown = apply_outcome(&state, outcome);
                    if grown != state && seen.insert(grown.clone()) {
                        next.push(grown);
                    }
                }
            }
        }
        frontier = next;
    }
    pairs.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::demo_chain;
    use crate::model::{Privilege, ShellRef};
    use crate::sim::{GroundTruthEntry, Latency, SimEnv};
    use std::collections::BTreeMap;

    fn with_truth(mut scenario: Scenario, p: impl Fn(&str) -> f64) -> Scenario {
        let truth: BTreeMap<ExploitId, GroundTruthEntry> = scenario
            .exploits
            .iter()
            .map(|e| {
                (
                    e.id.clone(),
                    GroundTruthEntry {
                        p_true: p(e.id.as_str()),
                        outcome_weights: None,
                        latency: Latency::zero(),
                        flaky_session: 0.0,
                    },
                )
            })
            .collect();
        scenario.ground_truth = Some(truth);
        scenario
    }

    fn plan(id: &str) -> ActionPlan {
        ActionPlan { exploit_id: id.into(), relays: Vec::new() }
    }

    fn bare_node(state: AttackState) -> SearchNode {
        SearchNode {
            state,
            depth: 0,
            parent: None,
            incoming: None,
            candidates: Vec::new(),
            children: Vec::new(),
            visits: 0,
        }
    }

    #[test]
    fn selection_without_exploration_is_argmax_of_priors() {
        let mut tree = SearchTree::default();
        let mut root = bare_node(AttackState::empty());
        root.candidates = vec![
            Candidate { action: plan("a"), prior: 0.5, consumed: false },
            Candidate { action: plan("b"), prior: 0.3, consumed: false },
        ];
        tree.nodes.push(root);
        let config = SearchConfig { exploration_weight: 0.0, ..SearchConfig::default() };
        assert_eq!(uct_select(&tree, 0, &config), Some(Selected::Fresh(0)));
    }

    #[test]
    fn equal_scores_break_toward_the_smaller_id() {
        let mut tree = SearchTree::default();
        let mut root = bare_node(AttackState::empty());
        root.candidates = vec![
            Candidate { action: plan("zeta"), prior: 0.4, consumed: false },
            Candidate { action: plan("alpha"), prior: 0.4, consumed: false },
        ];
        tree.nodes.push(root);
        let config = SearchConfig::default();
        assert_eq!(uct_select(&tree, 0, &config), Some(Selected::Fresh(1)));
    }

    #[test]
    fn failed_children_are_never_selected() {
        let mut tree = SearchTree::default();
        let mut root = bare_node(AttackState::empty());
        root.candidates = vec![Candidate { action: plan("live"), prior: 0.1, consumed: false }];
        tree.nodes.push(root);
        let mut failed = bare_node(AttackState::empty());
        failed.parent = Some(0);
        failed.incoming = Some(IncomingEdge {
            action: plan("dead"),
            prior: 0.9,
            visits: 1,
            obs_sum: 0.0,
            failed: true,
            exhausted: false,
            outcome: ExecutionOutcome {
                success: false,
                shells_gained: Default::default(),
                elapsed: 0.0,
            },
        });
        tree.nodes.push(failed);
        tree.nodes[0].children.push(1);
        let config = SearchConfig::default();
        assert_eq!(uct_select(&tree, 0, &config), Some(Selected::Fresh(0)));
    }

    #[test]
    fn no_live_option_signals_the_driver() {
        let mut tree = SearchTree::default();
        let mut root = bare_node(AttackState::empty());
        root.candidates =
            vec![Candidate { action: plan("worthless"), prior: 0.0, consumed: false }];
        tree.nodes.push(root);
        assert_eq!(uct_select(&tree, 0, &SearchConfig::default()), None);
    }

    #[test]
    fn deterministic_chain_reaches_the_goal_in_three_executions() {
        let scenario = with_truth(demo_chain(), |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let config = SearchConfig { max_executions: 10, rng_seed: 5, ..SearchConfig::default() };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        assert!(run.result.goal_reached);
        assert_eq!(run.result.executions_used, 3);
        let ids: Vec<&str> =
            run.result.best_path.iter().map(|s| s.exploit.as_str()).collect();
        assert_eq!(ids, ["e1-foothold", "e2-privesc", "e3-db"]);
        assert_eq!(run.result.termination_reason, TerminationReason::Goal);
    }

    #[test]
    fn unreachable_goal_terminates_with_no_positive_value() {
        let mut scenario = demo_chain();
        scenario.exploits.pop(); // nothing touches the db host now
        let scenario = with_truth(scenario, |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let config = SearchConfig { max_executions: 10, rng_seed: 5, ..SearchConfig::default() };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        assert!(!run.result.goal_reached);
        assert_eq!(run.result.termination_reason, TerminationReason::NoPositiveValue);
        assert_eq!(run.result.executions_used, 0);
    }

    #[test]
    fn raised_stop_signal_ends_the_search_before_any_execution() {
        let scenario = with_truth(demo_chain(), |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let stop = Arc::new(AtomicBool::new(true));
        let config = SearchConfig {
            max_executions: 10,
            stop_signal: Some(stop),
            ..SearchConfig::default()
        };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        assert_eq!(run.result.termination_reason, TerminationReason::Stopped);
        assert_eq!(run.result.executions_used, 0);
    }

    #[test]
    fn goal_in_initial_state_needs_no_executions() {
        let mut scenario = demo_chain();
        scenario.initial_state = scenario.goal.clone();
        let scenario = with_truth(scenario, |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let run = run_search(&scenario, &mut env, &SearchConfig::default()).unwrap();
        assert!(run.result.goal_reached);
        assert_eq!(run.result.executions_used, 0);
        assert!(run.result.best_path.is_empty());
    }

    #[test]
    fn success_straight_to_goal_moves_q_toward_discounted_one() {
        // Single exploit, p = 0.9, one outcome reaching the goal. Prior is
        // 0.81; one success observes γ·1, so q = (0.81 + 0.9) / 2.
        let mut scenario = demo_chain();
        scenario.exploits = vec![Exploit {
            id: "direct".into(),
            exec: [ShellRef::privileged("kali")].into_iter().collect(),
            executing_shell: ShellRef::privileged("kali"),
            conn: Default::default(),
            outcomes: vec![crate::model::Outcome::certain([ShellRef::privileged("db")])],
            confidence: 0.9,
            kind: crate::model::ExploitKind::RemoteShell,
        }];
        let scenario = with_truth(scenario, |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let run = run_search(&scenario, &mut env, &SearchConfig::default()).unwrap();
        assert!(run.result.goal_reached);
        let edge = run.tree.nodes[1].incoming.as_ref().unwrap();
        assert!((edge.prior - 0.81).abs() < 1e-12);
        assert!((edge.q() - (0.81 + 0.9) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn failure_zeroes_the_edge_and_ancestors_recompute() {
        let scenario = with_truth(demo_chain(), |id| if id == "e1-foothold" { 0.0 } else { 1.0 });
        let mut env = SimEnv::new(&scenario, 5);
        let config = SearchConfig { max_executions: 1, ..SearchConfig::default() };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        let edge = run.tree.nodes[1].incoming.as_ref().unwrap();
        assert!(edge.failed);
        assert_eq!(edge.q(), 0.0);
        assert!(!run.result.goal_reached);
    }

    #[test]
    fn repeat_visits_accumulate_observations_over_the_prior() {
        // e1 succeeds, e2 always fails. Two iterations pass through the
        // root edge; its q is the running mean of prior and observations.
        let scenario = with_truth(demo_chain(), |id| if id == "e2-privesc" { 0.0 } else { 1.0 });
        let mut env = SimEnv::new(&scenario, 5);
        let config = SearchConfig { max_executions: 2, ..SearchConfig::default() };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        let edge = run.tree.nodes[1].incoming.as_ref().unwrap();
        assert_eq!(edge.visits, 2);
        // Hand expansion: prior 0.26244; first observation γ·0.3645, second
        // γ·0.26244 after the privilege escalation branch died.
        let expected = (0.26244 + 0.9 * 0.3645 + 0.9 * 0.26244) / 3.0;
        assert!((edge.q() - expected).abs() < 1e-9, "q = {}", edge.q());
    }

    #[test]
    fn budget_bounds_execution_events() {
        // All four root actions fail forever; a budget of 3 means exactly
        // three execution events.
        let mut scenario = demo_chain();
        let template = scenario.exploits[0].clone();
        scenario.exploits = (0..4)
            .map(|i| {
                let mut e = template.clone();
                e.id = ExploitId::new(format!("root-{i}"));
                e
            })
            .collect();
        let scenario = with_truth(scenario, |_| 0.0);
        let mut env = SimEnv::new(&scenario, 5);
        let config = SearchConfig { max_executions: 3, ..SearchConfig::default() };
        let run = run_search(&scenario, &mut env, &config).unwrap();
        let executions = run
            .trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::Executed { .. }))
            .count();
        assert_eq!(executions, 3);
        assert_eq!(run.result.termination_reason, TerminationReason::Exhausted);
    }

    #[test]
    fn trace_iterations_are_monotone() {
        let scenario = with_truth(demo_chain(), |_| 1.0);
        let mut env = SimEnv::new(&scenario, 5);
        let run = run_search(&scenario, &mut env, &SearchConfig::default()).unwrap();
        let mut last = 0;
        for event in &run.trace {
            let iteration = match event {
                TraceEvent::Started { .. } => 0,
                TraceEvent::Selected { iteration, .. }
                | TraceEvent::Executed { iteration, .. }
                | TraceEvent::NodeCreated { iteration, .. }
                | TraceEvent::Expanded { iteration, .. }
                | TraceEvent::QUpdated { iteration, .. }
                | TraceEvent::CandidateBlocked { iteration, .. }
                | TraceEvent::BranchExhausted { iteration, .. }
                | TraceEvent::Terminated { iteration, .. } => *iteration,
            };
            assert!(iteration >= last);
            last = iteration;
        }
    }

    #[test]
    fn identical_seeds_replay_identical_traces() {
        let scenario = with_truth(demo_chain(), |_| 0.6);
        let config = SearchConfig { max_executions: 8, rng_seed: 41, ..SearchConfig::default() };
        let mut env1 = SimEnv::new(&scenario, 41);
        let run1 = run_search(&scenario, &mut env1, &config).unwrap();
        let mut env2 = SimEnv::new(&scenario, 12345); // reseeded by the engine
        let run2 = run_search(&scenario, &mut env2, &config).unwrap();
        assert_eq!(run1.trace, run2.trace);
        assert_eq!(run1.result, run2.result);
    }

    #[test]
    fn edge_budget_counts_the_chain_pairs() {
        // Depth 4 over the demo chain: s0 has 1 action; s1 has 2; s2 has 3.
        assert_eq!(tree_edge_budget(&demo_chain(), 4), 6);
    }
}

/// Renders the final tree as DOT with q/visit annotations.
pub fn tree_dot(run: &SearchRun) -> String {
    let mut out = String::from("digraph search {\n  node [shape=box];\n");
    for (i, node) in run.tree.nodes.iter().enumerate() {
        let label = format!("#{} d{} v{}\\n{}", i, node.depth, node.visits, node.state);
        out.push_str(&format!("  n{} [label=\"{}\"];\n", i, label.replace('"', "'")));
        if let (Some(parent), Some(edge)) = (node.parent, node.incoming.as_ref()) {
            let style = if edge.failed {
                ", color=red"
            } else if edge.exhausted {
                ", color=gray"
            } else {
                ""
            };
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{} q={:.3} n={}\"{}];\n",
                parent,
                i,
                edge.action.exploit_id,
                edge.q(),
                edge.visits,
                style
            ));
        }
    }
    out.push_str("}\n");
    out
}
