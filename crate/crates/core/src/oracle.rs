//! Independent brute-force ground truth for small instances.
//!
//! Everything here is deliberately re-implemented from scratch — its own
//! feasibility check, its own reachability search, a memo-free value
//! recursion — and shares no code with the planning modules, so agreement
//! between the two is evidence rather than tautology. Instance sizes are
//! hard-capped to keep the exponential enumeration out of trouble.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttackState, Direction, Exploit, ExploitId, Scenario};

const MAX_HOSTS: usize = 6;
const MAX_EXPLOITS: usize = 10;

/// Ground-truth summary of a small instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Whether any action sequence within the horizon reaches the goal.
    pub reachable: bool,
    /// Shortest goal-reaching sequence (lexicographically smallest among
    /// shortest); empty when the goal is held initially or unreachable.
    pub best_path: Vec<ExploitId>,
    /// The initialization recursion's value of the initial state.
    pub init_value: f64,
    /// The full expectimax value including the failure continuation term.
    pub full_value: f64,
    pub enumerated_paths: usize,
}

fn check_cap(scenario: &Scenario) -> Result<()> {
    if scenario.hosts.len() > MAX_HOSTS {
        return Err(Error::OracleCap(format!(
            "{} hosts exceeds the cap of {MAX_HOSTS}",
            scenario.hosts.len()
        )));
    }
    if scenario.exploits.len() > MAX_EXPLOITS {
        return Err(Error::OracleCap(format!(
            "{} exploits exceeds the cap of {MAX_EXPLOITS}",
            scenario.exploits.len()
        )));
    }
    Ok(())
}

/// Self-contained feasibility: exec shells held, and every connectivity
/// requirement met directly or via some chain of held hosts. Only chain
/// existence matters here, not hop minimality.
struct Checker<'a> {
    scenario: &'a Scenario,
    edges: HashSet<(&'a str, &'a str, u16)>,
}

impl<'a> Checker<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let edges = scenario
            .connectivity
            .edges()
            .iter()
            .map(|e| (e.src.as_str(), e.dst.as_str(), e.port))
            .collect();
        Checker { scenario, edges }
    }

    fn link(&self, direction: Direction, from: &str, to: &str, port: u16) -> bool {
        match direction {
            Direction::Fwd => self.edges.contains(&(from, to, port)),
            Direction::Rev => self.edges.contains(&(to, from, port)),
        }
    }

    fn feasible(&self, state: &AttackState, exploit: &Exploit) -> bool {
        if !state.contains_all(&exploit.exec) {
            return false;
        }
        let held: BTreeSet<&str> = state.shells.iter().map(|s| s.host.as_str()).collect();
        let origin = exploit.executing_shell.host.as_str();
        let relay = self.scenario.relay_port;
        for req in &exploit.conn {
            let target = req.host.as_str();
            if self.link(req.direction, origin, target, req.port) {
                continue;
            }
            // Flood over held hosts on the relay port, looking for any host
            // with a final leg onto the target.
            let mut reached: BTreeSet<&str> = BTreeSet::new();
            let mut queue = vec![origin];
            let mut satisfied = false;
            while let Some(at) = queue.pop() {
                for &hop in &held {
                    if hop == origin || hop == target || reached.contains(hop) {
                        continue;
                    }
                    if !self.link(req.direction, at, hop, relay) {
                        continue;
                    }
                    if self.link(req.direction, hop, target, req.port) {
                        satisfied = true;
                        break;
                    }
                    reached.insert(hop);
                    queue.push(hop);
                }
                if satisfied {
                    break;
                }
            }
            if !satisfied {
                return false;
            }
        }
        true
    }

    fn feasible_sorted(&self, state: &AttackState) -> Vec<&'a Exploit> {
        let mut out: Vec<&Exploit> = self
            .scenario
            .exploits
            .iter()
            .filter(|e| self.feasible(state, e))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}

fn grow(state: &AttackState, shells: &BTreeSet<crate::model::ShellRef>) -> AttackState {
    let mut next = state.shells.clone();
    next.extend(shells.iter().cloned());
    AttackState { shells: next }
}

fn is_goal(scenario: &Scenario, state: &AttackState) -> bool {
    scenario.goal.shells.is_subset(&state.shells)
}

/// Exhaustively enumerates every goal-reaching action sequence of length at
/// most `max_depth`, assuming every action succeeds and exploring each
/// outcome as its own branch. Branches that leave the state unchanged are
/// pruned, and sequences stop at the first goal state.
pub fn enumerate_paths(scenario: &Scenario, max_depth: u32) -> Result<Vec<Vec<ExploitId>>> {
    check_cap(scenario)?;
    let checker = Checker::new(scenario);
    let mut found = Vec::new();
    let mut prefix = Vec::new();
    walk(scenario, &checker, &scenario.initial_state, max_depth, &mut prefix, &mut found);
    Ok(found)
}

fn walk(
    scenario: &Scenario,
    checker: &Checker<'_>,
    state: &AttackState,
    budget: u32,
    prefix: &mut Vec<ExploitId>,
    found: &mut Vec<Vec<ExploitId>>,
) {
    if is_goal(scenario, state) {
        found.push(prefix.clone());
        return;
    }
    if budget == 0 {
        return;
    }
    for exploit in checker.feasible_sorted(state) {
        for outcome in &exploit.outcomes {
            let next = grow(state, &outcome.shells_gained);
            if next == *state {
                continue;
            }
            prefix.push(exploit.id.clone());
            walk(scenario, checker, &next, budget - 1, prefix, found);
            prefix.pop();
        }
    }
}

/// Memo-free re-implementation of the initialization recursion:
/// `V(s, d) = max_a p_a · γ · max_o V(s ∪ o, d − 1)`, goal states worth 1,
/// zero at the horizon. No failure term.
pub fn brute_force_value(scenario: &Scenario, gamma: f64, horizon: u32) -> Result<f64> {
    check_cap(scenario)?;
    let checker = Checker::new(scenario);
    Ok(plain_value(scenario, &checker, &scenario.initial_state, gamma, horizon))
}

fn plain_value(
    scenario: &Scenario,
    checker: &Checker<'_>,
    state: &AttackState,
    gamma: f64,
    depth: u32,
) -> f64 {
    if is_goal(scenario, state) {
        return 1.0;
    }
    if depth == 0 {
        return 0.0;
    }
    let mut best = 0.0_f64;
    for exploit in checker.feasible_sorted(state) {
        let mut outcome_best = 0.0_f64;
        for outcome in &exploit.outcomes {
            let next = grow(state, &outcome.shells_gained);
            outcome_best =
                outcome_best.max(plain_value(scenario, checker, &next, gamma, depth - 1));
        }
        best = best.max(exploit.confidence * gamma * outcome_best);
    }
    best
}

/// The exact finite-horizon value including the failure continuation:
/// `Q(s, a, d) = p · γ · max_o V(s ∪ o, d − 1) + (1 − p) · γ · V(s, d − 1)`.
/// Indexing by depth removes the self-reference the failure term would
/// otherwise introduce. Never below [`brute_force_value`] on the same
/// instance.
pub fn expectimax_value(scenario: &Scenario, gamma: f64, horizon: u32) -> Result<f64> {
    check_cap(scenario)?;
    let checker = Checker::new(scenario);
    Ok(full_value(scenario, &checker, &scenario.initial_state, gamma, horizon))
}

fn full_value(
    scenario: &Scenario,
    checker: &Checker<'_>,
    state: &AttackState,
    gamma: f64,
    depth: u32,
) -> f64 {
    if is_goal(scenario, state) {
        return 1.0;
    }
    if depth == 0 {
        return 0.0;
    }
    let mut best = 0.0_f64;
    for exploit in checker.feasible_sorted(state) {
        let mut outcome_best = 0.0_f64;
        for outcome in &exploit.outcomes {
            let next = grow(state, &outcome.shells_gained);
            outcome_best = outcome_best.max(full_value(scenario, checker, &next, gamma, depth - 1));
        }
        let stay = full_value(scenario, checker, state, gamma, depth - 1);
        let q = exploit.confidence * gamma * outcome_best
            + (1.0 - exploit.confidence) * gamma * stay;
        best = best.max(q);
    }
    best
}

/// Builds the full report for a small instance.
pub fn oracle_report(scenario: &Scenario, gamma: f64, horizon: u32) -> Result<OracleReport> {
    let paths = enumerate_paths(scenario, horizon)?;
    let best_path = paths
        .iter()
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
        .cloned()
        .unwrap_or_default();
    Ok(OracleReport {
        reachable: !paths.is_empty(),
        best_path,
        init_value: brute_force_value(scenario, gamma, horizon)?,
        full_value: expectimax_value(scenario, gamma, horizon)?,
        enumerated_paths: paths.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::demo_chain;

    #[test]
    fn chain_has_exactly_one_path() {
        let paths = enumerate_paths(&demo_chain(), 4).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 3);
    }

    #[test]
    fn goal_held_initially_is_the_empty_path() {
        let mut scenario = demo_chain();
        scenario.initial_state = scenario.goal.clone();
        let paths = enumerate_paths(&scenario, 4).unwrap();
        assert_eq!(paths, vec![Vec::<ExploitId>::new()]);
    }

    #[test]
    fn unreachable_goal_has_no_paths() {
        let mut scenario = demo_chain();
        scenario.exploits.pop();
        let paths = enumerate_paths(&scenario, 4).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn chain_value_matches_the_hand_expansion() {
        let v = brute_force_value(&demo_chain(), 0.9, 4).unwrap();
        assert!((v - 0.26244).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn empty_catalog_is_worthless() {
        let mut scenario = demo_chain();
        scenario.exploits.clear();
        assert_eq!(brute_force_value(&scenario, 0.9, 4).unwrap(), 0.0);
    }

    #[test]
    fn goal_held_initially_is_worth_one() {
        let mut scenario = demo_chain();
        scenario.initial_state = scenario.goal.clone();
        assert_eq!(brute_force_value(&scenario, 0.9, 4).unwrap(), 1.0);
    }

    #[test]
    fn failure_term_only_adds_value() {
        let scenario = demo_chain();
        let plain = brute_force_value(&scenario, 0.9, 4).unwrap();
        let full = expectimax_value(&scenario, 0.9, 4).unwrap();
        assert!(full >= plain);
        // Hand-expanded depth-indexed recursion for the three-exploit chain.
        assert!((full - 0.4513968).abs() < 1e-9, "full = {full}");
    }

    #[test]
    fn certain_exploits_null_the_failure_term() {
        let mut scenario = demo_chain();
        for e in &mut scenario.exploits {
            e.confidence = 1.0;
        }
        let plain = brute_force_value(&scenario, 0.9, 4).unwrap();
        let full = expectimax_value(&scenario, 0.9, 4).unwrap();
        assert!((full - plain).abs() < 1e-12);
    }

    #[test]
    fn oversized_instances_are_rejected() {
        let mut scenario = demo_chain();
        for i in 0..8 {
            scenario.hosts.push(crate::model::HostId::new(format!("extra{i}")));
        }
        scenario.finalize();
        assert_eq!(enumerate_paths(&scenario, 4).unwrap_err().code(), "ORACLE_CAP");
        assert_eq!(brute_force_value(&scenario, 0.9, 4).unwrap_err().code(), "ORACLE_CAP");
        assert_eq!(expectimax_value(&scenario, 0.9, 4).unwrap_err().code(), "ORACLE_CAP");
    }
}
