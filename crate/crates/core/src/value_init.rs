//! Finite-horizon value initialization over the attack graph.
//!
//! Node values are seeded before search by a depth-limited recursion:
//! an action's value is `Q(s, a, d) = p · γ · max_o V(s ∪ o, d − 1)` with the
//! maximum taken over the action's possible outcomes, and a state's value is
//! the best action value, `goal_value` on goal states, and zero at the
//! horizon. There is no failure continuation term: a failed action leaves
//! the state unchanged, so the failed branch offers nothing its parent does
//! not, and dropping the term keeps the recursion free of self-reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    apply_outcome, feasible_actions, goal_reached, ActionPlan, AttackState, ExploitId, Scenario,
};

/// Parameters of the initialization recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Discount factor in (0, 1].
    pub gamma: f64,
    /// Horizon: maximum number of actions considered.
    pub horizon: u32,
    /// Terminal value of a goal-satisfying state.
    pub goal_value: f64,
    /// Cap on (state, depth) entries before the recursion aborts.
    pub state_cap: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { gamma: 0.9, horizon: 4, goal_value: 1.0, state_cap: 200_000 }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::UnsatisfiableConfig(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(Error::UnsatisfiableConfig("horizon must be at least 1".into()));
        }
        if self.goal_value <= 0.0 {
            return Err(Error::UnsatisfiableConfig("goal_value must be positive".into()));
        }
        Ok(())
    }
}

/// Memoized values from one initialization run.
///
/// Keys pair a canonical (sorted) state with the remaining depth, so every
/// state reachable within the horizon is covered at its remaining budget.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub gamma: f64,
    pub horizon: u32,
    pub goal_value: f64,
    values: HashMap<(AttackState, u32), f64>,
    q_values: HashMap<(AttackState, ExploitId, u32), f64>,
}

impl ValueTable {
    pub fn value(&self, state: &AttackState, depth: u32) -> Option<f64> {
        self.values.get(&(state.clone(), depth)).copied()
    }

    pub fn q(&self, state: &AttackState, exploit: &ExploitId, depth: u32) -> Option<f64> {
        self.q_values.get(&(state.clone(), exploit.clone(), depth)).copied()
    }

    /// Prior for a search-tree candidate: the q-value at the depth budget
    /// remaining under the horizon, zero for nodes at or beyond it.
    pub fn prior(&self, state: &AttackState, exploit: &ExploitId, node_depth: u32) -> f64 {
        if node_depth >= self.horizon {
            return 0.0;
        }
        self.q(state, exploit, self.horizon - node_depth).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct ValueComputer<'a> {
    scenario: &'a Scenario,
    config: InitConfig,
    values: HashMap<(AttackState, u32), f64>,
    q_values: HashMap<(AttackState, ExploitId, u32), f64>,
    actions: HashMap<AttackState, Vec<ActionPlan>>,
}

impl<'a> ValueComputer<'a> {
    fn new(scenario: &'a Scenario, config: InitConfig) -> Self {
        ValueComputer {
            scenario,
            config,
            values: HashMap::new(),
            q_values: HashMap::new(),
            actions: HashMap::new(),
        }
    }

    fn actions_for(&mut self, state: &AttackState) -> Vec<ActionPlan> {
        if let Some(plans) = self.actions.get(state) {
            return plans.clone();
        }
        let plans = feasible_actions(state, self.scenario);
        self.actions.insert(state.clone(), plans.clone());
        plans
    }

    fn value(&mut self, state: &AttackState, depth: u32) -> Result<f64> {
        if let Some(v) = self.values.get(&(state.clone(), depth)) {
            return Ok(*v);
        }
        if goal_reached(state, &self.scenario.goal) {
            self.values.insert((state.clone(), depth), self.config.goal_value);
            return Ok(self.config.goal_value);
        }
        if depth == 0 {
            self.values.insert((state.clone(), 0), 0.0);
            return Ok(0.0);
        }
        if self.values.len() >= self.config.state_cap {
            return Err(Error::StateCapExceeded { cap: self.config.state_cap });
        }

        let mut best = 0.0_f64;
        for plan in self.actions_for(state) {
            let q = self.action_value(state, &plan.exploit_id, depth)?;
            best = best.max(q);
        }
        self.values.insert((state.clone(), depth), best);
        Ok(best)
    }

    fn action_value(&mut self, state: &AttackState, exploit: &ExploitId, depth: u32) -> Result<f64> {
        debug_assert!(depth >= 1);
        let exploit_ref = self
            .scenario
            .exploit(exploit)
            .unwrap_or_else(|| panic!("exploit {exploit} in catalog"));
        let confidence = exploit_ref.confidence;
        let outcomes = exploit_ref.outcomes.clone();

        let mut best_outcome = 0.0_f64;
        for outcome in &outcomes {
            let next = apply_outcome(state, outcome);
            best_outcome = best_outcome.max(self.value(&next, depth - 1)?);
        }
        let q = confidence * self.config.gamma * best_outcome;
        self.q_values.insert((state.clone(), exploit.clone(), depth), q);
        Ok(q)
    }
}

/// Runs the initialization recursion from the scenario's initial state for
/// every depth up to the horizon, returning the memoized table.
pub fn compute_values(scenario: &Scenario, config: &InitConfig) -> Result<ValueTable> {
    config.validate()?;
    let mut computer = ValueComputer::new(scenario, *config);
    for depth in 0..=config.horizon {
        computer.value(&scenario.initial_state, depth)?;
    }
    Ok(ValueTable {
        gamma: config.gamma,
        horizon: config.horizon,
        goal_value: config.goal_value,
        values: computer.values,
        q_values: computer.q_values,
    })
}

/// Value of taking `exploit` from `state` with `depth_remaining` actions
/// left. Errors if the exploit is not feasible in the state.
pub fn q_value(
    state: &AttackState,
    exploit: &ExploitId,
    depth_remaining: u32,
    config: &InitConfig,
    scenario: &Scenario,
) -> Result<f64> {
    config.validate()?;
    if depth_remaining == 0 {
        return Err(Error::UnsatisfiableConfig("depth_remaining must be at least 1".into()));
    }
    let feasible = feasible_actions(state, scenario);
    if !feasible.iter().any(|p| &p.exploit_id == exploit) {
        return Err(Error::InfeasibleAction(exploit.as_str().to_owned()));
    }
    let mut computer = ValueComputer::new(scenario, *config);
    computer.action_value(state, exploit, depth_remaining)
}

/// Values of every feasible action from `state` at the configured horizon.
/// Used by planners that act greedily without a search tree.
pub fn action_values(
    state: &AttackState,
    config: &InitConfig,
    scenario: &Scenario,
) -> Result<Vec<(ActionPlan, f64)>> {
    config.validate()?;
    let mut computer = ValueComputer::new(scenario, *config);
    let mut out = Vec::new();
    for plan in feasible_actions(state, scenario) {
        let q = computer.action_value(state, &plan.exploit_id, config.horizon)?;
        out.push((plan, q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::demo_chain;
    use crate::model::{Exploit, Privilege, ShellRef};

    fn config() -> InitConfig {
        InitConfig::default()
    }

    #[test]
    fn zero_confidence_zeroes_the_action() {
        let mut scenario = demo_chain();
        scenario.exploits[0].confidence = 0.0;
        let q = q_value(&scenario.initial_state, &"e1-foothold".into(), 4, &config(), &scenario)
            .unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn single_step_to_goal() {
        // One exploit, p = 0.9, whose only outcome satisfies the goal.
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
        let q = q_value(&scenario.initial_state, &"direct".into(), 4, &config(), &scenario)
            .unwrap();
        assert!((q - 0.81).abs() < 1e-12);
    }

    #[test]
    fn multi_outcome_takes_the_maximum() {
        // Outcome values 0.5 and 0.2 at the child depth; p = 0.8, γ = 0.9.
        // Built as: one outcome lands a state one 0.5/γ-step... simpler, use
        // two outcomes where one reaches a state worth 0.5 and one a state
        // worth 0.2 by direct construction of follow-up exploits.
        let kali = ShellRef::privileged("kali");
        let a = ShellRef::unprivileged("web");
        let b = ShellRef::unprivileged("db");
        let goal = ShellRef::privileged("db");
        let mk = |id: &str, exec: &ShellRef, gain: &ShellRef, p: f64| Exploit {
            id: id.into(),
            exec: [exec.clone()].into_iter().collect(),
            executing_shell: exec.clone(),
            conn: Default::default(),
            outcomes: vec![crate::model::Outcome::certain([gain.clone()])],
            confidence: p,
            kind: crate::model::ExploitKind::CodeExecution,
        };
        let mut scenario = demo_chain();
        scenario.exploits = vec![
            Exploit {
                id: "branch".into(),
                exec: [kali.clone()].into_iter().collect(),
                executing_shell: kali.clone(),
                conn: Default::default(),
                outcomes: vec![
                    crate::model::Outcome::new([a.clone()], 0.5),
                    crate::model::Outcome::new([b.clone()], 0.5),
                ],
                confidence: 0.8,
                kind: crate::model::ExploitKind::CredentialDump,
            },
            // From (web, unpriv): reach the goal with p = 0.5/γ ⇒ value 0.5.
            mk("via-a", &a, &goal, 0.5 / 0.9),
            // From (db, unpriv): reach the goal with p = 0.2/γ ⇒ value 0.2.
            mk("via-b", &b, &goal, 0.2 / 0.9),
        ];
        let q = q_value(&scenario.initial_state, &"branch".into(), 4, &config(), &scenario)
            .unwrap();
        assert!((q - 0.36).abs() < 1e-9, "q = {q}");
    }

    #[test]
    fn infeasible_exploit_is_an_error() {
        let scenario = demo_chain();
        let err = q_value(&scenario.initial_state, &"e3-db".into(), 4, &config(), &scenario)
            .unwrap_err();
        assert_eq!(err.code(), "INFEASIBLE_ACTION");
    }

    #[test]
    fn chain_value_compounds_confidence_and_discount() {
        let scenario = demo_chain();
        let table = compute_values(&scenario, &config()).unwrap();
        let v = table.value(&scenario.initial_state, 4).unwrap();
        assert!((v - 0.26244).abs() < 1e-9, "V = {v}");
    }

    #[test]
    fn goal_already_held_is_terminal_at_every_depth() {
        let mut scenario = demo_chain();
        scenario.initial_state = scenario.goal.clone();
        let table = compute_values(&scenario, &config()).unwrap();
        for d in 0..=4 {
            assert_eq!(table.value(&scenario.initial_state, d), Some(1.0));
        }
    }

    #[test]
    fn empty_catalog_is_worthless() {
        let mut scenario = demo_chain();
        scenario.exploits.clear();
        let table = compute_values(&scenario, &config()).unwrap();
        for d in 0..=4 {
            assert_eq!(table.value(&scenario.initial_state, d), Some(0.0));
        }
    }

    #[test]
    fn state_cap_aborts_the_recursion() {
        let scenario = demo_chain();
        let config = InitConfig { state_cap: 1, ..InitConfig::default() };
        let err = compute_values(&scenario, &config).unwrap_err();
        assert_eq!(err.code(), "STATE_CAP_EXCEEDED");
    }
}
