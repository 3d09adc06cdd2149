//! Domain types for hosts, shells, states, exploits, and scenarios, plus
//! action feasibility and state-transition logic.
//!
//! Attacker state is a set of held shells and only ever grows: a successful
//! action adds shells, a failed one changes nothing. Everything here is an
//! immutable value after construction; the operations are pure functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::connectivity::{plan_relay_chain, ConnectivityGraph, RelayPlan};
use crate::sim::GroundTruthEntry;

/// Opaque host identifier, unique within a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub String);

impl HostId {
    pub fn new(id: impl Into<String>) -> Self {
        HostId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for HostId {
    fn from(s: &str) -> Self {
        HostId(s.to_owned())
    }
}

/// Privilege level of a shell on a host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privilege {
    Priv,
    Unpriv,
}

/// A (host, privilege) pair: one interactive shell the attacker may hold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShellRef {
    pub host: HostId,
    pub privilege: Privilege,
}

impl ShellRef {
    pub fn new(host: impl Into<HostId>, privilege: Privilege) -> Self {
        ShellRef { host: host.into(), privilege }
    }

    pub fn privileged(host: impl Into<HostId>) -> Self {
        ShellRef::new(host, Privilege::Priv)
    }

    pub fn unprivileged(host: impl Into<HostId>) -> Self {
        ShellRef::new(host, Privilege::Unpriv)
    }
}

impl fmt::Display for ShellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.privilege {
            Privilege::Priv => "priv",
            Privilege::Unpriv => "unpriv",
        };
        write!(f, "({}, {})", self.host, p)
    }
}

/// The set of held shells. Grows monotonically along any action sequence.
///
/// Equality is set equality, independent of insertion order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttackState {
    pub shells: BTreeSet<ShellRef>,
}

impl AttackState {
    pub fn new(shells: impl IntoIterator<Item = ShellRef>) -> Self {
        AttackState { shells: shells.into_iter().collect() }
    }

    pub fn empty() -> Self {
        AttackState::default()
    }

    pub fn contains(&self, shell: &ShellRef) -> bool {
        self.shells.contains(shell)
    }

    pub fn contains_all(&self, shells: &BTreeSet<ShellRef>) -> bool {
        shells.is_subset(&self.shells)
    }

    /// Hosts on which at least one shell is held.
    pub fn held_hosts(&self) -> BTreeSet<HostId> {
        self.shells.iter().map(|s| s.host.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.shells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }
}

impl fmt::Display for AttackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.shells.iter().map(|s| s.to_string()).collect();
        write!(f, "{{{}}}", items.join(", "))
    }
}

/// Direction of a required connection, relative to the executing shell.
///
/// `Fwd`: the executing side opens the connection. `Rev`: the target
/// connects back to the executing side (reverse shells).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Rev,
}

/// A connectivity requirement: the executing shell must reach (or be
/// reachable from) `host` on `port`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnRequirement {
    pub host: HostId,
    pub port: u16,
    pub direction: Direction,
}

impl ConnRequirement {
    pub fn new(host: impl Into<HostId>, port: u16, direction: Direction) -> Self {
        ConnRequirement { host: host.into(), port, direction }
    }
}

/// One possible result of a successful action: the shells it grants.
///
/// `weight` is the probability mass used only by the simulated environment's
/// outcome draw; value initialization ignores it and takes the maximum over
/// outcome values instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub shells_gained: BTreeSet<ShellRef>,
    pub weight: f64,
}

impl Outcome {
    pub fn new(shells: impl IntoIterator<Item = ShellRef>, weight: f64) -> Self {
        Outcome { shells_gained: shells.into_iter().collect(), weight }
    }

    /// Single-outcome convenience: all the mass on one result set.
    pub fn certain(shells: impl IntoIterator<Item = ShellRef>) -> Self {
        Outcome::new(shells, 1.0)
    }
}

/// Descriptive tag for what an exploit achieves. Not used by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitKind {
    RemoteShell,
    CodeExecution,
    CredentialDump,
}

/// Opaque exploit identifier, unique within a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExploitId(pub String);

impl ExploitId {
    pub fn new(id: impl Into<String>) -> Self {
        ExploitId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExploitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ExploitId {
    fn from(s: &str) -> Self {
        ExploitId(s.to_owned())
    }
}

/// A validated attack action.
///
/// `exec` is the set of shells that must already be held; `executing_shell`
/// names the member of `exec` from which connectivity is evaluated. `conn`
/// lists the connections that shell needs, `outcomes` the possible result
/// shell sets, and `confidence` the estimated success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploit {
    pub id: ExploitId,
    pub exec: BTreeSet<ShellRef>,
    pub executing_shell: ShellRef,
    pub conn: BTreeSet<ConnRequirement>,
    pub outcomes: Vec<Outcome>,
    pub confidence: f64,
    pub kind: ExploitKind,
}

/// A complete planning problem: hosts, reachability, exploit catalog,
/// start and goal states, and (optionally) the simulator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub hosts: Vec<HostId>,
    pub connectivity: ConnectivityGraph,
    pub exploits: Vec<Exploit>,
    pub initial_state: AttackState,
    pub goal: AttackState,
    pub relay_port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<BTreeMap<ExploitId, GroundTruthEntry>>,
    /// Unknown keys found while parsing, reported by validation.
    #[serde(skip)]
    pub unknown_fields: Vec<String>,
}

impl Scenario {
    /// Rebuilds derived indexes after construction or deserialization.
    pub fn finalize(&mut self) {
        self.connectivity.set_hosts(self.hosts.iter().cloned());
    }

    pub fn exploit(&self, id: &ExploitId) -> Option<&Exploit> {
        self.exploits.iter().find(|e| &e.id == id)
    }

    pub fn host_declared(&self, host: &HostId) -> bool {
        self.hosts.iter().any(|h| h == host)
    }

    /// Parses a scenario from JSON, recording unknown keys for validation
    /// instead of rejecting them outright.
    pub fn from_json(text: &str) -> crate::error::Result<Scenario> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let unknown = crate::validate::collect_unknown_fields(&value);
        let mut scenario: Scenario = serde_json::from_value(value)?;
        scenario.unknown_fields = unknown;
        scenario.finalize();
        Ok(scenario)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serializes");
        text.push('\n');
        text
    }
}

/// True iff every goal shell is held: `goal ⊆ state`.
pub fn goal_reached(state: &AttackState, goal: &AttackState) -> bool {
    goal.shells.is_subset(&state.shells)
}

/// Returns `state ∪ outcome.shells_gained`. The input is not modified.
pub fn apply_outcome(state: &AttackState, outcome: &Outcome) -> AttackState {
    let mut shells = state.shells.clone();
    shells.extend(outcome.shells_gained.iter().cloned());
    AttackState { shells }
}

/// An exploit paired with the relay plans that satisfy its connectivity
/// requirements from the state it was enumerated in. One plan per
/// requirement; a plan with no hops is a direct connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub exploit_id: ExploitId,
    pub relays: Vec<RelayPlan>,
}

/// Enumerates the exploits executable from `state`: those whose `exec`
/// shells are all held and whose every connectivity requirement is
/// satisfiable, directly or through a relay chain over held hosts.
///
/// Output is ordered by ascending exploit id.
pub fn feasible_actions(state: &AttackState, scenario: &Scenario) -> Vec<ActionPlan> {
    let mut exploits: Vec<&Exploit> = scenario.exploits.iter().collect();
    exploits.sort_by(|a, b| a.id.cmp(&b.id));

    let mut actions = Vec::new();
    'next_exploit: for exploit in exploits {
        if !state.contains_all(&exploit.exec) {
            continue;
        }
        let mut relays = Vec::with_capacity(exploit.conn.len());
        for req in &exploit.conn {
            match plan_relay_chain(
                &scenario.connectivity,
                state,
                req,
                &exploit.executing_shell.host,
                scenario.relay_port,
            ) {
                Ok(Some(plan)) => relays.push(plan),
                Ok(None) | Err(_) => continue 'next_exploit,
            }
        }
        actions.push(ActionPlan { exploit_id: exploit.id.clone(), relays });
    }
    actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::demo_chain;

    #[test]
    fn goal_is_reached_by_superset() {
        let goal = AttackState::new([ShellRef::privileged("db")]);
        let state =
            AttackState::new([ShellRef::privileged("kali"), ShellRef::privileged("db")]);
        assert!(goal_reached(&state, &goal));
    }

    #[test]
    fn privilege_mismatch_misses_the_goal() {
        let goal = AttackState::new([ShellRef::privileged("db")]);
        let state = AttackState::new([ShellRef::unprivileged("db")]);
        assert!(!goal_reached(&state, &goal));
    }

    #[test]
    fn empty_goal_is_always_reached() {
        assert!(goal_reached(&AttackState::empty(), &AttackState::empty()));
        let state = AttackState::new([ShellRef::privileged("kali")]);
        assert!(goal_reached(&state, &AttackState::empty()));
    }

    #[test]
    fn outcome_application_is_union() {
        let state = AttackState::new([ShellRef::privileged("kali")]);
        let outcome = Outcome::certain([ShellRef::unprivileged("web")]);
        let grown = apply_outcome(&state, &outcome);
        assert_eq!(grown.len(), 2);
        assert!(grown.contains(&ShellRef::privileged("kali")));
        assert!(grown.contains(&ShellRef::unprivileged("web")));
        assert_eq!(state.len(), 1);
    }

    #[test]
    fn outcome_application_is_idempotent() {
        let state = AttackState::new([ShellRef::privileged("kali")]);
        let outcome = Outcome::certain([ShellRef::unprivileged("web")]);
        let once = apply_outcome(&state, &outcome);
        let twice = apply_outcome(&once, &outcome);
        assert_eq!(once, twice);
    }

    #[test]
    fn two_new_shells_grow_the_state_by_two() {
        let state = AttackState::new([ShellRef::privileged("kali")]);
        let outcome = Outcome::certain([
            ShellRef::unprivileged("web"),
            ShellRef::privileged("web"),
        ]);
        assert_eq!(apply_outcome(&state, &outcome).len(), 3);
    }

    #[test]
    fn only_the_foothold_is_feasible_at_the_start() {
        let scenario = demo_chain();
        let actions = feasible_actions(&scenario.initial_state, &scenario);
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].exploit_id, ExploitId::from("e1-foothold"));
        assert!(actions[0].relays.is_empty());
    }

    #[test]
    fn holding_every_shell_unlocks_the_catalog() {
        let scenario = demo_chain();
        let everything = AttackState::new(
            scenario
                .hosts
                .iter()
                .flat_map(|h| {
                    [ShellRef::privileged(h.as_str()), ShellRef::unprivileged(h.as_str())]
                })
                .collect::<Vec<_>>(),
        );
        let actions = feasible_actions(&everything, &scenario);
        assert_eq!(actions.len(), scenario.exploits.len());
        let mut ids: Vec<&str> = actions.iter().map(|a| a.exploit_id.as_str()).collect();
        let sorted = {
            let mut s = ids.clone();
            s.sort_unstable();
            s
        };
        assert_eq!(ids, sorted);
        ids.dedup();
        assert_eq!(ids.len(), actions.len());
    }

    #[test]
    fn empty_catalog_has_no_actions() {
        let mut scenario = demo_chain();
        scenario.exploits.clear();
        assert!(feasible_actions(&scenario.initial_state, &scenario).is_empty());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let scenario = demo_chain();
        let parsed = Scenario::from_json(&scenario.to_json_pretty()).unwrap();
        assert_eq!(scenario, parsed);
    }
}
