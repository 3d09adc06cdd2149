//! Attack-path planning over shell-state spaces.
//!
//! The attacker's state is the set of shells held on a network of hosts.
//! Validated exploits are expensive, stochastic, binary actions: each needs
//! certain shells and certain port-level connectivity (directly or relayed
//! through held hosts) and grants new shells on success. Planning is a tree
//! search whose node values are initialized by finite-horizon recursion
//! over the attack graph and refined by executing actions against a
//! simulated environment. A brute-force oracle provides exact ground truth
//! on small instances for equivalence and regret testing.

pub mod benchmark;
pub mod connectivity;
pub mod error;
pub mod generate;
pub mod mcts;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod validate;
pub mod value_init;

pub use connectivity::{ConnEdge, ConnectivityGraph, RelayPlan};
pub use error::{Error, Result};
pub use model::{
    apply_outcome, feasible_actions, goal_reached, ActionPlan, AttackState, ConnRequirement,
    Direction, Exploit, ExploitId, ExploitKind, HostId, Outcome, Privilege, Scenario, ShellRef,
};
pub use sim::{ExecutionEnv, ExecutionOutcome, GroundTruthEntry, Latency, NoiseModel, SimEnv};
pub use validate::{validate_scenario, ValidationReport, Violation, ViolationCode};
pub use value_init::{compute_values, InitConfig, ValueTable};
