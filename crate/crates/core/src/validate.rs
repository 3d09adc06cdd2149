//! Scenario validation: every invariant violation becomes a report entry
//! with a machine-readable code. Violations are data, not failures; a valid
//! scenario yields an empty report.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Scenario, ShellRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnknownField,
    EmptyHostId,
    DuplicateHost,
    UnknownHost,
    DuplicateEdge,
    PortOutOfRange,
    RelayPortOutOfRange,
    EmptyExploitId,
    DuplicateExploitId,
    ExecShellNotInExec,
    ConfidenceOutOfRange,
    NoOutcomes,
    EmptyOutcome,
    OutcomeWeightOutOfRange,
    OutcomeWeightsNotNormalized,
    EmptyInitialState,
    GroundTruthUnknownExploit,
    GroundTruthProbabilityOutOfRange,
    GroundTruthWeightsLengthMismatch,
    GroundTruthNegativeLatency,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::UnknownField => "UNKNOWN_FIELD",
            ViolationCode::EmptyHostId => "EMPTY_HOST_ID",
            ViolationCode::DuplicateHost => "DUPLICATE_HOST",
            ViolationCode::UnknownHost => "UNKNOWN_HOST",
            ViolationCode::DuplicateEdge => "DUPLICATE_EDGE",
            ViolationCode::PortOutOfRange => "PORT_OUT_OF_RANGE",
            ViolationCode::RelayPortOutOfRange => "RELAY_PORT_OUT_OF_RANGE",
            ViolationCode::EmptyExploitId => "EMPTY_EXPLOIT_ID",
            ViolationCode::DuplicateExploitId => "DUPLICATE_EXPLOIT_ID",
            ViolationCode::ExecShellNotInExec => "EXEC_SHELL_NOT_IN_EXEC",
            ViolationCode::ConfidenceOutOfRange => "CONFIDENCE_OUT_OF_RANGE",
            ViolationCode::NoOutcomes => "NO_OUTCOMES",
            ViolationCode::EmptyOutcome => "EMPTY_OUTCOME",
            ViolationCode::OutcomeWeightOutOfRange => "OUTCOME_WEIGHT_OUT_OF_RANGE",
            ViolationCode::OutcomeWeightsNotNormalized => "OUTCOME_WEIGHTS_NOT_NORMALIZED",
            ViolationCode::EmptyInitialState => "EMPTY_INITIAL_STATE",
            ViolationCode::GroundTruthUnknownExploit => "GROUND_TRUTH_UNKNOWN_EXPLOIT",
            ViolationCode::GroundTruthProbabilityOutOfRange => {
                "GROUND_TRUTH_PROBABILITY_OUT_OF_RANGE"
            }
            ViolationCode::GroundTruthWeightsLengthMismatch => {
                "GROUND_TRUTH_WEIGHTS_LENGTH_MISMATCH"
            }
            ViolationCode::GroundTruthNegativeLatency => "GROUND_TRUTH_NEGATIVE_LATENCY",
        }
    }
}

/// One invariant violation: where, what, and a stable code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation { code, message: message.into() }
    }
}

/// Validation result: empty means the scenario satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_code(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Checks every scenario invariant and reports each violation found.
pub fn validate_scenario(scenario: &Scenario) -> ValidationReport {
    let mut v: Vec<Violation> = Vec::new();

    for field in &scenario.unknown_fields {
        v.push(Violation::new(
            ViolationCode::UnknownField,
            format!("unknown field `{field}`"),
        ));
    }

    let mut hosts: BTreeSet<&str> = BTreeSet::new();
    for host in &scenario.hosts {
        if host.0.is_empty() {
            v.push(Violation::new(ViolationCode::EmptyHostId, "empty host id"));
        } else if !hosts.insert(host.as_str()) {
            v.push(Violation::new(
                ViolationCode::DuplicateHost,
                format!("host `{host}` declared more than once"),
            ));
        }
    }

    let check_host = |v: &mut Vec<Violation>, host: &crate::model::HostId, at: &str| {
        if !hosts.contains(host.as_str()) {
            v.push(Violation::new(
                ViolationCode::UnknownHost,
                format!("{at} references undeclared host `{host}`"),
            ));
        }
    };
    let check_shell = |v: &mut Vec<Violation>,
                       hosts: &BTreeSet<&str>,
                       shell: &ShellRef,
                       at: &str| {
        if !hosts.contains(shell.host.as_str()) {
            v.push(Violation::new(
                ViolationCode::UnknownHost,
                format!("{at} references undeclared host `{}`", shell.host),
            ));
        }
    };

    let mut seen_edges = BTreeSet::new();
    for edge in scenario.connectivity.edges() {
        check_host(&mut v, &edge.src, "connectivity edge");
        check_host(&mut v, &edge.dst, "connectivity edge");
        if edge.port == 0 {
            v.push(Violation::new(
                ViolationCode::PortOutOfRange,
                format!("edge {} -> {} uses port 0", edge.src, edge.dst),
            ));
        }
        if !seen_edges.insert((edge.src.clone(), edge.dst.clone(), edge.port)) {
            v.push(Violation::new(
                ViolationCode::DuplicateEdge,
                format!("duplicate edge {} -> {}:{}", edge.src, edge.dst, edge.port),
            ));
        }
    }

    if scenario.relay_port == 0 {
        v.push(Violation::new(ViolationCode::RelayPortOutOfRange, "relay_port is 0"));
    }

    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for exploit in &scenario.exploits {
        let id = exploit.id.as_str();
        let at = format!("exploit `{id}`");
        if id.is_empty() {
            v.push(Violation::new(ViolationCode::EmptyExploitId, "empty exploit id"));
        } else if !ids.insert(id) {
            v.push(Violation::new(
                ViolationCode::DuplicateExploitId,
                format!("exploit id `{id}` declared more than once"),
            ));
        }
        for shell in &exploit.exec {
            check_shell(&mut v, &hosts, shell, &at);
        }
        check_shell(&mut v, &hosts, &exploit.executing_shell, &at);
        if !exploit.exec.contains(&exploit.executing_shell) {
            v.push(Violation::new(
                ViolationCode::ExecShellNotInExec,
                format!("{at}: executing_shell is not a member of exec"),
            ));
        }
        for req in &exploit.conn {
            check_host(&mut v, &req.host, &at);
            if req.port == 0 {
                v.push(Violation::new(
                    ViolationCode::PortOutOfRange,
                    format!("{at}: connectivity requirement uses port 0"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&exploit.confidence) {
            v.push(Violation::new(
                ViolationCode::ConfidenceOutOfRange,
                format!("{at}: confidence {} outside [0, 1]", exploit.confidence),
            ));
        }
        if exploit.outcomes.is_empty() {
            v.push(Violation::new(ViolationCode::NoOutcomes, format!("{at}: no outcomes")));
        } else {
            let mut sum = 0.0;
            for outcome in &exploit.outcomes {
                if outcome.shells_gained.is_empty() {
                    v.push(Violation::new(
                        ViolationCode::EmptyOutcome,
                        format!("{at}: outcome grants no shells"),
                    ));
                }
                for shell in &outcome.shells_gained {
                    check_shell(&mut v, &hosts, shell, &at);
                }
                if !(0.0..=1.0).contains(&outcome.weight) {
                    v.push(Violation::new(
                        ViolationCode::OutcomeWeightOutOfRange,
                        format!("{at}: outcome weight {} outside [0, 1]", outcome.weight),
                    ));
                }
                sum += outcome.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                v.push(Violation::new(
                    ViolationCode::OutcomeWeightsNotNormalized,
                    format!("{at}: outcome weights sum to {sum}"),
                ));
            }
        }
    }

    if scenario.initial_state.is_empty() {
        v.push(Violation::new(ViolationCode::EmptyInitialState, "initial_state is empty"));
    }
    for shell in &scenario.initial_state.shells {
        check_shell(&mut v, &hosts, shell, "initial_state");
    }
    for shell in &scenario.goal.shells {
        check_shell(&mut v, &hosts, shell, "goal");
    }

    if let Some(truth) = &scenario.ground_truth {
        for (id, entry) in truth {
            let at = format!("ground_truth `{id}`");
            let exploit = scenario.exploit(id);
            if exploit.is_none() {
                v.push(Violation::new(
                    ViolationCode::GroundTruthUnknownExploit,
                    format!("{at}: no such exploit"),
                ));
            }
            if !(0.0..=1.0).contains(&entry.p_true) {
                v.push(Violation::new(
                    ViolationCode::GroundTruthProbabilityOutOfRange,
                    format!("{at}: p_true {} outside [0, 1]", entry.p_true),
                ));
            }
            if !(0.0..=1.0).contains(&entry.flaky_session) {
                v.push(Violation::new(
                    ViolationCode::GroundTruthProbabilityOutOfRange,
                    format!("{at}: flaky_session {} outside [0, 1]", entry.flaky_session),
                ));
            }
            if entry.latency.mean < 0.0 || entry.latency.jitter < 0.0 {
                v.push(Violation::new(
                    ViolationCode::GroundTruthNegativeLatency,
                    format!("{at}: negative latency"),
                ));
            }
            if let (Some(weights), Some(exploit)) = (&entry.outcome_weights, exploit) {
                if weights.len() != exploit.outcomes.len() {
                    v.push(Violation::new(
                        ViolationCode::GroundTruthWeightsLengthMismatch,
                        format!(
                            "{at}: {} weights for {} outcomes",
                            weights.len(),
                            exploit.outcomes.len()
                        ),
                    ));
                }
            }
        }
    }

    ValidationReport { violations: v }
}

const SCENARIO_KEYS: &[&str] = &[
    "hosts",
    "connectivity",
    "exploits",
    "initial_state",
    "goal",
    "relay_port",
    "ground_truth",
];
const EXPLOIT_KEYS: &[&str] =
    &["id", "exec", "executing_shell", "conn", "outcomes", "confidence", "kind"];
const SHELL_KEYS: &[&str] = &["host", "privilege"];
const CONN_KEYS: &[&str] = &["host", "port", "direction"];
const OUTCOME_KEYS: &[&str] = &["shells_gained", "weight"];
const TRUTH_KEYS: &[&str] = &["p_true", "outcome_weights", "latency", "flaky_session"];
const LATENCY_KEYS: &[&str] = &["mean", "jitter"];

/// Scans a raw scenario document for keys outside the schema. Parsing stays
/// permissive; the findings surface through `validate_scenario`.
pub fn collect_unknown_fields(value: &Value) -> Vec<String> {
    let mut found = Vec::new();
    let Some(top) = value.as_object() else { return found };

    let mut note = |path: String| found.push(path);
    let check_obj = |obj: &Value, keys: &[&str], prefix: &str, note: &mut dyn FnMut(String)| {
        if let Some(map) = obj.as_object() {
            for key in map.keys() {
                if !keys.contains(&key.as_str()) {
                    note(format!("{prefix}.{key}"));
                }
            }
        }
    };

    for key in top.keys() {
        if !SCENARIO_KEYS.contains(&key.as_str()) {
            note(key.clone());
        }
    }
    let shells_of = |v: &Value| -> Vec<Value> {
        v.as_array().map(|a| a.to_vec()).unwrap_or_default()
    };
    for (i, shell) in shells_of(top.get("initial_state").unwrap_or(&Value::Null))
        .iter()
        .enumerate()
    {
        check_obj(shell, SHELL_KEYS, &format!("initial_state[{i}]"), &mut note);
    }
    for (i, shell) in shells_of(top.get("goal").unwrap_or(&Value::Null)).iter().enumerate() {
        check_obj(shell, SHELL_KEYS, &format!("goal[{i}]"), &mut note);
    }
    if let Some(exploits) = top.get("exploits").and_then(|v| v.as_array()) {
        for (i, exploit) in exploits.iter().enumerate() {
            let prefix = format!("exploits[{i}]");
            check_obj(exploit, EXPLOIT_KEYS, &prefix, &mut note);
            let Some(map) = exploit.as_object() else { continue };
            for (field, keys) in [("exec", SHELL_KEYS), ("conn", CONN_KEYS)] {
                for (j, item) in shells_of(map.get(field).unwrap_or(&Value::Null))
                    .iter()
                    .enumerate()
                {
                    check_obj(item, keys, &format!("{prefix}.{field}[{j}]"), &mut note);
                }
            }
            if let Some(shell) = map.get("executing_shell") {
                check_obj(shell, SHELL_KEYS, &format!("{prefix}.executing_shell"), &mut note);
            }
            for (j, outcome) in shells_of(map.get("outcomes").unwrap_or(&Value::Null))
                .iter()
                .enumerate()
            {
                let oprefix = format!("{prefix}.outcomes[{j}]");
                check_obj(outcome, OUTCOME_KEYS, &oprefix, &mut note);
                if let Some(omap) = outcome.as_object() {
                    for (k, shell) in shells_of(omap.get("shells_gained").unwrap_or(&Value::Null))
                        .iter()
                        .enumerate()
                    {
                        check_obj(
                            shell,
                            SHELL_KEYS,
                            &format!("{oprefix}.shells_gained[{k}]"),
                            &mut note,
                        );
                    }
                }
            }
        }
    }
    if let Some(truth) = top.get("ground_truth").and_then(|v| v.as_object()) {
        for (id, entry) in truth {
            let prefix = format!("ground_truth.{id}");
            check_obj(entry, TRUTH_KEYS, &prefix, &mut note);
            if let Some(latency) = entry.as_object().and_then(|m| m.get("latency")) {
                check_obj(latency, LATENCY_KEYS, &format!("{prefix}.latency"), &mut note);
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::demo_chain;
    use crate::model::Privilege;

    #[test]
    fn well_formed_scenario_yields_empty_report() {
        let report = validate_scenario(&demo_chain());
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn executing_shell_outside_exec_is_flagged() {
        let mut scenario = demo_chain();
        scenario.exploits[0].executing_shell =
            ShellRef::new("web", Privilege::Priv);
        let report = validate_scenario(&scenario);
        assert!(report.has_code(ViolationCode::ExecShellNotInExec));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn undeclared_conn_host_is_flagged() {
        let mut scenario = demo_chain();
        let req = crate::model::ConnRequirement::new("ghost", 22, crate::model::Direction::Fwd);
        scenario.exploits[0].conn.insert(req);
        let report = validate_scenario(&scenario);
        assert!(report.has_code(ViolationCode::UnknownHost));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn unknown_top_level_field_is_flagged() {
        let mut text = demo_chain().to_json_pretty();
        text = text.replacen("{", "{\n  \"surprise\": 1,", 1);
        let scenario = Scenario::from_json(&text).unwrap();
        let report = validate_scenario(&scenario);
        assert!(report.has_code(ViolationCode::UnknownField));
    }
}
