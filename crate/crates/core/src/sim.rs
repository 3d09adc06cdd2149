//! Stochastic stand-in for real exploit execution.
//!
//! The planner sees an exploit's *confidence* — an estimate. The simulated
//! environment executes against unnamed ground truth: a true success
//! probability, a true outcome distribution, a latency model, and optional
//! session flakiness. Draws depend only on the seed and draw order, never on
//! wall-clock time, so every run is reproducible.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::{verify_relay_plan, RelayPlan};
use crate::error::{Error, Result};
use crate::model::{AttackState, Exploit, ExploitId, Scenario, ShellRef};

/// Simulated execution duration model, in seconds.
///
/// Each execution draws uniformly from `mean ± jitter`, clamped at zero.
/// The default mirrors actions that take ten to twenty minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub mean: f64,
    pub jitter: f64,
}

impl Default for Latency {
    fn default() -> Self {
        Latency { mean: 900.0, jitter: 300.0 }
    }
}

impl Latency {
    pub fn zero() -> Self {
        Latency { mean: 0.0, jitter: 0.0 }
    }
}

/// Per-exploit ground truth the simulator executes against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    /// True success probability; the catalog's confidence is an estimate of this.
    pub p_true: f64,
    /// True outcome distribution, aligned with the exploit's outcome list.
    /// Defaults to the declared weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub latency: Latency,
    /// Probability that a success is downgraded to failure on re-check,
    /// modeling unstable sessions. Defaults to zero.
    #[serde(default)]
    pub flaky_session: f64,
}

impl GroundTruthEntry {
    pub fn certain() -> Self {
        GroundTruthEntry {
            p_true: 1.0,
            outcome_weights: None,
            latency: Latency::zero(),
            flaky_session: 0.0,
        }
    }
}

/// Result of one simulated execution.
///
/// `shells_gained` excludes shells the caller already held, so a success may
/// carry an empty gain when everything it granted was already owned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub success: bool,
    pub shells_gained: std::collections::BTreeSet<ShellRef>,
    /// Simulated seconds the attempt took.
    pub elapsed: f64,
}

/// Execution backend the search engine drives.
///
/// One instance per search; the instance owns its RNG stream.
pub trait ExecutionEnv {
    /// Resets the draw stream. Called by the engine before a run so that
    /// identical (scenario, config, seed) triples replay identically.
    fn reseed(&mut self, seed: u64);

    /// Executes one exploit from `state` using the given relay plans.
    ///
    /// In-model failure is a normal [`ExecutionOutcome`]; an error means the
    /// caller violated a precondition, which signals a planner bug.
    fn execute(
        &mut self,
        exploit: &Exploit,
        state: &AttackState,
        relays: &[RelayPlan],
    ) -> Result<ExecutionOutcome>;
}

/// The stochastic simulator.
pub struct SimEnv {
    scenario: Scenario,
    truth: BTreeMap<ExploitId, GroundTruthEntry>,
    rng: ChaCha8Rng,
    /// Virtual clock: total simulated seconds across executions.
    clock: f64,
}

impl SimEnv {
    /// Builds an environment from the scenario's `ground_truth` block.
    /// Exploits without an entry execute at their declared confidence and
    /// weights with the default latency.
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        let mut truth: BTreeMap<ExploitId, GroundTruthEntry> =
            scenario.ground_truth.clone().unwrap_or_default();
        for exploit in &scenario.exploits {
            truth.entry(exploit.id.clone()).or_insert_with(|| GroundTruthEntry {
                p_true: exploit.confidence,
                outcome_weights: None,
                latency: Latency::default(),
                flaky_session: 0.0,
            });
        }
        SimEnv {
            scenario: scenario.clone(),
            truth,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0.0,
        }
    }

    pub fn simulated_seconds(&self) -> f64 {
        self.clock
    }

    pub fn ground_truth(&self) -> &BTreeMap<ExploitId, GroundTruthEntry> {
        &self.truth
    }

    fn check_preconditions(
        &self,
        exploit: &Exploit,
        state: &AttackState,
        relays: &[RelayPlan],
    ) -> Result<()> {
        if !state.contains_all(&exploit.exec) {
            return Err(Error::PreconditionViolation(format!(
                "exploit {} requires shells not held",
                exploit.id
            )));
        }
        for req in &exploit.conn {
            let plan = relays.iter().find(|p| p.requirement == *req).ok_or_else(|| {
                Error::PreconditionViolation(format!(
                    "exploit {} has no relay plan for {}:{}",
                    exploit.id, req.host, req.port
                ))
            })?;
            if !verify_relay_plan(&self.scenario.connectivity, state, plan, self.scenario.relay_port)
            {
                return Err(Error::PreconditionViolation(format!(
                    "relay plan for exploit {} does not verify",
                    exploit.id
                )));
            }
        }
        Ok(())
    }
}

impl ExecutionEnv for SimEnv {
    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.clock = 0.0;
    }

    fn execute(
        &mut self,
        exploit: &Exploit,
        state: &AttackState,
        relays: &[RelayPlan],
    ) -> Result<ExecutionOutcome> {
        self.check_preconditions(exploit, state, relays)?;
        let truth = self.truth.get(&exploit.id).expect("entry for every exploit");

        let mut success = self.rng.random::<f64>() < truth.p_true;
        if success && truth.flaky_session > 0.0 {
            // One re-check: the session may die before it is usable.
            if self.rng.random::<f64>() < truth.flaky_session {
                success = false;
            }
        }

        let shells_gained = if success {
            let weights: Vec<f64> = match &truth.outcome_weights {
                Some(w) => w.clone(),
                None => exploit.outcomes.iter().map(|o| o.weight).collect(),
            };
            let outcome = &exploit.outcomes[sample_index(&weights, self.rng.random::<f64>())];
            outcome
                .shells_gained
                .iter()
                .filter(|s| !state.contains(s))
                .cloned()
                .collect()
        } else {
            Default::default()
        };

        let spread = self.rng.random::<f64>() * 2.0 - 1.0;
        let elapsed = (truth.latency.mean + spread * truth.latency.jitter).max(0.0);
        self.clock += elapsed;

        Ok(ExecutionOutcome { success, shells_gained, elapsed })
    }
}

/// Cumulative-mass sampling; weights are renormalized defensively.
fn sample_index(weights: &[f64], unit_draw: f64) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || weights.len() == 1 {
        return 0;
    }
    let target = unit_draw * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// How confidence estimates are derived from ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Estimates equal truth.
    Exact,
    /// Truth plus a uniform draw in `±epsilon`, clamped to [0, 1].
    Uniform { epsilon: f64 },
    /// Truth plus exactly `epsilon`, clamped to [0, 1].
    Optimistic { epsilon: f64 },
}

/// Derives per-exploit confidence estimates from ground truth under a noise
/// model. Iteration order is the sorted exploit id order, so results are a
/// pure function of (truth, model, seed).
pub fn derive_confidence(
    ground_truth: &BTreeMap<ExploitId, GroundTruthEntry>,
    noise_model: NoiseModel,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<ExploitId, f64> {
    let mut out = BTreeMap::new();
    for (id, entry) in ground_truth {
        let p = match noise_model {
            NoiseModel::Exact => entry.p_true,
            NoiseModel::Uniform { epsilon } => {
                let draw = rng.random::<f64>() * 2.0 - 1.0;
                (entry.p_true + draw * epsilon).clamp(0.0, 1.0)
            }
            NoiseModel::Optimistic { epsilon } => (entry.p_true + epsilon).clamp(0.0, 1.0),
        };
        out.insert(id.clone(), p);
    }
    out
}

/// Writes derived confidences back into the exploit catalog so the scenario
/// file records exactly what the planner saw.
pub fn apply_derived_confidence(scenario: &mut Scenario, noise_model: NoiseModel, seed: u64) {
    let truth = match &scenario.ground_truth {
        Some(t) => t.clone(),
        None => return,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let derived = derive_confidence(&truth, noise_model, &mut rng);
    for exploit in &mut scenario.exploits {
        if let Some(p) = derived.get(&exploit.id) {
            exploit.confidence = *p;
        }
    }
}
