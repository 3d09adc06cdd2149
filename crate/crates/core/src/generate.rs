//! Scenario generation: a fixed demo chain, seeded random small instances
//! for oracle comparison, and a class-based enterprise network generator
//! with compartments, planted attack paths, and distractor exploits.
//!
//! Everything is a pure function of its seed: the same config generates
//! byte-identical scenario files.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::connectivity::{ConnEdge, ConnectivityGraph};
use crate::error::{Error, Result};
use crate::model::{
    AttackState, ConnRequirement, Direction, Exploit, ExploitId, ExploitKind, HostId, Outcome,
    Privilege, Scenario, ShellRef,
};
use crate::oracle;
use crate::sim::{GroundTruthEntry, Latency};

/// Fixed three-host demo: a foothold on the web server, a local privilege
/// escalation, then the database host. Used throughout the tests.
pub fn demo_chain() -> Scenario {
    let kali = ShellRef::privileged("kali");
    let web_u = ShellRef::unprivileged("web");
    let web_p = ShellRef::privileged("web");
    let db_p = ShellRef::privileged("db");
    let exploit = |id: &str, exec: &ShellRef, gain: &ShellRef, p: f64, kind: ExploitKind| Exploit {
        id: id.into(),
        exec: [exec.clone()].into_iter().collect(),
        executing_shell: exec.clone(),
        conn: BTreeSet::new(),
        outcomes: vec![Outcome::certain([gain.clone()])],
        confidence: p,
        kind,
    };
    let mut scenario = Scenario {
        hosts: vec!["kali".into(), "web".into(), "db".into()],
        connectivity: ConnectivityGraph::new([
            ConnEdge::new("kali", "web", 80),
            ConnEdge::new("kali", "web", 4444),
            ConnEdge::new("web", "db", 22),
        ]),
        exploits: vec![
            exploit("e1-foothold", &kali, &web_u, 0.8, ExploitKind::RemoteShell),
            exploit("e2-privesc", &web_u, &web_p, 0.5, ExploitKind::CodeExecution),
            exploit("e3-db", &web_p, &db_p, 0.9, ExploitKind::RemoteShell),
        ],
        initial_state: AttackState::new([kali]),
        goal: AttackState::new([db_p]),
        relay_port: 4444,
        ground_truth: None,
        unknown_fields: Vec::new(),
    };
    scenario.finalize();
    scenario
}

const SERVICE_PORTS: [u16; 3] = [22, 80, 445];

/// Parameters for small random instances (oracle-checkable sizes).
#[derive(Debug, Clone)]
pub struct SmallConfig {
    pub seed: u64,
    pub max_hosts: usize,
    pub max_exploits: usize,
    /// Probability that an exploit has two possible outcomes.
    pub multi_outcome_prob: f64,
    /// Plant a feasible chain to the goal.
    pub guarantee_path: bool,
    pub planted_length: u32,
    pub p_true_range: (f64, f64),
    /// When true, confidences equal ground truth; otherwise they get ±0.15
    /// of uniform noise.
    pub exact_confidence: bool,
    pub latency: Latency,
}

impl Default for SmallConfig {
    fn default() -> Self {
        SmallConfig {
            seed: 0,
            max_hosts: 5,
            max_exploits: 8,
            multi_outcome_prob: 0.25,
            guarantee_path: false,
            planted_length: 2,
            p_true_range: (0.3, 0.95),
            exact_confidence: true,
            latency: Latency::zero(),
        }
    }
}

fn draw_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo + rng.random::<f64>() * (hi - lo)
}

/// Generates a random scenario within the oracle size caps.
pub fn random_small(config: &SmallConfig) -> Result<Scenario> {
    if config.max_hosts < 2 || config.max_hosts > 6 {
        return Err(Error::UnsatisfiableConfig("small instances need 2..=6 hosts".into()));
    }
    if config.guarantee_path && config.planted_length == 0 {
        return Err(Error::UnsatisfiableConfig(
            "cannot guarantee a path of length zero".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_hosts = rng.random_range(2..=config.max_hosts);
    let hosts: Vec<HostId> = (0..n_hosts).map(|i| HostId::new(format!("h{i}"))).collect();

    let mut edges: BTreeSet<ConnEdge> = BTreeSet::new();
    for src in &hosts {
        for dst in &hosts {
            if src == dst {
                continue;
            }
            if rng.random::<f64>() < 0.55 {
                let port = SERVICE_PORTS[rng.random_range(0..SERVICE_PORTS.len())];
                edges.insert(ConnEdge::new(src.as_str(), dst.as_str(), port));
            }
            if rng.random::<f64>() < 0.45 {
                edges.insert(ConnEdge::new(src.as_str(), dst.as_str(), 4444));
            }
        }
    }

    let start = ShellRef::privileged(hosts[0].as_str());
    let goal_shell = ShellRef::privileged(hosts[n_hosts - 1].as_str());

    let random_shell = |rng: &mut ChaCha8Rng| {
        let host = rng.random_range(0..n_hosts);
        let privilege = if rng.random::<f64>() < 0.5 { Privilege::Priv } else { Privilege::Unpriv };
        ShellRef::new(hosts[host].as_str(), privilege)
    };

    let mut exploits: Vec<Exploit> = Vec::new();
    let mut truth: BTreeMap<ExploitId, GroundTruthEntry> = BTreeMap::new();
    let push = |exploits: &mut Vec<Exploit>,
                    truth: &mut BTreeMap<ExploitId, GroundTruthEntry>,
                    rng: &mut ChaCha8Rng,
                    mut exploit: Exploit,
                    p_true: f64,
                    exact: bool,
                    latency: &Latency| {
        exploit.confidence = if exact {
            p_true
        } else {
            (p_true + (rng.random::<f64>() * 2.0 - 1.0) * 0.15).clamp(0.0, 1.0)
        };
        truth.insert(
            exploit.id.clone(),
            GroundTruthEntry {
                p_true,
                outcome_weights: None,
                latency: latency.clone(),
                flaky_session: 0.0,
            },
        );
        exploits.push(exploit);
    };

    let mut planted = 0usize;
    if config.guarantee_path {
        // Chain of distinct shells from the start to the goal; every step's
        // exec is the previous step's gain.
        let mut pool: Vec<ShellRef> = hosts
            .iter()
            .flat_map(|h| {
                [ShellRef::privileged(h.as_str()), ShellRef::unprivileged(h.as_str())]
            })
            .filter(|s| *s != start && *s != goal_shell)
            .collect();
        let need = config.planted_length as usize - 1;
        if need > pool.len() {
            return Err(Error::UnsatisfiableConfig(format!(
                "planted length {} needs more shells than {} hosts provide",
                config.planted_length, n_hosts
            )));
        }
        let mut waypoints = Vec::with_capacity(need + 1);
        for _ in 0..need {
            let pick = rng.random_range(0..pool.len());
            waypoints.push(pool.swap_remove(pick));
        }
        waypoints.push(goal_shell.clone());

        let mut exec = start.clone();
        for (i, gain) in waypoints.iter().enumerate() {
            let mut conn = BTreeSet::new();
            if gain.host != exec.host {
                conn.insert(ConnRequirement::new(gain.host.as_str(), 22, Direction::Fwd));
                edges.insert(ConnEdge::new(exec.host.as_str(), gain.host.as_str(), 22));
            }
            let exploit = Exploit {
                id: ExploitId::new(format!("path-{i}")),
                exec: [exec.clone()].into_iter().collect(),
                executing_shell: exec.clone(),
                conn,
                outcomes: vec![Outcome::certain([gain.clone()])],
                confidence: 0.0,
                kind: if gain.host == exec.host {
                    ExploitKind::CodeExecution
                } else {
                    ExploitKind::RemoteShell
                },
            };
            let p = draw_range(&mut rng, config.p_true_range);
            push(
                &mut exploits,
                &mut truth,
                &mut rng,
                exploit,
                p,
                config.exact_confidence,
                &config.latency,
            );
            exec = gain.clone();
        }
        planted = waypoints.len();
    }

    let extra_cap = config.max_exploits.saturating_sub(planted);
    let extras = if extra_cap == 0 { 0 } else { rng.random_range(0..=extra_cap) };
    for k in 0..extras {
        let exec = if rng.random::<f64>() < 0.45 { start.clone() } else { random_shell(&mut rng) };
        let mut outcomes = vec![Outcome::certain([random_shell(&mut rng)])];
        if rng.random::<f64>() < config.multi_outcome_prob {
            outcomes = vec![
                Outcome::new([random_shell(&mut rng)], 0.6),
                Outcome::new([random_shell(&mut rng)], 0.4),
            ];
        }
        let mut conn = BTreeSet::new();
        if rng.random::<f64>() < 0.4 {
            let host = hosts[rng.random_range(0..n_hosts)].clone();
            let port = SERVICE_PORTS[rng.random_range(0..SERVICE_PORTS.len())];
            let direction =
                if rng.random::<f64>() < 0.85 { Direction::Fwd } else { Direction::Rev };
            conn.insert(ConnRequirement { host, port, direction });
        }
        let exploit = Exploit {
            id: ExploitId::new(format!("x-{k}")),
            exec: [exec.clone()].into_iter().collect(),
            executing_shell: exec,
            conn,
            outcomes,
            confidence: 0.0,
            kind: ExploitKind::CodeExecution,
        };
        let p = draw_range(&mut rng, config.p_true_range);
        push(
            &mut exploits,
            &mut truth,
            &mut rng,
            exploit,
            p,
            config.exact_confidence,
            &config.latency,
        );
    }

    let mut scenario = Scenario {
        hosts,
        connectivity: ConnectivityGraph::new(edges),
        exploits,
        initial_state: AttackState::new([start]),
        goal: AttackState::new([goal_shell]),
        relay_port: 4444,
        ground_truth: Some(truth),
        unknown_fields: Vec::new(),
    };
    scenario.finalize();

    if config.guarantee_path {
        let paths = oracle::enumerate_paths(&scenario, config.planted_length)?;
        if paths.is_empty() {
            return Err(Error::UnsatisfiableConfig(
                "planted path did not survive generation".into(),
            ));
        }
    }
    Ok(scenario)
}

/// Host classes of the enterprise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HostClass {
    LinuxServer,
    WindowsServer,
    Client,
    Appliance,
}

impl HostClass {
    fn prefix(self) -> &'static str {
        match self {
            HostClass::LinuxServer => "lsrv",
            HostClass::WindowsServer => "wsrv",
            HostClass::Client => "wclt",
            HostClass::Appliance => "appl",
        }
    }

    fn service_port(self) -> u16 {
        match self {
            HostClass::LinuxServer => 22,
            HostClass::WindowsServer => 445,
            HostClass::Client => 3389,
            HostClass::Appliance => 443,
        }
    }
}

/// Class-based network generator: a compartment tree with dense edges
/// inside compartments, sparse edges between adjacent ones, an attacker
/// host wired into the first compartment, and exploits planted so that a
/// goal path exists when requested.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub linux_servers: usize,
    pub windows_servers: usize,
    pub clients: usize,
    pub appliances: usize,
    pub compartments: usize,
    pub exploits_per_host: (usize, usize),
    pub confidence_range: (f64, f64),
    /// Probability of an edge between hosts of adjacent compartments.
    pub inter_density: f64,
    pub seed: u64,
    pub guarantee_path: bool,
    pub planted_length: u32,
    pub p_true_range: (f64, f64),
    pub latency: Latency,
    pub relay_port: u16,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            linux_servers: 4,
            windows_servers: 7,
            clients: 30,
            appliances: 5,
            compartments: 4,
            exploits_per_host: (1, 2),
            confidence_range: (0.4, 0.95),
            inter_density: 0.25,
            seed: 0,
            guarantee_path: false,
            planted_length: 3,
            p_true_range: (0.5, 0.95),
            latency: Latency::default(),
            relay_port: 4444,
        }
    }
}

pub const ATTACKER_HOST: &str = "kali";

pub fn generate_scenario(config: &GeneratorConfig) -> Result<Scenario> {
    let total = config.linux_servers + config.windows_servers + config.clients + config.appliances;
    if total == 0 {
        return Err(Error::UnsatisfiableConfig("no hosts configured".into()));
    }
    if config.compartments == 0 {
        return Err(Error::UnsatisfiableConfig("at least one compartment required".into()));
    }
    if config.exploits_per_host.0 > config.exploits_per_host.1 {
        return Err(Error::UnsatisfiableConfig("exploits_per_host range is inverted".into()));
    }
    if config.guarantee_path && config.planted_length == 0 {
        return Err(Error::UnsatisfiableConfig(
            "cannot guarantee a path of length zero".into(),
        ));
    }
    if config.relay_port == 0 {
        return Err(Error::UnsatisfiableConfig("relay_port must be nonzero".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Hosts, classes, and compartment assignment (round-robin per class,
    // offset so classes spread over different compartments).
    let mut hosts: Vec<HostId> = vec![HostId::new(ATTACKER_HOST)];
    let mut class_of: BTreeMap<HostId, HostClass> = BTreeMap::new();
    let mut compartment_of: BTreeMap<HostId, usize> = BTreeMap::new();
    let classes = [
        (HostClass::LinuxServer, config.linux_servers, 0usize),
        (HostClass::WindowsServer, config.windows_servers, 1),
        (HostClass::Client, config.clients, 2),
        (HostClass::Appliance, config.appliances, 3),
    ];
    for (class, count, offset) in classes {
        for i in 0..count {
            let id = HostId::new(format!("{}-{:02}", class.prefix(), i + 1));
            compartment_of.insert(id.clone(), (offset + i) % config.compartments);
            class_of.insert(id.clone(), class);
            hosts.push(id);
        }
    }

    // Compartment tree.
    let mut parent: Vec<Option<usize>> = vec![None];
    for c in 1..config.compartments {
        parent.push(Some(rng.random_range(0..c)));
    }

    let adjacent = |a: usize, b: usize| -> bool {
        parent[a] == Some(b) || parent[b] == Some(a)
    };

    let mut edges: BTreeSet<ConnEdge> = BTreeSet::new();
    let network_hosts: Vec<HostId> = hosts[1..].to_vec();
    for src in &network_hosts {
        let sc = compartment_of[src];
        for dst in &network_hosts {
            if src == dst {
                continue;
            }
            let dc = compartment_of[dst];
            let p_open = if sc == dc {
                0.85
            } else if adjacent(sc, dc) {
                config.inter_density
            } else {
                0.0
            };
            if p_open > 0.0 && rng.random::<f64>() < p_open {
                edges.insert(ConnEdge::new(
                    src.as_str(),
                    dst.as_str(),
                    class_of[dst].service_port(),
                ));
                edges.insert(ConnEdge::new(src.as_str(), dst.as_str(), config.relay_port));
            }
        }
    }
    // The attacker reaches the first compartment from outside.
    let attacker = HostId::new(ATTACKER_HOST);
    for dst in &network_hosts {
        if compartment_of[dst] == 0 && rng.random::<f64>() < 0.9 {
            edges.insert(ConnEdge::new(attacker.as_str(), dst.as_str(), class_of[dst].service_port()));
            edges.insert(ConnEdge::new(attacker.as_str(), dst.as_str(), config.relay_port));
        }
    }

    let mut exploits: Vec<Exploit> = Vec::new();
    let mut truth: BTreeMap<ExploitId, GroundTruthEntry> = BTreeMap::new();
    let record =
        |exploits: &mut Vec<Exploit>, truth: &mut BTreeMap<ExploitId, GroundTruthEntry>, exploit: Exploit, p_true: f64, latency: &Latency| {
            truth.insert(
                exploit.id.clone(),
                GroundTruthEntry {
                    p_true,
                    outcome_weights: None,
                    latency: latency.clone(),
                    flaky_session: 0.0,
                },
            );
            exploits.push(exploit);
        };

    // Planted path: pivot hosts along the compartment chain from the first
    // compartment to the deepest one.
    let goal_shell;
    let mut planted_shells: BTreeSet<ShellRef> = BTreeSet::new();
    if config.guarantee_path {
        let deepest = (0..config.compartments)
            .max_by_key(|&c| {
                let mut depth = 0;
                let mut cur = c;
                while let Some(p) = parent[cur] {
                    depth += 1;
                    cur = p;
                }
                depth
            })
            .unwrap_or(0);
        let mut chain = vec![deepest];
        while let Some(p) = parent[*chain.last().unwrap()] {
            chain.push(p);
        }
        chain.reverse(); // first compartment ... deepest

        let pivot_in = |c: usize, rng: &mut ChaCha8Rng| -> Option<HostId> {
            let members: Vec<&HostId> = network_hosts
                .iter()
                .filter(|h| compartment_of[*h] == c)
                .collect();
            if members.is_empty() {
                None
            } else {
                Some(members[rng.random_range(0..members.len())].clone())
            }
        };
        let mut pivots: Vec<HostId> = Vec::new();
        for &c in &chain {
            if let Some(h) = pivot_in(c, &mut rng) {
                if !pivots.contains(&h) {
                    pivots.push(h);
                }
            }
        }
        if pivots.is_empty() {
            return Err(Error::UnsatisfiableConfig("no host available for the goal".into()));
        }

        let goal_host = pivots.last().unwrap().clone();
        goal_shell = ShellRef::privileged(goal_host.as_str());

        // Build a step list of exactly planted_length gains ending at the
        // goal shell: remote hops across pivots, local escalations between.
        let steps: Vec<ShellRef> = match config.planted_length {
            1 => vec![goal_shell.clone()],
            2 => vec![ShellRef::unprivileged(goal_host.as_str()), goal_shell.clone()],
            n => {
                // Route hosts before the goal: pivots, falling back to any
                // other host when the chain collapsed to the goal alone.
                let mut route: Vec<HostId> =
                    pivots.iter().filter(|h| **h != goal_host).cloned().collect();
                if route.is_empty() {
                    let other = network_hosts
                        .iter()
                        .find(|h| **h != goal_host)
                        .cloned()
                        .ok_or_else(|| {
                            Error::UnsatisfiableConfig(
                                "planted length needs at least two hosts".into(),
                            )
                        })?;
                    route.push(other);
                }
                // Ladder of distinct intermediate gains; a prefix of it plus
                // the goal gives any supported length.
                let mut ladder = vec![
                    ShellRef::unprivileged(route[0].as_str()),
                    ShellRef::privileged(route[0].as_str()),
                ];
                for host in &route[1..] {
                    ladder.push(ShellRef::privileged(host.as_str()));
                }
                ladder.push(ShellRef::unprivileged(goal_host.as_str()));
                let need = n as usize - 1;
                if need > ladder.len() {
                    return Err(Error::UnsatisfiableConfig(format!(
                        "planted length {n} exceeds what this topology supports",
                    )));
                }
                let mut s: Vec<ShellRef> = ladder.into_iter().take(need).collect();
                s.push(goal_shell.clone());
                s
            }
        };

        let mut exec = ShellRef::privileged(ATTACKER_HOST);
        for (i, gain) in steps.iter().enumerate() {
            let mut conn = BTreeSet::new();
            if gain.host != exec.host {
                let port = class_of[&gain.host].service_port();
                conn.insert(ConnRequirement::new(gain.host.as_str(), port, Direction::Fwd));
                edges.insert(ConnEdge::new(exec.host.as_str(), gain.host.as_str(), port));
            }
            let exploit = Exploit {
                id: ExploitId::new(format!("path-{i}")),
                exec: [exec.clone()].into_iter().collect(),
                executing_shell: exec.clone(),
                conn,
                outcomes: vec![Outcome::certain([gain.clone()])],
                confidence: draw_range(&mut rng, config.confidence_range),
                kind: if gain.host == exec.host {
                    ExploitKind::CodeExecution
                } else {
                    ExploitKind::RemoteShell
                },
            };
            let p = draw_range(&mut rng, config.p_true_range);
            planted_shells.insert(gain.clone());
            record(&mut exploits, &mut truth, exploit, p, &config.latency);
            exec = gain.clone();
        }
    } else {
        let last = network_hosts
            .last()
            .ok_or_else(|| Error::UnsatisfiableConfig("no hosts configured".into()))?;
        goal_shell = ShellRef::privileged(last.as_str());
    }

    // Distractor exploits: per-host catalog entries that never grant the
    // goal shell directly.
    for host in &network_hosts {
        let count = if config.exploits_per_host.1 == 0 {
            0
        } else {
            rng.random_range(config.exploits_per_host.0..=config.exploits_per_host.1)
        };
        for k in 0..count {
            let mut gain = ShellRef::new(
                host.as_str(),
                if rng.random::<f64>() < 0.4 { Privilege::Priv } else { Privilege::Unpriv },
            );
            if gain == goal_shell {
                gain = ShellRef::unprivileged(host.as_str());
            }
            let exec_host = if rng.random::<f64>() < 0.3 {
                HostId::new(ATTACKER_HOST)
            } else {
                network_hosts[rng.random_range(0..network_hosts.len())].clone()
            };
            let exec_shell = if exec_host.as_str() == ATTACKER_HOST {
                ShellRef::privileged(ATTACKER_HOST)
            } else {
                ShellRef::new(
                    exec_host.as_str(),
                    if rng.random::<f64>() < 0.5 { Privilege::Priv } else { Privilege::Unpriv },
                )
            };
            let mut conn = BTreeSet::new();
            if rng.random::<f64>() < 0.5 && exec_shell.host != *host {
                conn.insert(ConnRequirement::new(
                    host.as_str(),
                    class_of[host].service_port(),
                    Direction::Fwd,
                ));
            }
            let exploit = Exploit {
                id: ExploitId::new(format!("x-{}-{}", host, k)),
                exec: [exec_shell.clone()].into_iter().collect(),
                executing_shell: exec_shell,
                conn,
                outcomes: vec![Outcome::certain([gain])],
                confidence: draw_range(&mut rng, config.confidence_range),
                kind: ExploitKind::CodeExecution,
            };
            let p = draw_range(&mut rng, config.p_true_range);
            record(&mut exploits, &mut truth, exploit, p, &config.latency);
        }
    }

    let mut scenario = Scenario {
        hosts,
        connectivity: ConnectivityGraph::new(edges),
        exploits,
        initial_state: AttackState::new([ShellRef::privileged(ATTACKER_HOST)]),
        goal: AttackState::new([goal_shell]),
        relay_port: config.relay_port,
        ground_truth: Some(truth),
        unknown_fields: Vec::new(),
    };
    scenario.finalize();

    // Small instances get their planted path certified by the oracle;
    // larger ones rely on the construction above.
    if config.guarantee_path && scenario.hosts.len() <= 6 && scenario.exploits.len() <= 10 {
        let paths = oracle::enumerate_paths(&scenario, config.planted_length)?;
        if paths.is_empty() {
            return Err(Error::UnsatisfiableConfig(
                "planted path did not survive generation".into(),
            ));
        }
    }
    Ok(scenario)
}
