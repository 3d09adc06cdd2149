//! Directed port-level reachability and relay-chain (pivot) planning.
//!
//! The graph is a flat edge list: `(src, dst, port)` means `src` can open a
//! connection to `dst` on `port`. There is no connection tracking; the model
//! is a stateless firewall. When an executing shell lacks direct
//! reachability, a connection can be relayed through hosts the attacker
//! already holds, with inter-hop legs on a single scenario-wide relay port.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttackState, ConnRequirement, Direction, HostId, Scenario};

/// One allowed connection: `src` can reach `dst` on `port`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(HostId, HostId, u16)", into = "(HostId, HostId, u16)")]
pub struct ConnEdge {
    pub src: HostId,
    pub dst: HostId,
    pub port: u16,
}

impl ConnEdge {
    pub fn new(src: impl Into<HostId>, dst: impl Into<HostId>, port: u16) -> Self {
        ConnEdge { src: src.into(), dst: dst.into(), port }
    }
}

impl From<(HostId, HostId, u16)> for ConnEdge {
    fn from((src, dst, port): (HostId, HostId, u16)) -> Self {
        ConnEdge { src, dst, port }
    }
}

impl From<ConnEdge> for (HostId, HostId, u16) {
    fn from(e: ConnEdge) -> Self {
        (e.src, e.dst, e.port)
    }
}

/// Directed port-level reachability between hosts.
///
/// Serialized as a bare list of `[src, dst, port]` triples; the host
/// universe is attached from the owning scenario via [`Scenario::finalize`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConnectivityGraph {
    edges: Vec<ConnEdge>,
    #[serde(skip)]
    hosts: BTreeSet<HostId>,
    #[serde(skip)]
    index: BTreeSet<(HostId, HostId, u16)>,
}

impl PartialEq for ConnectivityGraph {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges
    }
}

impl ConnectivityGraph {
    pub fn new(edges: impl IntoIterator<Item = ConnEdge>) -> Self {
        let mut graph = ConnectivityGraph {
            edges: edges.into_iter().collect(),
            hosts: BTreeSet::new(),
            index: BTreeSet::new(),
        };
        graph.rebuild_index();
        graph
    }

    /// Convenience for standalone use outside a scenario.
    pub fn with_hosts(
        hosts: impl IntoIterator<Item = HostId>,
        edges: impl IntoIterator<Item = ConnEdge>,
    ) -> Self {
        let mut graph = ConnectivityGraph::new(edges);
        graph.set_hosts(hosts);
        graph
    }

    pub fn set_hosts(&mut self, hosts: impl IntoIterator<Item = HostId>) {
        self.hosts = hosts.into_iter().collect();
        self.rebuild_index();
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .edges
            .iter()
            .map(|e| (e.src.clone(), e.dst.clone(), e.port))
            .collect();
    }

    pub fn edges(&self) -> &[ConnEdge] {
        &self.edges
    }

    pub fn knows_host(&self, host: &HostId) -> bool {
        self.hosts.contains(host)
    }

    pub fn has_edge(&self, src: &HostId, dst: &HostId, port: u16) -> bool {
        self.index.contains(&(src.clone(), dst.clone(), port))
    }
}

/// A relay chain satisfying one connectivity requirement.
///
/// `hops` are the intermediate relay hosts, ordered from the executing side
/// toward the target; an empty list is a direct connection. `terminus` is
/// the executing shell's host. Every hop must hold a shell in the state the
/// plan was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPlan {
    pub hops: Vec<HostId>,
    pub requirement: ConnRequirement,
    pub terminus: HostId,
}

impl RelayPlan {
    pub fn direct(requirement: ConnRequirement, terminus: HostId) -> Self {
        RelayPlan { hops: Vec::new(), requirement, terminus }
    }

    pub fn is_direct(&self) -> bool {
        self.hops.is_empty()
    }
}

/// Whether `from` can satisfy a `(to, port, direction)` requirement without
/// relaying: `fwd` needs the edge `(from, to, port)`, `rev` needs the target
/// to connect back, i.e. `(to, from, port)`.
pub fn direct_reachable(
    graph: &ConnectivityGraph,
    from: &HostId,
    to: &HostId,
    port: u16,
    direction: Direction,
) -> Result<bool> {
    for host in [from, to] {
        if !graph.knows_host(host) {
            return Err(Error::UnknownHost(host.0.clone()));
        }
    }
    Ok(match direction {
        Direction::Fwd => graph.has_edge(from, to, port),
        Direction::Rev => graph.has_edge(to, from, port),
    })
}

/// Edge lookup oriented by requirement direction: for `rev` requirements
/// every leg runs with its direction reversed.
fn leg_exists(
    graph: &ConnectivityGraph,
    direction: Direction,
    from: &HostId,
    to: &HostId,
    port: u16,
) -> bool {
    match direction {
        Direction::Fwd => graph.has_edge(from, to, port),
        Direction::Rev => graph.has_edge(to, from, port),
    }
}

/// Plans the minimum-hop relay chain through held hosts that satisfies
/// `req` from `executing`, or returns `None` when no chain exists.
///
/// For `fwd`, legs are `(executing → h₁)` and `(hᵢ → hᵢ₊₁)` on `relay_port`
/// and `(h_k → req.host)` on `req.port`; for `rev` every leg is reversed.
/// Direct reachability short-circuits to an empty chain. Among minimum-hop
/// chains, the lexicographically smallest host-id sequence wins.
pub fn plan_relay_chain(
    graph: &ConnectivityGraph,
    state: &AttackState,
    req: &ConnRequirement,
    executing: &HostId,
    relay_port: u16,
) -> Result<Option<RelayPlan>> {
    let held = state.held_hosts();
    if !held.contains(executing) {
        return Err(Error::ExecShellNotHeld(executing.0.clone()));
    }
    if direct_reachable(graph, executing, &req.host, req.port, req.direction)? {
        return Ok(Some(RelayPlan::direct(req.clone(), executing.clone())));
    }

    // Intermediate hops: held hosts other than the endpoints (simple chains).
    let universe: BTreeSet<&HostId> = held
        .iter()
        .filter(|h| *h != executing && **h != req.host)
        .collect();

    // Distance-to-finish over reversed relay legs: d(h) = remaining hops
    // after h before the final leg onto req.host.
    let mut dist: BTreeMap<&HostId, u32> = BTreeMap::new();
    let mut frontier: Vec<&HostId> = Vec::new();
    for &h in &universe {
        if leg_exists(graph, req.direction, h, &req.host, req.port) {
            dist.insert(h, 0);
            frontier.push(h);
        }
    }
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &h in &universe {
            if dist.contains_key(h) {
                continue;
            }
            let steps_into_frontier = frontier
                .iter()
                .any(|&f| leg_exists(graph, req.direction, h, f, relay_port));
            if steps_into_frontier {
                dist.insert(h, depth);
                next.push(h);
            }
        }
        frontier = next;
    }

    // First hop must be reachable from the executing host on the relay port.
    let entry = universe
        .iter()
        .filter(|&&h| leg_exists(graph, req.direction, executing, h, relay_port))
        .filter_map(|&h| dist.get(h).map(|d| (*d, h)))
        .min();
    let (mut remaining, mut current) = match entry {
        Some((d, h)) => (d, h),
        None => return Ok(None),
    };

    // Greedy walk along strictly decreasing distances; picking the smallest
    // id at each step yields the lexicographically smallest minimal chain.
    let mut hops = vec![current.clone()];
    while remaining > 0 {
        let next = universe
            .iter()
            .filter(|&&h| leg_exists(graph, req.direction, current, h, relay_port))
            .filter(|&&h| dist.get(h) == Some(&(remaining - 1)))
            .min()
            .expect("distance map admits a next hop");
        current = next;
        remaining -= 1;
        hops.push(current.clone());
    }

    Ok(Some(RelayPlan { hops, requirement: req.clone(), terminus: executing.clone() }))
}

/// Independent re-check that a plan satisfies every condition required of
/// `plan_relay_chain` output: hops held, chain simple, and every leg present.
pub fn verify_relay_plan(
    graph: &ConnectivityGraph,
    state: &AttackState,
    plan: &RelayPlan,
    relay_port: u16,
) -> bool {
    let held = state.held_hosts();
    if !held.contains(&plan.terminus) {
        return false;
    }
    let req = &plan.requirement;
    if plan.hops.is_empty() {
        return leg_exists(graph, req.direction, &plan.terminus, &req.host, req.port);
    }
    let mut seen: BTreeSet<&HostId> = BTreeSet::new();
    for hop in &plan.hops {
        if !held.contains(hop) || *hop == plan.terminus || *hop == req.host {
            return false;
        }
        if !seen.insert(hop) {
            return false;
        }
    }
    let mut current = &plan.terminus;
    for hop in &plan.hops {
        if !leg_exists(graph, req.direction, current, hop, relay_port) {
            return false;
        }
        current = hop;
    }
    leg_exists(graph, req.direction, current, &req.host, req.port)
}

/// Renders the host graph as DOT for documentation.
pub fn scenario_dot(scenario: &Scenario) -> String {
    let mut out = String::from("digraph connectivity {\n  rankdir=LR;\n");
    for host in &scenario.hosts {
        out.push_str(&format!("  \"{}\";\n", host));
    }
    // One arrow per (src, dst) pair, ports folded into the label.
    let mut by_pair: BTreeMap<(&HostId, &HostId), Vec<u16>> = BTreeMap::new();
    for edge in scenario.connectivity.edges() {
        by_pair.entry((&edge.src, &edge.dst)).or_default().push(edge.port);
    }
    for ((src, dst), mut ports) in by_pair {
        ports.sort_unstable();
        ports.dedup();
        let label: Vec<String> = ports.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            src,
            dst,
            label.join(",")
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Privilege, ShellRef};

    fn graph(edges: &[(&str, &str, u16)]) -> ConnectivityGraph {
        let hosts: BTreeSet<HostId> = edges
            .iter()
            .flat_map(|(s, d, _)| [HostId::from(*s), HostId::from(*d)])
            .chain([HostId::from("kali"), HostId::from("web"), HostId::from("db")])
            .collect();
        ConnectivityGraph::with_hosts(
            hosts,
            edges.iter().map(|(s, d, p)| ConnEdge::new(*s, *d, *p)),
        )
    }

    fn held(hosts: &[&str]) -> AttackState {
        AttackState::new(
            hosts
                .iter()
                .map(|h| ShellRef::new(*h, Privilege::Priv))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn direct_edge_lookup() {
        let g = graph(&[("kali", "web", 80)]);
        assert!(direct_reachable(&g, &"kali".into(), &"web".into(), 80, Direction::Fwd).unwrap());
        assert!(!direct_reachable(&g, &"kali".into(), &"web".into(), 81, Direction::Fwd).unwrap());
    }

    #[test]
    fn reverse_requires_back_edge() {
        let g = graph(&[("kali", "web", 80)]);
        assert!(!direct_reachable(&g, &"kali".into(), &"web".into(), 80, Direction::Rev).unwrap());
        let g2 = graph(&[("kali", "web", 80), ("web", "kali", 80)]);
        assert!(direct_reachable(&g2, &"kali".into(), &"web".into(), 80, Direction::Rev).unwrap());
    }

    #[test]
    fn undeclared_host_is_an_error() {
        let g = graph(&[("kali", "web", 80)]);
        let err = direct_reachable(&g, &"ghost".into(), &"web".into(), 80, Direction::Fwd)
            .unwrap_err();
        assert_eq!(err.code(), "UNKNOWN_HOST");
    }

    #[test]
    fn single_hop_relay() {
        let g = graph(&[("kali", "web", 4444), ("web", "db", 22)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan = plan_relay_chain(&g, &held(&["kali", "web"]), &req, &"kali".into(), 4444)
            .unwrap()
            .unwrap();
        assert_eq!(plan.hops, vec![HostId::from("web")]);
        assert!(verify_relay_plan(&g, &held(&["kali", "web"]), &plan, 4444));
    }

    #[test]
    fn direct_case_short_circuits() {
        let g = graph(&[("kali", "db", 22), ("kali", "web", 4444), ("web", "db", 22)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan = plan_relay_chain(&g, &held(&["kali", "web"]), &req, &"kali".into(), 4444)
            .unwrap()
            .unwrap();
        assert!(plan.is_direct());
    }

    #[test]
    fn unreachable_requirement_is_infeasible() {
        let g = graph(&[("kali", "web", 4444)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan =
            plan_relay_chain(&g, &held(&["kali", "web"]), &req, &"kali".into(), 4444).unwrap();
        assert!(plan.is_none());
    }

    #[test]
    fn executing_host_must_be_held() {
        let g = graph(&[("kali", "web", 4444)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let err = plan_relay_chain(&g, &held(&["web"]), &req, &"kali".into(), 4444).unwrap_err();
        assert_eq!(err.code(), "EXEC_SHELL_NOT_HELD");
    }

    #[test]
    fn verifier_rejects_unheld_hop() {
        let g = graph(&[("kali", "web", 4444), ("web", "db", 22)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan = RelayPlan {
            hops: vec![HostId::from("web")],
            requirement: req,
            terminus: HostId::from("kali"),
        };
        assert!(!verify_relay_plan(&g, &held(&["kali"]), &plan, 4444));
    }

    #[test]
    fn verifier_rejects_missing_leg() {
        let g = graph(&[("kali", "web", 4444)]);
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan = RelayPlan {
            hops: vec![HostId::from("web")],
            requirement: req,
            terminus: HostId::from("kali"),
        };
        assert!(!verify_relay_plan(&g, &held(&["kali", "web"]), &plan, 4444));
    }

    #[test]
    fn lexicographic_tie_break() {
        // Two one-hop chains: via "a" and via "b"; "a" must win.
        let g = ConnectivityGraph::with_hosts(
            ["kali", "a", "b", "db"].map(HostId::from),
            [
                ConnEdge::new("kali", "a", 4444),
                ConnEdge::new("kali", "b", 4444),
                ConnEdge::new("a", "db", 22),
                ConnEdge::new("b", "db", 22),
            ],
        );
        let req = ConnRequirement::new("db", 22, Direction::Fwd);
        let plan = plan_relay_chain(&g, &held(&["kali", "a", "b"]), &req, &"kali".into(), 4444)
            .unwrap()
            .unwrap();
        assert_eq!(plan.hops, vec![HostId::from("a")]);
    }

    #[test]
    fn reverse_relay_uses_reversed_legs() {
        // Target must connect back: db -> web on 9001, web -> kali on 4444.
        let g = ConnectivityGraph::with_hosts(
            ["kali", "web", "db"].map(HostId::from),
            [ConnEdge::new("db", "web", 9001), ConnEdge::new("web", "kali", 4444)],
        );
        let req = ConnRequirement::new("db", 9001, Direction::Rev);
        let plan = plan_relay_chain(&g, &held(&["kali", "web"]), &req, &"kali".into(), 4444)
            .unwrap()
            .unwrap();
        assert_eq!(plan.hops, vec![HostId::from("web")]);
        assert!(verify_relay_plan(&g, &held(&["kali", "web"]), &plan, 4444));
    }
}
