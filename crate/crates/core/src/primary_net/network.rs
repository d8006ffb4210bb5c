use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{PrimaryOptions, PrimarySolution};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::ids::{GraphNode, ResidenceId, TransformerId};
use crate::ingest::Scenario;
use crate::secondary::{SecondaryNetwork, SecondaryOptions};

/// Per-unit bases shared by both voltage levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bases {
    pub s_base_kw: f64,
    pub v_primary_kv: f64,
    pub v_secondary_kv: f64,
}

impl Default for Bases {
    fn default() -> Self {
        Bases {
            s_base_kw: 1000.0,
            v_primary_kv: 12.47,
            v_secondary_kv: 0.24,
        }
    }
}

impl Bases {
    pub fn validate(&self) -> Result<()> {
        if self.s_base_kw > 0.0 && self.v_primary_kv > 0.0 && self.v_secondary_kv > 0.0 {
            Ok(())
        } else {
            Err(Error::Validation("per-unit bases must be positive".into()))
        }
    }

    fn z_base(&self, kv: f64) -> f64 {
        kv * kv * 1000.0 / self.s_base_kw
    }

    pub fn z_base_primary(&self) -> f64 {
        self.z_base(self.v_primary_kv)
    }

    pub fn z_base_secondary(&self) -> f64 {
        self.z_base(self.v_secondary_kv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Substation,
    Root,
    Transfer,
    Transformer,
    Residence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    FeederHv,
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetNode {
    pub id: String,
    pub kind: NodeKind,
    pub location: GeoPoint,
    /// Own point load; only residences carry one.
    pub demand_kw: f64,
    pub voltage_pu: Option<f64>,
}

/// Edge oriented downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetEdge {
    pub id: String,
    pub kind: EdgeKind,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub resistance_ohm: f64,
    pub resistance_pu: f64,
    pub capacity_kw: f64,
    pub flow_kw: Option<f64>,
}

/// The complete synthetic network: a forest with one tree per substation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionNetwork {
    pub nodes: Vec<NetNode>,
    pub edges: Vec<NetEdge>,
    pub bases: Bases,
}

impl DistributionNetwork {
    pub fn node_index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn total_length_m(&self, kind: EdgeKind) -> f64 {
        self.edges.iter().filter(|e| e.kind == kind).map(|e| e.length_m).sum()
    }

    /// Checks the forest shape: every non-substation node has exactly one
    /// incoming edge and is reachable from a substation.
    pub fn validate(&self) -> Result<()> {
        let idx = self.node_index();
        if idx.len() != self.nodes.len() {
            return Err(Error::Invariant("duplicate node id in network".into()));
        }
        let mut parent = vec![None; self.nodes.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) else {
                return Err(Error::Invariant(format!("edge {} names an unknown node", e.id)));
            };
            if parent[b].replace(a).is_some() {
                return Err(Error::Invariant(format!("node {} has two parents", e.to)));
            }
            children[a].push(b);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == NodeKind::Substation)
            .collect();
        for &s in &stack {
            if parent[s].is_some() {
                return Err(Error::Invariant(format!("substation {} has a parent", self.nodes[s].id)));
            }
            seen[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &w in &children[u] {
                if seen[w] {
                    return Err(Error::Invariant(format!("node {} reached twice", self.nodes[w].id)));
                }
                seen[w] = true;
                stack.push(w);
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Invariant(format!("node {} is not fed by any substation", self.nodes[i].id))),
            None => Ok(()),
        }
    }
}

/// Joins secondary and primary solutions into one network. Every used
/// transformer must be fed by a primary tree and every residence by a
/// secondary tree.
pub fn stitch(
    scenario: &Scenario,
    secondaries: &[SecondaryNetwork],
    primaries: &[PrimarySolution],
    popts: &PrimaryOptions,
    sopts: &SecondaryOptions,
) -> Result<DistributionNetwork> {
    let bases = popts.bases;
    let mut net = DistributionNetwork {
        bases,
        ..Default::default()
    };
    let mut edge_no = 0usize;
    let mut push_edge = |net: &mut DistributionNetwork,
                         kind: EdgeKind,
                         from: String,
                         to: String,
                         length_m: f64,
                         ohm_per_km: f64,
                         z_base: f64,
                         capacity_kw: f64,
                         flow_kw: f64| {
        edge_no += 1;
        let r = ohm_per_km * length_m / 1000.0;
        net.edges.push(NetEdge {
            id: format!("e{edge_no}"),
            kind,
            from,
            to,
            length_m,
            resistance_ohm: r,
            resistance_pu: r / z_base,
            capacity_kw,
            flow_kw: Some(flow_kw),
        });
    };

    for s in &scenario.substations {
        net.nodes.push(NetNode {
            id: s.id.to_string(),
            kind: NodeKind::Substation,
            location: s.location,
            demand_kw: 0.0,
            voltage_pu: Some(1.0),
        });
    }

    let mut fed: BTreeSet<TransformerId> = BTreeSet::new();
    let mut road_nodes = Vec::new();
    let mut primary_edges = Vec::new();
    for sol in primaries {
        let p = &sol.problem;
        for &r in &sol.roots {
            let root_flow: f64 = sol.tree.iter().filter(|t| t.from == r).map(|t| t.flow_kw).sum();
            road_nodes.push((NodeKind::Root, p.nodes[r], p.locations[r], sol.v[r]));
            push_edge(
                &mut net,
                EdgeKind::FeederHv,
                p.substation.to_string(),
                p.nodes[r].to_string(),
                p.d_root_m[r],
                0.0,
                bases.z_base_primary(),
                popts.feeder_capacity_kw,
                root_flow,
            );
        }
        for r in sol.transfer_nodes() {
            road_nodes.push((NodeKind::Transfer, p.nodes[r], p.locations[r], sol.v[r]));
        }
        for t in &sol.tree {
            if let GraphNode::Transformer(id) = p.nodes[t.to] {
                fed.insert(id);
            }
            primary_edges.push((
                p.nodes[t.from].to_string(),
                p.nodes[t.to].to_string(),
                p.edges[t.edge].length_m,
                t.flow_kw,
            ));
        }
    }
    road_nodes.sort_by_key(|n| n.1);
    for (kind, node, location, v) in road_nodes {
        net.nodes.push(NetNode {
            id: node.to_string(),
            kind,
            location,
            demand_kw: 0.0,
            voltage_pu: Some(v),
        });
    }
    for (from, to, len, flow) in primary_edges {
        push_edge(
            &mut net,
            EdgeKind::Primary,
            from,
            to,
            len,
            popts.resistance_ohm_per_km,
            bases.z_base_primary(),
            popts.line_capacity_kw,
            flow,
        );
    }

    let residences: BTreeMap<ResidenceId, &crate::ingest::Residence> =
        scenario.residences.iter().map(|r| (r.id, r)).collect();
    let mut served: BTreeSet<ResidenceId> = BTreeSet::new();
    let mut transformers = Vec::new();
    for sec in secondaries {
        for t in &sec.transformers {
            if !fed.contains(&t.id) {
                return Err(Error::Invariant(format!("transformer {} is not fed by any primary tree", t.id)));
            }
            transformers.push(t);
        }
        for r in sec.transformers.iter().flat_map(|t| &t.residences) {
            if !served.insert(*r) {
                return Err(Error::Invariant(format!("residence {r} is served twice")));
            }
        }
    }
    if fed.len() != transformers.len() {
        return Err(Error::Invariant("a primary tree feeds a transformer no secondary uses".into()));
    }
    if let Some(r) = residences.keys().find(|r| !served.contains(r)) {
        return Err(Error::Invariant(format!("residence {r} is not served by any transformer")));
    }
    transformers.sort_by_key(|t| t.id);
    for t in transformers {
        net.nodes.push(NetNode {
            id: t.id.to_string(),
            kind: NodeKind::Transformer,
            location: t.location,
            demand_kw: 0.0,
            voltage_pu: None,
        });
    }
    for r in residences.values() {
        net.nodes.push(NetNode {
            id: r.id.to_string(),
            kind: NodeKind::Residence,
            location: r.location,
            demand_kw: r.avg_demand,
            voltage_pu: None,
        });
    }
    for sec in secondaries {
        for e in &sec.edges {
            push_edge(
                &mut net,
                EdgeKind::Secondary,
                e.from.label(),
                e.to.label(),
                e.length_m,
                sopts.resistance_ohm_per_km,
                bases.z_base_secondary(),
                sopts.capacity_kw,
                e.flow_kw,
            );
        }
    }
    net.validate()?;
    Ok(net)
}
