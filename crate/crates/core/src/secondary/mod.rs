//! Per-link secondary networks: residences along a road link are joined to
//! candidate transformers on the link by a minimum-weight forest of
//! starlike trees.

mod delaunay;

pub use delaunay::{triangulate, Triangulation};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{geodesic_distance, side_of, GeoPoint, LocalFrame, Segment, Side};
use crate::ids::{LinkId, ResidenceId, TransformerId};
use crate::ingest::Scenario;
use crate::mapping::{LinkAssignment, TransformerCandidates};
use crate::milp::{solve_milp, LinearModel, MilpOptions, NoCuts, Sense, SolveStatus, VarKind};

/// Weight given to zero-length edges between coincident points.
const MIN_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecondaryOptions {
    /// Penalty in meters per unit of road-crossing cost.
    pub lambda: f64,
    /// Conductor capacity in kW.
    pub capacity_kw: f64,
    /// Conductor resistance, used by the power flow.
    pub resistance_ohm_per_km: f64,
}

impl Default for SecondaryOptions {
    fn default() -> Self {
        SecondaryOptions {
            lambda: 50.0,
            capacity_kw: 100.0,
            resistance_ohm_per_km: 0.52,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SecNode {
    Residence(ResidenceId),
    Transformer(TransformerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecResidence {
    pub id: ResidenceId,
    pub location: GeoPoint,
    pub demand_kw: f64,
}

/// One link's subproblem. Node indices: residences `0..n_h`, then
/// candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryProblem {
    pub link: LinkId,
    pub segment: Segment,
    pub residences: Vec<SecResidence>,
    pub candidates: Vec<(TransformerId, GeoPoint)>,
    pub lambda: f64,
    pub capacity_kw: f64,
}

impl SecondaryProblem {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.residences.iter().find(|r| !(r.demand_kw > 0.0 && r.demand_kw.is_finite())) {
            return Err(Error::Validation(format!(
                "residence {} on link {} must have strictly positive demand",
                r.id, self.link
            )));
        }
        if !self.residences.is_empty() && self.candidates.is_empty() {
            return Err(Error::Validation(format!("link {} has residences but no candidates", self.link)));
        }
        if !(self.lambda >= 0.0 && self.capacity_kw > 0.0) {
            return Err(Error::Validation("lambda must be ≥ 0 and capacity > 0".into()));
        }
        Ok(())
    }

    pub fn n_h(&self) -> usize {
        self.residences.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.residences.len() + self.candidates.len()
    }

    pub fn node(&self, i: usize) -> SecNode {
        match i.checked_sub(self.n_h()) {
            None => SecNode::Residence(self.residences[i].id),
            Some(k) => SecNode::Transformer(self.candidates[k].0),
        }
    }

    pub fn location(&self, i: usize) -> GeoPoint {
        match i.checked_sub(self.n_h()) {
            None => self.residences[i].location,
            Some(k) => self.candidates[k].1,
        }
    }

    pub fn demands(&self) -> Vec<f64> {
        self.residences.iter().map(|r| r.demand_kw).collect()
    }
}

/// Candidate edge `tail → head` (incidence +1 at tail, −1 at head).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    pub tail: usize,
    pub head: usize,
    pub length_m: f64,
    /// Crossing cost: 0 same side, 2 opposite sides, 1 to a transformer.
    pub crossing: u8,
    pub weight: f64,
}

/// Crossing cost between two nodes of `p`.
pub fn crossing_cost(p: &SecondaryProblem, i: usize, j: usize) -> u8 {
    let n_h = p.n_h();
    if (i < n_h) != (j < n_h) {
        return 1;
    }
    let (si, sj) = (side_of(p.location(i), &p.segment), side_of(p.location(j), &p.segment));
    match (si, sj) {
        (Side::Left, Side::Right) | (Side::Right, Side::Left) => 2,
        _ => 0,
    }
}

pub fn make_edge(p: &SecondaryProblem, i: usize, j: usize) -> CandidateEdge {
    let (tail, head) = (i.min(j), i.max(j));
    let length_m = geodesic_distance(p.location(tail), p.location(head));
    let crossing = crossing_cost(p, tail, head);
    CandidateEdge {
        tail,
        head,
        length_m,
        crossing,
        weight: (length_m + p.lambda * crossing as f64).max(MIN_WEIGHT),
    }
}

/// Delaunay edges over residences and candidates, minus
/// transformer–transformer pairs, weighted by length plus crossing penalty.
pub fn build_candidate_edges(p: &SecondaryProblem) -> Result<Vec<CandidateEdge>> {
    let n = p.num_nodes();
    let n_h = p.n_h();
    if n < 2 {
        return Ok(Vec::new());
    }
    let frame = LocalFrame::new(p.segment.midpoint());
    let pts: Vec<[f64; 2]> = (0..n).map(|i| frame.project(p.location(i))).collect();
    let tri = triangulate(&pts)?;
    let mut pairs: BTreeSet<(usize, usize)> = tri.edges.iter().copied().collect();
    if tri.collinear && !tri.edges.is_empty() {
        let mut gaps: Vec<f64> = tri.edges.iter().map(|&(i, j)| geodesic_distance(p.location(i), p.location(j))).collect();
        gaps.sort_by(f64::total_cmp);
        let reach = 2.0 * gaps[gaps.len() / 2];
        for i in 0..n_h {
            for j in n_h..n {
                if geodesic_distance(p.location(i), p.location(j)) <= reach {
                    pairs.insert((i, j));
                }
            }
        }
    }
    for &(dup, kept) in &tri.duplicates {
        warn!("link {}: {} coincides with {}, sharing its edges", p.link, p.node(dup).label(), p.node(kept).label());
        let copied: Vec<(usize, usize)> = pairs
            .iter()
            .filter_map(|&(a, b)| match (a == kept, b == kept) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .map(|x| (x.min(dup), x.max(dup)))
            .collect();
        pairs.extend(copied);
        pairs.insert((dup.min(kept), dup.max(kept)));
    }
    Ok(pairs
        .into_iter()
        .filter(|&(i, j)| i != j && (i < n_h || j < n_h))
        .map(|(i, j)| make_edge(p, i, j))
        .collect())
}

impl SecNode {
    pub fn label(&self) -> String {
        match self {
            SecNode::Residence(r) => r.to_string(),
            SecNode::Transformer(t) => t.to_string(),
        }
    }
}

/// The secondary MILP with its variable layout: `x_e` at `e`, `f_e` at
/// `m + e`.
#[derive(Debug, Clone)]
pub struct SecondaryModel {
    pub model: LinearModel,
    pub edges: Vec<CandidateEdge>,
}

impl SecondaryModel {
    pub fn x(&self, e: usize) -> usize {
        e
    }

    pub fn f(&self, e: usize) -> usize {
        self.edges.len() + e
    }
}

/// Degree ≤ 2 at residences, flow balance `A_Hᵀ f = p`, capacity
/// `|f_e| ≤ f̄ x_e`, and `Σ x_e = |V_H|`; objective `wᵀx`.
pub fn build_secondary_model(p: &SecondaryProblem, edges: Vec<CandidateEdge>) -> SecondaryModel {
    let m = edges.len();
    let cap = p.capacity_kw;
    let mut model = LinearModel::new();
    for e in &edges {
        let x = model.add_binary(format!("x_{}_{}", p.node(e.tail).label(), p.node(e.head).label()));
        model.set_cost(x, e.weight);
    }
    for e in &edges {
        model.add_var(
            format!("f_{}_{}", p.node(e.tail).label(), p.node(e.head).label()),
            VarKind::Continuous,
            -cap,
            cap,
        );
    }
    let n_h = p.n_h();
    let mut degree: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_h];
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_h];
    for (k, e) in edges.iter().enumerate() {
        for (node, sign) in [(e.tail, 1.0), (e.head, -1.0)] {
            if node < n_h {
                degree[node].push((k, 1.0));
                balance[node].push((m + k, sign));
            }
        }
    }
    for row in degree {
        model.add_constraint(row, Sense::Le, 2.0);
    }
    for (row, r) in balance.into_iter().zip(&p.residences) {
        model.add_constraint(row, Sense::Eq, r.demand_kw);
    }
    for k in 0..m {
        model.add_constraint(vec![(m + k, 1.0), (k, -cap)], Sense::Le, 0.0);
        model.add_constraint(vec![(m + k, -1.0), (k, -cap)], Sense::Le, 0.0);
    }
    model.add_constraint((0..m).map(|k| (k, 1.0)).collect(), Sense::Eq, n_h as f64);
    SecondaryModel { model, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsedTransformer {
    pub id: TransformerId,
    pub location: GeoPoint,
    /// Sum of the average demands it serves, kW.
    pub demand_kw: f64,
    pub residences: Vec<ResidenceId>,
}

/// Edge oriented downstream: `from` is nearer the transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryEdge {
    pub from: SecNode,
    pub to: SecNode,
    pub length_m: f64,
    pub flow_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryNetwork {
    pub link: LinkId,
    pub transformers: Vec<UsedTransformer>,
    pub edges: Vec<SecondaryEdge>,
    /// Optimal `wᵀx`.
    pub objective: f64,
}

/// True iff the selected graph has exactly as many components as used
/// transformers and the flows balance every residence demand.
///
/// Nodes `0..demands.len()` are residences, higher indices transformers;
/// `edges[k] = (tail, head)` carries `flows[k]`. Components are counted
/// over all residences plus transformers incident to an edge.
pub fn check_components(edges: &[(usize, usize)], flows: &[f64], demands: &[f64]) -> bool {
    let n_h = demands.len();
    let mut ids: BTreeMap<usize, usize> = (0..n_h).map(|i| (i, i)).collect();
    for &(a, b) in edges {
        for v in [a, b] {
            let next = ids.len();
            ids.entry(v).or_insert(next);
        }
    }
    let used_transformers = ids.keys().filter(|&&v| v >= n_h).count();
    let mut uf = UnionFind::new(ids.len());
    for &(a, b) in edges {
        uf.union(ids[&a], ids[&b]);
    }
    let components = (0..ids.len()).filter(|&i| uf.find(i) == i).count();
    let mut net = vec![0.0; n_h];
    for (&(a, b), &f) in edges.iter().zip(flows) {
        if a < n_h {
            net[a] += f;
        }
        if b < n_h {
            net[b] -= f;
        }
    }
    let balanced = net
        .iter()
        .zip(demands)
        .all(|(got, want)| (got - want).abs() <= 1e-9 * want.abs().max(1.0));
    components == used_transformers && balanced
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Solves one link. An infeasible model is retried once with every
/// residence–candidate pair added as an edge.
pub fn solve_secondary(p: &SecondaryProblem, milp: &MilpOptions) -> Result<SecondaryNetwork> {
    p.validate()?;
    if p.residences.is_empty() {
        return Ok(SecondaryNetwork {
            link: p.link,
            transformers: Vec::new(),
            edges: Vec::new(),
            objective: 0.0,
        });
    }
    let edges = build_candidate_edges(p)?;
    match solve_with_edges(p, edges.clone(), milp)? {
        Some(net) => Ok(net),
        None => {
            warn!("link {}: secondary model infeasible on Delaunay edges, widening", p.link);
            let mut pairs: BTreeSet<(usize, usize)> = edges.iter().map(|e| (e.tail, e.head)).collect();
            for i in 0..p.n_h() {
                for j in p.n_h()..p.num_nodes() {
                    pairs.insert((i, j));
                }
            }
            let wide = pairs.into_iter().map(|(i, j)| make_edge(p, i, j)).collect();
            solve_with_edges(p, wide, milp)?.ok_or_else(|| {
                Error::Infeasible(format!(
                    "secondary network for link {} ({} residences, {} candidates): no forest of starlike trees fits; \
                     raise the secondary capacity (now {} kW) or add candidates (smaller spacing or rho)",
                    p.link,
                    p.n_h(),
                    p.candidates.len(),
                    p.capacity_kw
                ))
            })
        }
    }
}

fn solve_with_edges(p: &SecondaryProblem, edges: Vec<CandidateEdge>, milp: &MilpOptions) -> Result<Option<SecondaryNetwork>> {
    let sm = build_secondary_model(p, edges);
    let sol = solve_milp(&sm.model, milp, &mut NoCuts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(None),
        SolveStatus::NodeLimit => return Err(Error::NodeLimit(milp.node_limit)),
        SolveStatus::Unbounded => return Err(Error::Invariant("secondary model unbounded".into())),
    }
    let x = sol.values.expect("optimal solutions carry values");
    let chosen: Vec<usize> = (0..sm.edges.len()).filter(|&k| x[sm.x(k)] > 0.5).collect();
    extract(p, &sm, &chosen, &x, sol.objective).map(Some)
}

/// Orients the chosen edges away from their transformer and recomputes
/// flows as subtree demand sums, checking them against the solver's.
fn extract(p: &SecondaryProblem, sm: &SecondaryModel, chosen: &[usize], x: &[f64], objective: f64) -> Result<SecondaryNetwork> {
    let n = p.num_nodes();
    let n_h = p.n_h();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &k in chosen {
        let e = sm.edges[k];
        adj[e.tail].push((e.head, k));
        adj[e.head].push((e.tail, k));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut order = Vec::new();
    for t in n_h..n {
        if adj[t].is_empty() {
            continue;
        }
        owner[t] = Some(t);
        let mut queue = VecDeque::from([t]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(w, k) in &adj[u] {
                if parent[u].map(|(_, pk)| pk) == Some(k) {
                    continue;
                }
                if owner[w].is_some() {
                    return Err(Error::Invariant(format!(
                        "link {}: secondary solution has a cycle or joins two transformers",
                        p.link
                    )));
                }
                owner[w] = Some(t);
                parent[w] = Some((u, k));
                queue.push_back(w);
            }
        }
    }
    if let Some(orphan) = (0..n_h).find(|&i| owner[i].is_none()) {
        return Err(Error::Invariant(format!(
            "link {}: residence {} is not connected to a transformer",
            p.link,
            p.residences[orphan].id
        )));
    }
    let mut subtree = vec![0.0; n];
    for (i, r) in p.residences.iter().enumerate() {
        subtree[i] = r.demand_kw;
    }
    for &u in order.iter().rev() {
        if let Some((pu, _)) = parent[u] {
            subtree[pu] += subtree[u];
        }
    }
    let mut edges = Vec::with_capacity(chosen.len());
    for &u in &order {
        let Some((up, k)) = parent[u] else { continue };
        let e = sm.edges[k];
        let flow = subtree[u];
        // positive f_e flows from head to tail
        let expected = if e.head == up { flow } else { -flow };
        let solver = x[sm.f(k)];
        if (solver - expected).abs() > 1e-6 * (1.0 + flow) {
            return Err(Error::Invariant(format!(
                "link {}: solver flow {solver} on edge {} differs from tree flow {expected}",
                p.link, k
            )));
        }
        edges.push(SecondaryEdge {
            from: p.node(up),
            to: p.node(u),
            length_m: e.length_m,
            flow_kw: flow,
        });
    }
    let transformers = (n_h..n)
        .filter(|&t| !adj[t].is_empty())
        .map(|t| {
            let mut residences: Vec<ResidenceId> = (0..n_h)
                .filter(|&i| owner[i] == Some(t))
                .map(|i| p.residences[i].id)
                .collect();
            residences.sort_unstable();
            UsedTransformer {
                id: p.candidates[t - n_h].0,
                location: p.candidates[t - n_h].1,
                demand_kw: subtree[t],
                residences,
            }
        })
        .collect();
    Ok(SecondaryNetwork {
        link: p.link,
        transformers,
        edges,
        objective,
    })
}

/// Builds one subproblem per link that has mapped residences.
pub fn build_problems(
    scenario: &Scenario,
    assignment: &LinkAssignment,
    candidates: &TransformerCandidates,
    opts: &SecondaryOptions,
) -> Result<Vec<SecondaryProblem>> {
    let by_id: BTreeMap<ResidenceId, &crate::ingest::Residence> = scenario.residences.iter().map(|r| (r.id, r)).collect();
    assignment
        .inverse
        .iter()
        .map(|(link, res)| {
            let cands = candidates
                .get(link)
                .cloned()
                .ok_or_else(|| Error::Invariant(format!("link {link} has residences but no candidates")))?;
            Ok(SecondaryProblem {
                link: *link,
                segment: scenario.roads.segment(*link),
                residences: res
                    .iter()
                    .map(|id| SecResidence {
                        id: *id,
                        location: by_id[id].location,
                        demand_kw: by_id[id].avg_demand,
                    })
                    .collect(),
                candidates: cands,
                lambda: opts.lambda,
                capacity_kw: opts.capacity_kw,
            })
        })
        .collect()
}

/// Solves all links in parallel; results are in link-id order.
pub fn solve_all(problems: &[SecondaryProblem], milp: &MilpOptions) -> Result<Vec<SecondaryNetwork>> {
    problems.par_iter().map(|p| solve_secondary(p, milp)).collect()
}
