//! Linearized radial power flow, operating-limit checks and comparison of
//! two networks serving the same residences.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primary_net::{DistributionNetwork, EdgeKind, NodeKind};

/// Node voltages and edge flows, aligned with the network's node and edge
/// vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub voltage_pu: Vec<f64>,
    pub flow_kw: Vec<f64>,
    /// `flow / capacity`.
    pub loading: Vec<f64>,
}

struct Forest {
    /// Incoming edge per node.
    parent: Vec<Option<usize>>,
    /// Node of each edge's `from` and `to`.
    ends: Vec<(usize, usize)>,
    /// Nodes parents first.
    order: Vec<usize>,
}

fn forest(net: &DistributionNetwork) -> Result<Forest> {
    let idx = net.node_index();
    let n = net.nodes.len();
    let mut parent = vec![None; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ends = Vec::with_capacity(net.edges.len());
    for (k, e) in net.edges.iter().enumerate() {
        let (Some(&a), Some(&b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) else {
            return Err(Error::Validation(format!("edge {} names an unknown node", e.id)));
        };
        if parent[b].replace(k).is_some() {
            return Err(Error::Validation(format!("node {} has two incoming edges; network is not radial", e.to)));
        }
        children[a].push(k);
        ends.push((a, b));
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &k in &children[u] {
            order.push(ends[k].1);
        }
    }
    if order.len() != n {
        return Err(Error::Validation("network contains a cycle".into()));
    }
    Ok(Forest { parent, ends, order })
}

/// Flows are accumulated leaves-up from own demands; voltages fall by
/// `r_pu · f_pu` along each edge from 1 pu at every parentless node and
/// every root road node.
pub fn run_ldf(net: &DistributionNetwork) -> Result<FlowSolution> {
    let fo = forest(net)?;
    let base = net.bases.s_base_kw;
    let mut through: Vec<f64> = net.nodes.iter().map(|n| n.demand_kw).collect();
    let mut flow = vec![0.0; net.edges.len()];
    for &u in fo.order.iter().rev() {
        if let Some(k) = fo.parent[u] {
            flow[k] = through[u];
            through[fo.ends[k].0] += through[u];
        }
    }
    let mut v = vec![1.0; net.nodes.len()];
    for &u in &fo.order {
        if net.nodes[u].kind == NodeKind::Root {
            v[u] = 1.0;
        } else if let Some(k) = fo.parent[u] {
            v[u] = v[fo.ends[k].0] - net.edges[k].resistance_pu * flow[k] / base;
        }
    }
    let loading = net
        .edges
        .iter()
        .zip(&flow)
        .map(|(e, f)| if e.capacity_kw > 0.0 { f / e.capacity_kw } else { 0.0 })
        .collect();
    Ok(FlowSolution {
        voltage_pu: v,
        flow_kw: flow,
        loading,
    })
}

/// Writes a solution's voltages and flows into the network.
pub fn apply(net: &mut DistributionNetwork, sol: &FlowSolution) {
    for (n, v) in net.nodes.iter_mut().zip(&sol.voltage_pu) {
        n.voltage_pu = Some(*v);
    }
    for (e, f) in net.edges.iter_mut().zip(&sol.flow_kw) {
        e.flow_kw = Some(*f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnderVoltage,
    OverVoltage,
    Overload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalReport {
    pub violations: Vec<Violation>,
    pub min_voltage_pu: f64,
    pub max_voltage_pu: f64,
    pub max_loading: f64,
    pub max_loading_by_kind: BTreeMap<EdgeKind, f64>,
    /// Voltage never rises from parent to child.
    pub monotone: bool,
}

impl OperationalReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_operational(
    net: &DistributionNetwork,
    sol: &FlowSolution,
    v_min: f64,
    v_max: f64,
) -> Result<OperationalReport> {
    let fo = forest(net)?;
    let mut violations = Vec::new();
    for (n, &v) in net.nodes.iter().zip(&sol.voltage_pu) {
        if v < v_min {
            violations.push(Violation {
                kind: ViolationKind::UnderVoltage,
                id: n.id.clone(),
                value: v,
            });
        } else if v > v_max {
            violations.push(Violation {
                kind: ViolationKind::OverVoltage,
                id: n.id.clone(),
                value: v,
            });
        }
    }
    let mut by_kind: BTreeMap<EdgeKind, f64> = BTreeMap::new();
    for (e, &l) in net.edges.iter().zip(&sol.loading) {
        if l > 1.0 {
            violations.push(Violation {
                kind: ViolationKind::Overload,
                id: e.id.clone(),
                value: l,
            });
        }
        let m = by_kind.entry(e.kind).or_insert(0.0);
        *m = m.max(l);
    }
    let monotone = fo
        .ends
        .iter()
        .all(|&(a, b)| sol.voltage_pu[b] <= sol.voltage_pu[a] + 1e-12);
    let fold = |f: fn(f64, f64) -> f64, init: f64| sol.voltage_pu.iter().copied().fold(init, f);
    Ok(OperationalReport {
        violations,
        min_voltage_pu: fold(f64::min, f64::INFINITY),
        max_voltage_pu: fold(f64::max, f64::NEG_INFINITY),
        max_loading: sol.loading.iter().copied().fold(0.0, f64::max),
        max_loading_by_kind: by_kind,
        monotone,
    })
}

/// Counts over logarithmically spaced bins; `edges` has one more entry
/// than `counts`. Values ≤ 0 are counted in `nonpositive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub nonpositive: usize,
}

pub fn log_histogram(values: &[f64], bins_per_decade: usize) -> Histogram {
    let pos: Vec<f64> = values.iter().copied().filter(|&x| x > 0.0).collect();
    let nonpositive = values.len() - pos.len();
    if pos.is_empty() {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
            nonpositive,
        };
    }
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
    let hi = pos.iter().copied().fold(0.0, f64::max).log10();
    let per = bins_per_decade.max(1) as f64;
    let nbins = (((hi - lo) * per).floor() as usize + 1).max(1);
    let edges: Vec<f64> = (0..=nbins).map(|i| 10f64.powf(lo + i as f64 / per)).collect();
    let mut counts = vec![0; nbins];
    for x in pos {
        let i = ((x.log10() - lo) * per).floor() as usize;
        counts[i.min(nbins - 1)] += 1;
    }
    Histogram {
        edges,
        counts,
        nonpositive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `v(A) − v(B)` per residence id.
    pub deviations: BTreeMap<String, f64>,
    pub max_abs_deviation: f64,
    /// Share of residences within ±0.01 pu.
    pub fraction_within_1pct: f64,
    pub deviation_histogram: Vec<(f64, usize)>,
    pub flow_histogram_a: Histogram,
    pub flow_histogram_b: Histogram,
    pub total_length_m_a: BTreeMap<EdgeKind, f64>,
    pub total_length_m_b: BTreeMap<EdgeKind, f64>,
}

fn residence_voltages(net: &DistributionNetwork, sol: &FlowSolution) -> BTreeMap<String, f64> {
    net.nodes
        .iter()
        .zip(&sol.voltage_pu)
        .filter(|(n, _)| n.kind == NodeKind::Residence)
        .map(|(n, v)| (n.id.clone(), *v))
        .collect()
}

fn lengths(net: &DistributionNetwork) -> BTreeMap<EdgeKind, f64> {
    [EdgeKind::FeederHv, EdgeKind::Primary, EdgeKind::Secondary]
        .into_iter()
        .map(|k| (k, net.total_length_m(k)))
        .collect()
}

/// Runs the power flow on both networks and compares residence voltages.
pub fn compare(a: &DistributionNetwork, b: &DistributionNetwork) -> Result<ComparisonReport> {
    let (sa, sb) = (run_ldf(a)?, run_ldf(b)?);
    let (va, vb) = (residence_voltages(a, &sa), residence_voltages(b, &sb));
    let ka: BTreeSet<&String> = va.keys().collect();
    let kb: BTreeSet<&String> = vb.keys().collect();
    if ka != kb {
        let only: Vec<&&String> = ka.symmetric_difference(&kb).take(5).collect();
        return Err(Error::Validation(format!(
            "networks serve different residences (e.g. {only:?})"
        )));
    }
    let deviations: BTreeMap<String, f64> = va.iter().map(|(id, v)| (id.clone(), v - vb[id])).collect();
    let n = deviations.len().max(1) as f64;
    let within = deviations.values().filter(|d| d.abs() <= 0.01).count() as f64 / n;
    let max_abs = deviations.values().fold(0.0f64, |m, d| m.max(d.abs()));
    // 0.0025 pu bins over [-0.05, 0.05], clamped at the ends
    let mut dh: Vec<(f64, usize)> = (0..40).map(|i| (-0.05 + 0.0025 * i as f64, 0)).collect();
    for d in deviations.values() {
        let i = ((d + 0.05) / 0.0025).floor().clamp(0.0, 39.0) as usize;
        dh[i].1 += 1;
    }
    Ok(ComparisonReport {
        deviations,
        max_abs_deviation: max_abs,
        fraction_within_1pct: within,
        deviation_histogram: dh,
        flow_histogram_a: log_histogram(&sa.flow_kw, 4),
        flow_histogram_b: log_histogram(&sb.flow_kw, 4),
        total_length_m_a: lengths(a),
        total_length_m_b: lengths(b),
    })
}
