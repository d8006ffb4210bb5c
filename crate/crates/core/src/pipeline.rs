//! Stage-by-stage synthesis. Each stage reads its inputs from the previous
//! stage's artifact, so a run can be resumed from any stage.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geojson;
use crate::ingest::Scenario;
use crate::mapping::{build_assignment, place_all_candidates, LinkAssignment};
use crate::partition::{augment, partition, substation_seeds, AugmentedGraph, PartitionMap};
use crate::powerflow::{apply, check_operational, log_histogram, run_ldf, FlowSolution, OperationalReport};
use crate::primary_net::{self, stitch, DistributionNetwork, PrimarySolution};
use crate::secondary::{self, SecondaryNetwork};

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Artifacts {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub const MAPPING_CSV: &'static str = "mapping.csv";
    pub const MAPPING: &'static str = "mapping.json";
    pub const SECONDARY: &'static str = "secondary.json";
    pub const PARTITION_CSV: &'static str = "partition.csv";
    pub const PARTITION: &'static str = "partition.json";
    pub const PRIMARY: &'static str = "primary.json";
    pub const NETWORK: &'static str = "network.geojson";
    pub const NODES_CSV: &'static str = "powerflow_nodes.csv";
    pub const EDGES_CSV: &'static str = "powerflow_edges.csv";
    pub const HISTOGRAMS: &'static str = "histograms.json";
    pub const OPERATIONAL: &'static str = "operational.json";

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer(&mut w, value)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let f = File::open(&path)
            .map_err(|e| Error::Validation(format!("cannot open {}: {e}; run the earlier stage first", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

pub fn stage_map(scenario: &Scenario, cfg: &Config) -> Result<LinkAssignment> {
    build_assignment(scenario, &cfg.mapping()).map_err(|e| e.in_stage("map"))
}

pub fn stage_secondary(scenario: &Scenario, assignment: &LinkAssignment, cfg: &Config) -> Result<Vec<SecondaryNetwork>> {
    let run = || {
        let cands = place_all_candidates(&scenario.roads, assignment, &cfg.mapping());
        let problems = secondary::build_problems(scenario, assignment, &cands, &cfg.secondary())?;
        secondary::solve_all(&problems, &cfg.milp())
    };
    run().map_err(|e| e.in_stage("secondary"))
}

pub fn stage_partition(
    scenario: &Scenario,
    secondaries: &[SecondaryNetwork],
    cfg: &Config,
) -> Result<(AugmentedGraph, PartitionMap)> {
    let run = || {
        let graph = augment(&scenario.roads, secondaries)?;
        let seeds = substation_seeds(&scenario.roads, &scenario.substations, cfg.padding_m)?;
        let part = partition(&graph, &seeds, &cfg.stop())?;
        Ok((graph, part))
    };
    run().map_err(|e: Error| e.in_stage("partition"))
}

pub fn stage_primary(
    scenario: &Scenario,
    secondaries: &[SecondaryNetwork],
    graph: &AugmentedGraph,
    part: &PartitionMap,
    cfg: &Config,
) -> Result<(Vec<PrimarySolution>, DistributionNetwork)> {
    let run = || {
        let problems = primary_net::build_problems(graph, part, &scenario.substations, &cfg.primary())?;
        let sols = primary_net::solve_all(&problems, &cfg.milp())?;
        let net = stitch(scenario, secondaries, &sols, &cfg.primary(), &cfg.secondary())?;
        Ok((sols, net))
    };
    run().map_err(|e: Error| e.in_stage("primary"))
}

pub fn stage_powerflow(net: &mut DistributionNetwork, cfg: &Config) -> Result<(FlowSolution, OperationalReport)> {
    let run = || {
        let sol = run_ldf(net)?;
        let report = check_operational(net, &sol, cfg.v_min, cfg.v_max)?;
        Ok((sol, report))
    };
    let (sol, report) = run().map_err(|e: Error| e.in_stage("powerflow"))?;
    apply(net, &sol);
    Ok((sol, report))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub assignment: LinkAssignment,
    pub secondaries: Vec<SecondaryNetwork>,
    pub graph: AugmentedGraph,
    pub partition: PartitionMap,
    pub primaries: Vec<PrimarySolution>,
    pub network: DistributionNetwork,
    pub flow: FlowSolution,
    pub report: OperationalReport,
}

/// Runs every stage in memory.
pub fn run_pipeline(scenario: &Scenario, cfg: &Config) -> Result<PipelineOutput> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    scenario.validate().map_err(|e| e.in_stage("validate"))?;
    let t = Instant::now();
    let assignment = stage_map(scenario, cfg)?;
    info!("map: {} residences on {} links ({:.1?})", assignment.forward.len(), assignment.inverse.len(), t.elapsed());
    let secondaries = stage_secondary(scenario, &assignment, cfg)?;
    info!(
        "secondary: {} transformers ({:.1?})",
        secondaries.iter().map(|s| s.transformers.len()).sum::<usize>(),
        t.elapsed()
    );
    let (graph, part) = stage_partition(scenario, &secondaries, cfg)?;
    info!("partition: {} communities ({:.1?})", part.communities.len(), t.elapsed());
    let (primaries, mut network) = stage_primary(scenario, &secondaries, &graph, &part, cfg)?;
    info!("primary: {} nodes, {} edges ({:.1?})", network.nodes.len(), network.edges.len(), t.elapsed());
    let (flow, report) = stage_powerflow(&mut network, cfg)?;
    info!(
        "powerflow: voltage {:.4}..{:.4} pu, {} violations ({:.1?})",
        report.min_voltage_pu,
        report.max_voltage_pu,
        report.violations.len(),
        t.elapsed()
    );
    Ok(PipelineOutput {
        assignment,
        secondaries,
        graph,
        partition: part,
        primaries,
        network,
        flow,
        report,
    })
}

/// Writes the mapping stage's CSV and reloadable JSON.
pub fn write_mapping(art: &Artifacts, a: &LinkAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(art.path(Artifacts::MAPPING_CSV))?;
    w.write_record(["res_id", "link_id", "dist_m"])?;
    for (r, (l, d)) in &a.forward {
        w.write_record([r.0.to_string(), l.0.to_string(), d.to_string()])?;
    }
    w.flush()?;
    art.write_json(Artifacts::MAPPING, a)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionArtifact {
    pub graph: AugmentedGraph,
    pub partition: PartitionMap,
}

pub fn write_partition(art: &Artifacts, graph: &AugmentedGraph, part: &PartitionMap) -> Result<()> {
    let mut w = csv::Writer::from_path(art.path(Artifacts::PARTITION_CSV))?;
    w.write_record(["node_id", "substation_id", "community_id"])?;
    for c in &part.communities {
        for n in &c.nodes {
            w.write_record([n.to_string(), c.substation.to_string(), c.id.to_string()])?;
        }
    }
    w.flush()?;
    art.write_json(
        Artifacts::PARTITION,
        &PartitionArtifact {
            graph: graph.clone(),
            partition: part.clone(),
        },
    )
}

pub fn write_network(art: &Artifacts, net: &DistributionNetwork) -> Result<()> {
    let mut w = BufWriter::new(File::create(art.path(Artifacts::NETWORK))?);
    serde_json::to_writer_pretty(&mut w, &geojson::to_geojson(net))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_network(path: &Path) -> Result<DistributionNetwork> {
    let f = File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_reader(BufReader::new(f))?;
    geojson::from_geojson(&v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histograms {
    pub flow_kw: crate::powerflow::Histogram,
    pub loading: crate::powerflow::Histogram,
    pub voltage_pu: Vec<f64>,
}

pub fn write_powerflow(art: &Artifacts, net: &DistributionNetwork, sol: &FlowSolution, rep: &OperationalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(art.path(Artifacts::NODES_CSV))?;
    w.write_record(["node_id", "kind", "voltage_pu"])?;
    for (n, v) in net.nodes.iter().zip(&sol.voltage_pu) {
        w.write_record([n.id.clone(), geojson::kind_name(&n.kind), v.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(art.path(Artifacts::EDGES_CSV))?;
    w.write_record(["edge_id", "kind", "flow_kw", "loading"])?;
    for ((e, f), l) in net.edges.iter().zip(&sol.flow_kw).zip(&sol.loading) {
        w.write_record([e.id.clone(), geojson::kind_name(&e.kind), f.to_string(), l.to_string()])?;
    }
    w.flush()?;
    art.write_json(
        Artifacts::HISTOGRAMS,
        &Histograms {
            flow_kw: log_histogram(&sol.flow_kw, 4),
            loading: log_histogram(&sol.loading, 4),
            voltage_pu: sol.voltage_pu.clone(),
        },
    )?;
    art.write_json(Artifacts::OPERATIONAL, rep)
}

/// Runs every stage and writes every artifact.
pub fn run_and_write(scenario: &Scenario, cfg: &Config, art: &Artifacts) -> Result<PipelineOutput> {
    let out = run_pipeline(scenario, cfg)?;
    write_mapping(art, &out.assignment)?;
    art.write_json(Artifacts::SECONDARY, &out.secondaries)?;
    write_partition(art, &out.graph, &out.partition)?;
    art.write_json(Artifacts::PRIMARY, &out.primaries)?;
    write_network(art, &out.network)?;
    write_powerflow(art, &out.network, &out.flow, &out.report)?;
    Ok(out)
}
