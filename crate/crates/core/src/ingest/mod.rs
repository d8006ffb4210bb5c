//! Scenario data: road graph, substations and residences, plus CSV I/O and
//! a deterministic generator for desk-scale test regions.

mod csv_io;
mod generate;

pub use csv_io::{load_scenario, write_scenario, ScenarioPaths};
pub use generate::{generate_scenario, GenerateOptions, RoadStyle};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, Segment};
use crate::ids::{LinkId, ResidenceId, RoadNodeId, SubstationId};

/// Hourly profile length used when only an average is supplied.
pub const PROFILE_HOURS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub u: RoadNodeId,
    pub v: RoadNodeId,
    /// Importance level 1..=5. Carried through to output only.
    pub level: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub nodes: BTreeMap<RoadNodeId, GeoPoint>,
    pub links: BTreeMap<LinkId, RoadLink>,
}

impl RoadNetwork {
    pub fn validate(&self) -> Result<()> {
        for (id, l) in &self.links {
            if l.u == l.v {
                return Err(Error::Validation(format!("link {id} is a self-loop")));
            }
            for n in [l.u, l.v] {
                if !self.nodes.contains_key(&n) {
                    return Err(Error::Validation(format!("link {id} references missing node {n}")));
                }
            }
            if !(1..=5).contains(&l.level) {
                return Err(Error::Validation(format!("link {id} has level {} outside 1..=5", l.level)));
            }
            if self.nodes[&l.u] == self.nodes[&l.v] {
                return Err(Error::Validation(format!("link {id} has coincident endpoints")));
            }
        }
        Ok(())
    }

    pub fn segment(&self, link: LinkId) -> Segment {
        let l = &self.links[&link];
        Segment {
            a: self.nodes[&l.u],
            b: self.nodes[&l.v],
        }
    }

    pub fn link_segments(&self) -> Vec<(u64, Segment)> {
        self.links.keys().map(|id| (id.0, self.segment(*id))).collect()
    }

    pub fn adjacency(&self) -> BTreeMap<RoadNodeId, BTreeSet<RoadNodeId>> {
        let mut adj: BTreeMap<RoadNodeId, BTreeSet<RoadNodeId>> =
            self.nodes.keys().map(|n| (*n, BTreeSet::new())).collect();
        for l in self.links.values() {
            adj.get_mut(&l.u).unwrap().insert(l.v);
            adj.get_mut(&l.v).unwrap().insert(l.u);
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: SubstationId,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residence {
    pub id: ResidenceId,
    pub location: GeoPoint,
    /// Hourly demand profile in kW.
    pub demand: Vec<f64>,
    /// Mean of `demand`, kW. Strictly positive.
    pub avg_demand: f64,
}

impl Residence {
    /// Builds a residence from a profile; the average is its mean.
    pub fn from_profile(id: ResidenceId, location: GeoPoint, demand: Vec<f64>) -> Result<Self> {
        if demand.is_empty() {
            return Err(Error::Validation(format!("residence {id} has an empty demand profile")));
        }
        let avg = demand.iter().sum::<f64>() / demand.len() as f64;
        let r = Residence {
            id,
            location,
            demand,
            avg_demand: avg,
        };
        r.validate()?;
        Ok(r)
    }

    /// Builds a residence from an average only; the profile is flat.
    pub fn from_average(id: ResidenceId, location: GeoPoint, avg_demand: f64) -> Result<Self> {
        let r = Residence {
            id,
            location,
            demand: vec![avg_demand; PROFILE_HOURS],
            avg_demand,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.avg_demand.is_finite() && self.avg_demand > 0.0) {
            return Err(Error::Validation(format!(
                "residence {} has non-positive average demand {}; every residence must draw strictly positive power",
                self.id, self.avg_demand
            )));
        }
        if self.demand.is_empty() || self.demand.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Validation(format!(
                "residence {} has an invalid demand profile",
                self.id
            )));
        }
        let mean = self.demand.iter().sum::<f64>() / self.demand.len() as f64;
        if (mean - self.avg_demand).abs() > 1e-6 * self.avg_demand.max(1.0) {
            return Err(Error::Validation(format!(
                "residence {} average {} disagrees with profile mean {mean}",
                self.id, self.avg_demand
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub roads: RoadNetwork,
    pub substations: Vec<Substation>,
    pub residences: Vec<Residence>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.substations.is_empty() {
            return Err(Error::Validation("scenario has no substations".into()));
        }
        if self.residences.is_empty() {
            return Err(Error::Validation("scenario has no residences".into()));
        }
        if self.roads.links.is_empty() {
            return Err(Error::Validation("scenario has no road links".into()));
        }
        self.roads.validate()?;
        let mut seen = BTreeSet::new();
        for s in &self.substations {
            if !seen.insert(s.id) {
                return Err(Error::Validation(format!("duplicate substation id {}", s.id)));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.residences {
            if !seen.insert(r.id) {
                return Err(Error::Validation(format!("duplicate residence id {}", r.id)));
            }
            r.validate()?;
        }
        Ok(())
    }

    pub fn residence(&self, id: ResidenceId) -> Option<&Residence> {
        self.residences.iter().find(|r| r.id == id)
    }

    pub fn total_demand(&self) -> f64 {
        self.residences.iter().map(|r| r.avg_demand).sum()
    }
}
