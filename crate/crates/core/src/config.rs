//! Flat run configuration read from a TOML file, with `key=value`
//! overrides applied on top.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::MappingOptions;
use crate::milp::MilpOptions;
use crate::partition::StopCondition;
use crate::primary_net::{Bases, PrimaryOptions};
use crate::secondary::SecondaryOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub padding_m: f64,
    pub max_distance_m: f64,
    pub spacing_m: f64,
    /// Residences per candidate transformer.
    pub rho: usize,
    /// Road-crossing penalty, meters per crossing unit.
    pub lambda: f64,
    pub secondary_capacity_kw: f64,
    pub primary_capacity_kw: f64,
    pub feeder_capacity_kw: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub max_nodes: usize,
    pub max_load_kw: Option<f64>,
    pub primary_ohm_per_km: f64,
    pub secondary_ohm_per_km: f64,
    pub s_base_kw: f64,
    pub v_primary_kv: f64,
    pub v_secondary_kv: f64,
    pub node_limit: usize,
    pub tighten: bool,
}

impl Default for Config {
    fn default() -> Self {
        let m = MappingOptions::default();
        let s = SecondaryOptions::default();
        let p = PrimaryOptions::default();
        Config {
            seed: 7,
            padding_m: m.padding_m,
            max_distance_m: m.max_distance_m,
            spacing_m: m.spacing_m,
            rho: m.rho,
            lambda: s.lambda,
            secondary_capacity_kw: s.capacity_kw,
            primary_capacity_kw: p.line_capacity_kw,
            feeder_capacity_kw: p.feeder_capacity_kw,
            v_min: p.v_min,
            v_max: p.v_max,
            max_nodes: StopCondition::default().max_nodes.unwrap_or(700),
            max_load_kw: None,
            primary_ohm_per_km: p.resistance_ohm_per_km,
            secondary_ohm_per_km: s.resistance_ohm_per_km,
            s_base_kw: p.bases.s_base_kw,
            v_primary_kv: p.bases.v_primary_kv,
            v_secondary_kv: p.bases.v_secondary_kv,
            node_limit: MilpOptions::default().node_limit,
            tighten: p.tighten,
        }
    }
}

impl Config {
    /// Reads `path` (if any), then applies each `key=value` override. Values
    /// are parsed as TOML scalars.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                text.parse().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                return Err(Error::Config(format!("override `{o}` is not key=value")));
            };
            let doc: toml::Table = format!("v = {}", v.trim())
                .parse()
                .map_err(|e| Error::Config(format!("override `{o}`: {e}")))?;
            table.insert(k.trim().to_string(), doc["v"].clone());
        }
        let cfg: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("padding_m", self.padding_m),
            ("max_distance_m", self.max_distance_m),
            ("spacing_m", self.spacing_m),
            ("secondary_capacity_kw", self.secondary_capacity_kw),
            ("primary_capacity_kw", self.primary_capacity_kw),
            ("feeder_capacity_kw", self.feeder_capacity_kw),
            ("s_base_kw", self.s_base_kw),
            ("v_primary_kv", self.v_primary_kv),
            ("v_secondary_kv", self.v_secondary_kv),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{k} must be positive, got {v}")));
        }
        if self.lambda < 0.0 || self.primary_ohm_per_km < 0.0 || self.secondary_ohm_per_km < 0.0 {
            return Err(Error::Config("lambda and resistances must be non-negative".into()));
        }
        if self.rho == 0 || self.max_nodes == 0 || self.node_limit == 0 {
            return Err(Error::Config("rho, max_nodes and node_limit must be at least 1".into()));
        }
        if self.max_load_kw.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::Config("max_load_kw must be positive".into()));
        }
        if !(self.v_min < 1.0 && 1.0 <= self.v_max) {
            return Err(Error::Config(format!(
                "voltage band [{}, {}] must satisfy v_min < 1 <= v_max",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn mapping(&self) -> MappingOptions {
        MappingOptions {
            padding_m: self.padding_m,
            max_distance_m: self.max_distance_m,
            spacing_m: self.spacing_m,
            rho: self.rho,
        }
    }

    pub fn secondary(&self) -> SecondaryOptions {
        SecondaryOptions {
            lambda: self.lambda,
            capacity_kw: self.secondary_capacity_kw,
            resistance_ohm_per_km: self.secondary_ohm_per_km,
        }
    }

    pub fn stop(&self) -> StopCondition {
        StopCondition {
            max_nodes: Some(self.max_nodes),
            max_load_kw: self.max_load_kw,
        }
    }

    pub fn primary(&self) -> PrimaryOptions {
        PrimaryOptions {
            line_capacity_kw: self.primary_capacity_kw,
            feeder_capacity_kw: self.feeder_capacity_kw,
            v_min: self.v_min,
            v_max: self.v_max,
            resistance_ohm_per_km: self.primary_ohm_per_km,
            bases: Bases {
                s_base_kw: self.s_base_kw,
                v_primary_kv: self.v_primary_kv,
                v_secondary_kv: self.v_secondary_kv,
            },
            tighten: self.tighten,
        }
    }

    pub fn milp(&self) -> MilpOptions {
        MilpOptions {
            node_limit: self.node_limit,
            ..MilpOptions::default()
        }
    }
}
