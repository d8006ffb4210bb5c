use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use csv::StringRecord;

use super::{Residence, RoadLink, RoadNetwork, Scenario, Substation, PROFILE_HOURS};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::ids::{LinkId, ResidenceId, RoadNodeId, SubstationId};

const ROAD_COLUMNS: [&str; 8] = ["link_id", "u_id", "v_id", "u_lon", "u_lat", "v_lon", "v_lat", "level"];
const SUB_COLUMNS: [&str; 3] = ["sub_id", "lon", "lat"];
const RES_COLUMNS: [&str; 4] = ["res_id", "lon", "lat", "p_avg_kw"];

#[derive(Debug, Clone)]
pub struct ScenarioPaths {
    pub roads: PathBuf,
    pub substations: PathBuf,
    pub residences: PathBuf,
}

impl ScenarioPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        ScenarioPaths {
            roads: dir.join("roads.csv"),
            substations: dir.join("substations.csv"),
            residences: dir.join("residences.csv"),
        }
    }
}

struct Table {
    file: String,
    columns: BTreeMap<String, usize>,
}

impl Table {
    fn new(file: &str, headers: &StringRecord, required: &[&str]) -> Result<Self> {
        let columns: BTreeMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(Error::Row {
                    file: file.into(),
                    row: 1,
                    msg: format!("missing column `{c}`"),
                });
            }
        }
        Ok(Table {
            file: file.into(),
            columns,
        })
    }

    fn err(&self, row: usize, msg: impl Into<String>) -> Error {
        Error::Row {
            file: self.file.clone(),
            row,
            msg: msg.into(),
        }
    }

    fn raw<'r>(&self, rec: &'r StringRecord, row: usize, col: &str) -> Result<&'r str> {
        let i = self.columns.get(col).ok_or_else(|| self.err(row, format!("missing column `{col}`")))?;
        rec.get(*i)
            .map(str::trim)
            .ok_or_else(|| self.err(row, format!("missing value for `{col}`")))
    }

    fn f64(&self, rec: &StringRecord, row: usize, col: &str) -> Result<f64> {
        let s = self.raw(rec, row, col)?;
        s.parse::<f64>()
            .map_err(|_| self.err(row, format!("`{col}` is not a number: {s:?}")))
    }

    fn u64(&self, rec: &StringRecord, row: usize, col: &str) -> Result<u64> {
        let s = self.raw(rec, row, col)?;
        s.parse::<u64>()
            .map_err(|_| self.err(row, format!("`{col}` is not an integer id: {s:?}")))
    }

    fn point(&self, rec: &StringRecord, row: usize, lon: &str, lat: &str) -> Result<GeoPoint> {
        GeoPoint::new(self.f64(rec, row, lon)?, self.f64(rec, row, lat)?)
            .map_err(|e| self.err(row, e.to_string()))
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))
}

pub fn load_roads<R: Read>(name: &str, r: R) -> Result<RoadNetwork> {
    let mut rdr = reader(r);
    let t = Table::new(name, rdr.headers()?, &ROAD_COLUMNS)?;
    let mut net = RoadNetwork::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = LinkId(t.u64(&rec, row, "link_id")?);
        let u = RoadNodeId(t.u64(&rec, row, "u_id")?);
        let v = RoadNodeId(t.u64(&rec, row, "v_id")?);
        let pu = t.point(&rec, row, "u_lon", "u_lat")?;
        let pv = t.point(&rec, row, "v_lon", "v_lat")?;
        let level = t.u64(&rec, row, "level")?;
        if !(1..=5).contains(&level) {
            return Err(t.err(row, format!("level {level} outside 1..=5")));
        }
        if u == v {
            return Err(t.err(row, format!("link {id} is a self-loop on {u}")));
        }
        for (n, p) in [(u, pu), (v, pv)] {
            if let Some(prev) = net.nodes.insert(n, p) {
                if prev != p {
                    return Err(t.err(row, format!("node {n} appears with two different coordinates")));
                }
            }
        }
        let link = RoadLink { u, v, level: level as u8 };
        if net.links.insert(id, link).is_some() {
            return Err(t.err(row, format!("duplicate link id {id}")));
        }
    }
    net.validate()?;
    Ok(net)
}

pub fn load_substations<R: Read>(name: &str, r: R) -> Result<Vec<Substation>> {
    let mut rdr = reader(r);
    let t = Table::new(name, rdr.headers()?, &SUB_COLUMNS)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = SubstationId(t.u64(&rec, row, "sub_id")?);
        if !seen.insert(id) {
            return Err(t.err(row, format!("duplicate substation id {id}")));
        }
        out.push(Substation {
            id,
            location: t.point(&rec, row, "lon", "lat")?,
        });
    }
    Ok(out)
}

pub fn load_residences<R: Read>(name: &str, r: R) -> Result<Vec<Residence>> {
    let mut rdr = reader(r);
    let t = Table::new(name, rdr.headers()?, &RES_COLUMNS)?;
    let hours: Vec<String> = (0..PROFILE_HOURS).map(|h| format!("h{h}")).collect();
    let present = hours.iter().filter(|h| t.columns.contains_key(h.as_str())).count();
    if present != 0 && present != PROFILE_HOURS {
        return Err(t.err(1, format!("partial hourly profile: {present} of {PROFILE_HOURS} columns")));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = ResidenceId(t.u64(&rec, row, "res_id")?);
        if !seen.insert(id) {
            return Err(t.err(row, format!("duplicate residence id {id}")));
        }
        let location = t.point(&rec, row, "lon", "lat")?;
        let avg = t.f64(&rec, row, "p_avg_kw")?;
        if !(avg > 0.0) {
            return Err(t.err(
                row,
                format!("p_avg_kw = {avg}: residence demand must be strictly positive"),
            ));
        }
        let res = if present == PROFILE_HOURS {
            let demand = hours
                .iter()
                .map(|h| t.f64(&rec, row, h))
                .collect::<Result<Vec<_>>>()?;
            let r = Residence {
                id,
                location,
                demand,
                avg_demand: avg,
            };
            r.validate().map_err(|e| t.err(row, e.to_string()))?;
            r
        } else {
            Residence::from_average(id, location, avg).map_err(|e| t.err(row, e.to_string()))?
        };
        out.push(res);
    }
    Ok(out)
}

pub fn load_scenario(paths: &ScenarioPaths) -> Result<Scenario> {
    let name = |p: &Path| p.display().to_string();
    let roads = load_roads(&name(&paths.roads), open(&paths.roads)?)?;
    let substations = load_substations(&name(&paths.substations), open(&paths.substations)?)?;
    let residences = load_residences(&name(&paths.residences), open(&paths.residences)?)?;
    let s = Scenario {
        roads,
        substations,
        residences,
    };
    s.validate()?;
    Ok(s)
}

pub fn write_roads<W: Write>(net: &RoadNetwork, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ROAD_COLUMNS)?;
    for (id, l) in &net.links {
        let (pu, pv) = (net.nodes[&l.u], net.nodes[&l.v]);
        wtr.write_record([
            id.0.to_string(),
            l.u.0.to_string(),
            l.v.0.to_string(),
            pu.lon.to_string(),
            pu.lat.to_string(),
            pv.lon.to_string(),
            pv.lat.to_string(),
            l.level.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_substations<W: Write>(subs: &[Substation], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUB_COLUMNS)?;
    for s in subs {
        wtr.write_record([s.id.0.to_string(), s.location.lon.to_string(), s.location.lat.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Hourly columns are written only when every profile has 24 entries.
pub fn write_residences<W: Write>(res: &[Residence], w: W) -> Result<()> {
    let with_profile = res.iter().all(|r| r.demand.len() == PROFILE_HOURS);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = RES_COLUMNS.iter().map(|s| s.to_string()).collect();
    if with_profile {
        header.extend((0..PROFILE_HOURS).map(|h| format!("h{h}")));
    }
    wtr.write_record(&header)?;
    for r in res {
        let mut row = vec![
            r.id.0.to_string(),
            r.location.lon.to_string(),
            r.location.lat.to_string(),
            r.avg_demand.to_string(),
        ];
        if with_profile {
            row.extend(r.demand.iter().map(f64::to_string));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_scenario(s: &Scenario, paths: &ScenarioPaths) -> Result<()> {
    for p in [&paths.roads, &paths.substations, &paths.residences] {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_roads(&s.roads, File::create(&paths.roads)?)?;
    write_substations(&s.substations, File::create(&paths.substations)?)?;
    write_residences(&s.residences, File::create(&paths.residences)?)?;
    Ok(())
}
