//! GeoJSON encoding of a distribution network. Nodes are Point features
//! and edges LineString features between their end nodes; per-unit bases
//! travel as a foreign member so the file reloads losslessly.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::primary_net::{Bases, DistributionNetwork, NetEdge, NetNode};

/// Kebab-case name of a kind enum, as used in files.
pub fn kind_name<T: Serialize>(kind: &T) -> String {
    match serde_json::to_value(kind) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn coord(p: GeoPoint) -> Value {
    json!([p.lon, p.lat])
}

pub fn to_geojson(net: &DistributionNetwork) -> Value {
    let idx = net.node_index();
    let mut features = Vec::with_capacity(net.nodes.len() + net.edges.len());
    for n in &net.nodes {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": coord(n.location)},
            "properties": {
                "id": n.id,
                "kind": n.kind,
                "demand_kw": n.demand_kw,
                "voltage_pu": n.voltage_pu,
            },
        }));
    }
    for e in &net.edges {
        let ends: Vec<Value> = [&e.from, &e.to]
            .iter()
            .filter_map(|id| idx.get(id.as_str()).map(|&i| coord(net.nodes[i].location)))
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": ends},
            "properties": {
                "id": e.id,
                "kind": e.kind,
                "from": e.from,
                "to": e.to,
                "length_m": e.length_m,
                "resistance_ohm": e.resistance_ohm,
                "resistance_pu": e.resistance_pu,
                "capacity_kw": e.capacity_kw,
                "flow_kw": e.flow_kw,
            },
        }));
    }
    json!({
        "type": "FeatureCollection",
        "bases": net.bases,
        "features": features,
    })
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Validation(format!("network GeoJSON: {}", msg.into()))
}

pub fn from_geojson(v: &Value) -> Result<DistributionNetwork> {
    if v.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("not a FeatureCollection"));
    }
    let bases: Bases = match v.get("bases") {
        Some(b) => serde_json::from_value(b.clone())?,
        None => Bases::default(),
    };
    let features = v.get("features").and_then(Value::as_array).ok_or_else(|| bad("missing features"))?;
    let mut net = DistributionNetwork {
        bases,
        ..Default::default()
    };
    for (i, f) in features.iter().enumerate() {
        let geom = f.pointer("/geometry/type").and_then(Value::as_str).unwrap_or_default();
        let props = f
            .get("properties")
            .and_then(Value::as_object)
            .ok_or_else(|| bad(format!("feature {i} has no properties")))?;
        match geom {
            "Point" => {
                let c = f
                    .pointer("/geometry/coordinates")
                    .and_then(Value::as_array)
                    .filter(|c| c.len() >= 2)
                    .ok_or_else(|| bad(format!("feature {i} has bad coordinates")))?;
                let mut obj: Map<String, Value> = props.clone();
                obj.insert("location".into(), json!({"lon": c[0], "lat": c[1]}));
                let node: NetNode = serde_json::from_value(Value::Object(obj))?;
                net.nodes.push(node);
            }
            "LineString" => {
                let edge: NetEdge = serde_json::from_value(Value::Object(props.clone()))?;
                net.edges.push(edge);
            }
            other => return Err(bad(format!("feature {i} has unsupported geometry `{other}`"))),
        }
    }
    Ok(net)
}
