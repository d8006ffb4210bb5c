//! Typed identifiers. Each prints with a one-letter prefix so mixed node
//! lists stay unambiguous in output files.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(RoadNodeId, "r");
id_type!(LinkId, "l");
id_type!(SubstationId, "s");
id_type!(ResidenceId, "h");
id_type!(TransformerId, "t");

/// A node of the augmented road graph: either an original road node or a
/// transformer inserted along a link. Serialized as its display form
/// (`r12`, `t3`) so it can key JSON maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GraphNode {
    Road(RoadNodeId),
    Transformer(TransformerId),
}

impl GraphNode {
    pub fn is_road(&self) -> bool {
        matches!(self, GraphNode::Road(_))
    }
}

impl fmt::Display for GraphNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphNode::Road(r) => r.fmt(f),
            GraphNode::Transformer(t) => t.fmt(f),
        }
    }
}

impl std::str::FromStr for GraphNode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("`{s}` is not a road (r<n>) or transformer (t<n>) node id");
        let (kind, num) = s.split_at_checked(1).ok_or_else(bad)?;
        let n: u64 = num.parse().map_err(|_| bad())?;
        match kind {
            "r" => Ok(GraphNode::Road(RoadNodeId(n))),
            "t" => Ok(GraphNode::Transformer(TransformerId(n))),
            _ => Err(bad()),
        }
    }
}

impl Serialize for GraphNode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GraphNode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
