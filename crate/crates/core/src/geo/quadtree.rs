use super::BBox;

pub const DEFAULT_LEAF_CAPACITY: usize = 16;
pub const MAX_DEPTH: usize = 20;

/// Region quad-tree over bounding boxes.
///
/// A box lives in the deepest node whose quadrant fully contains it; boxes
/// straddling a split line stay in the internal node. Leaves split once they
/// exceed the bucket capacity.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    root: Node,
    len: usize,
    capacity: usize,
}

#[derive(Debug, Clone)]
struct Node {
    region: BBox,
    depth: usize,
    entries: Vec<(u64, BBox)>,
    children: Option<Box<[Node; 4]>>,
}

impl Node {
    fn new(region: BBox, depth: usize) -> Self {
        Node {
            region,
            depth,
            entries: Vec::new(),
            children: None,
        }
    }

    fn quadrants(&self) -> [BBox; 4] {
        let r = self.region;
        let mid_lon = 0.5 * (r.min_lon + r.max_lon);
        let mid_lat = 0.5 * (r.min_lat + r.max_lat);
        [
            BBox { min_lon: r.min_lon, min_lat: r.min_lat, max_lon: mid_lon, max_lat: mid_lat },
            BBox { min_lon: mid_lon, min_lat: r.min_lat, max_lon: r.max_lon, max_lat: mid_lat },
            BBox { min_lon: r.min_lon, min_lat: mid_lat, max_lon: mid_lon, max_lat: r.max_lat },
            BBox { min_lon: mid_lon, min_lat: mid_lat, max_lon: r.max_lon, max_lat: r.max_lat },
        ]
    }

    fn child_for(&self, b: &BBox) -> Option<usize> {
        let children = self.children.as_ref()?;
        children.iter().position(|c| c.region.contains(b))
    }

    fn insert(&mut self, id: u64, b: BBox, capacity: usize) {
        if let Some(i) = self.child_for(&b) {
            self.children.as_mut().unwrap()[i].insert(id, b, capacity);
            return;
        }
        self.entries.push((id, b));
        if self.children.is_none() && self.entries.len() > capacity && self.depth < MAX_DEPTH {
            self.split(capacity);
        }
    }

    fn split(&mut self, capacity: usize) {
        let depth = self.depth + 1;
        let [a, b, c, d] = self.quadrants();
        self.children = Some(Box::new([
            Node::new(a, depth),
            Node::new(b, depth),
            Node::new(c, depth),
            Node::new(d, depth),
        ]));
        let entries = std::mem::take(&mut self.entries);
        for (id, bb) in entries {
            match self.child_for(&bb) {
                Some(i) => self.children.as_mut().unwrap()[i].insert(id, bb, capacity),
                None => self.entries.push((id, bb)),
            }
        }
    }

    fn query(&self, b: &BBox, out: &mut Vec<u64>) {
        out.extend(
            self.entries
                .iter()
                .filter(|(_, e)| e.intersects(b))
                .map(|(id, _)| *id),
        );
        if let Some(children) = &self.children {
            for c in children.iter() {
                if c.region.intersects(b) {
                    c.query(b, out);
                }
            }
        }
    }

    fn max_depth(&self) -> usize {
        match &self.children {
            Some(c) => c.iter().map(Node::max_depth).max().unwrap_or(self.depth),
            None => self.depth,
        }
    }
}

impl SpatialIndex {
    /// Bulk-builds the tree. The root region is the union of all boxes.
    pub fn build(entries: Vec<(u64, BBox)>, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let region = entries
            .iter()
            .map(|(_, b)| *b)
            .reduce(|a, b| a.union(&b))
            .unwrap_or(BBox { min_lon: 0.0, min_lat: 0.0, max_lon: 0.0, max_lat: 0.0 });
        let mut root = Node::new(region, 0);
        let len = entries.len();
        for (id, b) in entries {
            root.insert(id, b, capacity);
        }
        SpatialIndex { root, len, capacity }
    }

    /// Ids of all stored boxes intersecting `b`, sorted ascending.
    pub fn query(&self, b: &BBox) -> Vec<u64> {
        let mut out = Vec::new();
        self.root.query(b, &mut out);
        out.sort_unstable();
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn leaf_capacity(&self) -> usize {
        self.capacity
    }

    pub fn depth(&self) -> usize {
        self.root.max_depth()
    }
}
