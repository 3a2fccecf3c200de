use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, Read};
use std::path::Path;

use super::kdtree::{unit_vector, KdTree};
use super::AttackError;
use crate::datasets::Trace;
use crate::geo::{distance, GeoPoint};

/// Road network nodes; edges are not needed for nearest-node matching.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    ids: Vec<u64>,
    positions: Vec<GeoPoint>,
    index: KdTree,
}

impl RoadGraph {
    pub fn new(nodes: Vec<(u64, GeoPoint)>) -> Result<Self, AttackError> {
        if nodes.is_empty() {
            return Err(AttackError::EmptyGraph);
        }
        let mut seen = HashSet::with_capacity(nodes.len());
        for (id, _) in &nodes {
            if !seen.insert(*id) {
                return Err(AttackError::DuplicateNode(*id));
            }
        }
        let (ids, positions): (Vec<u64>, Vec<GeoPoint>) = nodes.into_iter().unzip();
        let index = KdTree::build(positions.iter().map(unit_vector));
        Ok(Self { ids, positions, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u64, GeoPoint)> + '_ {
        self.ids.iter().copied().zip(self.positions.iter().copied())
    }

    /// The node nearest to `p` by great-circle distance; lowest id on ties.
    pub fn nearest(&self, p: &GeoPoint) -> (u64, GeoPoint) {
        let q = unit_vector(p);
        let best = self.index.nearest_dist2(&q).expect("graph is non-empty");
        // Candidates whose chord is within rounding of the best one are
        // ranked on the haversine distance itself.
        let mut candidates = Vec::new();
        self.index.within(&q, best * (1.0 + 1e-9) + 1e-24, &mut candidates);
        let i = candidates
            .into_iter()
            .map(|i| (distance(p, &self.positions[i]), self.ids[i], i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, _, i)| i)
            .expect("the nearest node is always a candidate");
        (self.ids[i], self.positions[i])
    }
}

/// Replaces every position by the position of its nearest graph node.
pub fn map_match(tr: &Trace, graph: &RoadGraph) -> Trace {
    tr.with_positions(tr.positions().map(|p| graph.nearest(p).1).collect())
}

/// Reads node CSV `node_id,lat,lon` with a header line.
pub fn read_road_graph<R: Read>(input: R, origin: &Path) -> Result<RoadGraph, AttackError> {
    let parse = |line: usize, message: String| AttackError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut nodes = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse(line, e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let id: u64 = rec[0]
            .parse()
            .map_err(|e| parse(line, format!("node id {:?}: {e}", &rec[0])))?;
        let lat: f64 = rec[1]
            .parse()
            .map_err(|e| parse(line, format!("lat {:?}: {e}", &rec[1])))?;
        let lon: f64 = rec[2]
            .parse()
            .map_err(|e| parse(line, format!("lon {:?}: {e}", &rec[2])))?;
        let pos = GeoPoint::new(lat, lon).map_err(|e| parse(line, e.to_string()))?;
        nodes.push((id, pos));
    }
    RoadGraph::new(nodes)
}

pub fn load_road_graph(path: impl AsRef<Path>) -> Result<RoadGraph, AttackError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| AttackError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_road_graph(BufReader::new(file), path)
}
