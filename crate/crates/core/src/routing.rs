//! Surface-quality-aware shortest paths.
//!
//! Edge weights blend length with the surface quality of the cells an edge
//! runs through, scaled by a user slider from 0 (distance only) to 10.
//!
//! Graph file format:
//!
//! ```text
//! veloqual-graph v1
//! N,<id>,<lat>,<lon>
//! E,<a>,<b>,<bidir 0|1>,<lat lon;lat lon;...>
//! ```
//!
//! An empty polyline field means a straight line between the two nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{cell_of, haversine_m, LatLon};
use crate::quality::SurfaceGrid;

pub const GRAPH_MAGIC: &str = "veloqual-graph v1";
/// Quality assumed where the grid has no data.
pub const NEUTRAL_QUALITY: f64 = 3.0;
pub const SNAP_RADIUS_M: f64 = 250.0;
pub const MAX_SLIDER: u8 = 10;
/// Polyline endpoints may differ from node coordinates by this much.
const ENDPOINT_TOLERANCE_DEG: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("missing `{GRAPH_MAGIC}` header")]
    MissingHeader,
    #[error("line {0}: malformed record")]
    BadRecord(usize),
    #[error("line {0}: duplicate node id")]
    DuplicateNode(usize),
    #[error("line {0}: unknown node")]
    UnknownNode(usize),
    #[error("line {0}: polyline endpoints do not match the edge's nodes")]
    EndpointMismatch(usize),
    #[error("line {0}: edge has zero length")]
    ZeroLength(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("no graph node within {SNAP_RADIUS_M} m of {0:?}")]
    NoSnap(LatLon),
    #[error("destination is unreachable")]
    Unreachable,
    #[error("slider must be between 0 and {MAX_SLIDER}")]
    BadSlider(u8),
}

pub type NodeId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub polyline: Vec<LatLon>,
    pub length_m: f64,
    pub bidirectional: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraph {
    nodes: BTreeMap<NodeId, LatLon>,
    edges: Vec<Edge>,
    /// node -> (edge index, neighbour, traversed forward)
    adjacency: BTreeMap<NodeId, Vec<(usize, NodeId, bool)>>,
}

fn polyline_length(p: &[LatLon]) -> f64 {
    p.windows(2).map(|w| haversine_m(w[0], w[1])).sum()
}

fn close(a: LatLon, b: LatLon) -> bool {
    (a.lat - b.lat).abs() <= ENDPOINT_TOLERANCE_DEG && (a.lon - b.lon).abs() <= ENDPOINT_TOLERANCE_DEG
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the id is already taken.
    pub fn add_node(&mut self, id: NodeId, pos: LatLon) -> bool {
        if self.nodes.contains_key(&id) {
            return false;
        }
        self.nodes.insert(id, pos);
        true
    }

    /// Adds an edge; an empty polyline becomes the straight segment a→b.
    /// Errors carry line 0 when not loading from a file.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, polyline: Vec<LatLon>, bidirectional: bool) -> Result<usize, GraphError> {
        self.add_edge_at(a, b, polyline, bidirectional, 0)
    }

    fn add_edge_at(&mut self, a: NodeId, b: NodeId, mut polyline: Vec<LatLon>, bidirectional: bool, line: usize) -> Result<usize, GraphError> {
        let (pa, pb) = match (self.nodes.get(&a), self.nodes.get(&b)) {
            (Some(pa), Some(pb)) => (*pa, *pb),
            _ => return Err(GraphError::UnknownNode(line)),
        };
        if polyline.is_empty() {
            polyline = vec![pa, pb];
        }
        if polyline.len() < 2 || !close(polyline[0], pa) || !close(polyline[polyline.len() - 1], pb) {
            return Err(GraphError::EndpointMismatch(line));
        }
        let length_m = polyline_length(&polyline);
        if length_m.is_nan() || length_m <= 0.0 {
            return Err(GraphError::ZeroLength(line));
        }
        let idx = self.edges.len();
        self.edges.push(Edge { a, b, polyline, length_m, bidirectional });
        self.adjacency.entry(a).or_default().push((idx, b, true));
        if bidirectional {
            self.adjacency.entry(b).or_default().push((idx, a, false));
        }
        Ok(idx)
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, LatLon> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing `(edge index, neighbour, forward)` triples.
    pub fn neighbours(&self, n: NodeId) -> &[(usize, NodeId, bool)] {
        self.adjacency.get(&n).map_or(&[], Vec::as_slice)
    }

    /// Nearest node within [`SNAP_RADIUS_M`]; ties go to the smaller id.
    pub fn snap(&self, p: LatLon) -> Option<NodeId> {
        self.nodes
            .iter()
            .map(|(id, pos)| (haversine_m(p, *pos), *id))
            .filter(|(d, _)| *d <= SNAP_RADIUS_M)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        if lines.next().map(|(_, l)| l) != Some(GRAPH_MAGIC) {
            return Err(GraphError::MissingHeader);
        }
        let mut g = Self::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let id = |s: &str| s.parse::<NodeId>().map_err(|_| GraphError::BadRecord(no));
            let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(GraphError::BadRecord(no));
            match f[..] {
                ["N", nid, lat, lon] => {
                    let (lat, lon) = (num(lat)?, num(lon)?);
                    if lat.abs() > 90.0 || lon.abs() > 180.0 {
                        return Err(GraphError::BadRecord(no));
                    }
                    if !g.add_node(id(nid)?, LatLon::new(lat, lon)) {
                        return Err(GraphError::DuplicateNode(no));
                    }
                }
                ["E", a, b, bidir, poly] => {
                    let bidir = match bidir {
                        "0" => false,
                        "1" => true,
                        _ => return Err(GraphError::BadRecord(no)),
                    };
                    let polyline = poly
                        .split(';')
                        .filter(|s| !s.trim().is_empty())
                        .map(|pt| {
                            let mut it = pt.split_whitespace();
                            match (it.next(), it.next(), it.next()) {
                                (Some(lat), Some(lon), None) => Ok(LatLon::new(num(lat)?, num(lon)?)),
                                _ => Err(GraphError::BadRecord(no)),
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    g.add_edge_at(id(a)?, id(b)?, polyline, bidir, no)?;
                }
                _ => return Err(GraphError::BadRecord(no)),
            }
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{GRAPH_MAGIC}\n");
        for (id, p) in &self.nodes {
            out.push_str(&format!("N,{id},{},{}\n", p.lat, p.lon));
        }
        for e in &self.edges {
            let poly: Vec<String> = e.polyline.iter().map(|p| format!("{} {}", p.lat, p.lon)).collect();
            out.push_str(&format!("E,{},{},{},{}\n", e.a, e.b, u8::from(e.bidirectional), poly.join(";")));
        }
        out
    }
}

/// Points every `step_m` meters along the polyline, including both ends.
pub fn sample_polyline(poly: &[LatLon], step_m: f64) -> Vec<LatLon> {
    let mut out = vec![poly[0]];
    let mut carry = 0.0;
    for w in poly.windows(2) {
        let len = haversine_m(w[0], w[1]);
        let mut d = step_m - carry;
        while d < len {
            let t = d / len;
            out.push(LatLon::new(w[0].lat + t * (w[1].lat - w[0].lat), w[0].lon + t * (w[1].lon - w[0].lon)));
            d += step_m;
        }
        carry = len - (d - step_m);
    }
    let last = poly[poly.len() - 1];
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Surface quality of an edge, 1 (best) to 5.
///
/// The polyline is sampled every half cell. Among the distinct cells hit that
/// have data, means are averaged weighted by sample count. The share of sample
/// points that hit no data counts as [`NEUTRAL_QUALITY`].
pub fn edge_quality(edge: &Edge, grid: &SurfaceGrid) -> f64 {
    let points = sample_polyline(&edge.polyline, grid.params.cell_size_m / 2.0);
    let mut hit = BTreeMap::new();
    let mut covered = 0usize;
    for p in &points {
        let Ok(idx) = cell_of(*p, &grid.params) else { continue };
        if let Some(cell) = grid.cells.get(&idx).filter(|c| c.sample_count() > 0) {
            covered += 1;
            hit.entry(idx).or_insert(cell);
        }
    }
    if covered == 0 {
        return NEUTRAL_QUALITY;
    }
    let (sum, weight) = hit.values().fold((0.0, 0.0), |(s, w), c| {
        let n = c.sample_count() as f64;
        (s + n * c.mean().unwrap_or(NEUTRAL_QUALITY), w + n)
    });
    let coverage = covered as f64 / points.len() as f64;
    coverage * (sum / weight) + (1.0 - coverage) * NEUTRAL_QUALITY
}

/// `length · (1 + penalty · slider/10 · (q − 1))`.
pub fn edge_weight(length_m: f64, quality: f64, slider: u8, penalty_scale: f64) -> f64 {
    let q = quality.clamp(1.0, 5.0);
    let w = length_m * (1.0 + penalty_scale * f64::from(slider) / f64::from(MAX_SLIDER) * (q - 1.0));
    debug_assert!(w >= 0.0, "negative edge weight");
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteRequest {
    pub from: LatLon,
    pub to: LatLon,
    pub slider: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    pub nodes: Vec<NodeId>,
    pub polyline: Vec<LatLon>,
    pub total_length_m: f64,
    pub total_weight: f64,
    /// Length-weighted edge quality along the path.
    pub mean_quality: f64,
}

impl RouteResult {
    pub fn to_geojson(&self, slider: u8) -> Value {
        let coords: Vec<[f64; 2]> = self.polyline.iter().map(|p| [p.lon, p.lat]).collect();
        json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": {
                "length_m": self.total_length_m,
                "weight": self.total_weight,
                "mean_quality": self.mean_quality,
                "nodes": self.nodes,
                "sq": slider,
            },
        })
    }
}

/// A road graph with edge qualities precomputed against one grid snapshot.
#[derive(Debug, Clone)]
pub struct Router {
    graph: RoadGraph,
    qualities: Vec<f64>,
    penalty_scale: f64,
    neutral_at_node: BTreeMap<NodeId, f64>,
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (cost, node id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Router {
    pub fn new(graph: RoadGraph, grid: &SurfaceGrid) -> Self {
        Self::with_penalty(graph, grid, 1.0)
    }

    pub fn with_penalty(graph: RoadGraph, grid: &SurfaceGrid, penalty_scale: f64) -> Self {
        let qualities = graph.edges.iter().map(|e| edge_quality(e, grid)).collect();
        let neutral_at_node = graph
            .nodes
            .iter()
            .map(|(id, p)| {
                let q = cell_of(*p, &grid.params).ok().and_then(|c| grid.cell_quality(c));
                (*id, q.unwrap_or(NEUTRAL_QUALITY))
            })
            .collect();
        Self { graph, qualities, penalty_scale, neutral_at_node }
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn edge_qualities(&self) -> &[f64] {
        &self.qualities
    }

    fn weight(&self, edge: usize, slider: u8) -> f64 {
        edge_weight(self.graph.edges[edge].length_m, self.qualities[edge], slider, self.penalty_scale)
    }

    /// Label-setting search from `from` to `to`. Among equal-cost
    /// alternatives the predecessor with the smaller node id wins.
    pub fn shortest_path(&self, from: NodeId, to: NodeId, slider: u8) -> Result<RouteResult, RouteError> {
        if slider > MAX_SLIDER {
            return Err(RouteError::BadSlider(slider));
        }
        let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut pred: BTreeMap<NodeId, (NodeId, usize, bool)> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(from, 0.0);
        heap.push(Entry { cost: 0.0, node: from });
        while let Some(Entry { cost, node }) = heap.pop() {
            if cost > dist[&node] {
                continue;
            }
            if node == to {
                break;
            }
            for &(edge, next, forward) in self.graph.neighbours(node) {
                let w = self.weight(edge, slider);
                assert!(w >= 0.0, "negative edge weight {w}");
                let cand = cost + w;
                let better = match dist.get(&next) {
                    None => true,
                    Some(&d) => cand < d || (cand == d && pred.get(&next).is_some_and(|p| node < p.0)),
                };
                if better && next != from {
                    let improved = dist.get(&next).is_none_or(|&d| cand < d);
                    dist.insert(next, cand);
                    pred.insert(next, (node, edge, forward));
                    if improved {
                        heap.push(Entry { cost: cand, node: next });
                    }
                }
            }
        }
        let total_weight = *dist.get(&to).ok_or(RouteError::Unreachable)?;

        let mut hops = Vec::new();
        let mut cur = to;
        while cur != from {
            let (prev, edge, forward) = pred[&cur];
            hops.push((edge, forward));
            cur = prev;
        }
        hops.reverse();

        let mut nodes = vec![from];
        let mut polyline = vec![self.graph.nodes[&from]];
        let (mut length, mut qsum) = (0.0, 0.0);
        for (edge, forward) in hops {
            let e = &self.graph.edges[edge];
            let pts: Vec<LatLon> = if forward {
                e.polyline.clone()
            } else {
                e.polyline.iter().rev().copied().collect()
            };
            polyline.extend_from_slice(&pts[1..]);
            nodes.push(if forward { e.b } else { e.a });
            length += e.length_m;
            qsum += e.length_m * self.qualities[edge];
        }
        let mean_quality = if length > 0.0 { qsum / length } else { self.neutral_at_node[&from] };
        Ok(RouteResult { nodes, polyline, total_length_m: length, total_weight, mean_quality })
    }

    pub fn route(&self, req: &RouteRequest) -> Result<RouteResult, RouteError> {
        if req.slider > MAX_SLIDER {
            return Err(RouteError::BadSlider(req.slider));
        }
        let from = self.graph.snap(req.from).ok_or(RouteError::NoSnap(req.from))?;
        let to = self.graph.snap(req.to).ok_or(RouteError::NoSnap(req.to))?;
        self.shortest_path(from, to, req.slider)
    }
}

/// One-shot convenience over [`Router`].
pub fn shortest_route(graph: &RoadGraph, grid: &SurfaceGrid, req: &RouteRequest) -> Result<RouteResult, RouteError> {
    Router::new(graph.clone(), grid).route(req)
}
