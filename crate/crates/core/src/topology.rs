//! Node deployment, unit-disk ground truth and channel assignment.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::seed;

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("transmission range must be positive, got {0}")]
    BadRange(f64),
    #[error("area must be positive, got {0}")]
    BadArea(Area),
    #[error(
        "no connected deployment of {nodes} nodes in {area} with r = {range} m after {attempts} attempts; \
         density is too low for this range"
    )]
    Infeasible {
        nodes: usize,
        area: Area,
        range: f64,
        attempts: usize,
    },
    #[error("similarity index {similarity} must be in [1, {pool}]")]
    BadSimilarity { similarity: u32, pool: u32 },
    #[error("deployment line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Node index in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinates {
    pub x: f64,
    pub y: f64,
}

impl Coordinates {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Coordinates) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Unit-disk reachability; a distance of exactly `range` is in range.
    pub fn within(&self, other: &Coordinates, range: f64) -> bool {
        self.distance(other) <= range
    }
}

/// Rectangular deployment area in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn square(side: f64) -> Self {
        Self::new(side, side)
    }

    pub fn contains(&self, c: &Coordinates) -> bool {
        (0.0..=self.width).contains(&c.x) && (0.0..=self.height).contains(&c.y)
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Area {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("area `{s}` must look like WIDTHxHEIGHT"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("area `{s}`: {e}"))
        };
        let area = Area::new(parse(w)?, parse(h)?);
        if !(area.width > 0.0 && area.height > 0.0) {
            return Err(format!("area `{s}` must be positive"));
        }
        Ok(area)
    }
}

/// Channel label in `[1, C]`. Primality is a property of the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn is_prime(self) -> bool {
        is_prime(self.0)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let n = n as u64;
    (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u32) -> u32 {
    (n.max(2)..).find(|&p| is_prime(p)).expect("primes are unbounded")
}

/// Splits a channel set into prime-labelled and non-prime-labelled lists,
/// both ascending. Label 1 is non-prime.
pub fn split_primality(channels: &[ChannelId]) -> (Vec<ChannelId>, Vec<ChannelId>) {
    let mut sorted = channels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.into_iter().partition(|c| c.is_prime())
}

/// Unit-disk ground truth for a fixed deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTopology {
    coords: Vec<Coordinates>,
    range: f64,
    edges: BTreeSet<(NodeId, NodeId)>,
    direct: Vec<BTreeSet<NodeId>>,
    indirect: Vec<BTreeSet<NodeId>>,
}

impl GroundTopology {
    /// Builds the ground truth for fixed coordinates. Does not require the
    /// graph to be connected; see [`GroundTopology::is_connected`].
    pub fn from_coordinates(coords: Vec<Coordinates>, range: f64) -> Self {
        let n = coords.len();
        let mut edges = BTreeSet::new();
        let mut direct = vec![BTreeSet::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if coords[i].within(&coords[j], range) {
                    edges.insert((NodeId(i), NodeId(j)));
                    direct[i].insert(NodeId(j));
                    direct[j].insert(NodeId(i));
                }
            }
        }
        let indirect = (0..n)
            .map(|i| {
                reachable(&direct, i)
                    .into_iter()
                    .filter(|j| j.0 != i && !direct[i].contains(j))
                    .collect()
            })
            .collect();
        Self {
            coords,
            range,
            edges,
            direct,
            indirect,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn coords(&self, node: NodeId) -> Coordinates {
        self.coords[node.0]
    }

    pub fn all_coords(&self) -> &[Coordinates] {
        &self.coords
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn connected(&self, a: NodeId, b: NodeId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&key)
    }

    /// Ground direct neighbour list DNL*.
    pub fn direct(&self, node: NodeId) -> &BTreeSet<NodeId> {
        &self.direct[node.0]
    }

    /// Ground indirect neighbour list INL*: reachable, not self, not direct.
    pub fn indirect(&self, node: NodeId) -> &BTreeSet<NodeId> {
        &self.indirect[node.0]
    }

    pub fn is_connected(&self) -> bool {
        self.coords.is_empty() || reachable(&self.direct, 0).len() == self.coords.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.coords.len()).map(NodeId)
    }

    /// One line per node: `id x y`, coordinates with 6 decimal places.
    pub fn export(&self) -> String {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{i} {:.6} {:.6}\n", c.x, c.y))
            .collect()
    }

    /// Parses the output of [`GroundTopology::export`]. Blank lines and lines
    /// starting with `#` are ignored; ids must be exactly `0..N` in order.
    pub fn import(text: &str, range: f64) -> Result<Self, TopologyError> {
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| TopologyError::Parse {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, x, y] = fields[..] else {
                return Err(err(format!("expected `id x y`, got `{line}`")));
            };
            let id: usize = id.parse().map_err(|e| err(format!("id: {e}")))?;
            if id != coords.len() {
                return Err(err(format!("expected id {}, got {id}", coords.len())));
            }
            let x: f64 = x.parse().map_err(|e| err(format!("x: {e}")))?;
            let y: f64 = y.parse().map_err(|e| err(format!("y: {e}")))?;
            coords.push(Coordinates::new(x, y));
        }
        Ok(Self::from_coordinates(coords, range))
    }
}

fn reachable(adj: &[BTreeSet<NodeId>], start: usize) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([NodeId(start)]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if seen.insert(v) {
                queue.push_back(v.0);
            }
        }
    }
    seen
}

/// Uniform placement without any connectivity requirement.
pub fn place_uniform<R: Rng + ?Sized>(n: usize, area: Area, rng: &mut R) -> Vec<Coordinates> {
    (0..n)
        .map(|_| {
            Coordinates::new(
                rng.random_range(0.0..=area.width),
                rng.random_range(0.0..=area.height),
            )
        })
        .collect()
}

/// Parameters for [`DeploymentSpec::deploy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentSpec {
    pub nodes: usize,
    pub area: Area,
    pub range: f64,
    pub max_attempts: usize,
}

impl DeploymentSpec {
    pub fn new(nodes: usize, area: Area, range: f64) -> Self {
        Self {
            nodes,
            area,
            range,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    /// Uniform placement, rejection-resampled until the unit-disk graph is
    /// connected.
    pub fn deploy(&self, seed: u64) -> Result<GroundTopology, TopologyError> {
        if self.nodes < 2 {
            return Err(TopologyError::TooFewNodes(self.nodes));
        }
        if self.range.is_nan() || self.range <= 0.0 {
            return Err(TopologyError::BadRange(self.range));
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return Err(TopologyError::BadArea(self.area));
        }
        let mut rng = seed::rng(seed);
        for _ in 0..self.max_attempts {
            let coords = place_uniform(self.nodes, self.area, &mut rng);
            let topo = GroundTopology::from_coordinates(coords, self.range);
            if topo.is_connected() {
                return Ok(topo);
            }
        }
        Err(TopologyError::Infeasible {
            nodes: self.nodes,
            area: self.area,
            range: self.range,
            attempts: self.max_attempts,
        })
    }
}

/// Per-node available channel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAssignment {
    pub pool: u32,
    pub similarity: u32,
    /// Channels given to every node.
    pub common: Vec<ChannelId>,
    /// Ascending channel list per node.
    pub sets: Vec<Vec<ChannelId>>,
}

impl ChannelAssignment {
    pub fn channels(&self, node: NodeId) -> &[ChannelId] {
        &self.sets[node.0]
    }

    pub fn overlap(&self, a: NodeId, b: NodeId) -> usize {
        let other: BTreeSet<_> = self.sets[b.0].iter().collect();
        self.sets[a.0].iter().filter(|c| other.contains(c)).count()
    }

    /// Same channel list for every node.
    pub fn uniform(n_nodes: usize, channels: &[ChannelId]) -> Self {
        let mut set = channels.to_vec();
        set.sort_unstable();
        set.dedup();
        let pool = set.iter().map(|c| c.0).max().unwrap_or(0);
        Self {
            pool,
            similarity: set.len() as u32,
            common: set.clone(),
            sets: vec![set; n_nodes],
        }
    }
}

/// Samples `similarity` common channels from `1..=pool` for every node, then
/// adds each remaining pool channel to each node with probability 1/2.
pub fn assign_channels<R: Rng + ?Sized>(
    n_nodes: usize,
    pool: u32,
    similarity: u32,
    rng: &mut R,
) -> Result<ChannelAssignment, TopologyError> {
    if similarity < 1 || similarity > pool {
        return Err(TopologyError::BadSimilarity { similarity, pool });
    }
    let mut common: Vec<ChannelId> = index::sample(rng, pool as usize, similarity as usize)
        .into_iter()
        .map(|i| ChannelId(i as u32 + 1))
        .collect();
    common.sort_unstable();
    let extras: Vec<ChannelId> = (1..=pool)
        .map(ChannelId)
        .filter(|c| !common.contains(c))
        .collect();
    let sets = (0..n_nodes)
        .map(|_| {
            let mut set = common.clone();
            set.extend(extras.iter().filter(|_| rng.random_bool(0.5)));
            set.sort_unstable();
            set
        })
        .collect();
    Ok(ChannelAssignment {
        pool,
        similarity,
        common,
        sets,
    })
}
