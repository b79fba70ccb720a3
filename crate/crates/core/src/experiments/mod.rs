//! Scenario grids, the replication runner and CSV output.
//!
//! A grid is the cartesian product protocols x terminations x N x C x m x PR,
//! enumerated in that order. Run `k` of cell `c` uses the seed
//! `derive(master_seed, [c, k])`, so results do not depend on how many
//! workers execute them.

mod config;
mod output;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run_once, RunConfig, RunRecord, ScenarioKey, DEFAULT_MAX_SLOTS, DEFAULT_RANGE};
use crate::hopping::Protocol;
use crate::metrics::{self, AggregateMetrics, MetricsError};
use crate::pr_activity::PrLevel;
use crate::protocol::TerminationPolicy;
use crate::seed;
use crate::topology::{Area, GroundTopology, TopologyError};

pub use config::parse_grid;
pub use output::{aggregate_csv, audit, runs_csv, AuditReport, AGGREGATE_HEADER, RUNS_HEADER};

/// Side of the square deployment area (meters) used unless a grid sets one.
pub const DEFAULT_AREA_SIDE: f64 = 250.0;

const FIXED_TOPOLOGY_TAG: u64 = 0x70_70;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("cell {cell}: {source}")]
    Metrics {
        cell: usize,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A termination entry in a grid; `native` means the protocol's own rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationChoice {
    Native,
    Fixed(TerminationPolicy),
}

impl TerminationChoice {
    pub fn resolve(&self, protocol: Protocol) -> TerminationPolicy {
        match self {
            TerminationChoice::Native => protocol.native_termination(),
            TerminationChoice::Fixed(p) => *p,
        }
    }
}

impl fmt::Display for TerminationChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationChoice::Native => f.write_str("native"),
            TerminationChoice::Fixed(p) => p.fmt(f),
        }
    }
}

impl FromStr for TerminationChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "native" => Ok(TerminationChoice::Native),
            other => other.parse().map(TerminationChoice::Fixed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub name: String,
    pub protocols: Vec<Protocol>,
    pub terminations: Vec<TerminationChoice>,
    pub nodes: Vec<usize>,
    pub channels: Vec<u32>,
    pub similarity: Vec<u32>,
    pub pr: Vec<PrLevel>,
    pub runs: usize,
    pub master_seed: u64,
    pub area: Area,
    pub range: f64,
    pub max_slots: u64,
    /// Share deployments and channel sets across cells with equal (N, C, m).
    pub fix_topology: bool,
    /// Replay this deployment in every run instead of drawing one.
    pub topology: Option<GroundTopology>,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            name: "run".into(),
            protocols: vec![Protocol::Mrdmca],
            terminations: vec![TerminationChoice::Native],
            nodes: vec![10],
            channels: vec![10],
            similarity: vec![2],
            pr: vec![PrLevel::Off],
            runs: 100,
            master_seed: 1,
            area: Area::square(DEFAULT_AREA_SIDE),
            range: DEFAULT_RANGE,
            max_slots: DEFAULT_MAX_SLOTS,
            fix_topology: false,
            topology: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub key: ScenarioKey,
}

impl ScenarioGrid {
    /// The built-in grids: `baseline`, `controlled` and `scale`.
    pub fn builtin(name: &str) -> Option<Self> {
        let all_pr = vec![PrLevel::Off, PrLevel::High];
        let base = ScenarioGrid {
            name: name.to_string(),
            nodes: vec![3, 10],
            channels: vec![10],
            similarity: vec![2, 5],
            pr: all_pr.clone(),
            runs: 1000,
            ..ScenarioGrid::default()
        };
        let controlled = vec![TerminationChoice::Fixed(TerminationPolicy::Controlled)];
        let mr_protocols = vec![Protocol::Rcs, Protocol::Mca, Protocol::Emca, Protocol::Mrdmca];
        match name {
            "baseline" => Some(ScenarioGrid {
                protocols: Protocol::ALL.to_vec(),
                terminations: vec![TerminationChoice::Native],
                ..base
            }),
            "controlled" => Some(ScenarioGrid {
                protocols: mr_protocols,
                terminations: controlled,
                ..base
            }),
            "scale" => Some(ScenarioGrid {
                protocols: mr_protocols,
                terminations: controlled,
                nodes: vec![20],
                channels: vec![20],
                ..base
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if [
            self.protocols.is_empty(),
            self.terminations.is_empty(),
            self.nodes.is_empty(),
            self.channels.is_empty(),
            self.similarity.is_empty(),
            self.pr.is_empty(),
        ]
        .contains(&true)
        {
            return err("every grid axis needs at least one value");
        }
        if self.runs == 0 {
            return err("runs must be at least 1");
        }
        if self.max_slots == 0 {
            return err("max_slots must be positive");
        }
        if self.range.is_nan() || self.range <= 0.0 {
            return err("range must be positive");
        }
        if self.nodes.iter().any(|&n| n < 2) {
            return err("nodes must be at least 2");
        }
        for &c in &self.channels {
            for &m in &self.similarity {
                if m < 1 || m > c {
                    return Err(ExperimentError::Config(format!(
                        "similarity {m} must be in [1, {c}]"
                    )));
                }
            }
        }
        if let Some(t) = &self.topology {
            if self.nodes.iter().any(|&n| n != t.len()) {
                return err("nodes must match the imported deployment");
            }
            if !t.is_connected() {
                return err("imported deployment is not connected");
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &protocol in &self.protocols {
            for term in &self.terminations {
                for &nodes in &self.nodes {
                    for &channels in &self.channels {
                        for &similarity in &self.similarity {
                            for &pr in &self.pr {
                                cells.push(Cell {
                                    index: cells.len(),
                                    key: ScenarioKey {
                                        protocol,
                                        termination: term.resolve(protocol),
                                        nodes,
                                        channels,
                                        similarity,
                                        pr,
                                        range: self.range,
                                        area: self.area,
                                        max_slots: self.max_slots,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn run_seed(&self, cell: usize, run: usize) -> u64 {
        seed::derive(self.master_seed, &[cell as u64, run as u64])
    }

    pub fn topology_seed(&self, cell: &Cell, run: usize) -> u64 {
        if self.fix_topology {
            let k = &cell.key;
            seed::derive(
                self.master_seed,
                &[
                    FIXED_TOPOLOGY_TAG,
                    k.nodes as u64,
                    k.channels as u64,
                    k.similarity as u64,
                    run as u64,
                ],
            )
        } else {
            self.run_seed(cell.index, run)
        }
    }

    /// Canonical text form; hashed into output metadata.
    pub fn canonical(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        format!(
            "name={};protocols={};terminations={};nodes={};channels={};similarity={};pr={};runs={};seed={};area={};range={};max_slots={};fix_topology={};topology={}",
            self.name,
            join(self.protocols.iter().map(|p| p.to_string()).collect()),
            join(self.terminations.iter().map(|t| t.to_string()).collect()),
            join(self.nodes.iter().map(|n| n.to_string()).collect()),
            join(self.channels.iter().map(|n| n.to_string()).collect()),
            join(self.similarity.iter().map(|n| n.to_string()).collect()),
            join(self.pr.iter().map(|n| n.to_string()).collect()),
            self.runs,
            self.master_seed,
            self.area,
            self.range,
            self.max_slots,
            self.fix_topology,
            self.topology.as_ref().map(|t| t.export()).unwrap_or_default().replace('\n', "|"),
        )
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One finished run, reduced to what the CSV outputs need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub cell: usize,
    pub run: usize,
    pub topology_seed: u64,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub aggregate: AggregateMetrics,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub grid: ScenarioGrid,
    pub cells: Vec<CellResult>,
    pub runs: Vec<RunRow>,
}

impl GridResult {
    pub fn incomplete(&self) -> usize {
        self.cells.iter().map(|c| c.aggregate.incomplete).sum()
    }

    pub fn cell(&self, protocol: Protocol, nodes: usize, similarity: u32, pr: PrLevel) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.cell.key.protocol == protocol
                && c.cell.key.nodes == nodes
                && c.cell.key.similarity == similarity
                && c.cell.key.pr == pr
        })
    }
}

fn execute(grid: &ScenarioGrid, cell: &Cell, run: usize, trace: bool) -> Result<RunRow, ExperimentError> {
    let mut cfg = RunConfig::new(cell.key.clone(), grid.run_seed(cell.index, run));
    cfg.trace = trace;
    let topology_seed = grid.topology_seed(cell, run);
    let (mut topo, chans) = cfg.prepare(topology_seed)?;
    if let Some(fixed) = &grid.topology {
        topo = fixed.clone();
    }
    let mut record = run_once(&cfg, &topo, &chans);
    // Tables are only needed for CTM, which is already computed.
    for n in &mut record.nodes {
        n.tables_at_term = None;
        n.final_tables = Default::default();
    }
    Ok(RunRow {
        cell: cell.index,
        run,
        topology_seed,
        record,
    })
}

/// Runs every cell of `grid` on `workers` threads. Output order is
/// (cell, run) whatever the worker count.
pub fn run_grid(grid: &ScenarioGrid, workers: usize) -> Result<GridResult, ExperimentError> {
    run_grid_traced(grid, workers, false)
}

pub fn run_grid_traced(grid: &ScenarioGrid, workers: usize, trace: bool) -> Result<GridResult, ExperimentError> {
    grid.validate()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.runs).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<RunRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| execute(grid, &cells[c], r, trace))
            .collect::<Result<_, _>>()
    })?;
    let results = cells
        .into_iter()
        .map(|cell| {
            let records: Vec<RunRecord> = rows
                .iter()
                .filter(|r| r.cell == cell.index)
                .map(|r| r.record.clone())
                .collect();
            let aggregate = metrics::aggregate(&records).map_err(|source| ExperimentError::Metrics {
                cell: cell.index,
                source,
            })?;
            Ok(CellResult { cell, aggregate })
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(GridResult {
        grid: grid.clone(),
        cells: results,
        runs: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_grids_have_expected_shape() {
        let b = ScenarioGrid::builtin("baseline").unwrap();
        assert_eq!(b.cells().len(), 5 * 2 * 2 * 2);
        assert_eq!(b.runs, 1000);
        let mr = b
            .cells()
            .into_iter()
            .find(|c| c.key.protocol == Protocol::Mrdmca)
            .unwrap();
        assert_eq!(mr.key.termination, TerminationPolicy::Controlled);
        let s = ScenarioGrid::builtin("scale").unwrap();
        assert!(s
            .cells()
            .iter()
            .all(|c| c.key.nodes == 20 && c.key.channels == 20 && c.key.termination == TerminationPolicy::Controlled));
        assert!(ScenarioGrid::builtin("nope").is_none());
    }

    #[test]
    fn fixed_topology_seed_ignores_protocol() {
        let grid = ScenarioGrid {
            protocols: vec![Protocol::Rcs, Protocol::Mrdmca],
            fix_topology: true,
            ..ScenarioGrid::default()
        };
        let cells = grid.cells();
        assert_eq!(grid.topology_seed(&cells[0], 3), grid.topology_seed(&cells[1], 3));
        assert_ne!(grid.run_seed(0, 3), grid.run_seed(1, 3));
        let free = ScenarioGrid { fix_topology: false, ..grid };
        assert_ne!(free.topology_seed(&cells[0], 3), free.topology_seed(&cells[1], 3));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let g = ScenarioGrid { similarity: vec![11], ..ScenarioGrid::default() };
        assert!(g.validate().is_err());
        let g = ScenarioGrid { runs: 0, ..ScenarioGrid::default() };
        assert!(g.validate().is_err());
        let g = ScenarioGrid { protocols: vec![], ..ScenarioGrid::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn hash_tracks_grid_contents() {
        let a = ScenarioGrid::default();
        let b = ScenarioGrid { master_seed: 2, ..a.clone() };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn smoke_grid_runs() {
        let g = ScenarioGrid {
            nodes: vec![3],
            similarity: vec![5],
            runs: 10,
            ..ScenarioGrid::default()
        };
        let res = run_grid(&g, 2).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.runs.len(), 10);
        assert_eq!(res.cells[0].aggregate.atm, 100.0);
        assert_eq!(res.incomplete(), 0);
    }
}
