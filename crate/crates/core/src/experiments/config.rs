//! Line-oriented grid files.
//!
//! ```text
//! # comments start with '#'
//! name = sweep-a
//! protocols = rcs, mca, emca, mdmca, mrdmca
//! terminations = native
//! nodes = 3, 10
//! channels = 10
//! similarity = 2, 5
//! pr = off, high, 0.5:0.1
//! runs = 200
//! seed = 7
//! area = 300x300
//! range = 100
//! max_slots = 50000
//! fix_topology = false
//! ```
//!
//! Keys not given keep the defaults of [`ScenarioGrid::default`].

use std::fmt::Display;
use std::str::FromStr;

use super::{ExperimentError, ScenarioGrid};

fn list<T>(key: &str, value: &str) -> Result<Vec<T>, ExperimentError>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| ExperimentError::Config(format!("{key}: `{v}`: {e}")))
        })
        .collect()
}

fn one<T>(key: &str, value: &str) -> Result<T, ExperimentError>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| ExperimentError::Config(format!("{key}: `{value}`: {e}")))
}

pub fn parse_grid(text: &str) -> Result<ScenarioGrid, ExperimentError> {
    let mut grid = ScenarioGrid {
        name: "sweep".into(),
        ..ScenarioGrid::default()
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ExperimentError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        match key {
            "name" => grid.name = value.trim().to_string(),
            "protocols" => grid.protocols = list(key, value)?,
            "terminations" => grid.terminations = list(key, value)?,
            "nodes" => grid.nodes = list(key, value)?,
            "channels" => grid.channels = list(key, value)?,
            "similarity" => grid.similarity = list(key, value)?,
            "pr" => grid.pr = list(key, value)?,
            "runs" => grid.runs = one(key, value)?,
            "seed" => grid.master_seed = one(key, value)?,
            "area" => grid.area = one(key, value)?,
            "range" => grid.range = one(key, value)?,
            "max_slots" => grid.max_slots = one(key, value)?,
            "fix_topology" => grid.fix_topology = one(key, value)?,
            other => {
                return Err(ExperimentError::Config(format!(
                    "line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    grid.validate()?;
    Ok(grid)
}
