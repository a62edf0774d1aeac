//! Plain-text checkpoints: `# key = value` header lines followed by one CSV
//! block per field. Floats are written in shortest round-trip form, so a
//! run resumed from a checkpoint continues bit for bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::ModelParams;
use crate::solver::State;

const MAGIC: &str = "# chemostab checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub state: State,
    /// Extra header entries (config hash, seed, ...), written in key order.
    pub meta: BTreeMap<String, String>,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    for (k, v) in &ck.meta {
        writeln!(out, "# {k} = {v}")?;
    }
    writeln!(out, "# t = {:e}", ck.state.t)?;
    writeln!(out, "# step = {}", ck.state.step)?;
    let params = serde_json::to_string(&ck.params).expect("params serialize");
    let grid = serde_json::to_string(ck.state.grid()).expect("grid serializes");
    writeln!(out, "# params = {params}")?;
    writeln!(out, "# grid = {grid}")?;
    for (name, f) in [("u", &ck.state.u), ("v", &ck.state.v), ("w", &ck.state.w)] {
        writeln!(out, "[{name}]")?;
        f.write_csv(out)?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut header = BTreeMap::new();
    let mut blocks: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut first = true;
    for line in input.lines() {
        let line = line?;
        if first {
            if line.trim() != MAGIC {
                return Err(bad("missing checkpoint header line"));
            }
            first = false;
            continue;
        }
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(name.to_string());
            blocks.insert(name.to_string(), String::new());
        } else if let Some(block) = &current {
            let text = blocks.get_mut(block).expect("block exists");
            text.push_str(trimmed);
            text.push('\n');
        } else if let Some(entry) = trimmed.strip_prefix('#') {
            let (k, v) = entry.split_once('=').ok_or_else(|| bad(format!("malformed header `{trimmed}`")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        } else if !trimmed.is_empty() {
            return Err(bad(format!("unexpected line `{trimmed}`")));
        }
    }
    let mut take = |key: &str| header.remove(key).ok_or_else(|| bad(format!("missing header `{key}`")));
    let t: f64 = take("t")?.parse().map_err(|_| bad("t is not a number"))?;
    let step: u64 = take("step")?.parse().map_err(|_| bad("step is not an integer"))?;
    let params: ModelParams =
        serde_json::from_str(&take("params")?).map_err(|e| bad(format!("params: {e}")))?;
    let grid: Grid = serde_json::from_str(&take("grid")?).map_err(|e| bad(format!("grid: {e}")))?;
    let grid = Grid::new(grid.lengths(), grid.cells())?;
    let mut field = |name: &str| -> Result<Field> {
        let text = blocks.remove(name).ok_or_else(|| bad(format!("missing block [{name}]")))?;
        Field::read_csv(grid, text.as_bytes())
    };
    let state = State { t, step, u: field("u")?, v: field("v")?, w: field("w")? };
    Ok(Checkpoint { params, state, meta: header })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::rect(1.0, 0.5, 3, 4).unwrap();
        let f = |k: f64| Field::from_fn(g, move |x, y| (k * x + y).exp() / 3.0 + 1e-300);
        let ck = Checkpoint {
            params: ModelParams {
                chi1: 0.1,
                chi2: 1.0 / 3.0,
                a1: 3.0,
                a2: 2.0,
                b1: 2.0,
                b2: 3.0,
                c1: 1.0,
                c2: 1.0,
                mu: 1.0,
                nu: 0.7,
                lambda: 1.3,
            },
            state: State { t: 0.1 + 0.2, step: 17, u: f(1.0), v: f(2.0), w: f(3.0) },
            meta: [("seed".to_string(), "7".to_string())].into_iter().collect(),
        };
        let mut buf = Vec::new();
        write_checkpoint(&ck, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(read_checkpoint("t,u\n1,2\n".as_bytes()).is_err());
    }
}
