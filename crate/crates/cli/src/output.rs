//! Writers for the run outputs.
//!
//! Text files are tab separated with a header row naming the columns. The
//! binary paths file holds four little-endian `u64` (sample count, node
//! count, dimension, 0) followed by the samples as little-endian `f64` in
//! sample, node, component order.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use pathmc::model::TimeGrid;
use pathmc::recursion::Ladder;
use pathmc::reweight::{weighted_moments, EndpointEnsemble};
use pathmc::sampler::SampleSet;

use crate::{io_error, CliError};

pub const PATHS_TEXT: &str = "paths.tsv";
pub const PATHS_BINARY: &str = "paths.bin";
pub const ENDPOINTS: &str = "endpoints.tsv";
pub const WEIGHTS: &str = "weights.tsv";
pub const MOMENTS: &str = "moments.tsv";
pub const DIAGNOSTICS: &str = "diagnostics.txt";
pub const LADDER: &str = "ladder.txt";
pub const CONFIG_ECHO: &str = "config.resolved.toml";

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(io_error(path))?;
    file.write_all(bytes).map_err(io_error(path))
}

fn component_header(prefix: &str, d: usize) -> String {
    (1..=d).map(|i| format!("\t{prefix}{i}")).collect()
}

/// All paths of `sets` in order, one row per sample and node.
pub fn write_paths(
    dir: &Path,
    grid: &TimeGrid,
    sets: &[SampleSet],
    binary: bool,
) -> Result<(), CliError> {
    let d = sets[0].paths[0].dim();
    let nodes = grid.node_count();
    let total: usize = sets.iter().map(SampleSet::len).sum();
    if binary {
        let mut bytes = Vec::with_capacity(32 + 8 * total * nodes * d);
        for v in [total as u64, nodes as u64, d as u64, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for path in sets.iter().flat_map(|s| &s.paths) {
            for v in path.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        return write_file(&dir.join(PATHS_BINARY), &bytes);
    }
    let mut text = format!("sample\tnode\ttime{}\n", component_header("x", d));
    for (s, path) in sets.iter().flat_map(|s| &s.paths).enumerate() {
        for n in 0..nodes {
            let _ = write!(text, "{s}\t{n}\t{}", grid.time(n));
            for v in path.node(n) {
                let _ = write!(text, "\t{v}");
            }
            text.push('\n');
        }
    }
    write_file(&dir.join(PATHS_TEXT), text.as_bytes())
}

pub fn write_free_endpoints(dir: &Path, set: &SampleSet) -> Result<(), CliError> {
    let d = set.endpoint_values[0].len();
    let mut text = format!(
        "sample{}\taction\tapprox_action\n",
        component_header("x", d)
    );
    for (i, x) in set.endpoint_values.iter().enumerate() {
        let _ = write!(text, "{i}");
        for v in x.iter() {
            let _ = write!(text, "\t{v}");
        }
        let _ = writeln!(text, "\t{}\t{}", set.actions[i], set.approx_actions[i]);
    }
    write_file(&dir.join(ENDPOINTS), text.as_bytes())
}

pub fn write_trial_endpoints(dir: &Path, ensemble: &EndpointEnsemble) -> Result<(), CliError> {
    let d = ensemble.endpoints[0].len();
    let mut text = format!("endpoint{}\n", component_header("x", d));
    for (i, x) in ensemble.endpoints.iter().enumerate() {
        let _ = write!(text, "{i}");
        for v in x.iter() {
            let _ = write!(text, "\t{v}");
        }
        text.push('\n');
    }
    write_file(&dir.join(ENDPOINTS), text.as_bytes())
}

pub fn write_weights(dir: &Path, ensemble: &EndpointEnsemble) -> Result<(), CliError> {
    let mut text = String::from("endpoint\tlog_trial_density\tlog_consistency\tweight\n");
    for i in 0..ensemble.len() {
        let _ = writeln!(
            text,
            "{i}\t{}\t{}\t{}",
            ensemble.log_trial_density[i], ensemble.log_consistency[i], ensemble.weights[i]
        );
    }
    write_file(&dir.join(WEIGHTS), text.as_bytes())
}

/// Weighted first and second moments at every node; `j` is empty for the
/// first moment.
pub fn write_moments(
    dir: &Path,
    sets: &[SampleSet],
    weights: &[f64],
    final_node: usize,
) -> Result<(), CliError> {
    let mut text = String::from("node\torder\ti\tj\tvalue\n");
    for node in 0..=final_node {
        for order in 1..=2 {
            let m = weighted_moments(sets, weights, node, order).map_err(|source| {
                CliError::Numerical {
                    stage: "reweight",
                    source,
                }
            })?;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let col = if order == 1 {
                        String::new()
                    } else {
                        (j + 1).to_string()
                    };
                    let _ = writeln!(text, "{node}\t{order}\t{}\t{col}\t{}", i + 1, m[(i, j)]);
                }
            }
        }
    }
    write_file(&dir.join(MOMENTS), text.as_bytes())
}

/// `key = value` report of acceptance, per-level counts, action statistics
/// and ladder conditioning.
pub fn write_diagnostics(
    dir: &Path,
    ladder: &Ladder,
    sets: &[SampleSet],
    ensemble: Option<&EndpointEnsemble>,
) -> Result<(), CliError> {
    let mut text = String::new();
    let proposals: u64 = sets
        .iter()
        .map(|s| s.level_diagnostics[ladder.levels()].proposals)
        .sum();
    let accepted: u64 = sets
        .iter()
        .map(|s| s.level_diagnostics[ladder.levels()].accepted)
        .sum();
    let _ = writeln!(
        text,
        "acceptance_rate = {}",
        accepted as f64 / proposals as f64
    );
    let _ = writeln!(text, "proposals = {proposals}");
    let _ = writeln!(text, "accepted = {accepted}");
    for k in 0..=ladder.levels() {
        let p: u64 = sets.iter().map(|s| s.level_diagnostics[k].proposals).sum();
        let a: u64 = sets.iter().map(|s| s.level_diagnostics[k].accepted).sum();
        let _ = writeln!(text, "level.{k}.proposals = {p}");
        let _ = writeln!(text, "level.{k}.accepted = {a}");
    }
    for (name, values) in [
        (
            "action",
            sets.iter()
                .flat_map(|s| &s.actions)
                .copied()
                .collect::<Vec<_>>(),
        ),
        (
            "approx_action",
            sets.iter()
                .flat_map(|s| &s.approx_actions)
                .copied()
                .collect(),
        ),
    ] {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(text, "{name}.mean = {mean}");
        let _ = writeln!(text, "{name}.min = {min}");
    }
    let non_finite: u64 = sets.iter().map(|s| s.non_finite_proposals).sum();
    let _ = writeln!(text, "non_finite_proposals = {non_finite}");
    for (k, c) in ladder.condition_numbers().iter().enumerate() {
        let _ = writeln!(text, "ladder.{k}.condition_number = {c}");
    }
    if let Some(e) = ensemble {
        let _ = writeln!(text, "endpoints = {}", e.len());
        for (i, w) in &e.warnings {
            let _ = writeln!(text, "warning = endpoint {i}: {w}");
        }
    }
    for (i, set) in sets.iter().enumerate() {
        for w in &set.warnings {
            let _ = writeln!(text, "warning = set {i}: {w}");
        }
    }
    write_file(&dir.join(DIAGNOSTICS), text.as_bytes())
}

pub fn write_ladder(dir: &Path, ladder: &Ladder) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    let path = dir.join(LADDER);
    ladder.write_dump(&mut bytes).map_err(io_error(&path))?;
    write_file(&path, &bytes)
}
