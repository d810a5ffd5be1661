use std::io::{self, Write};

use serde::Serialize;

/// Bumped whenever the column set or order changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 15] = [
    "run_id",
    "environment",
    "method",
    "seed",
    "noise_level",
    "T",
    "D",
    "c",
    "alpha",
    "beta",
    "gamma_n",
    "success",
    "episode_return",
    "nodes_expanded",
    "runtime_ms",
];

/// One executed episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub environment: String,
    pub method: String,
    pub seed: u64,
    pub noise_level: f64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_n: f64,
    pub success: u8,
    pub episode_return: f64,
    pub nodes_expanded: usize,
    /// Search time of the episode; estimator training is excluded.
    pub runtime_ms: f64,
}

impl RunRecord {
    fn fields(&self) -> [String; 15] {
        [
            self.run_id.to_string(),
            self.environment.clone(),
            self.method.clone(),
            self.seed.to_string(),
            self.noise_level.to_string(),
            self.t.to_string(),
            self.d.to_string(),
            self.c.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.gamma_n.to_string(),
            self.success.to_string(),
            self.episode_return.to_string(),
            self.nodes_expanded.to_string(),
            format!("{:.3}", self.runtime_ms),
        ]
    }
}

/// Writes the header and `records` sorted by `run_id`.
pub fn write_csv<W: Write>(out: &mut W, records: &[RunRecord]) -> io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.run_id);
    for r in sorted {
        writeln!(out, "{}", r.fields().join(","))?;
    }
    Ok(())
}
