use std::io::{Read, Write};

use crowdvote_core::{concentration_bound, OutcomeStats, Scenario};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema_version,scenario_id,mechanism,T,world,trials,lambda_A,stderr,error_rate_I,\
failure_bound,majority_wish,success_rate,seed";

/// One line of results per scenario and world. `world` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ResultsRow {
    pub schema_version: u32,
    pub scenario_id: String,
    pub mechanism: String,
    pub T: usize,
    pub world: usize,
    pub trials: Option<u64>,
    pub lambda_A: f64,
    pub stderr: f64,
    pub error_rate_I: f64,
    pub failure_bound: Option<f64>,
    pub majority_wish: String,
    /// Fraction of outcomes equal to the majority wish in this world.
    pub success_rate: f64,
    pub seed: Option<u64>,
}

impl ResultsRow {
    pub fn from_stats(scenario_id: &str, scenario: &Scenario, stats: &OutcomeStats) -> Vec<Self> {
        let bound = concentration_bound(scenario).ok().map(|b| b.failure_bound);
        (0..scenario.num_worlds())
            .map(|n| ResultsRow {
                schema_version: SCHEMA_VERSION,
                scenario_id: scenario_id.to_string(),
                mechanism: scenario.mechanism().id().to_string(),
                T: scenario.size(),
                world: n + 1,
                trials: stats.trials,
                lambda_A: stats.lambda_accept[n],
                stderr: stats.stderr[n],
                error_rate_I: stats.error_rate,
                failure_bound: bound,
                majority_wish: stats.majority_wish[n].code().to_string(),
                success_rate: stats.success[n],
                seed: stats.seed,
            })
            .collect()
    }
}

pub fn write_csv(rows: &[ResultsRow], out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_csv(input: impl Read) -> Result<Vec<ResultsRow>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| CliError::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(CliError::Parse(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Parse(e.to_string())))
        .collect()
}
