//! Experiment plans, CSV rows and a markdown summary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::simulation::{run_experiment, AggregateReport, Algorithm, ExperimentConfig, SimOptions};

/// Column order of the results CSV. Changing it is a format version bump.
pub const CSV_COLUMNS: [&str; 14] = [
    "domain",
    "algorithm",
    "N",
    "M",
    "B",
    "epsilon",
    "mean_reward_per_arm",
    "std_reward",
    "fair_fraction",
    "mean_gap",
    "wall_time_ms",
    "epochs",
    "horizon",
    "seed",
];

pub const MISSING: &str = "NA";

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::CwiBa]
}

fn default_horizon() -> usize {
    100
}

fn default_epochs() -> usize {
    50
}

/// One domain run under several algorithms, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub domain: DomainSpec,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Base episode seed; defaults to the domain seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub options: SimOptions,
}

impl ExperimentPlan {
    pub fn new(domain: DomainSpec, algorithms: Vec<Algorithm>) -> Self {
        Self {
            domain,
            algorithms,
            horizon: default_horizon(),
            epochs: default_epochs(),
            seed: None,
            options: SimOptions::default(),
        }
    }

    pub fn configs(&self) -> Vec<ExperimentConfig> {
        self.algorithms
            .iter()
            .map(|&algorithm| ExperimentConfig {
                domain: self.domain.clone(),
                algorithm,
                horizon: self.horizon,
                epochs: self.epochs,
                base_seed: self.seed.unwrap_or(self.domain.seed),
                options: self.options,
            })
            .collect()
    }
}

/// Parses a config file holding one plan object or an array of plans.
pub fn parse_plans(text: &str) -> Result<Vec<ExperimentPlan>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(vec![serde_json::from_value(value)?])
    }
}

/// An experiment and what came of it.
#[derive(Debug)]
pub struct RowOutcome {
    pub config: ExperimentConfig,
    pub result: Result<AggregateReport>,
}

impl RowOutcome {
    pub fn run(config: ExperimentConfig) -> Self {
        let result = run_experiment(&config);
        Self { config, result }
    }

    pub fn is_size_error(&self) -> bool {
        matches!(&self.result, Err(e) if e.is_size())
    }
}

/// Runs every configuration of every plan in order.
pub fn run_plans(plans: &[ExperimentPlan]) -> Vec<RowOutcome> {
    plans
        .iter()
        .flat_map(ExperimentPlan::configs)
        .map(RowOutcome::run)
        .collect()
}

fn error_marker(e: &Error) -> &'static str {
    match e {
        Error::Size { .. } => "ERR:size",
        Error::Invalid(_) | Error::NonIntegerCost { .. } | Error::Domain(_) => "ERR:validation",
        Error::Parse { .. } | Error::Config(_) => "ERR:config",
        Error::Io(_) => "ERR:io",
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// CSV fields for one outcome. With `timing` off the wall time is written as
/// `NA`, which makes the file reproducible byte for byte.
pub fn csv_record(row: &RowOutcome, timing: bool) -> Vec<String> {
    let c = &row.config;
    let mut out = vec![
        c.domain.kind.to_string(),
        c.algorithm.to_string(),
        c.domain.num_arms.to_string(),
        c.domain.num_workers.to_string(),
        c.domain.budget().to_string(),
        c.domain.fairness_eps().to_string(),
    ];
    match &row.result {
        Ok(r) => out.extend([
            num(r.mean_reward_per_arm),
            num(r.std_reward),
            num(r.fair_fraction),
            num(r.mean_gap),
            if timing {
                format!("{:.3}", r.wall_time_ms)
            } else {
                MISSING.to_string()
            },
        ]),
        Err(e) => {
            out.push(error_marker(e).to_string());
            out.extend(std::iter::repeat_n(MISSING.to_string(), 4));
        }
    }
    out.extend([
        c.epochs.to_string(),
        c.horizon.to_string(),
        c.base_seed.to_string(),
    ]);
    out
}

pub fn write_csv<W: Write>(rows: &[RowOutcome], sink: W, header: bool, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(e.into());
    if header {
        w.write_record(CSV_COLUMNS).map_err(io)?;
    }
    for row in rows {
        w.write_record(csv_record(row, timing)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders the rows as a CSV string, header included.
pub fn csv_string(rows: &[RowOutcome], timing: bool) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf, true, timing).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Pipe table with one line per outcome.
pub fn markdown_summary(rows: &[RowOutcome]) -> String {
    let mut out = String::from(
        "| domain | algorithm | N | M | B | mean reward/arm | std | fair fraction | mean gap |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for row in rows {
        let c = &row.config;
        let metrics = match &row.result {
            Ok(r) => format!(
                "{:.4} | {:.4} | {:.3} | {:.3}",
                r.mean_reward_per_arm, r.std_reward, r.fair_fraction, r.mean_gap
            ),
            Err(e) => format!("{} | | | ", error_marker(e)),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            c.domain.kind,
            c.algorithm,
            c.domain.num_arms,
            c.domain.num_workers,
            c.domain.budget(),
            metrics
        ));
    }
    out
}
