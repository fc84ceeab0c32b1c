//! Command-line argument definitions.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "harvnet", version, about = "Community analysis of email-harvester networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the full pipeline on an event log and write cluster artifacts.
    Cluster(ClusterArgs),
    /// Generate a synthetic event log with planted ground truth.
    Synth(SynthArgs),
    /// Score a cluster assignment against ground truth or labels.
    Validate(ValidateArgs),
    /// Report monthly email volume per address collected.
    IngestReport(IngestReportArgs),
    /// Build similarity and graph artifacts without clustering.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ClusterArgs {
    /// Event log path (CSV or JSONL).
    #[arg(long)]
    pub log: PathBuf,

    /// Analysis month, e.g. 2006-10.
    #[arg(long)]
    pub month: Option<String>,

    /// Log format: csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,

    /// Similarity measure: server-usage or temporal.
    #[arg(long)]
    pub similarity: Option<String>,

    /// Neighbor count: "auto" (ceil(ln M), grown for connectivity) or an integer.
    #[arg(long)]
    pub k: Option<String>,

    /// Cluster count per large component: "auto" (eigengap) or an integer.
    #[arg(long = "K")]
    pub big_k: Option<String>,

    /// Phishing keyword file (one lowercase keyword per line, # comments).
    #[arg(long)]
    pub keywords: Option<PathBuf>,

    /// Components smaller than this become single clusters verbatim.
    #[arg(long)]
    pub min_component_size: Option<usize>,

    /// Eigengap floor on lambda_K.
    #[arg(long)]
    pub lambda_floor: Option<f64>,

    /// Eigensolver residual tolerance.
    #[arg(long)]
    pub eig_tol: Option<f64>,

    /// Output directory for artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also dump H and S' in coordinate format into this directory.
    #[arg(long)]
    pub dump_matrices: Option<PathBuf>,

    /// Key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Scenario config (JSON). Omit for the built-in default scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for events.csv and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    /// Cluster assignment CSV (harvester_ip,component_id,cluster_id).
    #[arg(long)]
    pub clusters: PathBuf,

    /// Ground-truth JSON from `synth`; reference labels are the planted
    /// communities.
    #[arg(long, conflicts_with = "labels")]
    pub ground_truth: Option<PathBuf>,

    /// Label CSV (harvester_ip,label); used as reference labels instead
    /// of ground truth.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    /// Temporal coincidence dump (coordinate format, rows aligned with
    /// the cluster CSV order); enables rho_avg for coordinated groups.
    #[arg(long)]
    pub temporal_dump: Option<PathBuf>,

    /// Output directory for validation.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct IngestReportArgs {
    /// Event log path.
    #[arg(long)]
    pub log: PathBuf,

    /// Log format: csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,

    /// Addresses-collected CSV (month,addresses). Without it, per-event
    /// address deltas are summed per month.
    #[arg(long)]
    pub addresses: Option<PathBuf>,

    /// Output directory for volume_report.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    /// Event log path.
    #[arg(long)]
    pub log: PathBuf,

    /// Analysis month, e.g. 2006-10.
    #[arg(long)]
    pub month: Option<String>,

    /// Log format: csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,

    /// Similarity measure: server-usage or temporal.
    #[arg(long)]
    pub similarity: Option<String>,

    /// Neighbor count: "auto" or an integer.
    #[arg(long)]
    pub k: Option<String>,

    /// Output directory for edges.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also dump H and S' in coordinate format into this directory.
    #[arg(long)]
    pub dump_matrices: Option<PathBuf>,

    /// Key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
