//! Command-line flags, the key-value config file and up-front validation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use transport_core::cost::Monotonicity;
use transport_core::diagram::DEFAULT_MAX_SET_SIZE;
use transport_core::formats::parse_key_values;
use transport_core::homogeneity::ClaimKind;
use transport_core::{MeasureKind, PopulationId};

use crate::error::CliError;

/// Config keys holding paths; relative values resolve against the config
/// file's directory.
const PATH_KEYS: [&str; 8] = [
    "diagram",
    "counts",
    "joint",
    "records",
    "scenario",
    "output",
    "joint-out",
    "counts-out",
];

#[derive(Debug, Clone, Parser)]
#[command(
    name = "transport",
    version,
    about = "Transport randomized-trial results to a target population"
)]
pub struct RunConfig {
    /// Key-value file supplying flags; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// d-separation queries and the transportability verdict of a diagram.
    Dsep(DsepArgs),
    /// Every minimal baseline set making the outcome transportable.
    AdjustSets(AdjustArgs),
    /// Transport a trial result by standardization.
    Standardize(StandardizeArgs),
    /// COST parameters and the target prediction they imply.
    Cost(CostArgs),
    /// Check one conditional effect homogeneity claim.
    Check(CheckArgs),
    /// Wald test of the selection coefficient in the no-interaction model.
    MisspecTest(MisspecArgs),
    /// Build an exact oracle table and optionally simulate trials from it.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dsep(_) => "dsep",
            Command::AdjustSets(_) => "adjust-sets",
            Command::Standardize(_) => "standardize",
            Command::Cost(_) => "cost",
            Command::Check(_) => "check",
            Command::MisspecTest(_) => "misspec-test",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Populations {
    /// Label of the study population.
    #[arg(long, default_value = PopulationId::STUDY)]
    pub source: PopulationId,
    /// Label of the target population.
    #[arg(long, default_value = PopulationId::TARGET)]
    pub target: PopulationId,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagramArgs {
    /// Selection diagram in the line-oriented text format.
    #[arg(long, value_name = "FILE")]
    pub diagram: PathBuf,
    /// Baseline nodes the search may use; every observed baseline node by
    /// default.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<String>>,
    /// Largest baseline set the search considers.
    #[arg(long, default_value_t = DEFAULT_MAX_SET_SIZE)]
    pub max_set_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DsepArgs {
    #[command(flatten)]
    pub diagram: DiagramArgs,
    /// `X Y | Z1 Z2`: whether X and Y are d-separated given the Z nodes.
    #[arg(long, value_name = "QUERY")]
    pub query: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub diagram: DiagramArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ApproachArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    Measure,
    #[value(name = "2")]
    #[serde(rename = "2")]
    PredictedRisk,
    #[value(name = "3")]
    #[serde(rename = "3")]
    Distribution,
    #[value(name = "ipw")]
    #[serde(rename = "ipw")]
    Ipw,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StandardizeArgs {
    /// Trial counts `population,<covariates...>,a,y,count`.
    #[arg(long, value_name = "FILE")]
    pub counts: PathBuf,
    /// 1 standardizes a measure, 2 predicted risks, 3 each counterfactual risk, ipw its weighted form.
    #[arg(long, value_enum)]
    pub approach: ApproachArg,
    /// Effect measure for approaches 1 and 2: rd, rr or or.
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    /// Covariates to standardize over.
    #[arg(long, value_delimiter = ',')]
    pub given: Vec<String>,
    #[command(flatten)]
    pub populations: Populations,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CostArgs {
    /// Joint counterfactual table: parameters are computed exactly.
    #[arg(long, value_name = "FILE", conflicts_with = "counts")]
    pub joint: Option<PathBuf>,
    /// Trial counts: parameters are identified under `--monotone`.
    #[arg(long, value_name = "FILE", requires = "monotone")]
    pub counts: Option<PathBuf>,
    /// Direction ruling out one joint cell: increasing or decreasing.
    #[arg(long, value_name = "DIRECTION")]
    pub monotone: Option<Monotonicity>,
    /// Covariates the parameters are conditioned on.
    #[arg(long, value_delimiter = ',')]
    pub given: Vec<String>,
    #[command(flatten)]
    pub populations: Populations,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    /// rd, rr, or, distribution, cost-introduce or cost-remove.
    #[arg(long)]
    pub claim: ClaimKind,
    /// Covariates the claim conditions on.
    #[arg(long, value_delimiter = ',')]
    pub given: Vec<String>,
    /// Joint counterfactual table `population,<covariates...>,y0,y1,mass`.
    #[arg(long, value_name = "FILE", conflicts_with = "counts")]
    pub joint: Option<PathBuf>,
    /// Trial counts; measure and distribution claims only.
    #[arg(long, value_name = "FILE")]
    pub counts: Option<PathBuf>,
    /// Largest residual still counted as equal.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MisspecArgs {
    /// Records `y,a,p,<covariates...>[,weight]`.
    #[arg(long, value_name = "FILE", conflicts_with = "counts")]
    pub records: Option<PathBuf>,
    /// Trial counts of exactly two populations; `--source` gets p = 1.
    #[arg(long, value_name = "FILE")]
    pub counts: Option<PathBuf>,
    /// Population coded p = 1 when fitting from counts.
    #[arg(long, default_value = PopulationId::STUDY)]
    pub source: PopulationId,
    /// Level of the Wald test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario key-value file.
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of simulated trials.
    #[arg(long, default_value_t = 0)]
    pub replicates: usize,
    /// Trial participants per population.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Probability of assignment to treatment, as a decimal or fraction.
    #[arg(long, default_value = "1/2")]
    pub assignment: String,
    /// Level of the Wald test in each replicate.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write the exact joint table to this file.
    #[arg(long, value_name = "FILE")]
    pub joint_out: Option<PathBuf>,
    /// Write the expected counts of the exact table to this file.
    #[arg(long, value_name = "FILE")]
    pub counts_out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses `args` (program name first), merging any `--config` file.
    pub fn from_args<I, T>(args: I) -> Result<RunConfig, CliError>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
        let merged = match config_path(&args) {
            Some(path) => merge_config(args, &path)?,
            None => args,
        };
        let config = RunConfig::try_parse_from(merged)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks that do not need the input contents: files exist, options
    /// fit together and approach 1 is not asked for a non-collapsible
    /// measure.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Validation(msg));
        for path in self.input_paths() {
            if !path.is_file() {
                return invalid(format!("{}: no such file", path.display()));
            }
        }
        match &self.command {
            Command::Standardize(a) => match (a.approach, a.measure) {
                (ApproachArg::Measure | ApproachArg::PredictedRisk, None) => {
                    return invalid("approaches 1 and 2 need --measure".into())
                }
                (ApproachArg::Measure, Some(m)) if !m.is_collapsible() => {
                    return invalid(format!(
                        "approach 1 averages stratum effects and {m} is not collapsible; use approach 2"
                    ))
                }
                _ => {}
            },
            Command::Cost(a) => {
                if a.joint.is_none() && a.counts.is_none() {
                    return invalid("cost needs --joint or --counts".into());
                }
                if a.joint.is_some() && a.monotone.is_some() {
                    return invalid("--monotone applies to --counts only".into());
                }
            }
            Command::Check(a) => {
                if a.joint.is_none() && a.counts.is_none() {
                    return invalid("check needs --joint or --counts".into());
                }
                if a.counts.is_some() && a.claim.needs_joint() {
                    return invalid(format!(
                        "claim {} concerns the joint of both counterfactuals; trial counts cannot show it",
                        a.claim
                    ));
                }
                if a.tol.is_nan() || a.tol < 0.0 {
                    return invalid(format!("--tol must be non-negative, got {}", a.tol));
                }
            }
            Command::MisspecTest(a) => {
                if a.records.is_none() && a.counts.is_none() {
                    return invalid("misspec-test needs --records or --counts".into());
                }
                check_alpha(a.alpha)?;
            }
            Command::Simulate(a) => {
                check_alpha(a.alpha)?;
                if a.replicates > 0 && a.n == 0 {
                    return invalid("--n must be positive".into());
                }
            }
            Command::Dsep(_) | Command::AdjustSets(_) => {}
        }
        Ok(())
    }

    fn input_paths(&self) -> Vec<&Path> {
        let mut paths: Vec<&Path> = Vec::new();
        match &self.command {
            Command::Dsep(a) => paths.push(&a.diagram.diagram),
            Command::AdjustSets(a) => paths.push(&a.diagram.diagram),
            Command::Standardize(a) => paths.push(&a.counts),
            Command::Cost(a) => paths.extend(a.joint.iter().chain(&a.counts).map(PathBuf::as_path)),
            Command::Check(a) => {
                paths.extend(a.joint.iter().chain(&a.counts).map(PathBuf::as_path))
            }
            Command::MisspecTest(a) => {
                paths.extend(a.records.iter().chain(&a.counts).map(PathBuf::as_path))
            }
            Command::Simulate(a) => paths.push(&a.scenario),
        }
        paths
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "--alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let arg = arg.to_string_lossy();
        if arg == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(PathBuf::from(path));
        }
    }
    None
}

fn given_on_command_line(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

/// Appends `--key value` for every config entry not already given on the
/// command line. `true`/`false` toggle switches; `query` takes several
/// `;`-separated values.
fn merge_config(mut args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let entries =
        parse_key_values(&text).map_err(|e| CliError::config_input(path.to_owned(), e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut extra: Vec<OsString> = Vec::new();
    for kv in entries {
        let key = kv.key.replace('_', "-");
        if key == "config" {
            return Err(CliError::Config {
                path: path.to_owned(),
                line: kv.line,
                message: "config files cannot include other config files".into(),
            });
        }
        let flag = format!("--{key}");
        if given_on_command_line(&args, &flag) {
            continue;
        }
        match kv.value.as_str() {
            "true" => extra.push(flag.into()),
            "false" => {}
            value if PATH_KEYS.contains(&key.as_str()) => {
                extra.push(flag.into());
                extra.push(base.join(value).into());
            }
            value if key == "query" => {
                for q in value.split(';').map(str::trim).filter(|q| !q.is_empty()) {
                    extra.push(flag.clone().into());
                    extra.push(q.into());
                }
            }
            value => {
                extra.push(flag.into());
                extra.push(value.into());
            }
        }
    }
    args.extend(extra);
    Ok(args)
}
