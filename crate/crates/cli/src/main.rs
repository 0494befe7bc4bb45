use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use metric_forge::asymmetry::{agent_data_regret, asym_regret, marginalize_mu0};
use metric_forge::checks::{run_all, CheckConfig};
use metric_forge::datasets::ImputationStrategy;
use metric_forge::experiments::{
    curve, evaluate, fit_pipeline, load_dataset, DatasetKind, ModelArtifact,
};
use metric_forge::glm::{ColumnSource, DEFAULT_RIDGE};
use metric_forge::population::{PolicyClass, PopulationModel};
use metric_forge::ranking::{audit_rankings, AgentProfile, ViolationKind};

#[derive(Parser)]
#[command(
    name = "metric-forge",
    version,
    about = "Accountability metric analysis for treatment policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the outcome model for a dataset and write the model artifact.
    Fit(Common),
    /// Utility, regret and treatment rate per reward function.
    Evaluate(Common),
    /// Score agents and audit the ranking properties.
    Rank(RankArgs),
    /// Regret under information asymmetry with its bounds.
    Asym(AsymArgs),
    /// Per-feature bias and the cumulative-feature regret curve.
    Curve(Common),
    /// Run the seeded property suite.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Impute {
    Median,
    Drop,
}

impl From<Impute> for ImputationStrategy {
    fn from(v: Impute) -> Self {
        match v {
            Impute::Median => ImputationStrategy::Median,
            Impute::Drop => ImputationStrategy::Drop,
        }
    }
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Common {
    /// `horse-colic`, `ist`, or a model artifact written by `fit`.
    #[arg(long)]
    dataset: String,
    /// Raw data file; defaults to the file under $METRIC_FORGE_DATA_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "median")]
    impute: Impute,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Accepted for uniformity; dataset commands are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the expected cohort size and treatment rate check.
    #[arg(long)]
    skip_cohort_check: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct RankArgs {
    /// JSON file with `agents` and `reference`.
    #[arg(long)]
    dataset: PathBuf,
    /// Score with the reference-reweighted total effect.
    #[arg(long)]
    reweight: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Auxiliary,
    Agent,
}

#[derive(Args)]
struct AsymArgs {
    /// Joint population JSON, or a dataset name / model artifact together
    /// with `--known`.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated features the principal observes (dataset input).
    #[arg(long, value_delimiter = ',')]
    known: Vec<String>,
    #[arg(long, value_enum, default_value = "auxiliary")]
    estimator: Estimator,
    /// Minimum untreated probability for the agent-data estimator.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "median")]
    impute: Impute,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long)]
    skip_cohort_check: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    models: usize,
    #[arg(long, default_value_t = 1000)]
    joint_models: usize,
    #[arg(long, default_value_t = 200)]
    agent_pairs: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Deserialize)]
struct RankInput {
    agents: Vec<AgentProfile>,
    reference: Vec<f64>,
}

/// Six significant digits, trailing zeros dropped.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mantissa, exponent) = s.split_once('e').expect("scientific notation");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

fn emit<T: Serialize>(output: &Output, value: &T, table: impl FnOnce() -> Table) -> Result<()> {
    let text = match output.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(value)?;
            s.push('\n');
            s
        }
        Format::Csv => table().render(),
    };
    match &output.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn artifact(
    dataset: &str,
    data: Option<&Path>,
    impute: Impute,
    ridge: f64,
    skip: bool,
) -> Result<ModelArtifact> {
    if let Some(kind) = DatasetKind::from_name(dataset) {
        let path = data
            .map(Path::to_path_buf)
            .unwrap_or_else(|| kind.default_path());
        let ds = load_dataset(kind, &path, impute.into(), !skip)?;
        return Ok(fit_pipeline(kind, &ds, impute.into(), ridge)?);
    }
    let text = fs::read_to_string(dataset).with_context(|| format!("reading {dataset}"))?;
    serde_json::from_str(&text).with_context(|| format!("{dataset} is not a model artifact"))
}

fn cmd_fit(a: &Common) -> Result<()> {
    let art = artifact(
        &a.dataset,
        a.data.as_deref(),
        a.impute,
        a.ridge,
        a.skip_cohort_check,
    )?;
    emit(&a.output, &art, || {
        let f = &art.fit;
        let mut rows = vec![
            vec!["intercept".into(), String::new(), sig6(f.beta0)],
            vec!["treatment".into(), String::new(), sig6(f.beta2)],
        ];
        for (term, betas) in [("main", &f.beta1), ("interaction", &f.beta3)] {
            for (c, b) in f.encoding.columns.iter().zip(betas.iter()) {
                let name = match c {
                    ColumnSource::Level { feature, level } => format!("{feature}={level}"),
                    ColumnSource::Numeric { feature, .. } => feature.clone(),
                };
                rows.push(vec![term.into(), name, sig6(*b)]);
            }
        }
        Table {
            header: vec!["term", "column", "coefficient"],
            rows,
        }
    })
}

fn cmd_evaluate(a: &Common) -> Result<()> {
    let art = artifact(
        &a.dataset,
        a.data.as_deref(),
        a.impute,
        a.ridge,
        a.skip_cohort_check,
    )?;
    let rep = evaluate(&art)?;
    emit(&a.output, &rep, || Table {
        header: vec!["reward", "utility", "regret", "treat_rate"],
        rows: rep
            .table
            .iter()
            .map(|r| {
                vec![
                    r.reward.clone(),
                    sig6(r.utility),
                    sig6(r.regret),
                    sig6(r.treat_rate),
                ]
            })
            .collect(),
    })
}

fn cmd_curve(a: &Common) -> Result<()> {
    let art = artifact(
        &a.dataset,
        a.data.as_deref(),
        a.impute,
        a.ridge,
        a.skip_cohort_check,
    )?;
    let rep = curve(&art)?;
    emit(&a.output, &rep, || Table {
        header: vec!["prefix_size", "feature_name", "gamma_marg", "regret"],
        rows: rep
            .curve
            .iter()
            .map(|p| {
                vec![
                    p.prefix_size.to_string(),
                    p.feature_name.clone(),
                    sig6(p.gamma_marg),
                    sig6(p.regret),
                ]
            })
            .collect(),
    })
}

fn cmd_rank(a: &RankArgs) -> Result<()> {
    let text = fs::read_to_string(&a.dataset)
        .with_context(|| format!("reading {}", a.dataset.display()))?;
    let input: RankInput = serde_json::from_str(&text).context("parsing ranking input")?;
    let rep = audit_rankings(&input.agents, &input.reference, a.reweight)?;
    emit(&a.output, &rep, || Table {
        header: vec![
            "id",
            "score",
            "rank",
            "uniform_violation",
            "relative_violation",
        ],
        rows: rep
            .ordering
            .iter()
            .map(|id| {
                let s = rep
                    .scores
                    .iter()
                    .find(|s| &s.id == id)
                    .expect("scored agent");
                vec![
                    id.clone(),
                    sig6(s.score),
                    s.rank.to_string(),
                    rep.has_violation(id, ViolationKind::Uniform).to_string(),
                    rep.has_violation(id, ViolationKind::Relative).to_string(),
                ]
            })
            .collect(),
    })
}

fn cmd_asym(a: &AsymArgs) -> Result<()> {
    let model: PopulationModel = if a.dataset.ends_with(".json") && a.known.is_empty() {
        let text =
            fs::read_to_string(&a.dataset).with_context(|| format!("reading {}", a.dataset))?;
        match serde_json::from_str::<PopulationModel>(&text) {
            Ok(m) => m,
            Err(_) => bail!(
                "{} is not a joint population; pass --known to use a model artifact",
                a.dataset
            ),
        }
    } else {
        let art = artifact(
            &a.dataset,
            a.data.as_deref(),
            a.impute,
            a.ridge,
            a.skip_cohort_check,
        )?;
        let pop = &art.population;
        let known = a
            .known
            .iter()
            .map(|f| {
                pop.feature_index(f)
                    .ok_or_else(|| anyhow!("unknown feature {f:?}"))
            })
            .collect::<Result<Vec<_>>>()?;
        pop.joint_model(&known)?
    };
    if !model.has_unobserved() {
        bail!("asymmetry needs a joint model with hidden covariates");
    }
    let rep = match a.estimator {
        Estimator::Auxiliary => asym_regret(&model, &marginalize_mu0(&model)?)?,
        Estimator::Agent => {
            agent_data_regret(&model, &PolicyClass::untreated_positivity(a.epsilon)?)?
        }
    };
    emit(&a.output, &rep, || Table {
        header: vec![
            "estimator",
            "gamma_marg",
            "gamma_max",
            "regret",
            "bound_marg",
            "bound_max",
            "utility",
            "treat_rate",
        ],
        rows: vec![vec![
            rep.estimator_source.clone(),
            sig6(rep.gamma_marg),
            sig6(rep.gamma_max),
            sig6(rep.regret),
            sig6(rep.bound_marg),
            sig6(rep.bound_max),
            sig6(rep.utility),
            sig6(rep.treat_rate),
        ]],
    })
}

/// Returns whether every check passed.
fn cmd_check(a: &CheckArgs) -> Result<bool> {
    let cfg = CheckConfig {
        seed: a.seed,
        models: a.models,
        joint_models: a.joint_models,
        agent_pairs: a.agent_pairs,
    };
    let results = run_all(&cfg)?;
    emit(&a.output, &results, || Table {
        header: vec!["check", "passed", "cases", "worst", "tolerance", "detail"],
        rows: results
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    c.passed.to_string(),
                    c.cases.to_string(),
                    sig6(c.worst),
                    sig6(c.tolerance),
                    c.detail.clone(),
                ]
            })
            .collect(),
    })?;
    for c in &results {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(results.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::Curve(a) => cmd_curve(a).map(|_| true),
        Command::Rank(a) => cmd_rank(a).map(|_| true),
        Command::Asym(a) => cmd_asym(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
