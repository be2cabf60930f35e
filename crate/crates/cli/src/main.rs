use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use equity_core::casestudy::{run_case_study, ReportFormat, RunConfig};
use equity_core::learner::{train, TrainedModel};
use equity_core::loopsim::{run_inequity_loop, LoopRecord, LoopTrajectory, Regime, SyntheticConfig};
use equity_core::metrics::{proxy_gaps, GapReport, ModelProfile, DEFAULT_EPSILON};
use equity_core::report::{case_study_reports, emit_report, long_rows, write_long_csv};
use equity_core::scoring::{run_equity_scoring, ModelSpace, ScoringConfig, ScoringTrace};
use equity_core::{checklist, io as dataio, EquityError, Group, ObstacleModel};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "equity", version, about = "Audit access, outcomes and utilization of decision pipelines")]
struct Cli {
    /// Seed overriding the one in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with settings for the chosen subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Metrics on a CSV of predictions, labels and groups.
    Audit {
        /// Comma-delimited file with columns pred, label, group and optionally y_tt, accessed.
        input: PathBuf,
    },
    /// Iterative equity scoring over proxy and intended model spaces.
    Score {
        /// JSON file holding `proxy` and `intended` model spaces.
        spaces: PathBuf,
        /// Report proxy gaps of the first candidate specs before scoring.
        #[arg(long)]
        gaps: bool,
    },
    /// Student-admissions case study over the eight equity regimes.
    Casestudy {
        /// UCI student-performance file; overrides `input` in the config.
        input: Option<PathBuf>,
    },
    /// Multi-round ground-truth curation on synthetic cohorts.
    SimulateLoop {
        /// Regimes to run, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = Regime::ALL.to_vec())]
        regime: Vec<Regime>,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
    },
    /// Feature, label and obstacle gaps between two model profiles.
    Gaps {
        proxy: PathBuf,
        intended: PathBuf,
        /// Saved proxy model whose features and importances replace those in the profile.
        #[arg(long)]
        proxy_model: Option<PathBuf>,
        #[arg(long)]
        intended_model: Option<PathBuf>,
    },
    /// Print the guiding-questions checklist.
    Questions,
}

#[derive(Deserialize)]
#[serde(default)]
struct AuditConfig {
    epsilon: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { epsilon: DEFAULT_EPSILON }
    }
}

#[derive(Deserialize)]
struct ScoringInput {
    proxy: ModelSpace,
    intended: ModelSpace,
}

#[derive(Serialize)]
struct ScoringOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    gaps: Option<GapReport>,
    trace: ScoringTrace,
}

#[derive(Serialize)]
struct LoopSummary<'a> {
    regime: Regime,
    seed_size: usize,
    disadvantaged_group: Group,
    mean_zeta: Option<f64>,
    records: &'a [LoopRecord],
}

/// A model profile on disk; features and importances may come from a saved model instead.
#[derive(Deserialize)]
struct ProfileFile {
    feature_names: Option<Vec<String>>,
    importance: Option<Vec<f64>>,
    obstacles: ObstacleModel,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|c| c.downcast_ref::<EquityError>()) {
        Some(e) if e.is_degenerate_metric() => EXIT_DEGENERATE,
        _ => EXIT_DATA,
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format.unwrap_or(Format::Json);
    let out = cli.out.as_deref();
    let config = cli.config.as_deref();
    match cli.command {
        Command::Audit { input } => {
            let cfg: AuditConfig = load_config(config)?;
            let rows = dataio::read_audit_file(&input)?;
            let report = dataio::audit(&rows, cfg.epsilon)?;
            match format {
                Format::Json => emit_json(out, "audit", &report),
                Format::Csv => emit_text(out, "audit.csv", |w| write_audit_csv(&report, w)),
            }
        }
        Command::Score { spaces, gaps } => {
            let mut cfg: ScoringConfig = load_config(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let input: ScoringInput = dataio::read_json(&spaces)?;
            let gaps = if gaps { Some(first_spec_gaps(&input, cfg.seed)?) } else { None };
            let trace = run_equity_scoring(&input.proxy, &input.intended, &cfg)?;
            match format {
                Format::Json => emit_json(out, "score", &ScoringOutput { gaps, trace }),
                Format::Csv => emit_text(out, "score.csv", |w| Ok(trace.write_csv(w)?)),
            }
        }
        Command::Casestudy { input } => {
            let mut cfg: RunConfig = load_config(config)?;
            if let Some(input) = input {
                cfg.input = input;
            }
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(dir) = out {
                cfg.out_dir = Some(dir.to_path_buf());
            }
            if let Some(f) = cli.format {
                cfg.formats = vec![f.into()];
            }
            let result = run_case_study(&cfg)?;
            for r in result.regimes.iter().filter(|r| r.error.is_some()) {
                eprintln!("regime {}: {}", r.name, r.error.as_deref().unwrap_or_default());
            }
            let reports = case_study_reports(&result);
            match &cfg.out_dir {
                Some(dir) => {
                    for f in &cfg.formats {
                        for path in emit_report(&reports, *f, dir)? {
                            println!("{}", path.display());
                        }
                    }
                    dataio::write_json(&dir.join("casestudy.json"), &result)?;
                    Ok(())
                }
                None => match cfg.formats.first().copied().unwrap_or(ReportFormat::Json) {
                    ReportFormat::Json => emit_json(None, "casestudy", &result),
                    ReportFormat::Csv => {
                        let rows: Vec<_> = reports.iter().flat_map(long_rows).collect();
                        emit_text(None, "casestudy.csv", |w| Ok(write_long_csv(&rows, w)?))
                    }
                },
            }
        }
        Command::SimulateLoop { regime, rounds } => {
            let mut cfg: SyntheticConfig = load_config(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let runs = regime.iter().map(|&r| run_inequity_loop(&cfg, rounds, r)).collect::<Result<Vec<_>, _>>()?;
            match format {
                Format::Json => {
                    let summary: Vec<LoopSummary> = runs
                        .iter()
                        .map(|t| LoopSummary {
                            regime: t.regime,
                            seed_size: t.seed_size,
                            disadvantaged_group: t.disadvantaged_group,
                            mean_zeta: t.mean_zeta(),
                            records: &t.records,
                        })
                        .collect();
                    emit_json(out, "loop", &summary)
                }
                Format::Csv => emit_text(out, "loop.csv", |w| Ok(LoopTrajectory::write_csv(&runs, w)?)),
            }
        }
        Command::Gaps { proxy, intended, proxy_model, intended_model } => {
            let proxy = load_profile(&proxy, proxy_model.as_deref())?;
            let intended = load_profile(&intended, intended_model.as_deref())?;
            let report = proxy_gaps(&proxy, &intended)?;
            match format {
                Format::Json => emit_json(out, "gaps", &report),
                Format::Csv => emit_text(out, "gaps.csv", |w| write_gaps_csv(&report, w)),
            }
        }
        Command::Questions => emit_text(out, "questions.txt", |w| Ok(w.write_all(checklist::render().as_bytes())?)),
    }
}

fn emit_text(out: Option<&Path>, file_name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file_name);
            let mut file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write(&mut file)?;
            println!("{}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, stem: &str, value: &T) -> Result<()> {
    emit_text(out, &format!("{stem}.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_audit_csv(report: &dataio::AuditReport, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "metric,group,value")?;
    writeln!(w, "n,all,{}", report.n)?;
    if let Some(psi) = report.psi {
        writeln!(w, "psi,all,{psi}")?;
    }
    let o = &report.outcome;
    writeln!(w, "eo_violation,all,{}", o.eo_violation)?;
    for (g, v) in &o.tpr_by_group {
        writeln!(w, "tpr,{g},{v}")?;
    }
    for (g, v) in &o.fpr_by_group {
        writeln!(w, "fpr,{g},{v}")?;
    }
    if let Some(u) = &report.utilization {
        writeln!(w, "zeta,all,{}", u.zeta)?;
        writeln!(w, "proxy_positives,all,{}", u.m)?;
        for (g, v) in &u.per_group_fp_share {
            writeln!(w, "fp_share,{g},{v}")?;
        }
    }
    Ok(())
}

fn write_gaps_csv(report: &GapReport, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "metric,feature,value")?;
    for (i, v) in report.gamma_x.iter().enumerate() {
        writeln!(w, "gamma_x,{i},{v}")?;
    }
    for (i, v) in report.gamma_l.iter().enumerate() {
        writeln!(w, "gamma_l,{i},{v}")?;
    }
    writeln!(w, "obstacle_gap_unmatched,all,{}", report.obstacle_gap.unmatched_affected_features)?;
    writeln!(w, "obstacle_gap_alpha_l1,all,{}", report.obstacle_gap.alpha_l1_distance_on_matched)?;
    Ok(())
}

fn load_profile(path: &Path, model: Option<&Path>) -> Result<ModelProfile> {
    let file: ProfileFile = dataio::read_json(path)?;
    let (feature_names, importance) = match model {
        Some(m) => {
            let trained = TrainedModel::load(m)?;
            (trained.spec.feature_names.clone(), trained.importance)
        }
        None => match (file.feature_names, file.importance) {
            (Some(f), Some(i)) => (f, i),
            _ => bail!("{} needs feature_names and importance unless a saved model is given", path.display()),
        },
    };
    Ok(ModelProfile { feature_names, importance, obstacles: file.obstacles })
}

/// Gaps between the first proxy and first intended spec, each trained on its observed history.
fn first_spec_gaps(input: &ScoringInput, seed: u64) -> Result<GapReport> {
    let profile = |space: &ModelSpace| -> Result<ModelProfile> {
        space.validate()?;
        let spec = &space.candidate_specs[0];
        let idx = space.dataset.feature_indices(&spec.feature_names)?;
        let view = space.dataset.project(&idx)?;
        let x: Vec<Vec<f64>> = view.individuals.iter().map(|i| i.x.clone()).collect();
        let y: Vec<bool> = view.individuals.iter().map(|i| i.y).collect();
        let model = train(spec, &x, &y, seed)?;
        Ok(ModelProfile {
            feature_names: spec.feature_names.clone(),
            importance: model.importance,
            obstacles: space.obstacle_model.project(&idx)?,
        })
    };
    Ok(proxy_gaps(&profile(&input.proxy)?, &profile(&input.intended)?)?)
}
