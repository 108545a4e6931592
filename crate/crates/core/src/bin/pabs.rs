//! Command-line front end: `simulate`, `sample`, `estimate`, `compare`, `audit`.
//!
//! Failures print one JSON object to stderr and exit with status 1. `audit`
//! exits with status 2 when it finds cool-off violations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use pabs_survey::estimators::{adjust, compare_surveys, AdjustOptions, CountryComparison};
use pabs_survey::io::{self, IoError};
use pabs_survey::mot::{sample_month, SamplingMode, SamplingPlan};
use pabs_survey::ring::{audit_sends, CoolOffLedger, CoolOffPolicy};
use pabs_survey::sim::{generate_population, run, Channel, EngineConfig};

#[derive(Parser)]
#[command(
    name = "pabs",
    version,
    about = "Survey sampling simulation and NPS estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population and simulate the survey programs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run MoT sampling over one month of triggers.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        triggers: PathBuf,
        /// JSON sampling plan; `--config` is accepted as an alias.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Prior sends (ledger format) to respect cool-off against.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Absolute day of the first day of the month.
        #[arg(long, default_value_t = 0)]
        month_start: u32,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Unadjusted, weighting-adjusted and MRP estimates per country.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        strata: PathBuf,
        /// Comma-separated weighting variables (default: chosen from the data).
        #[arg(long, value_delimiter = ',')]
        weighting_vars: Option<Vec<String>>,
        #[arg(long)]
        no_mrp: bool,
    },
    /// Per-country difference between two surveys, variant minus baseline.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        variant: PathBuf,
        #[arg(long)]
        strata: PathBuf,
        #[arg(long, value_delimiter = ',')]
        weighting_vars: Option<Vec<String>>,
    },
    /// Exhaustive cool-off audit of a sends or ledger file.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sends: PathBuf,
        #[arg(long)]
        any_program_days: Option<u32>,
        #[arg(long)]
        same_program_days: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Srs,
    Ftt,
}

struct Failure {
    kind: &'static str,
    message: String,
    line: Option<u64>,
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure {
            kind: "input",
            line: e.line(),
            message: e.to_string(),
        }
    }
}

macro_rules! failure_from {
    ($($t:ty => $kind:literal),* $(,)?) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { kind: $kind, message: e.to_string(), line: None }
            }
        }
    )*};
}

failure_from! {
    pabs_survey::sim::SimError => "simulation",
    pabs_survey::mot::MotError => "sampling",
    pabs_survey::estimators::EstimateError => "estimation",
    pabs_survey::ring::LedgerError => "ledger",
    serde_json::Error => "config",
    std::io::Error => "io",
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        kind: "io",
        message: format!("{}: {e}", path.display()),
        line: None,
    })?;
    serde_json::from_str(&text).map_err(|e| Failure {
        kind: "config",
        message: format!("{}: {e}", path.display()),
        line: Some(e.line() as u64),
    })
}

fn out_dir(common: &Common) -> Result<Option<&Path>, Failure> {
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
    }
    Ok(common.out.as_deref())
}

/// Prints `value` as JSON, or as CSV rows when it is a list of flat records.
fn emit<T: Serialize>(format: Format, value: &T, rows: Option<&[T]>) -> Result<(), Failure> {
    match (format, rows) {
        (Format::Csv, Some(rows)) => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r).map_err(|e| Failure {
                    kind: "io",
                    message: e.to_string(),
                    line: None,
                })?;
            }
            w.flush()?;
        }
        _ => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<ExitCode, Failure> {
    let mut cfg: EngineConfig = match &common.config {
        Some(p) => read_json(p)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.population.seed = seed;
        cfg.run.seed = seed;
    }
    let population = generate_population(&cfg.population)?;
    let log = run(&cfg.run, &population)?;
    let audit = log.audit(&cfg.run.cool_off);
    if let Some(dir) = out_dir(common)? {
        io::write_survey_log(dir, &log)?;
        let rnps = cfg.run.rnps_program;
        let email = log.response_set(&population, false, |r| {
            r.channel == Channel::Email && r.program == rnps
        })?;
        io::write_responses(io::writer(&dir.join("responses.csv"))?, &email)?;
        let in_product =
            log.response_set(&population, false, |r| r.channel == Channel::InProduct)?;
        io::write_responses(
            io::writer(&dir.join("in_product_responses.csv"))?,
            &in_product,
        )?;
        io::write_population(
            io::writer(&dir.join("population_strata.csv"))?,
            &population.population_table(false),
        )?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    }
    let summary = json!({
        "members": population.len(),
        "horizon_days": cfg.run.horizon_days,
        "sends": log.sends.len(),
        "responses": log.responses.len(),
        "mot_yield": log.mot_yield(&cfg.run),
        "audit": audit.iter().map(|(c, a)| (c.as_str(), a)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    #[derive(Serialize)]
    struct Row {
        channel: &'static str,
        sends: usize,
        responses: usize,
        any_program_violations: usize,
        same_program_violations: usize,
    }
    let rows: Vec<Row> = audit
        .iter()
        .map(|(c, a)| Row {
            channel: c.as_str(),
            sends: a.sends_checked,
            responses: log.responses.iter().filter(|r| r.channel == *c).count(),
            any_program_violations: a.any_program_violations,
            same_program_violations: a.same_program_violations,
        })
        .collect();
    match common.format {
        Format::Json => emit(Format::Json, &summary, None)?,
        Format::Csv => emit(Format::Csv, &rows[0], Some(&rows))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn sample(
    common: &Common,
    triggers: &Path,
    plan: Option<&Path>,
    ledger: Option<&Path>,
    month_start: u32,
    mode: Option<Mode>,
) -> Result<ExitCode, Failure> {
    let plan_path = plan.or(common.config.as_deref()).ok_or_else(|| Failure {
        kind: "usage",
        message: "sample needs --plan (or --config) with a sampling plan".into(),
        line: None,
    })?;
    let mut plan: SamplingPlan = read_json(plan_path)?;
    if let Some(seed) = common.seed {
        plan.seed = seed;
    }
    if let Some(mode) = mode {
        plan.mode = match mode {
            Mode::Srs => SamplingMode::Srs,
            Mode::Ftt => SamplingMode::Ftt,
        };
    }
    let log = io::read_trigger_log(
        io::reader(triggers)?,
        &triggers.display().to_string(),
        month_start,
    )?;
    let mut book = match ledger {
        Some(p) => {
            CoolOffLedger::from_entries(io::read_ledger(io::reader(p)?, &p.display().to_string())?)?
        }
        None => CoolOffLedger::new(),
    };
    let selections = sample_month(&log, &plan, &mut book, &CoolOffPolicy::default())?;
    if let Some(dir) = out_dir(common)? {
        io::write_selections(io::writer(&dir.join("selections.csv"))?, &selections)?;
        io::write_ledger(io::writer(&dir.join("ledger.csv"))?, &book.entries())?;
    }
    match common.format {
        Format::Json => emit(Format::Json, &selections, None)?,
        Format::Csv => io::write_selections(std::io::stdout(), &selections)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn load_options(
    common: &Common,
    weighting_vars: Option<Vec<String>>,
) -> Result<AdjustOptions, Failure> {
    let mut options: AdjustOptions = match &common.config {
        Some(p) => read_json(p)?,
        None => AdjustOptions::default(),
    };
    if weighting_vars.is_some() {
        options.weighting_variables = weighting_vars;
    }
    Ok(options)
}

fn load_survey(
    responses: &Path,
    strata: &Path,
) -> Result<
    (
        pabs_survey::estimators::ResponseSet,
        pabs_survey::estimators::Population,
    ),
    Failure,
> {
    let set = io::read_responses(io::reader(responses)?, &responses.display().to_string())?;
    let pop = io::read_population(
        io::reader(strata)?,
        &strata.display().to_string(),
        &set.schema,
    )?;
    Ok((set, pop))
}

fn estimate(
    common: &Common,
    responses: &Path,
    strata: &Path,
    weighting_vars: Option<Vec<String>>,
    no_mrp: bool,
) -> Result<ExitCode, Failure> {
    let mut options = load_options(common, weighting_vars)?;
    if no_mrp {
        options.mrp = false;
    }
    let (set, pop) = load_survey(responses, strata)?;
    let report = adjust(&set, &pop, &options)?;
    if let Some(dir) = out_dir(common)? {
        std::fs::write(dir.join("report.json"), report.to_json())?;
        report
            .write_csv(io::writer(&dir.join("report.csv"))?)
            .map_err(|e| Failure {
                kind: "io",
                message: e.to_string(),
                line: None,
            })?;
    }
    match common.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Csv => report.write_csv(std::io::stdout()).map_err(|e| Failure {
            kind: "io",
            message: e.to_string(),
            line: None,
        })?,
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(
    common: &Common,
    baseline: &Path,
    variant: &Path,
    strata: &Path,
    weighting_vars: Option<Vec<String>>,
) -> Result<ExitCode, Failure> {
    let mut options = load_options(common, weighting_vars)?;
    options.mrp = false;
    let (set_t, pop) = load_survey(baseline, strata)?;
    let set_v = io::read_responses(io::reader(variant)?, &variant.display().to_string())?;
    if set_v.schema != set_t.schema {
        return Err(Failure {
            kind: "input",
            message: "baseline and variant use different covariate columns".into(),
            line: Some(1),
        });
    }
    let report_t = adjust(&set_t, &pop, &options)?;
    // Weight both arms on the variables chosen for the baseline of each country.
    let mut rows: Vec<CountryComparison> = Vec::new();
    let mut report_v = report_t.clone();
    report_v.countries.clear();
    for c in &report_t.countries {
        let opts = AdjustOptions {
            weighting_variables: Some(c.weighting_variables.clone()),
            ..options.clone()
        };
        let single = adjust(&set_v.subset(&c.country), &pop, &opts)?;
        report_v.countries.extend(single.countries);
    }
    rows.extend(compare_surveys(&report_t, &report_v)?);
    if let Some(dir) = out_dir(common)? {
        std::fs::write(
            dir.join("comparison.json"),
            serde_json::to_string_pretty(&rows)?,
        )?;
    }
    match (common.format, rows.first()) {
        (Format::Csv, Some(first)) => emit(Format::Csv, first, Some(&rows))?,
        _ => emit(Format::Json, &rows, None)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn audit(
    common: &Common,
    sends: &Path,
    any: Option<u32>,
    same: Option<u32>,
) -> Result<ExitCode, Failure> {
    let mut policy = match &common.config {
        Some(p) => read_json::<EngineConfig>(p)?.run.cool_off,
        None => CoolOffPolicy::default(),
    };
    policy.any_program_days = any.unwrap_or(policy.any_program_days);
    policy.same_program_days = same.unwrap_or(policy.same_program_days);
    let by_channel = io::read_sends(io::reader(sends)?, &sends.display().to_string())?;
    #[derive(Serialize)]
    struct Row {
        channel: &'static str,
        sends_checked: usize,
        members_checked: usize,
        any_program_violations: usize,
        same_program_violations: usize,
    }
    let mut clean = true;
    let mut reports = std::collections::BTreeMap::new();
    let mut rows = Vec::new();
    for (channel, records) in by_channel {
        let report = audit_sends(records, &policy);
        clean &= report.is_clean();
        rows.push(Row {
            channel: channel.as_str(),
            sends_checked: report.sends_checked,
            members_checked: report.members_checked,
            any_program_violations: report.any_program_violations,
            same_program_violations: report.same_program_violations,
        });
        reports.insert(channel.as_str(), report);
    }
    if let Some(dir) = out_dir(common)? {
        std::fs::write(
            dir.join("audit.json"),
            serde_json::to_string_pretty(&reports)?,
        )?;
    }
    match (common.format, rows.first()) {
        (Format::Csv, Some(first)) => emit(Format::Csv, first, Some(&rows))?,
        _ => emit(
            Format::Json,
            &json!({ "policy": policy, "clean": clean, "channels": reports }),
            None,
        )?,
    }
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common } => simulate(&common),
        Command::Sample {
            common,
            triggers,
            plan,
            ledger,
            month_start,
            mode,
        } => sample(
            &common,
            &triggers,
            plan.as_deref(),
            ledger.as_deref(),
            month_start,
            mode,
        ),
        Command::Estimate {
            common,
            responses,
            strata,
            weighting_vars,
            no_mrp,
        } => estimate(&common, &responses, &strata, weighting_vars, no_mrp),
        Command::Compare {
            common,
            baseline,
            variant,
            strata,
            weighting_vars,
        } => compare(&common, &baseline, &variant, &strata, weighting_vars),
        Command::Audit {
            common,
            sends,
            any_program_days,
            same_program_days,
        } => audit(&common, &sends, any_program_days, same_program_days),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!(
                "{}",
                json!({ "error": f.kind, "message": f.message, "line": f.line })
            );
            ExitCode::FAILURE
        }
    }
}
