//! `windcal`: batch calibration and verification of ensemble wind-speed
//! forecasts.
//!
//! Subcommands wire the library pipeline end to end: `simulate` writes a
//! synthetic archive, `fit` estimates a model for one date, `predict`
//! emits point and interval forecasts, `verify` scores a date range,
//! `sweep` compares training-window lengths over a fixed verification
//! range, and `weights` reports the fitted parameter time series.
//!
//! Exit codes: 0 success, 1 runtime error, 2 insufficient data.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use windcal::data::{simulate, Archive, SimConfig};
use windcal::estimate::EmConfig;
use windcal::mixture::{BmaModel, GroupScheme, LinkParams};
use windcal::pipeline::{
    predict_day, summarize, sweep, verify_range, weights_series, weights_summary, PipelineConfig,
    SweepRow, VerifyOutput, WeightsRow,
};
use windcal::verify::ScoreReport;
use windcal::{Error, Result};

#[derive(Parser)]
#[command(
    name = "windcal",
    version,
    about = "BMA calibration of ensemble wind-speed forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic forecast archive from a known model.
    Simulate(SimulateArgs),
    /// Fit a model for one target date and write it as JSON.
    Fit(FitArgs),
    /// Point and interval forecasts for every station on one date.
    Predict(PredictArgs),
    /// Rolling verification over a date range.
    Verify(VerifyArgs),
    /// Training-length sweep with a fixed verification range.
    Sweep(SweepArgs),
    /// Daily fitted weights and link parameters.
    Weights(WeightsArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Forecast archive CSV.
    #[arg(long)]
    data: PathBuf,
    /// Exchangeable-group layout.
    #[arg(long, default_value = "two-group", value_parser = parse_scheme)]
    scheme: GroupScheme,
    /// Training window length in calendar days.
    #[arg(long, default_value_t = 28)]
    window_days: u64,
    /// Prediction-interval levels, comma separated.
    #[arg(long, default_value = "0.667,0.90", value_parser = parse_levels)]
    levels: Levels,
    /// Seed for rank/PIT tie-breaking randomization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// EM iteration cap.
    #[arg(long, default_value_t = 500)]
    em_max_iters: usize,
    /// EM relative log-likelihood tolerance.
    #[arg(long, default_value_t = 1e-7)]
    em_rel_tol: f64,
    /// Number of PIT histogram bins.
    #[arg(long, default_value_t = 11)]
    pit_bins: usize,
}

#[derive(Clone)]
struct Levels(Vec<f64>);

fn parse_levels(s: &str) -> std::result::Result<Levels, String> {
    let mut levels = Vec::new();
    for part in s.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|e| format!("bad level {part:?}: {e}"))?;
        if !(0.0 < v && v < 1.0) {
            return Err(format!("level {v} outside (0, 1)"));
        }
        levels.push(v);
    }
    if levels.is_empty() {
        return Err("no levels given".into());
    }
    Ok(Levels(levels))
}

fn parse_scheme(s: &str) -> std::result::Result<GroupScheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl CommonArgs {
    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            scheme: self.scheme,
            window_days: self.window_days,
            levels: self.levels.0.clone(),
            seed: self.seed,
            em: EmConfig {
                max_iters: self.em_max_iters,
                rel_tol: self.em_rel_tol,
                ..EmConfig::default()
            },
            pit_bins: self.pit_bins,
        }
    }

    fn load_archive(&self) -> Result<Archive> {
        let (archive, summary) = Archive::load(&self.data)?;
        if summary.rejected_missing_obs > 0 {
            eprintln!(
                "note: {} rows without observations were dropped",
                summary.rejected_missing_obs
            );
        }
        Ok(archive)
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target date; the window ends the day before.
    #[arg(long)]
    date: NaiveDate,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Forecast date; the window ends the day before.
    #[arg(long)]
    date: NaiveDate,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
    #[arg(long, default_value_t = 10)]
    min_days: u64,
    #[arg(long, default_value_t = 60)]
    max_days: u64,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output archive path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "two-group", value_parser = parse_scheme)]
    scheme: GroupScheme,
    /// Control weight (two-group).
    #[arg(long, default_value_t = 0.4)]
    omega: f64,
    /// Per-member weights (three-group); overrides --omega.
    #[arg(long, requires_all = ["omega_o", "omega_e"])]
    omega_c: Option<f64>,
    #[arg(long)]
    omega_o: Option<f64>,
    #[arg(long)]
    omega_e: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    b0: f64,
    #[arg(long, default_value_t = 1.1)]
    b1: f64,
    #[arg(long, default_value_t = 0.6)]
    c0: f64,
    #[arg(long, default_value_t = 0.2)]
    c1: f64,
    #[arg(long, default_value_t = 60)]
    n_days: usize,
    #[arg(long, default_value_t = 10)]
    n_stations: usize,
    #[arg(long, default_value = "2010-10-01")]
    start_date: NaiveDate,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log-normal forecast process: median exp(log_mean).
    #[arg(long, default_value_t = 1.0)]
    log_mean: f64,
    /// Case-to-case spread of the shared forecast factor (log scale).
    #[arg(long, default_value_t = 1.2)]
    log_sd_case: f64,
    /// Member-to-member spread within a case (log scale).
    #[arg(long, default_value_t = 0.5)]
    log_sd_member: f64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::InsufficientData(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Weights(args) => cmd_weights(args),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let link = LinkParams {
        b0: args.b0,
        b1: args.b1,
        c0: args.c0,
        c1: args.c1,
    };
    // fit_window/n_train_cases are provenance fields; for a synthetic
    // truth model they just describe the generated record
    let window = windcal::data::DateRange {
        start: args.start_date,
        end: args.start_date + chrono::Days::new(args.n_days.saturating_sub(1) as u64),
    };
    let n_cases = args.n_days * args.n_stations;
    let truth = match (args.scheme, args.omega_c) {
        (GroupScheme::ThreeGroup, Some(omega_c)) => BmaModel::three_group(
            link,
            omega_c,
            args.omega_o.expect("required by clap"),
            args.omega_e.expect("required by clap"),
            window,
            n_cases,
        )?,
        (GroupScheme::ThreeGroup, None) => {
            return Err(Error::Estimation(
                "--scheme three-group needs --omega-c/--omega-o/--omega-e".into(),
            ))
        }
        (GroupScheme::TwoGroup, _) => BmaModel::two_group(link, args.omega, window, n_cases)?,
    };
    let cfg = SimConfig {
        n_days: args.n_days,
        n_stations: args.n_stations,
        start_date: args.start_date,
        seed: args.seed,
        log_mean: args.log_mean,
        log_sd_case: args.log_sd_case,
        log_sd_member: args.log_sd_member,
    };
    let archive = simulate(&truth, &cfg);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write(&args.out, &archive.to_csv())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let archive = args.common.load_archive()?;
    let cfg = args.common.pipeline_config();
    let fitted = windcal::estimate::fit(&archive, args.date, cfg.window_days, cfg.scheme, &cfg.em)?;
    args.common.ensure_out_dir()?;
    let path = args
        .common
        .out_dir
        .join(format!("model_{}.json", args.date));
    let mut doc = serde_json::to_string_pretty(&fitted.model)?;
    doc.push('\n');
    write(&path, &doc)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let archive = args.common.load_archive()?;
    let cfg = args.common.pipeline_config();
    let day = predict_day(&archive, args.date, &cfg)?;
    args.common.ensure_out_dir()?;

    let mut csv = String::from("station,obs,mean,median");
    for level in &cfg.levels {
        csv.push_str(&format!(",lower_{level},upper_{level}"));
    }
    csv.push('\n');
    for case in &day.cases {
        csv.push_str(&format!(
            "{},{},{},{}",
            case.station, case.obs, case.mean, case.median
        ));
        for (lo, hi) in &case.intervals {
            csv.push_str(&format!(",{lo},{hi}"));
        }
        csv.push('\n');
    }
    let path = args
        .common
        .out_dir
        .join(format!("predict_{}.csv", args.date));
    write(&path, &csv)?;

    let model_path = args
        .common
        .out_dir
        .join(format!("model_{}.json", args.date));
    let mut doc = serde_json::to_string_pretty(&day.model)?;
    doc.push('\n');
    write(&model_path, &doc)
}

#[derive(Serialize)]
struct ScoresDoc<'a> {
    scheme: &'a str,
    window_days: u64,
    from: NaiveDate,
    to: NaiveDate,
    seed: u64,
    levels: &'a [f64],
    bma: &'a ScoreReport,
    raw: &'a Option<ScoreReport>,
    pit_ks: PitKs,
    rank_range_containment: f64,
    rank_skipped_cases: usize,
    n_days: usize,
    n_skipped_days: usize,
}

#[derive(Serialize)]
struct PitKs {
    d: f64,
    p_value: f64,
}

fn run_verify(args: &VerifyArgs) -> Result<(VerifyOutput, PipelineConfig)> {
    let archive = args.common.load_archive()?;
    let cfg = args.common.pipeline_config();
    let output = verify_range(&archive, args.from, args.to, &cfg)?;
    for (date, reason) in &output.skipped {
        eprintln!("skipped {date}: {reason}");
    }
    Ok((output, cfg))
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let (output, cfg) = run_verify(&args)?;
    let summary = summarize(&output, &cfg)?;
    args.common.ensure_out_dir()?;
    let dir = &args.common.out_dir;

    let doc = ScoresDoc {
        scheme: cfg.scheme.as_str(),
        window_days: cfg.window_days,
        from: args.from,
        to: args.to,
        seed: cfg.seed,
        levels: &cfg.levels,
        bma: &summary.bma,
        raw: &summary.raw,
        pit_ks: PitKs {
            d: summary.pit_ks.0,
            p_value: summary.pit_ks.1,
        },
        rank_range_containment: summary.rank.range_containment,
        rank_skipped_cases: summary.rank.n_skipped,
        n_days: summary.n_days,
        n_skipped_days: summary.n_skipped_days,
    };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    write(&dir.join("scores.json"), &json)?;

    let mut scores_csv = ScoreReport::csv_header(&cfg.levels);
    scores_csv.push('\n');
    scores_csv.push_str(&summary.bma.csv_row("bma"));
    scores_csv.push('\n');
    if let Some(raw) = &summary.raw {
        scores_csv.push_str(&raw.csv_row("raw"));
        scores_csv.push('\n');
    }
    write(&dir.join("scores.csv"), &scores_csv)?;

    write(
        &dir.join("pit_histogram.csv"),
        &summary.pit_histogram.to_csv(),
    )?;
    write(
        &dir.join("rank_histogram.csv"),
        &summary.rank.histogram.to_csv(),
    )?;

    let mut days_csv = String::from("date,window_start,window_end,n_train_cases,n_cases\n");
    for day in &output.days {
        days_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            day.date,
            day.model.fit_window().start,
            day.model.fit_window().end,
            day.model.n_train_cases(),
            day.cases.len()
        ));
    }
    write(&dir.join("days.csv"), &days_csv)
}

fn weights_csv(rows: &[WeightsRow], scheme: GroupScheme) -> String {
    let weight_cols = match scheme {
        GroupScheme::TwoGroup => "omega",
        GroupScheme::ThreeGroup => "omega_c,omega_o,omega_e",
    };
    let mut csv = format!("date,window_start,window_end,n_train_cases,{weight_cols},b0,b1,c0,c1\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{}",
            row.date, row.window.start, row.window.end, row.n_train_cases
        ));
        for w in &row.weights {
            csv.push_str(&format!(",{w}"));
        }
        csv.push_str(&format!(",{},{},{},{}\n", row.b0, row.b1, row.c0, row.c1));
    }
    csv
}

fn cmd_weights(args: WeightsArgs) -> Result<()> {
    let archive = args.common.load_archive()?;
    let cfg = args.common.pipeline_config();
    let output = verify_range(&archive, args.from, args.to, &cfg)?;
    for (date, reason) in &output.skipped {
        eprintln!("skipped {date}: {reason}");
    }
    let rows = weights_series(&output);
    let summary = weights_summary(&rows)?;
    args.common.ensure_out_dir()?;
    write(
        &args.common.out_dir.join("weights.csv"),
        &weights_csv(&rows, cfg.scheme),
    )?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write(&args.common.out_dir.join("weights_summary.json"), &json)
}

fn sweep_csv(rows: &[SweepRow], levels: &[f64]) -> String {
    let mut csv = String::from("window_days,verify_from,verify_to,mean_crps,mae_median,mae_mean,rmse_median,rmse_mean,n_cases");
    for level in levels {
        csv.push_str(&format!(",coverage_{level},avg_width_{level}"));
    }
    csv.push('\n');
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            row.window_days,
            row.verify_from,
            row.verify_to,
            row.scores.mean_crps,
            row.scores.mae_median,
            row.scores.mae_mean,
            row.scores.rmse_median,
            row.scores.rmse_mean,
            row.scores.n_cases
        ));
        for stat in &row.scores.intervals {
            csv.push_str(&format!(",{},{}", stat.coverage, stat.avg_width));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let archive = args.common.load_archive()?;
    let cfg = args.common.pipeline_config();
    let rows = sweep(
        &archive,
        args.from,
        args.to,
        args.min_days,
        args.max_days,
        &cfg,
    )?;
    args.common.ensure_out_dir()?;
    write(
        &args.common.out_dir.join("sweep.csv"),
        &sweep_csv(&rows, &cfg.levels),
    )
}
