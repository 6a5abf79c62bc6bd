use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rde::envs::{to_tabular, value_iteration};
use rde::harness::{
    collapse_metric, eval_curve, final_return, iqm, parse_metrics_csv, run_experiment_with,
    sorted_mean, sweep, ConfigDoc, ConfigValue, ExperimentConfig, MetricsLog, MetricsRow, SweepPlan,
};
use rde::Error;

/// Tolerance of the value-iteration oracle.
const ORACLE_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "rde", version, about = "Reset-with-deep-ensemble experiment runner")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "./out")]
    out: PathBuf,
    /// Overrides the config seed (and a sweep's seed axis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses progress lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one experiment.
    Run { config: PathBuf },
    /// Runs the cartesian product of every list-valued key over all seeds.
    Sweep {
        config: PathBuf,
        /// Parallel runs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Dumps the exact Q* of the configured environment.
    Oracle { config: PathBuf },
    /// Recomputes final IQM and collapse statistics from stored CSVs.
    Aggregate {
        dir: PathBuf,
        /// Evaluation points inspected after each reset.
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
    /// Writes every stored metric as long-format CSV.
    EmitPlotData { dir: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Layout(_) => 1,
        Error::Io(_) => 3,
        _ => 2,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Renders rows as CSV text.
fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_config_str(&read(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

fn write_run(dir: &Path, cfg: &ExperimentConfig, log: &MetricsLog) -> Result<(), Error> {
    write(&dir.join("config.resolved"), &cfg.to_config_string())?;
    write(&dir.join("metrics.csv"), &log.to_csv())?;
    write(&dir.join("summary.json"), &to_json(&log.summary))?;
    if cfg.trace_selection {
        write(&dir.join("selection.csv"), &log.selection_trace_csv())?;
    }
    Ok(())
}

fn divergence_record(dir: &Path, cfg: &ExperimentConfig, err: &Error) -> Result<(), Error> {
    write(&dir.join("config.resolved"), &cfg.to_config_string())?;
    let record = match err {
        Error::Divergence { step, what } => serde_json::json!({
            "error": "divergence",
            "env_step": step,
            "what": what,
            "seed": cfg.seed,
        }),
        other => serde_json::json!({ "error": other.to_string(), "seed": cfg.seed }),
    };
    write(&dir.join("failure.json"), &to_json(&record))
}

fn progress_line(row: &MetricsRow) -> String {
    let mut line = format!("step {}", row.env_step);
    if let Some(r) = row.eval_return_mean {
        let _ = write!(line, "  return {r:.3}");
    }
    if let Some(c) = row.eval_cost_mean {
        let _ = write!(line, "  cost {c:.3}");
    }
    if row.reset_agent_index >= 0 {
        let _ = write!(line, "  reset agent {}", row.reset_agent_index);
    }
    line
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<(), Error> {
    let cfg = load_config(config, cli.seed)?;
    let quiet = cli.quiet;
    let result = run_experiment_with(&cfg, |row| {
        if !quiet {
            eprintln!("{}", progress_line(row));
        }
    });
    match result {
        Ok(log) => {
            write_run(&cli.out, &cfg, &log)?;
            if !quiet {
                eprintln!(
                    "final return {:.4}, training cost {}, max collapse {:.4}",
                    log.summary.final_return,
                    log.summary.cumulative_train_cost,
                    log.summary.collapse.max
                );
            }
            Ok(())
        }
        Err(e) => {
            divergence_record(&cli.out, &cfg, &e)?;
            Err(e)
        }
    }
}

fn run_dir_name(label: &str, seed: u64) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}__seed{seed}")
}

fn cmd_sweep(cli: &Cli, config: &Path, workers: usize) -> Result<(), Error> {
    let mut doc = ConfigDoc::parse(&read(config)?)?;
    if let Some(s) = cli.seed {
        doc.set("seed", ConfigValue::Scalar(s.to_string()));
    }
    let plan = SweepPlan::from_doc(doc)?;
    let cells = plan.cells()?;
    let quiet = cli.quiet;
    let output = sweep(&plan, workers, |r| {
        if !quiet {
            let status = match &r.outcome {
                Ok(log) => format!("final return {:.4}", log.summary.final_return),
                Err(e) => format!("failed: {e}"),
            };
            eprintln!("{} seed {}: {status} ({:.1}s)", cells[r.cell].label(), r.seed, r.seconds);
        }
    })?;
    for r in &output.runs {
        let dir = cli.out.join("runs").join(run_dir_name(&cells[r.cell].label(), r.seed));
        match &r.outcome {
            Ok(log) => write_run(&dir, &r.config, log)?,
            Err(e) => divergence_record(&dir, &r.config, e)?,
        }
    }
    write(&cli.out.join("summary.json"), &to_json(&output.report))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows: Vec<Vec<String>> = output
        .report
        .cells
        .iter()
        .map(|c| {
            vec![
                c.label.clone(),
                c.seeds.len().to_string(),
                c.failures.len().to_string(),
                opt(c.final_iqm),
                opt(c.mean_cumulative_cost),
                opt(c.collapse_max),
                opt(c.collapse_mean),
            ]
        })
        .collect();
    let table = csv_text(
        &["cell", "seeds", "failures", "final_iqm", "mean_cumulative_cost", "collapse_max", "collapse_mean"],
        &rows,
    )?;
    write(&cli.out.join("summary.csv"), &table)?;
    if !quiet {
        print!("{table}");
    }
    Ok(())
}

fn cmd_oracle(cli: &Cli, config: &Path) -> Result<(), Error> {
    let cfg = load_config(config, cli.seed)?;
    let mdp = to_tabular(&cfg.env)?;
    let q = value_iteration(&mdp, cfg.gamma, ORACLE_TOL)?;
    let header: Vec<String> = std::iter::once("state".to_string())
        .chain((0..q.n_actions).map(|a| format!("q_{a}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..q.n_states)
        .map(|s| {
            std::iter::once(s.to_string())
                .chain(q.row(s).iter().map(|v| v.to_string()))
                .collect()
        })
        .collect();
    let csv = csv_text(&header, &rows)?;
    write(&cli.out.join("q_star.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

/// Every `metrics.csv` under `dir`, sorted by path.
fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == "metrics.csv" {
            found.push(entry.into_path());
        }
    }
    if found.is_empty() {
        return Err(Error::Io(format!("no metrics.csv under {}", dir.display())));
    }
    Ok(found)
}

/// Run name relative to the scanned directory.
fn run_name(dir: &Path, file: &Path) -> String {
    let parent = file.parent().unwrap_or(dir);
    match parent.strip_prefix(dir) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
        _ => ".".to_string(),
    }
}

fn cmd_aggregate(cli: &Cli, dir: &Path, window: usize) -> Result<(), Error> {
    let mut groups: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut per_run = Vec::new();
    for file in metrics_files(dir)? {
        let rows = parse_metrics_csv(&read(&file)?)?;
        let name = run_name(dir, &file);
        let curve = eval_curve(&rows);
        let Some(fin) = final_return(&rows) else {
            continue;
        };
        let resets: Vec<u64> = rows
            .iter()
            .filter(|r| r.reset_agent_index >= 0)
            .map(|r| r.env_step)
            .collect();
        let collapse = collapse_metric(&curve, &resets, window)?;
        let cost = rows.last().map_or(0.0, |r| r.cumulative_train_cost);
        per_run.push(vec![
            name.clone(),
            fin.to_string(),
            cost.to_string(),
            collapse.max.to_string(),
            collapse.mean.to_string(),
        ]);
        let group = match name.rsplit_once("__seed") {
            Some((g, _)) => g.to_string(),
            None => name.clone(),
        };
        groups.entry(group).or_default().push((fin, cost, collapse.max));
    }
    let mut table = Vec::new();
    for (group, v) in &groups {
        let finals: Vec<f64> = v.iter().map(|x| x.0).collect();
        let costs: Vec<f64> = v.iter().map(|x| x.1).collect();
        let collapses: Vec<f64> = v.iter().map(|x| x.2).collect();
        table.push(vec![
            group.clone(),
            v.len().to_string(),
            iqm(&finals)?.to_string(),
            sorted_mean(&costs).to_string(),
            sorted_mean(&collapses).to_string(),
        ]);
    }
    let per_run = csv_text(
        &["run", "final_return", "cumulative_train_cost", "collapse_max", "collapse_mean"],
        &per_run,
    )?;
    let table = csv_text(
        &["group", "runs", "final_iqm", "mean_cumulative_cost", "mean_collapse_max"],
        &table,
    )?;
    write(&cli.out.join("aggregate_runs.csv"), &per_run)?;
    write(&cli.out.join("aggregate.csv"), &table)?;
    if !cli.quiet {
        print!("{table}");
    }
    Ok(())
}

fn cmd_emit(cli: &Cli, dir: &Path) -> Result<(), Error> {
    let mut out = Vec::new();
    for file in metrics_files(dir)? {
        let rows = parse_metrics_csv(&read(&file)?)?;
        let name = run_name(dir, &file);
        for r in &rows {
            let mut emit = |metric: &str, v: f64| {
                out.push(vec![name.clone(), r.env_step.to_string(), metric.to_string(), v.to_string()]);
            };
            if let Some(v) = r.eval_return_mean {
                emit("eval_return_mean", v);
            }
            if let Some(v) = r.eval_return_std {
                emit("eval_return_std", v);
            }
            if let Some(v) = r.eval_cost_mean {
                emit("eval_cost_mean", v);
            }
            if let Some(v) = r.train_loss {
                emit("train_loss", v);
            }
            if r.reset_agent_index >= 0 {
                emit("reset_agent_index", r.reset_agent_index as f64);
            }
            for (i, p) in r.p_select.iter().enumerate() {
                emit(&format!("p_select_{i}"), *p);
            }
            emit("cumulative_train_cost", r.cumulative_train_cost);
        }
    }
    let text = csv_text(&["run", "env_step", "metric", "value"], &out)?;
    write(&cli.out.join("plot_data.csv"), &text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Sweep { config, workers } => cmd_sweep(&cli, config, *workers),
        Command::Oracle { config } => cmd_oracle(&cli, config),
        Command::Aggregate { dir, window } => cmd_aggregate(&cli, dir, *window),
        Command::EmitPlotData { dir } => cmd_emit(&cli, dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
