use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use textconfound::pipeline::{
    emit_report, generate_datasets, run_experiment, EvalReport, ModelConfig, ReportFormat, RunConfig, TaskSelection,
};
use textconfound::propensity::ModelSpec;
use textconfound::taskgen::TaskKind;

#[derive(Parser)]
#[command(version, about = "Semi-synthetic benchmarks for causal inference from text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> textconfound::Result<RunConfig> {
        let mut config = RunConfig::from_json_file(&self.config)?;
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(o) = &self.out {
            config.output_dir = Some(o.clone());
        }
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write each task dataset of the grid as JSONL.
    Generate(Common),
    /// Run the full grid and write a report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Evaluate an external `user_id,score` file on one task.
    ScoreImport {
        #[command(flatten)]
        common: Common,
        /// Scores CSV; `{task}` and `{level}` are substituted.
        #[arg(long)]
        scores: String,
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 1)]
        level: u32,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Re-emit a stored JSON report in another format.
    Report {
        /// Path of a `report.json`.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

fn out_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn finish(report: &EvalReport, config: &RunConfig, format: ReportFormat) -> textconfound::Result<()> {
    let dir = out_dir(config);
    for p in emit_report(report, format, &dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> textconfound::Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let config = common.load()?;
            let dir = out_dir(&config);
            std::fs::create_dir_all(&dir)?;
            for ds in generate_datasets(&config)? {
                let path = dir.join(format!("{}_level{}.jsonl", ds.spec.kind, ds.spec.level));
                ds.write_jsonl(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Run { common, format } => {
            let mut config = common.load()?;
            config.output_dir.get_or_insert_with(|| PathBuf::from("out"));
            let report = run_experiment(&config)?;
            finish(&report, &config, format)
        }
        Command::ScoreImport {
            common,
            scores,
            task,
            level,
            format,
        } => {
            let mut config = common.load()?;
            config.output_dir.get_or_insert_with(|| PathBuf::from("out"));
            config.tasks = vec![TaskSelection::level(task, level)];
            config.models = vec![ModelConfig {
                spec: ModelSpec::external(),
                scores: Some(scores),
                name: None,
            }];
            config.validate()?;
            let report = run_experiment(&config)?;
            finish(&report, &config, format)
        }
        Command::Report { from, out, format } => {
            let report = EvalReport::read(&from)?;
            for p in emit_report(&report, format, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
