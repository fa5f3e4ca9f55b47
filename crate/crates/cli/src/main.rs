use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rbt_core::instantiator::build_tree;
use rbt_core::{Ltm, TickTrace};
use sorting_sim::runner::{run_scenario, EngineKind};
use sorting_sim::{bundled_ltm, Scenario};

#[derive(Parser)]
#[command(name = "rbt", version, about = "Run and inspect reconfigurable behavior trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sorting scenario to its goal.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// `rbt` or `bt`
        #[arg(long)]
        mode: EngineKind,
        /// Task directory; the bundled tasks are used when omitted.
        #[arg(long)]
        ltm: Option<PathBuf>,
        /// Write one JSON line per tick.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        max_ticks: u64,
        /// Write the run report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parse every task file of a directory.
    Validate {
        #[arg(long)]
        ltm: PathBuf,
    },
    /// Print a task as an indented tree.
    Inspect {
        #[arg(long)]
        ltm: Option<PathBuf>,
        #[arg(long)]
        task: String,
        /// Include the condition nodes generated from params.
        #[arg(long)]
        expand: bool,
    },
}

fn load_ltm(dir: Option<&Path>) -> Result<Ltm> {
    match dir {
        Some(d) => Ltm::load_dir(d).with_context(|| format!("loading tasks from {}", d.display())),
        None => Ok(bundled_ltm()),
    }
}

fn run(
    scenario: &Path,
    mode: EngineKind,
    ltm: Option<&Path>,
    trace: Option<&Path>,
    max_ticks: u64,
    report: Option<&Path>,
) -> Result<ExitCode> {
    let s = Scenario::load(scenario)?;
    let ltm = Arc::new(load_ltm(ltm)?);
    let mut sink = match trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut write_err = None;
    let mut on_tick = |t: &TickTrace| {
        if let Some(w) = sink.as_mut() {
            if let Err(e) = writeln!(w, "{}", t.to_jsonl()) {
                write_err.get_or_insert(e);
            }
        }
    };
    let out = run_scenario(&s, mode, ltm, max_ticks, Some(&mut on_tick))?;
    if let Some(e) = write_err {
        return Err(e).context("writing trace");
    }
    if let Some(mut w) = sink {
        w.flush().context("writing trace")?;
    }
    let r = &out.report;
    println!(
        "{} case {}: goal {} after {} ticks, nodes {}..{}, tick time {:.3} ms, order {}",
        match r.mode {
            EngineKind::Rbt => "rbt",
            EngineKind::Bt => "bt",
        },
        r.case_id,
        if r.goal_reached { "reached" } else { "not reached" },
        r.ticks,
        r.node_count.min,
        r.node_count.max,
        r.total_tick_time as f64 / 1e6,
        r.sort_order.join(" ")
    );
    if let Some(p) = report {
        let json = serde_json::to_string_pretty(&serde_json::to_value(r)?)?;
        std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(if r.goal_reached {
        ExitCode::SUCCESS
    } else {
        eprintln!("goal not reached within {max_ticks} ticks");
        ExitCode::from(2)
    })
}

fn validate(dir: &Path) -> Result<ExitCode> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let reports = Ltm::scan_dir(dir)?;
    if reports.is_empty() {
        eprintln!("warning: no tasks in {}", dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let mut failed = 0;
    for r in reports {
        match r.result {
            Ok(tasks) => println!("ok   {} ({})", r.path.display(), tasks.join(", ")),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e}", r.path.display());
            }
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn inspect(ltm: Option<&Path>, task: &str, expand: bool) -> Result<ExitCode> {
    let ltm = load_ltm(ltm)?;
    let mut schemas = ltm.get_task_from_ltm(task)?.to_vec();
    if !expand {
        for s in &mut schemas {
            s.params.clear();
        }
    }
    let tree = build_tree(&schemas, None)?;
    print!("{}", tree.render());
    println!("{} nodes", tree.count_nodes());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run {
            scenario,
            mode,
            ltm,
            trace,
            max_ticks,
            report,
        } => run(
            scenario,
            *mode,
            ltm.as_deref(),
            trace.as_deref(),
            *max_ticks,
            report.as_deref(),
        ),
        Command::Validate { ltm } => validate(ltm),
        Command::Inspect { ltm, task, expand } => inspect(ltm.as_deref(), task, *expand),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
