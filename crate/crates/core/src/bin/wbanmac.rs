use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wbanmac::error::{Result, SimError};
use wbanmac::sweep::{self, SweepSpec};
use wbanmac::{Protocol, SimConfig, TraceOptions};

#[derive(Parser)]
#[command(name = "wbanmac", version, about = "Priority-aware duty-cycled MAC simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep generation intervals and protocols, writing results.csv and plot series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Seeds per sweep point.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Worker threads (default: one per core).
        #[arg(long)]
        parallel: Option<usize>,
        /// Skip runs already present in results.csv.
        #[arg(long)]
        resume: bool,
        /// Comma-separated mean generation intervals in seconds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        intervals: Vec<f64>,
        /// Comma-separated protocols.
        #[arg(long, value_delimiter = ',', default_value = "ADP,ADP2,MVDR")]
        protocols: Vec<Protocol>,
    },
    /// Rebuild plot series from an existing results.csv.
    Plotdata {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configuration once and print the frame trace.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        frames: bool,
        /// Also write the packet arrivals as CSV.
        #[arg(long)]
        arrivals: Option<PathBuf>,
    },
}

fn simulate(
    config: PathBuf,
    out: PathBuf,
    seeds: u64,
    parallel: Option<usize>,
    resume: bool,
    intervals: Vec<f64>,
    protocols: Vec<Protocol>,
) -> Result<()> {
    let base = SimConfig::parse_file(&config)?;
    fs::create_dir_all(&out).map_err(|e| SimError::io(&out, e))?;
    let echo = out.join("config.echo");
    fs::write(&echo, base.echo()).map_err(|e| SimError::io(&echo, e))?;

    let spec = SweepSpec {
        protocols,
        intervals: intervals.iter().map(|s| (s * 1e6).round() as u64).collect(),
        seeds,
        first_seed: base.seed,
    };
    let csv_path = out.join("results.csv");
    let (mut rows, done) = if resume { sweep::existing_keys(&csv_path)? } else { Default::default() };
    if cfg!(not(feature = "parallel")) && parallel.is_some_and(|k| k > 1) {
        eprintln!("built without the `parallel` feature; running sequentially");
    }
    let fresh = sweep::run_sweep(&spec, &base, parallel, &done)?;
    let failed = fresh.iter().filter(|r| r.status.starts_with("failed")).count();
    eprintln!("{} runs, {} failed, {} resumed", fresh.len(), failed, rows.len());
    rows.extend(fresh);
    sweep::sort_rows(&mut rows);
    sweep::write_csv(&csv_path, &rows)?;
    // series come from the CSV as written, so `plotdata` reproduces them
    let rows = sweep::read_csv(&csv_path)?;
    sweep::emit_plot_data(&rows, &out)?;
    Ok(())
}

fn trace(config: PathBuf, frames: bool, arrivals: Option<PathBuf>) -> Result<()> {
    let cfg = SimConfig::parse_file(&config)?;
    let report = wbanmac::run_traced(&cfg, TraceOptions { frames, arrivals: arrivals.is_some(), intervals: false })?;
    let stdout = io::stdout();
    let mut w = io::BufWriter::new(stdout.lock());
    let io_err = |e| SimError::io(std::path::Path::new("<stdout>"), e);
    if frames {
        writeln!(w, "time_us\tkind\tsrc\tdst\tpriority\toutcome").map_err(io_err)?;
        let mut decisions = report.decisions.iter().peekable();
        for f in &report.frames {
            while let Some(d) = decisions.next_if(|d| d.at <= f.start) {
                writeln!(w, "# {}\t{}\t{}\t{}", d.at.0, d.kind.as_str(), d.node, d.peer).map_err(io_err)?;
            }
            writeln!(w, "{f}").map_err(io_err)?;
        }
        for d in decisions {
            writeln!(w, "# {}\t{}\t{}\t{}", d.at.0, d.kind.as_str(), d.node, d.peer).map_err(io_err)?;
        }
    }
    if let Some(path) = arrivals {
        let mut cw = csv::Writer::from_path(&path)?;
        cw.write_record(["time_us", "node", "priority", "packet_id"])?;
        for a in &report.arrivals {
            cw.write_record([a.at.0.to_string(), a.node.to_string(), a.priority.to_string(), a.packet.to_string()])?;
        }
        cw.flush().map_err(|e| SimError::io(&path, e))?;
    }
    let row = wbanmac::summarize(&report.output);
    writeln!(
        w,
        "# {} seed {}: {} delivered of {} generated, status {}, end {:.3} s",
        row.protocol, row.seed, row.delivered, row.generated, row.status, row.end_time_s
    )
    .map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Simulate { config, out, seeds, parallel, resume, intervals, protocols } => {
            simulate(config, out, seeds, parallel, resume, intervals, protocols)
        }
        Command::Plotdata { csv, out } => {
            sweep::read_csv(&csv).and_then(|rows| sweep::emit_plot_data(&rows, &out)).map(|_| ())
        }
        Command::Trace { config, frames, arrivals } => trace(config, frames, arrivals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
