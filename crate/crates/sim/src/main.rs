use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use l2amm_sim::metrics::write_csv_file;
use l2amm_sim::sweep::{sweep, SweepParam};
use l2amm_sim::{compare_baseline, run, ExperimentConfig, RunOutput, SimError};

#[derive(Parser)]
#[command(name = "l2amm", about = "Simulates an AMM sidechain anchored to a token bank on a mainchain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its report and traces.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare mainchain gas and growth against direct mainchain execution.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep one parameter, e.g. `--param rounds_per_epoch=5,10,20,30`.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        param: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, SimError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_toml(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)?)?;
    write_csv_file(&out.rounds, &dir.join("rounds.csv"))?;
    write_csv_file(&out.epochs, &dir.join("epochs.csv"))?;
    write_csv_file(&out.prunes, &dir.join("prunes.csv"))?;
    write_csv_file(&out.main_blocks, &dir.join("mainchain.csv"))?;
    out.side.dump_jsonl(BufWriter::new(fs::File::create(dir.join("sidechain.jsonl"))?))?;
    Ok(())
}

fn parse_param(s: &str) -> Result<(SweepParam, Vec<f64>), SimError> {
    let (name, vals) = s.split_once('=').ok_or_else(|| SimError::ConfigInvalid("expected name=v1,v2,...".into()))?;
    let values = vals
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| SimError::ConfigInvalid(format!("bad sweep value {v}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().parse()?, values))
}

fn main_inner(cli: Cli) -> Result<bool, SimError> {
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let cfg = load(config.as_deref(), seed)?;
            let res = run(&cfg)?;
            write_outputs(&res, &out)?;
            let r = &res.report;
            println!(
                "committed {} of {} txs, {:.1} tx/s, sidechain latency {:.1} s, payout latency {:.1} s",
                r.committed_txs, r.generated_txs, r.throughput_tps, r.avg_sidechain_latency_s, r.avg_payout_latency_s
            );
            for b in &r.invariant_breaches {
                eprintln!("invariant breach: {b}");
            }
            Ok(r.is_clean())
        }
        Cmd::Compare { config, seed } => {
            let c = compare_baseline(&load(config.as_deref(), seed)?)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(true)
        }
        Cmd::Sweep { config, param, seed, out } => {
            let cfg = load(config.as_deref(), seed)?;
            let (p, values) = parse_param(&param)?;
            let rows = sweep(&cfg, p, &values)?;
            write_csv_file(&rows, &out)?;
            for r in &rows {
                println!(
                    "{:>12} {:>8.1} tx/s  sidechain {:>6.1} s  payout {:>6.1} s",
                    r.value, r.throughput_tps, r.avg_sidechain_latency_s, r.avg_payout_latency_s
                );
            }
            Ok(rows.iter().all(|r| r.breaches == 0))
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
