//! Command-line verbs: `run`, `bench`, `attack-eval`, `inspect-ledger`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ledgerfl_core::aggregate::Aggregator;
use ledgerfl_core::attacks::{
    membership_advantage, reconstruct_gml, GmlConfig, GmlReport, MembershipReport, Observation,
};
use ledgerfl_core::chain::Ledger;
use ledgerfl_core::crypto::{keygen, Backend, EncVector, HeParams, PLAINTEXT_BOUND};
use ledgerfl_core::harness::{Clock, RoundConfig, RoundMetrics, Simulation};
use ledgerfl_core::linalg::Matrix;
use ledgerfl_core::numerics::{loss_and_grad, Batch};
use serde::Serialize;

use crate::artifacts::{
    accuracy_svg, ledger_jsonl, metrics_csv, parse_ledger_jsonl, write_file, Summary,
};
use crate::config::{load_config, Overrides};
use crate::idx::load_idx_dir;
use crate::{io_err, AppError, AppResult, MonotonicClock};

#[derive(Debug, Parser)]
#[command(
    name = "ledgerfl",
    version,
    about = "Ledger-coordinated federated learning simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write metrics, summary, ledger and chart.
    Run(RunArgs),
    /// Time rounds over a sweep of enterprise counts.
    Bench(BenchArgs),
    /// Gradient reconstruction, membership inference and exposure audit.
    AttackEval(RunArgs),
    /// Verify and print a `ledger.jsonl` dump.
    InspectLedger { path: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML file with `RoundConfig` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long, value_parser = parse_aggregator)]
    pub aggregator: Option<Aggregator>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub enterprises: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding the four standard IDX files; replaces synthetic data.
    #[arg(long)]
    pub idx_dir: Option<PathBuf>,
    /// Skip the SVG chart.
    #[arg(long)]
    pub no_svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Enterprise counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 25, 50, 100])]
    pub counts: Vec<usize>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "exact" => Ok(Backend::Exact),
        "lattice" => Ok(Backend::Lattice),
        _ => Err(format!("unknown backend `{s}` (exact|lattice)")),
    }
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    Aggregator::parse(s).map_err(|e| e.to_string())
}

impl CommonArgs {
    pub fn resolve(&self) -> AppResult<RoundConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RoundConfig::default(),
        };
        Overrides {
            seed: self.seed,
            backend: self.backend,
            aggregator: self.aggregator,
            rounds: self.rounds,
            enterprises: self.enterprises,
            alpha: self.alpha,
            mu: self.mu,
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

pub fn execute(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Run(a) => {
            let summary = run(&a)?;
            println!(
                "{} rounds, final accuracy {:.2}%, {} discarded, ledger {} blocks -> {}",
                summary.rounds,
                summary.final_acc_pct.unwrap_or(f64::NAN),
                summary.discarded.len(),
                summary.ledger_blocks,
                a.common.out.display()
            );
            Ok(())
        }
        Command::Bench(a) => {
            for row in bench(&a)? {
                println!(
                    "C={:<4} client {:.3}s server {:.3}s total {:.3}s acc {:.2}%",
                    row.enterprises,
                    row.comp_client_s,
                    row.comp_server_s,
                    row.comp_total_s,
                    row.final_acc_pct
                );
            }
            Ok(())
        }
        Command::AttackEval(a) => {
            let r = attack_eval(&a)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("report serialises")
            );
            Ok(())
        }
        Command::InspectLedger { path } => {
            print!("{}", inspect_ledger(&path)?);
            Ok(())
        }
    }
}

fn simulation(cfg: &RoundConfig, idx_dir: Option<&Path>) -> AppResult<Simulation> {
    Ok(match idx_dir {
        Some(dir) => {
            let (train, test) = load_idx_dir(dir)?;
            Simulation::with_data(cfg.clone(), &train, test)?
        }
        None => Simulation::new(cfg.clone())?,
    })
}

fn drive(sim: &mut Simulation, rounds: usize, clock: &dyn Clock) -> AppResult<Vec<RoundMetrics>> {
    (0..rounds)
        .map(|_| sim.run_round(clock).map_err(AppError::from))
        .collect()
}

pub fn summarize(sim: &Simulation, metrics: &[RoundMetrics]) -> AppResult<Summary> {
    let exposure = sim.exposure()?;
    Ok(Summary {
        config: sim.config().clone(),
        rounds: metrics.len(),
        final_acc_pct: metrics.last().map(|m| m.acc_pct),
        best_acc_pct: metrics.iter().map(|m| m.acc_pct).reduce(f64::max),
        total_client_s: metrics.iter().map(|m| m.comp_client_s).sum(),
        total_server_s: metrics.iter().map(|m| m.comp_server_s).sum(),
        discarded: sim.strike_book().removed_ids(),
        malicious: sim.plan().malicious(),
        ledger_blocks: sim.ledger().len(),
        ledger_head: hex::encode(sim.ledger().head().hash),
        exposure_checked: exposure.checked,
        exposure_violations: exposure.violations.len(),
        final_stakes: sim.states().iter().map(|s| s.stake).collect(),
    })
}

/// Runs the experiment and writes every artifact under `args.common.out`.
pub fn run(args: &RunArgs) -> AppResult<Summary> {
    let cfg = args.common.resolve()?;
    let mut sim = simulation(&cfg, args.idx_dir.as_deref())?;
    let metrics = drive(&mut sim, cfg.rounds, &MonotonicClock::new())?;
    let summary = summarize(&sim, &metrics)?;
    let out = &args.common.out;
    write_file(&out.join("metrics.csv"), &metrics_csv(&metrics))?;
    write_file(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialises"),
    )?;
    write_file(&out.join("ledger.jsonl"), &ledger_jsonl(sim.ledger()))?;
    if !args.no_svg {
        let title = format!("{} accuracy, C={}", cfg.aggregator.name(), cfg.enterprises);
        write_file(&out.join("accuracy.svg"), &accuracy_svg(&metrics, &title))?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub enterprises: usize,
    pub rounds: usize,
    pub comp_client_s: f64,
    pub comp_server_s: f64,
    pub comp_total_s: f64,
    pub final_acc_pct: f64,
}

/// Per-count totals; `selected` is capped at each count. Writes `bench.csv`.
pub fn bench(args: &BenchArgs) -> AppResult<Vec<BenchRow>> {
    let base = args.common.resolve()?;
    if args.counts.is_empty() {
        return Err(AppError::Usage("--counts needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &n in &args.counts {
        let mut cfg = base.clone();
        cfg.enterprises = n;
        cfg.selected = cfg.selected.min(n);
        cfg.validate()?;
        let mut sim = Simulation::new(cfg.clone())?;
        let m = drive(&mut sim, cfg.rounds, &MonotonicClock::new())?;
        rows.push(BenchRow {
            enterprises: n,
            rounds: m.len(),
            comp_client_s: m.iter().map(|r| r.comp_client_s).sum(),
            comp_server_s: m.iter().map(|r| r.comp_server_s).sum(),
            comp_total_s: m.iter().map(|r| r.comp_total_s).sum(),
            final_acc_pct: m.last().map_or(f64::NAN, |r| r.acc_pct),
        });
    }
    let mut csv =
        String::from("enterprises,rounds,comp_client_s,comp_server_s,comp_total_s,final_acc_pct\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.enterprises,
            r.rounds,
            r.comp_client_s,
            r.comp_server_s,
            r.comp_total_s,
            r.final_acc_pct
        ));
    }
    write_file(&args.common.out.join("bench.csv"), &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub aggregator: Aggregator,
    pub rounds: usize,
    pub final_acc_pct: f64,
    /// Reconstruction against a plaintext single-sample gradient.
    pub gml_plaintext: GmlReport,
    /// The same gradient as an encrypted upload.
    pub gml_ciphertext: GmlReport,
    /// Mean of the per-round GML probes the run recorded, if any.
    pub gml_rounds_mean: Option<f64>,
    pub membership: MembershipReport,
    pub exposure_checked: usize,
    pub exposure_violations: usize,
}

const MEMBERSHIP_THRESHOLD: f64 = 0.9;

/// Runs the experiment, then attacks its final global model. Writes
/// `attack.json`.
pub fn attack_eval(args: &RunArgs) -> AppResult<AttackReport> {
    let cfg = args.common.resolve()?;
    let mut sim = simulation(&cfg, args.idx_dir.as_deref())?;
    let metrics = drive(&mut sim, cfg.rounds, &MonotonicClock::new())?;
    let model = sim.globals()[0].clone();
    let test = sim.test_set();
    let sample = Batch::new(
        Matrix::from_vec(1, test.dim(), test.features.row(0).to_vec())?,
        vec![test.labels[0]],
    )?;
    let (_, grad) = loss_and_grad(&model, &sample, None)?;
    let gml_cfg = GmlConfig {
        seed: cfg.seed,
        ..GmlConfig::default()
    };
    let gml_plaintext = reconstruct_gml(Observation::Plaintext(&grad), &model, &gml_cfg)?;
    let own_keys;
    let keys = match sim.keys() {
        Some(k) => k,
        None => {
            own_keys = keygen(&HeParams::exact(), cfg.seed)?;
            &own_keys
        }
    };
    let clipped: Vec<f64> = grad
        .values
        .iter()
        .map(|v| v.clamp(-PLAINTEXT_BOUND, PLAINTEXT_BOUND))
        .collect();
    let enc = EncVector::encrypt(&keys.public, &clipped, cfg.seed)?;
    let gml_ciphertext = reconstruct_gml(Observation::Ciphertext(&enc), &model, &gml_cfg)?;
    let probes: Vec<f64> = metrics.iter().filter_map(|m| m.gml).collect();
    let members = sim
        .shards()
        .iter()
        .find(|s| !s.is_empty())
        .ok_or_else(|| AppError::Usage("no enterprise holds data".into()))?;
    let membership = membership_advantage(
        &model,
        &members.features,
        &test.features,
        MEMBERSHIP_THRESHOLD,
    )?;
    let exposure = sim.exposure()?;
    let report = AttackReport {
        aggregator: cfg.aggregator,
        rounds: metrics.len(),
        final_acc_pct: metrics.last().map_or(f64::NAN, |m| m.acc_pct),
        gml_plaintext,
        gml_ciphertext,
        gml_rounds_mean: (!probes.is_empty())
            .then(|| probes.iter().sum::<f64>() / probes.len() as f64),
        membership,
        exposure_checked: exposure.checked,
        exposure_violations: exposure.violations.len(),
    };
    write_file(
        &args.common.out.join("attack.json"),
        &serde_json::to_string_pretty(&report).expect("report serialises"),
    )?;
    Ok(report)
}

/// A table of blocks followed by the verification result.
pub fn inspect_ledger(path: &Path) -> AppResult<String> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let ledger = Ledger::from_blocks(parse_ledger_jsonl(&text, path)?)?;
    let mut s = format!(
        "{:>6}  {:<12} {:>6} {:>10}  hash\n",
        "height", "kind", "miner", "bytes"
    );
    for b in ledger.blocks() {
        let miner = b.miner.map_or_else(|| "-".to_string(), |m| m.to_string());
        s.push_str(&format!(
            "{:>6}  {:<12} {:>6} {:>10}  {}\n",
            b.height,
            b.kind.name(),
            miner,
            b.payload.len(),
            &hex::encode(b.hash)[..16]
        ));
    }
    match ledger.verify_chain() {
        Ok(()) => s.push_str(&format!("chain ok: {} blocks\n", ledger.len())),
        Err(e) => s.push_str(&format!("chain BROKEN: {e}\n")),
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "ledgerfl",
            "run",
            "--seed",
            "7",
            "--backend",
            "lattice",
            "--aggregator",
            "krum",
            "--rounds",
            "2",
            "--enterprises",
            "12",
            "--alpha",
            "0.5",
            "--mu",
            "0.1",
            "--out",
            "x",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else {
            panic!()
        };
        let cfg = a.common.resolve().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.backend, Backend::Lattice);
        assert_eq!(cfg.aggregator, Aggregator::Krum);
        assert_eq!((cfg.rounds, cfg.enterprises, cfg.selected), (2, 12, 12));
        assert_eq!((cfg.alpha, cfg.mu), (0.5, 0.1));
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(Cli::try_parse_from(["ledgerfl", "run", "--backend", "paillier"]).is_err());
        assert!(Cli::try_parse_from(["ledgerfl", "run", "--aggregator", "median"]).is_err());
        assert!(Cli::try_parse_from(["ledgerfl", "bench", "--counts", "5,x"]).is_err());
    }

    #[test]
    fn bench_counts_default_and_list() {
        let cli = Cli::try_parse_from(["ledgerfl", "bench", "--counts", "5,8"]).unwrap();
        let Command::Bench(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.counts, [5, 8]);
        let cli = Cli::try_parse_from(["ledgerfl", "bench"]).unwrap();
        let Command::Bench(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.counts, [10, 25, 50, 100]);
    }
}
