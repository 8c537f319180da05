use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use poabcast::bench::{self, CostModel, MetricsRow};
use poabcast::check::{self, Report};
use poabcast::protocol::Protocol;
use poabcast::runner;
use poabcast::scenario::{self, Scenario};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "poab",
    version,
    about = "Run primary-order broadcast scenarios and benchmarks in simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name and check its trace.
    Run {
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    #[command(subcommand)]
    Bench(Bench),
    /// List the bundled scenarios.
    List,
}

#[derive(Subcommand)]
enum Bench {
    /// Stable-period latency and leader-change idle time against the
    /// closed-form time complexities.
    Table1 {
        #[arg(long, default_value_t = 10)]
        delta: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,5")]
        clients: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Sequential against pipelined consensus instances under load.
    Throughput {
        #[arg(long, default_value_t = 1024)]
        size: usize,
        #[arg(long, default_value_t = bench::THROUGHPUT_COST.delta)]
        delta: u64,
        #[arg(long, default_value_t = bench::THROUGHPUT_COST.per_byte)]
        per_byte: u64,
        #[arg(long, default_value_t = bench::THROUGHPUT_COST.batch_cap)]
        batch: usize,
        #[arg(long, value_delimiter = ',', default_values_t = bench::THROUGHPUT_CLIENTS)]
        clients: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Directory for the trace, report and metrics files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Lines)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Lines,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn execute(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::List => {
            for (name, _) in scenario::BUNDLED {
                let s = scenario::bundled(name).expect("bundled scenarios parse");
                println!("{name:<28} {:<14} n={}", s.protocol.name(), s.n);
            }
            Ok(0)
        }
        Command::Run {
            scenario,
            seed,
            common,
        } => run(&scenario, seed, &common),
        Command::Bench(Bench::Table1 {
            delta,
            clients,
            common,
        }) => table1(delta, &clients, &common),
        Command::Bench(Bench::Throughput {
            size,
            delta,
            per_byte,
            batch,
            clients,
            common,
        }) => {
            anyhow::ensure!(
                delta >= 1 && batch >= 1,
                "--delta and --batch must be at least 1"
            );
            let cost = CostModel {
                delta,
                per_byte,
                batch_cap: batch,
            };
            let protocols = [Protocol::TauSeq, Protocol::TauPaxos];
            let rows = bench::bench_throughput(
                &protocols,
                &clients,
                size,
                cost,
                bench::THROUGHPUT_OPS_PER_CLIENT,
            )?;
            emit_rows(&rows, &common, "throughput")?;
            let ratio =
                bench::peak(&rows, Protocol::TauPaxos) / bench::peak(&rows, Protocol::TauSeq);
            eprintln!("peak throughput parallel/sequential: {ratio:.3}");
            Ok(0)
        }
    }
}

fn load(arg: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        let src =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Scenario::from_toml(&src).with_context(|| format!("in {}", path.display()));
    }
    if let Some(s) = scenario::bundled(arg) {
        return Ok(s);
    }
    anyhow::bail!("{arg}: no such file or bundled scenario (see `poab list`)")
}

fn run(arg: &str, seed: Option<u64>, common: &Common) -> anyhow::Result<u8> {
    let mut s = load(arg)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let out = runner::run(&s)?;
    let report = check::check_all(&out.trace);
    let rendered = report.render(&out.trace);
    print!("{rendered}");
    let metrics = bench::run_metrics(&s, &out.trace);
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let file = fs::File::create(dir.join(format!("{}.trace.jsonl", s.name)))?;
        out.trace.write_lines(std::io::BufWriter::new(file))?;
        fs::write(dir.join(format!("{}.report.txt", s.name)), &rendered)?;
    }
    emit_rows(&[metrics], common, &s.name)?;
    Ok(exit_code(&s, &report))
}

fn exit_code(s: &Scenario, report: &Report) -> u8 {
    if s.expect_violation {
        // A counterexample that fails to reproduce is a failure.
        return if report.safe() { EXIT_VIOLATION } else { 0 };
    }
    if !report.safe() || report.liveness_failed() {
        EXIT_VIOLATION
    } else if report.inconclusive() {
        EXIT_INCONCLUSIVE
    } else {
        0
    }
}

fn table1(delta: u64, clients: &[u32], common: &Common) -> anyhow::Result<u8> {
    anyhow::ensure!(delta >= 1, "--delta must be at least 1");
    let rows = bench::table1(delta, clients)?;
    emit_rows(&rows, common, "table1")?;
    let mut ok = true;
    for r in &rows {
        let want_lat = bench::expected_stable_latency(r.protocol, delta, r.clients);
        let want_idle = bench::expected_leader_change(r.protocol, delta);
        if r.latency_max != want_lat || r.leader_change_idle != Some(want_idle) {
            eprintln!(
                "{} c={}: latency {} (expected {want_lat}), leader change {:?} (expected {want_idle})",
                r.protocol.name(),
                r.clients,
                r.latency_max,
                r.leader_change_idle
            );
            ok = false;
        }
    }
    Ok(if ok { 0 } else { EXIT_VIOLATION })
}

fn emit_rows(rows: &[MetricsRow], common: &Common, stem: &str) -> anyhow::Result<()> {
    match common.format {
        Format::Csv => bench::write_csv(rows, std::io::stdout().lock())?,
        Format::Lines => {
            for r in rows {
                println!("{}", serde_json::to_string(r)?);
            }
        }
    }
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        bench::write_csv(
            rows,
            fs::File::create(dir.join(format!("{stem}.metrics.csv")))?,
        )?;
    }
    Ok(())
}
