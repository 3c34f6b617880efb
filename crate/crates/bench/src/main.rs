use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mergeidx::workload::generate;
use mergeidx::{Backend, IncludedColumns, JoinType, StructureKind, WorkloadConfig};
use mergeidx_bench::report::{space_from_reports, write_table};
use mergeidx_bench::{
    build, ratio_table, report_space, run_experiment, run_grid, verify, write_csv, write_json,
    BenchError, BufferSize, ExperimentConfig, GridSpec, Phase, Result,
};

#[derive(Parser)]
#[command(name = "mergeidx-bench", version, about = "Merged index experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print its report.
    Run(RunArgs),
    /// Run every point of a grid file and write CSV, JSON and ratio tables.
    Grid(GridArgs),
    /// Load the three structures and print their space.
    Space(SpaceArgs),
    /// Compare every structure with the nested-loops oracle.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct WorkloadArgs {
    #[arg(long, default_value_t = 2)]
    warehouses: u32,
    #[arg(long, default_value_t = 2_000)]
    items_per_warehouse: u32,
    #[arg(long, default_value_t = 20_000)]
    orderlines_per_warehouse: u32,
    /// Seed of the generated data, queries and transactions.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl WorkloadArgs {
    fn config(&self, so: f64, policy: IncludedColumns) -> WorkloadConfig {
        WorkloadConfig {
            warehouses: self.warehouses,
            items_per_warehouse: self.items_per_warehouse,
            orderlines_per_warehouse: self.orderlines_per_warehouse,
            so,
            policy,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "btree")]
    backend: Backend,
    #[arg(long, default_value = "small")]
    buffer: BufferSize,
    #[arg(long, default_value_t = 1.0)]
    so: f64,
    #[arg(long, default_value = "inner")]
    jt: JoinType,
    #[arg(long, default_value = "covering")]
    policy: IncludedColumns,
    #[arg(long, default_value = "merged")]
    structure: StructureKind,
    #[arg(long, default_value = "point")]
    phase: Phase,
    /// Operations in the measured phase (transactions for `update`).
    #[arg(long, default_value_t = 1_000)]
    ops: usize,
    /// Join type a materialized view stores; defaults to --jt.
    #[arg(long)]
    view_join: Option<JoinType>,
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Grid file; the built-in default grid when omitted.
    file: Option<PathBuf>,
    /// Directory for report.csv, report.json, ratios.csv and space.csv.
    #[arg(long, default_value = "grid-out")]
    out: PathBuf,
    /// Overrides the workload seed of the grid.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, default_value = "btree")]
    backend: Backend,
    #[arg(long, default_value_t = 1.0)]
    so: f64,
    #[arg(long, default_value = "all")]
    policy: IncludedColumns,
    /// Join type the materialized view stores.
    #[arg(long, default_value = "inner")]
    view_join: JoinType,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seeded databases per check.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => run(args),
        Command::Grid(args) => grid(args),
        Command::Space(args) => space(args),
        Command::Verify(args) => Ok(verify_suite(args.seeds)),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig {
        backend: args.backend,
        buffer: args.buffer,
        so: args.so,
        jt: args.jt,
        policy: args.policy,
        structure: args.structure,
        phase: args.phase,
        workload: args.workload.config(args.so, args.policy),
        ops: args.ops,
        view_join: args.view_join,
    };
    let report = run_experiment(&cfg)?;
    let stdout = io::stdout().lock();
    if args.json {
        write_json(std::slice::from_ref(&report), stdout)?;
        println!();
    } else {
        write_csv(&[report], stdout)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn grid(args: GridArgs) -> Result<ExitCode> {
    let mut spec = match &args.file {
        Some(path) => GridSpec::load(path)?,
        None => GridSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let total = spec.configs().len();
    std::fs::create_dir_all(&args.out).map_err(|source| BenchError::Io {
        path: args.out.clone(),
        source,
    })?;
    let reports = run_grid(&spec, |n, r| {
        let c = &r.config;
        eprintln!(
            "[{}/{total}] {} {} so={} {} {} {} {}",
            n + 1,
            c.backend,
            c.buffer,
            c.so,
            c.jt,
            c.policy,
            c.structure,
            c.phase
        );
    })?;
    write_csv(&reports, create(&args.out.join("report.csv"))?)?;
    write_json(&reports, create(&args.out.join("report.json"))?)?;
    write_table(
        &ratio_table(&reports),
        create(&args.out.join("ratios.csv"))?,
    )?;
    write_table(
        &space_from_reports(&reports),
        create(&args.out.join("space.csv"))?,
    )?;
    println!("{} rows written to {}", reports.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn space(args: SpaceArgs) -> Result<ExitCode> {
    let workload = args.workload.config(args.so, args.policy);
    workload.validate().map_err(BenchError::Config)?;
    let db = generate(&workload);
    let mut structures = Vec::new();
    for structure in StructureKind::ALL {
        let cfg = ExperimentConfig {
            backend: args.backend,
            so: args.so,
            policy: args.policy,
            workload,
            view_join: Some(args.view_join),
            ..ExperimentConfig::new(structure, Phase::Load)
        };
        cfg.validate()?;
        structures.push(build(&cfg, &db)?.0);
    }
    let refs: Vec<_> = structures.iter().collect();
    write_table(&report_space(&refs), io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn verify_suite(seeds: u64) -> ExitCode {
    let checks = verify::run_all(seeds);
    let mut out = io::stdout().lock();
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} {} ({} cases)", c.name, c.cases);
        if let Some(f) = &c.failure {
            let _ = writeln!(out, "     {f}");
        }
    }
    if checks.iter().all(|c| c.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
