use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use htn::experiment::{run_experiment, ExperimentConfig, MetricsRecord};
use htn::qcompile::{self, compile_matrix, parse_matrix_json, toffoli_separation_demo, AncillaMode};
use htn::verify::{run_criterion, Status, VerifyOptions, CRITERIA};
use htn::{HtnError, Result};

#[derive(Parser)]
#[command(name = "htn", version, about = "Hybrid tensor network classifiers and post-selected circuits")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "htn-out")]
    out: PathBuf,
    /// Overrides the split and sweep seeds of a config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every cell of a config (a single cell without a grid section).
    Run { config: PathBuf },
    /// Like `run`, but the config must contain a grid.
    Grid { config: PathBuf },
    /// Built-in demonstrations.
    Demo {
        #[arg(value_enum)]
        which: Demo,
    },
    /// Compile a matrix given as `{"real": [[..]], "imag": [[..]]}` into a circuit.
    Compile {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Single)]
        ancillas: Mode,
    },
    /// Run the acceptance checks.
    Verify {
        /// Include long-running checks (MNIST).
        #[arg(long)]
        long: bool,
        /// Directory holding the MNIST IDX files.
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        /// Only these criteria, e.g. `--only 1,7,12`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Adam steps per window in the Iris grid.
        #[arg(long, default_value_t = 10)]
        grid_steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Toffoli,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Deferred,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HtnError::io_at(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HtnError::io_at(dir, e))
}

fn summary(records: &[MetricsRecord]) {
    println!("{:<22} {:>10} {:>9} {:>10} {:>9}", "cell", "train loss", "train acc", "test loss", "test acc");
    for r in records {
        if let Some(e) = &r.error {
            println!("{:<22} error: {e}", r.cell.stem());
            continue;
        }
        let (tr, te) = (r.final_train(), r.final_test());
        let f = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!(
            "{:<22} {:>10} {:>9} {:>10} {:>9}",
            r.cell.stem(),
            f(tr.map(|e| e.loss), 4),
            f(tr.map(|e| e.accuracy), 3),
            f(te.map(|e| e.loss), 4),
            f(te.map(|e| e.accuracy), 3)
        );
    }
}

fn run(cli: &Cli, config: &Path, need_grid: bool) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(config)?;
    if need_grid && cfg.grid.is_none() {
        return Err(HtnError::Config(format!("{} has no grid section", config.display())));
    }
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let out = run_experiment(&cfg, &cli.out)?;
    summary(&out.records);
    println!("wrote {} files to {}", out.files.len(), cli.out.display());
    Ok(out.records.iter().all(|r| r.error.is_none()))
}

fn demo(cli: &Cli) -> Result<bool> {
    let report = toffoli_separation_demo()?;
    mkdir(&cli.out)?;
    write(&cli.out.join("toffoli.circ"), &report.circuit)?;
    write(&cli.out.join("toffoli.json"), &serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.circuit);
    for c in &report.cases {
        println!("{} -> {}: fidelity {:.15}, retention {:.15}", c.input, c.expected, c.fidelity, c.retention);
    }
    println!("input overlap {:.6}, output overlap {:.3e}", report.input_overlap, report.output_overlap);
    Ok(true)
}

fn compile(cli: &Cli, matrix: &Path, mode: Mode) -> Result<bool> {
    let text = std::fs::read_to_string(matrix).map_err(|e| HtnError::io_at(matrix, e))?;
    let (d, m) = parse_matrix_json(&text)?;
    let mode = match mode {
        Mode::Single => AncillaMode::Single,
        Mode::Deferred => AncillaMode::Deferred,
    };
    let circuit = compile_matrix(d, &m, mode)?;
    let stem = matrix.file_stem().and_then(|s| s.to_str()).unwrap_or("matrix");
    mkdir(&cli.out)?;
    let path = cli.out.join(format!("{stem}.circ"));
    write(&path, &qcompile::serialize(&circuit))?;
    println!(
        "{d}x{d} matrix -> {} qubits ({} ancillas), {} gates, rescale {:.6}; wrote {}",
        circuit.n_qubits,
        circuit.n_ancillas(),
        circuit.gates.len(),
        circuit.rescale,
        path.display()
    );
    Ok(true)
}

fn verify(cli: &Cli, long: bool, mnist_dir: Option<PathBuf>, only: &[u32], grid_steps: usize) -> Result<bool> {
    mkdir(&cli.out)?;
    let opts = VerifyOptions {
        seed: cli.seed.unwrap_or(0),
        long,
        mnist_dir,
        work_dir: cli.out.join("verify"),
        grid_adam_steps: grid_steps,
        ..VerifyOptions::default()
    };
    let mut results = Vec::new();
    for &(id, _) in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.0)) {
        let r = run_criterion(id, &opts)?;
        println!("{}", r.line());
        results.push(r);
    }
    write(&cli.out.join("verify.json"), &serde_json::to_string_pretty(&results)?)?;
    Ok(results.iter().all(|r| r.status != Status::Fail))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config, false),
        Command::Grid { config } => run(&cli, config, true),
        Command::Demo { which: Demo::Toffoli } => demo(&cli),
        Command::Compile { matrix, ancillas } => compile(&cli, matrix, *ancillas),
        Command::Verify { long, mnist_dir, only, grid_steps } => verify(&cli, *long, mnist_dir.clone(), only, *grid_steps),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
