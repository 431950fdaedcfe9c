use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use subnormal::harness::{
    error_exit_code, exit_code, generate, run_suite, run_verify, Family, GenRequest, Instance, SuiteConfig, Tamper,
    TheoremId,
};
use subnormal::Error;

#[derive(Parser)]
#[command(name = "subnormal", version, about = "Verify ε-subdifferential and δ-normal set identities on convex instances")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify one theorem on an instance file.
    Verify {
        /// thm1, maxmain, finitecase, increasing0, tmain, cor0, cor1, galb, biz,
        /// corolarioimportante, teoepi, ct, rii, spe, lems, diag, lmax or reps.
        #[arg(long)]
        theorem: String,
        #[arg(long)]
        instance: PathBuf,
        /// Set-comparison tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Truncation radius for unbounded sets.
        #[arg(long)]
        radius: Option<f64>,
        /// Number of probe directions.
        #[arg(long)]
        dirs: Option<usize>,
        /// Worker threads for probe evaluation.
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded instance.
    Gen {
        #[arg(long)]
        family: String,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite configuration and print the acceptance table.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent instances.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, format!("{body}\n")).map_err(|e| Error::Input(format!("{}: {e}", p.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>, Error> {
    jobs.map(|j| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))
    })
    .transpose()
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Verify { theorem, instance, tol, radius, dirs, jobs, out } => {
            let Ok(theorem) = theorem.parse::<TheoremId>() else {
                eprintln!("error: unknown theorem id '{theorem}'\n");
                eprintln!("{}", Cli::command().render_usage());
                let ids: Vec<&str> = TheoremId::ALL.iter().map(|t| t.as_str()).collect();
                eprintln!("theorem ids: {}", ids.join(", "));
                return Ok(2);
            };
            let mut inst = Instance::from_json(&read(&instance)?)?;
            if let Some(t) = tol {
                inst.probe.tol = t;
            }
            if let Some(r) = radius {
                inst.probe.radius = r;
            }
            if let Some(d) = dirs {
                inst.probe.n_dirs = d;
            }
            log::info!("verifying {theorem} on {}", instance.display());
            let start = Instant::now();
            let mut rep = match pool(jobs)? {
                Some(p) => p.install(|| run_verify(theorem, &inst, &Tamper::default()))?,
                None => run_verify(theorem, &inst, &Tamper::default())?,
            };
            rep.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            let body = serde_json::to_string_pretty(&rep).expect("reports serialise");
            write_or_print(out.as_deref(), &body)?;
            eprintln!("{}", rep.summary());
            Ok(exit_code(rep.verdict))
        }
        Cmd::Gen { family, dim, size, seed, out } => {
            let family: Family = family.parse()?;
            let inst = generate(&GenRequest { family, dim, size, seed })?;
            write_or_print(out.as_deref(), &inst.to_json())?;
            Ok(0)
        }
        Cmd::Suite { config, jobs, out } => {
            let cfg = SuiteConfig::from_json(&read(&config)?)?;
            log::info!("suite {} with {} entries", config.display(), cfg.entries.len());
            let rep = run_suite(&cfg, jobs)?;
            let body = serde_json::to_string_pretty(&rep).expect("reports serialise");
            if out.is_some() {
                write_or_print(out.as_deref(), &body)?;
            }
            print!("{}", rep.table_text());
            Ok(rep.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUBNORMAL_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        error_exit_code(&e)
    });
    ExitCode::from(code as u8)
}
