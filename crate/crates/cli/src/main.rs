mod session;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use rekodx_core::config::ConfigOverrides;
use rekodx_core::cycle::start_session;
use rekodx_core::evidence::{EvidenceState, Scalar};
use rekodx_core::model::{parse_module, to_sorted_json_pretty, validate, KnowledgeBase, LoadError};
use rekodx_core::refine::{refine_probabilities, RefinementConfig};
use rekodx_core::sensitivity::{stability_sweep, PerturbTarget};
use rekodx_core::simulator::{evaluate, evaluate_cases, generate, read_jsonl, summarize, write_jsonl, GenConfig};

#[derive(Debug, Parser)]
#[command(name = "rekodx", version, about = "Diagnostic reasoning over reusable knowledge modules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a module file and list every problem found
    Validate {
        file: PathBuf,
        /// Print the report as JSON
        #[arg(long)]
        json: bool,
    },
    /// Run an interactive diagnostic session in the terminal
    Session {
        #[arg(long)]
        module: PathBuf,
        /// Context attribute, e.g. `--context sex=female --context age=34`
        #[arg(long = "context", value_name = "NAME=VALUE")]
        context: Vec<String>,
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Write the step log here when the session ends
        #[arg(long, value_name = "FILE")]
        transcript: Option<PathBuf>,
        /// Number of differential rows to show
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Generate synthetic cases and report engine agreement on them
    Simulate {
        #[arg(long)]
        module: PathBuf,
        #[arg(long = "cases", value_name = "N")]
        n_cases: usize,
        #[arg(long)]
        seed: u64,
        /// Also write the cases as JSON Lines
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Allow cases with no true disorder
        #[arg(long)]
        allow_empty: bool,
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Replay recorded cases and report agreement
    Evaluate {
        #[arg(long)]
        module: PathBuf,
        #[arg(long, value_name = "FILE")]
        cases: PathBuf,
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Include one outcome row per case
        #[arg(long)]
        per_case: bool,
    },
    /// Measure top-1 stability under multiplicative probability deviations
    Sensitivity {
        #[arg(long)]
        module: PathBuf,
        #[arg(long, value_name = "FILE")]
        cases: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, value_name = "CSV")]
        lambdas: Vec<f64>,
        #[arg(long, default_value = "all", value_parser = parse_target)]
        target: PerturbTarget,
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Blend authored probabilities with case data and write a new module
    Refine {
        #[arg(long)]
        module: PathBuf,
        #[arg(long, value_name = "FILE")]
        cases: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        n0: f64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the HTTP session service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, value_name = "DIR")]
        modules: PathBuf,
        #[arg(long, value_name = "DIR")]
        log: PathBuf,
    },
}

fn parse_target(s: &str) -> Result<PerturbTarget, String> {
    s.parse()
}

/// A failure the user can fix by changing the invocation; exits with 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_module(path: &Path) -> Result<Arc<KnowledgeBase>> {
    match KnowledgeBase::load(&read(path)?) {
        Ok(kb) => Ok(Arc::new(kb)),
        Err(LoadError::Invalid(inv)) => Err(anyhow!("{} is not a valid module:\n{}", path.display(), inv.0)),
        Err(e) => Err(anyhow!("{}: {e}", path.display())),
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigOverrides> {
    match path {
        None => Ok(ConfigOverrides::default()),
        Some(p) => serde_json::from_slice(&read(p)?).with_context(|| format!("bad config file {}", p.display())),
    }
}

fn load_cases(path: &Path) -> Result<Vec<rekodx_core::simulator::CaseRecord>> {
    let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok(read_jsonl(&text).with_context(|| format!("bad case file {}", path.display()))?)
}

fn parse_context(pairs: &[String]) -> Result<BTreeMap<String, Scalar>> {
    pairs
        .iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Usage(format!("context {p:?} is not NAME=VALUE")))?;
            let value = match v {
                "true" => Scalar::Bool(true),
                "false" => Scalar::Bool(false),
                _ => v.parse::<f64>().map(Scalar::Number).unwrap_or_else(|_| Scalar::Text(v.into())),
            };
            Ok((k.to_string(), value))
        })
        .collect()
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", to_sorted_json_pretty(value));
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { file, json } => {
            let module = match parse_module(&read(&file)?) {
                Ok(m) => m,
                Err(e) => {
                    if json {
                        print_json(&serde_json::json!({"errors": [{"code": e.code(), "path": "", "message": e.to_string()}], "warnings": []}));
                    } else {
                        println!("{}: {} {e}", file.display(), e.code());
                    }
                    return Ok(ExitCode::from(1));
                }
            };
            let report = validate(&module);
            if json {
                print_json(&report);
            } else {
                print!("{report}");
                if report.is_clean() {
                    println!("{}: ok", file.display());
                }
            }
            Ok(ExitCode::from(if report.errors.is_empty() { 0 } else { 1 }))
        }
        Command::Session {
            module,
            context,
            config,
            transcript,
            top,
        } => {
            let kb = load_module(&module)?;
            let overrides = load_config(config.as_deref())?;
            let initial = EvidenceState {
                context: parse_context(&context)?,
                ..EvidenceState::default()
            };
            let s = start_session(kb, &overrides, initial)?;
            let stdin = std::io::stdin();
            let s = session::run(s, stdin.lock(), std::io::stdout().lock(), top)?;
            if let Some(path) = transcript {
                std::fs::write(&path, to_sorted_json_pretty(&s.snapshot()) + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            module,
            n_cases,
            seed,
            out,
            allow_empty,
            config,
        } => {
            if n_cases == 0 {
                return Err(Usage("--cases must be at least 1".into()).into());
            }
            let kb = load_module(&module)?;
            let overrides = load_config(config.as_deref())?;
            let mut gen = GenConfig::new(seed, n_cases);
            gen.require_nonempty = !allow_empty;
            let cases = generate(&kb, &gen)?;
            if let Some(path) = out {
                std::fs::write(&path, write_jsonl(&cases)).with_context(|| format!("cannot write {}", path.display()))?;
            }
            print_json(&evaluate(&kb, &cases, &overrides)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            module,
            cases,
            config,
            per_case,
        } => {
            let kb = load_module(&module)?;
            let overrides = load_config(config.as_deref())?;
            let cases = load_cases(&cases)?;
            let outcomes = evaluate_cases(&kb, &cases, &overrides)?;
            let report = summarize(&outcomes);
            if per_case {
                print_json(&serde_json::json!({"report": report, "cases": outcomes}));
            } else {
                print_json(&report);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sensitivity {
            module,
            cases,
            lambdas,
            target,
            config,
        } => {
            let kb = load_module(&module)?;
            let overrides = load_config(config.as_deref())?;
            let cases = load_cases(&cases)?;
            print_json(&stability_sweep(&kb, &cases, &lambdas, target, &overrides)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Refine { module, cases, n0, out } => {
            if same_file(&module, &out) {
                return Err(Usage(format!("--out {} would overwrite the input module; choose a new file", out.display())).into());
            }
            let kb = load_module(&module)?;
            let cases = load_cases(&cases)?;
            let (refined, report) = refine_probabilities(&kb, &cases, &RefinementConfig { equivalent_sample: n0 })?;
            std::fs::write(&out, refined.to_normalized_json()).with_context(|| format!("cannot write {}", out.display()))?;
            print_json(&report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, modules, log } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(rekodx_service::serve(rekodx_service::ServeConfig::new(port, modules, log)))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
