use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mfee_core::backend::{Backend, ReferenceBackend};
use mfee_core::eval::{
    build_replay_set, compare_routers, compute_metrics, generate_baselines, parse_baselines_jsonl,
    parse_replay_jsonl, parse_trace_jsonl, render_frontier_table, render_report, render_temporal, run_replay,
    run_replay_parallel, run_temporal, write_baselines_jsonl, write_replay_jsonl, write_run_dir, Mix,
};
use mfee_core::fixtures::{
    adversarial, bundled_collision_fixtures, load_collision_dir, Fixtures, TEMPORAL_TRACE_JSONL,
};
use mfee_core::routers::{enumerate_frontier, find_collisions, parse_labeled_jsonl, MAX_FRONTIER_K};
use mfee_service::{serve, ControlPlane, RemoteBackend, ServiceConfig};

#[derive(Parser)]
#[command(name = "mfee", version, about = "Execution gating for inference requests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled replay set.
    GenReplay {
        /// `default` or `category=count,...`
        #[arg(long, default_value = "default")]
        mix: Mix,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Fixture directory overriding the bundled set.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every replay entry ungated and record the outputs.
    GenBaseline {
        #[arg(long)]
        replay: PathBuf,
        /// `reference` or the http:// URL of a remote generate endpoint.
        #[arg(long, default_value = "reference")]
        backend: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate a replay set, validate every decision and write a run directory.
    Eval {
        #[arg(long)]
        replay: PathBuf,
        #[arg(long)]
        baselines: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Worker threads; refused when the replay contains redundant entries.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Avoidance/correctness frontier of the baseline routers and the gate.
    CompareRouters {
        /// Labeled JSONL population; the bundled adversarial subset if omitted.
        #[arg(long)]
        adversarial: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate every decision table over each collision fixture.
    FrontierCheck {
        /// Directory of `<name>.features.tsv` / `<name>.jsonl` pairs.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Largest feature count to enumerate.
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Replay a timestamped multi-user trace.
    Temporal {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP control plane.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fixtures(dir: Option<&Path>) -> Result<Fixtures> {
    Ok(match dir {
        Some(d) => Fixtures::load_dir(d)?,
        None => Fixtures::bundled()?,
    })
}

fn backend(spec: &str) -> Result<Box<dyn Backend>> {
    if spec == "reference" {
        return Ok(Box::new(ReferenceBackend));
    }
    if spec.starts_with("http://") {
        return Ok(Box::new(RemoteBackend::new(spec, Duration::from_secs(30), 16)?));
    }
    bail!("unknown backend `{spec}`: expected `reference` or an http:// URL")
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenReplay {
            mix,
            seed,
            fixtures: dir,
            out,
        } => {
            let f = fixtures(dir.as_deref())?;
            let entries = build_replay_set(&mix, seed, &f);
            emit(out.as_deref(), &write_replay_jsonl(&entries))?;
            eprintln!("{} entries (mix {mix}, seed {seed})", entries.len());
        }
        Command::GenBaseline {
            replay,
            backend: spec,
            out,
        } => {
            let entries = parse_replay_jsonl(&read(&replay)?)?;
            let records = generate_baselines(&entries, backend(&spec)?.as_ref())?;
            emit(out.as_deref(), &write_baselines_jsonl(&records))?;
            eprintln!("{} baselines", records.len());
        }
        Command::Eval {
            replay,
            baselines,
            config,
            out,
            threads,
        } => {
            let cfg = ServiceConfig::load(config.as_deref())?;
            let f = fixtures(cfg.fixtures_dir.as_deref())?;
            let entries = parse_replay_jsonl(&read(&replay)?)?;
            let base = parse_baselines_jsonl(&read(&baselines)?)?;
            let gate = f.gate(cfg.gate.clone())?;
            let exec: Box<dyn Backend> = match &cfg.backend.endpoint {
                Some(e) if cfg.is_remote() => backend(e)?,
                _ => Box::new(ReferenceBackend),
            };
            let profile = cfg.backend.profile;
            let records = if threads > 1 {
                run_replay_parallel(&entries, &base, &gate, exec.as_ref(), &profile, threads)?
            } else {
                run_replay(&entries, &base, &gate, exec.as_ref(), &profile)?
            };
            let report = compute_metrics(&records)?;
            let header = format!(
                "replay {} ({} entries), baselines {}, exec profile {} ms + {} ms/token",
                replay.display(),
                entries.len(),
                baselines.display(),
                profile.base_ms,
                profile.per_token_ms
            );
            let artifacts = write_run_dir(&out, &records, &report, &header)?;
            print!("{}", render_report(&report, &header));
            eprintln!("wrote {}", artifacts.dir.display());
            return Ok(report.exact_mismatches == 0 && report.validation_failures.is_empty());
        }
        Command::CompareRouters {
            adversarial: path,
            out,
        } => {
            let population = match path {
                Some(p) => parse_labeled_jsonl(&read(&p)?)?,
                None => adversarial()?,
            };
            let table = compare_routers(&population, &Fixtures::bundled()?, Default::default())?;
            print!("{}", render_frontier_table(&table));
            if let Some(p) = out {
                emit(Some(&p), &serde_json::to_string_pretty(&table)?)?;
            }
        }
        Command::FrontierCheck { fixtures: dir, k } => {
            if k > MAX_FRONTIER_K {
                bail!("k = {k} exceeds the enumeration bound of {MAX_FRONTIER_K}");
            }
            let all = match dir {
                Some(d) => load_collision_dir(d)?,
                None => bundled_collision_fixtures()?,
            };
            let mut ok = true;
            for fx in all.into_iter().filter(|f| f.fmap.k() <= k) {
                let collisions = find_collisions(&fx.population, &fx.fmap);
                let r = enumerate_frontier(&collisions, &fx.fmap, &fx.population)?;
                ok &= r.theorem_holds();
                println!(
                    "{:<20} k={} tables={:<6} collisions={:<3} satisfying={:<4} best zero-failure avoidance={:.3} {}",
                    fx.name,
                    r.k,
                    r.tables_checked,
                    collisions.len(),
                    r.satisfying_tables,
                    r.best_zero_failure_avoidance,
                    if r.theorem_holds() { "ok" } else { "VIOLATED" }
                );
            }
            return Ok(ok);
        }
        Command::Temporal { trace, out } => {
            let text = match trace {
                Some(p) => read(&p)?,
                None => TEMPORAL_TRACE_JSONL.to_string(),
            };
            let trace = parse_trace_jsonl(&text)?;
            let gate = Fixtures::bundled()?.gate(Default::default())?;
            let report = run_temporal(&trace, &gate, &ReferenceBackend, &Default::default())?;
            print!("{}", render_temporal(&report));
            if let Some(p) = out {
                emit(Some(&p), &serde_json::to_string_pretty(&report)?)?;
            }
            return Ok(report.regressions.is_empty());
        }
        Command::Serve { config, port } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let mut cfg = ServiceConfig::load(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            let plane = Arc::new(ControlPlane::from_config(&cfg)?);
            let addr = SocketAddr::from(([0, 0, 0, 0], cfg.port));
            tokio::runtime::Runtime::new()?.block_on(serve(plane, addr))?;
        }
    }
    Ok(true)
}

fn main() {
    match run(Cli::parse()) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
