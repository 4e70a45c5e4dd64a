use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use janus_core::experiment::checkpoint::{attacker_payload, load_victim, read_checkpoint, restore_attacker, save_victim, write_checkpoint};
use janus_core::experiment::config::{DatasetConfig, ExperimentConfig};
use janus_core::experiment::cora::{convert_cora, CoraSplit};
use janus_core::experiment::report::{to_json_pretty, to_json_string, write_report, RunReport, SeedRow};
use janus_core::experiment::runner::{evaluate_attacker, prepare_victim, run_ablation, run_experiment, run_seed};
use janus_core::experiment::sbm::two_block_sbm;
use janus_core::graph::save_graph;
use janus_core::rl::{Ablation, Janus};
use janus_core::victim::VictimModel;
use janus_core::{Error, Result};

type F = f64;

#[derive(Parser)]
#[command(name = "janus", version, about = "Stealthy node-injection attacks on GCN victims")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run seed; defaults to the first seed of the config for single-seed
    /// commands and to every configured seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the victim GCN and save its checkpoint.
    TrainVictim(Common),
    /// Train the attacker against the saved (or freshly trained) victim.
    Attack(Common),
    /// Re-run attacks and metrics from saved checkpoints.
    Evaluate(Common),
    /// Run every ablation variant and write one report each.
    Ablate(Common),
    /// Run the configured experiment end to end and write the report.
    Report(Common),
    /// Write the configured SBM dataset in the four-file format.
    MakeSbm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert `cora.content` / `cora.cites` into the four-file format.
    ConvertCora {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        train_per_class: usize,
        #[arg(long, default_value_t = 500)]
        val: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
    },
}

/// Failure before any compute (exit 2) or during it (exit 3).
enum Failure {
    Invalid(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(c: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(Failure::Invalid)?;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let d = cfg.output.join(format!("seed-{seed}"));
    std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    Ok(d)
}

fn write_json<V: serde::Serialize>(v: &V, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_pretty(v)? + "\n").map_err(|e| Error::io(path, e))
}

fn print_rows(rows: &[SeedRow]) -> Result<()> {
    for r in rows {
        println!("{}", to_json_string(r)?);
    }
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!("ablation {} seeds {:?} ({:.1}s)", r.ablation, r.seeds, r.wall_clock_seconds);
    for (attacker, metrics) in &r.summary {
        let cells: Vec<String> = metrics.iter().map(|(k, m)| format!("{k} {:.4} ± {:.4}", m.mean, m.std)).collect();
        println!("  {attacker:<10} {}", cells.join(", "));
    }
}

fn saved_victim(cfg: &ExperimentConfig, seed: u64) -> Result<Option<VictimModel<F>>> {
    let path = seed_dir(cfg, seed)?.join("victim.json");
    if path.exists() {
        log::info!("loading victim from {}", path.display());
        Ok(Some(load_victim(&path)?))
    } else {
        Ok(None)
    }
}

fn train_victim_cmd(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let hash = cfg.hash()?;
    let seed = cfg.seeds[0];
    let (g, split, v) = prepare_victim::<F>(&cfg, seed, None)?;
    let path = seed_dir(&cfg, seed)?.join("victim.json");
    save_victim(&v, &hash, &path)?;
    if let Some(w) = &v.meta.warning {
        log::warn!("{w}");
    }
    println!(
        "seed {seed} val_accuracy {:.4} target_accuracy {:.4} -> {}",
        v.meta.val_accuracy,
        v.accuracy(&g, &split.targets)?,
        path.display()
    );
    Ok(())
}

fn attack_cmd(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let hash = cfg.hash()?;
    let seed = cfg.seeds[0];
    let dir = seed_dir(&cfg, seed)?;
    let out = run_seed::<F>(&cfg, cfg.ablation, seed, saved_victim(&cfg, seed)?)?;
    if !dir.join("victim.json").exists() {
        save_victim(&out.victim, &hash, &dir.join("victim.json"))?;
    }
    write_checkpoint(&attacker_payload(&out.attacker, seed, out.training.best_epoch, &hash), &dir.join("attacker.json"))?;
    write_json(&out.training, &dir.join("training.json"))?;
    write_json(&out.rows, &dir.join("rows.json"))?;
    print_rows(&out.rows)?;
    Ok(())
}

fn evaluate_cmd(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let seed = cfg.seeds[0];
    let dir = seed_dir(&cfg, seed)?;
    let victim = saved_victim(&cfg, seed)?.ok_or_else(|| Error::Validation(format!("no victim checkpoint in {}", dir.display())))?;
    let (g, split, victim) = prepare_victim::<F>(&cfg, seed, Some(victim))?;
    let payload = read_checkpoint(&dir.join("attacker.json"))?;
    if payload.meta.config_hash != cfg.hash()? {
        log::warn!("attacker checkpoint was trained under a different config");
    }
    let mut attacker = Janus::<F>::new(&cfg.train, &g, seed)?;
    restore_attacker(&mut attacker, &payload)?;
    let rows = evaluate_attacker(&cfg, seed, &g, &split, &victim, &attacker)?;
    write_json(&rows, &dir.join("eval.json"))?;
    print_rows(&rows)?;
    Ok(())
}

fn ablate_cmd(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    for r in run_ablation::<F>(&cfg, &Ablation::ALL)? {
        write_report(&r, &cfg.output.join(format!("ablation-{}.json", r.ablation)))?;
        print_summary(&r);
    }
    Ok(())
}

fn report_cmd(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let r = run_experiment::<F>(&cfg, cfg.ablation)?;
    let path = cfg.output.join("report.json");
    write_report(&r, &path)?;
    print_summary(&r);
    println!("report written to {}", path.display());
    Ok(())
}

fn make_sbm_cmd(c: &Common, out: &Path) -> Outcome {
    let cfg = load_config(c)?;
    let DatasetConfig::Sbm(sbm) = &cfg.dataset else {
        return Err(Failure::Invalid(Error::Validation("config dataset is not an SBM".into())));
    };
    let (g, split) = two_block_sbm::<F>(sbm, cfg.seeds[0])?;
    save_graph(&g, &split, out)?;
    println!("{} nodes, {} edges -> {}", g.num_nodes(), g.num_edges(), out.display());
    Ok(())
}

fn convert_cora_cmd(src: &Path, out: &Path, seed: u64, sizes: CoraSplit) -> Outcome {
    let (g, split) = convert_cora(src, out, sizes, seed)?;
    println!(
        "{} nodes, {} edges, {} classes, {} features; {} train / {} val / {} targets -> {}",
        g.num_nodes(),
        g.num_edges(),
        g.num_classes(),
        g.dim(),
        split.train.len(),
        split.val.len(),
        split.targets.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::TrainVictim(c) => train_victim_cmd(c),
        Command::Attack(c) => attack_cmd(c),
        Command::Evaluate(c) => evaluate_cmd(c),
        Command::Ablate(c) => ablate_cmd(c),
        Command::Report(c) => report_cmd(c),
        Command::MakeSbm { common, out } => make_sbm_cmd(common, out),
        Command::ConvertCora {
            src,
            out,
            seed,
            train_per_class,
            val,
            test,
        } => convert_cora_cmd(
            src,
            out,
            *seed,
            CoraSplit {
                train_per_class: *train_per_class,
                val: *val,
                test: *test,
            },
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
