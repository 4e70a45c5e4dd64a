//! Seeded end-to-end runs: victim, attacker training, attacks, metrics.

use std::sync::Arc;
use std::time::Instant;

use super::baselines::baseline_attack;
use super::config::{DatasetConfig, ExperimentConfig};
use super::report::{summarize, RunReport, SeedRow, VictimRow, SCHEMA};
use super::sbm::two_block_sbm;
use crate::error::{ensure, Result};
use crate::eval::{defended_misclassification, stealth_report};
use crate::graph::{load_graph, DataSplit, Graph};
use crate::rl::{attack_targets, Ablation, AttackEnv, Janus, TrainSummary, Trainer};
use crate::scalar::Scalar;
use crate::victim::{misclassification_rate, train_victim, VictimModel};

pub const JANUS: &str = "janus";

pub fn load_dataset<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph<T>, DataSplit)> {
    match &cfg.dataset {
        DatasetConfig::Sbm(c) => two_block_sbm(c, seed),
        DatasetConfig::Files { edges, features, labels, split } => load_graph(edges, features, labels, split),
    }
}

/// Nodes the attacker may practise on: training nodes plus test nodes
/// that are not evaluation targets.
pub fn attacker_pool(split: &DataSplit) -> Vec<usize> {
    let mut pool = split.train.clone();
    pool.extend(split.test.iter().filter(|t| !split.targets.contains(t)));
    pool
}

pub fn provenance<T: Scalar>() -> String {
    format!(
        "janus {} rev {} {}",
        env!("CARGO_PKG_VERSION"),
        option_env!("JANUS_GIT_REV").unwrap_or("unknown"),
        T::PRECISION
    )
}

pub struct SeedOutcome<T> {
    pub graph: Graph<T>,
    pub split: DataSplit,
    pub victim: VictimModel<T>,
    pub attacker: Janus<T>,
    pub training: TrainSummary,
    pub victim_row: VictimRow,
    pub rows: Vec<SeedRow>,
}

/// Trains the victim unless one is supplied.
pub fn prepare_victim<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    victim: Option<VictimModel<T>>,
) -> Result<(Graph<T>, DataSplit, VictimModel<T>)> {
    let (g, split) = load_dataset::<T>(cfg, seed)?;
    let victim = match victim {
        Some(v) => {
            ensure!(
                v.input_dim() == g.dim() && v.num_classes() == g.num_classes(),
                Validation,
                "victim expects {} features and {} classes, dataset has {} and {}",
                v.input_dim(),
                v.num_classes(),
                g.dim(),
                g.num_classes()
            );
            v
        }
        None => train_victim(&g, &split, &cfg.victim, seed)?,
    };
    Ok((g, split, victim))
}

fn score_attack<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    name: &str,
    g: &Graph<T>,
    split: &DataSplit,
    victim: &VictimModel<T>,
    attacked: &[(usize, Graph<T>)],
) -> Result<SeedRow> {
    let wrong = attacked
        .iter()
        .map(|(t, a)| misclassification_rate(victim, a, &[*t], g.labels()))
        .sum::<Result<f64>>()?;
    let mut row = SeedRow {
        seed,
        attacker: name.to_string(),
        misclassification: wrong / attacked.len() as f64,
        cad: None,
        smoothness: None,
        detection_auc: None,
        defended_misclassification: None,
        epochs_run: None,
        best_epoch: None,
    };
    if cfg.metrics.stealth {
        let s = stealth_report(g, attacked, &cfg.metrics.detector, seed ^ 0x5eed)?;
        row.cad = Some(s.cad);
        row.smoothness = Some(s.smoothness);
        row.detection_auc = Some(s.detection_auc);
    }
    if let Some(tau) = cfg.metrics.defense_tau {
        row.defended_misclassification = Some(defended_misclassification(g, split, &cfg.victim, attacked, tau, seed)?);
    }
    Ok(row)
}

/// Greedy attacks on every target with a trained attacker, followed by the
/// configured baselines. The attacker's row comes first.
pub fn evaluate_attacker<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    g: &Graph<T>,
    split: &DataSplit,
    victim: &VictimModel<T>,
    attacker: &Janus<T>,
) -> Result<Vec<SeedRow>> {
    let env = AttackEnv::new(Arc::new(victim.clone()), g.clone(), &cfg.train);
    let episodes = attack_targets(&env, &attacker.generator, &split.targets)?;
    let attacked: Vec<(usize, Graph<T>)> = episodes.iter().map(|e| (e.target, e.final_graph().clone())).collect();
    let mut rows = vec![score_attack(cfg, seed, JANUS, g, split, victim, &attacked)?];
    let hops = cfg.train.generator.hops;
    for &b in &cfg.metrics.baselines {
        let attacked = split
            .targets
            .iter()
            .map(|&t| Ok((t, baseline_attack(b, g, t, hops, cfg.train.budget, seed.wrapping_mul(1_000_003) ^ t as u64)?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(score_attack(cfg, seed, b.name(), g, split, victim, &attacked)?);
    }
    Ok(rows)
}

/// One full seed: trains (or reuses) the victim, fits the attacker on the
/// practice pool with early stopping on the validation nodes, then attacks
/// every target greedily and runs the configured baselines.
pub fn run_seed<T: Scalar>(
    cfg: &ExperimentConfig,
    ablation: Ablation,
    seed: u64,
    victim: Option<VictimModel<T>>,
) -> Result<SeedOutcome<T>> {
    let (g, split, victim) = prepare_victim(cfg, seed, victim)?;
    ensure!(!split.targets.is_empty(), Validation, "the split has no targets");
    let victim_row = VictimRow {
        seed,
        val_accuracy: victim.accuracy(&g, &split.val)?,
        clean_misclassification: misclassification_rate(&victim, &g, &split.targets, g.labels())?,
    };
    let env = AttackEnv::new(Arc::new(victim.clone()), g.clone(), &cfg.train);
    let mut trainer = Trainer::new(cfg.train.clone(), ablation, &g, seed)?;
    let pool = attacker_pool(&split);
    ensure!(!pool.is_empty(), Validation, "no nodes to train the attacker on");
    let training = trainer.fit(&env, &pool, &split.val)?;
    log::info!(
        "seed {seed} {}: {} epochs, best {} (val {:.3})",
        ablation.name(),
        training.epochs_run,
        training.best_epoch,
        training.best_val_misclassification
    );

    let mut rows = evaluate_attacker(cfg, seed, &g, &split, &victim, &trainer.model)?;
    rows[0].epochs_run = Some(training.epochs_run);
    rows[0].best_epoch = Some(training.best_epoch);
    Ok(SeedOutcome {
        graph: g,
        split,
        victim,
        attacker: trainer.model,
        training,
        victim_row,
        rows,
    })
}

/// Runs every configured seed under one ablation and aggregates the rows.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig, ablation: Ablation) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut victims = Vec::new();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let out = run_seed::<T>(cfg, ablation, seed, None)?;
        victims.push(out.victim_row);
        rows.extend(out.rows);
    }
    Ok(RunReport {
        schema: SCHEMA.into(),
        config_hash: cfg.hash()?,
        provenance: provenance::<T>(),
        ablation: ablation.name().into(),
        seeds: cfg.seeds.clone(),
        victims,
        summary: summarize(&rows),
        rows,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One report per variant; baselines are only run with the full model.
pub fn run_ablation<T: Scalar>(cfg: &ExperimentConfig, variants: &[Ablation]) -> Result<Vec<RunReport>> {
    variants
        .iter()
        .map(|&a| {
            let mut c = cfg.clone();
            if a != Ablation::Full {
                c.metrics.baselines.clear();
            }
            run_experiment::<T>(&c, a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::sbm::SbmConfig;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::toy();
        c.seeds = vec![4];
        c.dataset = DatasetConfig::Sbm(SbmConfig {
            nodes: 60,
            train: 12,
            val: 8,
            targets: 10,
            ..SbmConfig::default()
        });
        c.victim.epochs = 40;
        c.train.epochs = 4;
        c.train.eval_every = 2;
        c.train.batch = 4;
        c.metrics.defense_tau = Some(0.1);
        c.metrics.detector.trees = 10;
        c
    }

    #[test]
    fn pool_excludes_targets() {
        let split = DataSplit {
            train: vec![0, 1],
            val: vec![2],
            test: vec![3, 4, 5],
            targets: vec![4],
        };
        assert_eq!(attacker_pool(&split), vec![0, 1, 3, 5]);
    }

    #[test]
    fn seed_rows_are_deterministic() {
        let cfg = tiny();
        let a = run_experiment::<f64>(&cfg, Ablation::Full).unwrap();
        let b = run_experiment::<f64>(&cfg, Ablation::Full).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.victims, b.victims);
        let names: Vec<&str> = a.rows.iter().map(|r| r.attacker.as_str()).collect();
        assert_eq!(names, vec![JANUS, "random", "heuristic"]);
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.misclassification));
            assert!(r.detection_auc.is_some() && r.defended_misclassification.is_some());
        }
        assert_eq!(a.rows[0].epochs_run, Some(4));
    }
}
