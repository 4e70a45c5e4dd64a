//! Attack environment, rewards, advantage actor-critic losses and the
//! alternating critic / generator / discriminator training loop.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discriminator::{
    adversarial_loss_d_var, adversarial_loss_g_var, info_loss_var, injected_ego_view, Discriminator, DiscriminatorConfig,
    GraphSample,
};
use crate::error::{ensure, Error, Result};
use crate::generator::{ActionRecord, Draw, Generator, GeneratorConfig};
use crate::graph::Graph;
use crate::nn::{smooth_l1, smooth_l1_var, Activation, Adam, Bound, Mlp, ParamBlock, Tape, Var};
use crate::scalar::Scalar;
use crate::stealth::{build_reference_set, ot_loss_single, ot_loss_var, ReferenceSet, StealthConfig};
use crate::victim::VictimModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoLocal,
    NoGlobal,
    RlOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoLocal, Ablation::NoGlobal, Ablation::RlOnly];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoLocal => "no_local",
            Ablation::NoGlobal => "no_global",
            Ablation::RlOnly => "rl_only",
        }
    }

    pub fn uses_local(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoGlobal)
    }

    pub fn uses_global(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoLocal)
    }
}

/// Weights of the generator objective terms beside the policy loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub info: f64,
    pub ot: f64,
}

impl LossWeights {
    pub fn for_ablation(a: Ablation, lambda_ot: f64) -> Self {
        let g = if a.uses_global() { 1.0 } else { 0.0 };
        Self {
            adv: g,
            info: g,
            ot: if a.uses_local() { lambda_ot } else { 0.0 },
        }
    }

    pub fn global(&self) -> bool {
        self.adv != 0.0 || self.info != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Injection budget Δ per episode.
    pub budget: usize,
    pub gamma: f64,
    pub lambda_ot: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_disc: f64,
    pub epochs: usize,
    pub patience: usize,
    pub bonus: f64,
    /// Episodes rolled out per epoch.
    pub batch: usize,
    pub early_success: bool,
    pub critic_hidden: usize,
    /// Epochs between validation passes; patience counts passes.
    pub eval_every: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub stealth: StealthConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: 1,
            gamma: 0.95,
            lambda_ot: 0.5,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_disc: 1e-5,
            epochs: 10_000,
            patience: 15,
            bonus: 1.0,
            batch: 8,
            early_success: true,
            critic_hidden: 64,
            eval_every: 1,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            stealth: StealthConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.budget >= 1, Validation, "budget must be at least 1");
        ensure!((0.0..1.0).contains(&self.gamma), Validation, "gamma {} outside [0,1)", self.gamma);
        ensure!(
            (0.1..=1.0).contains(&self.lambda_ot),
            Validation,
            "lambda_ot {} outside [0.1,1]",
            self.lambda_ot
        );
        for (name, lr) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("lr_disc", self.lr_disc)] {
            ensure!(lr > 0.0 && lr.is_finite(), Validation, "{name} must be positive");
        }
        ensure!(
            self.epochs >= 1 && self.patience >= 1 && self.batch >= 1 && self.eval_every >= 1,
            Validation,
            "epochs, patience, batch and eval_every must be positive"
        );
        ensure!(self.bonus >= 0.0 && self.bonus.is_finite(), Validation, "bonus must be nonnegative");
        ensure!(self.critic_hidden >= 1, Validation, "critic_hidden must be positive");
        ensure!(
            self.stealth.epsilon >= 0.0 && self.stealth.samples >= 1 && self.stealth.hops >= 1,
            Validation,
            "stealth settings need epsilon >= 0, samples >= 1, hops >= 1"
        );
        self.generator.validate()
    }
}

/// State-value network over the detached state readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<T> {
    pub params: ParamBlock<T>,
    mlp: Mlp,
}

impl<T: Scalar> Critic<T> {
    pub fn new(state_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamBlock::new(seed);
        let mlp = Mlp::new(&mut params, "value", &[state_dim, hidden, 1], Activation::Relu, &mut rng);
        Self { params, mlp }
    }

    pub fn value_var(&self, tape: &mut Tape<T>, p: &Bound, h: &[T]) -> Var {
        let x = tape.row(h);
        self.mlp.forward(tape, p, x)
    }

    pub fn value(&self, h: &[T]) -> T {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let v = self.value_var(&mut tape, &p, h);
        tape.scalar_value(v)
    }
}

/// Frozen victim plus the clean graph the attack starts from.
#[derive(Debug, Clone)]
pub struct AttackEnv<T> {
    pub victim: Arc<VictimModel<T>>,
    pub clean: Graph<T>,
    pub bonus: f64,
    pub budget: usize,
    pub early_success: bool,
    pub stealth: StealthConfig,
}

impl<T: Scalar> AttackEnv<T> {
    pub fn new(victim: Arc<VictimModel<T>>, clean: Graph<T>, cfg: &TrainConfig) -> Self {
        Self {
            victim,
            clean,
            bonus: cfg.bonus,
            budget: cfg.budget,
            early_success: cfg.early_success,
            stealth: cfg.stealth,
        }
    }

    pub fn label(&self, target: usize) -> Result<usize> {
        self.clean
            .labels()
            .get(target)
            .copied()
            .ok_or(Error::Index {
                index: target,
                len: self.clean.num_original(),
            })
    }

    pub fn misclassified(&self, g: &Graph<T>, target: usize) -> Result<bool> {
        Ok(self.victim.predict(g, &[target])?[0] != self.label(target)?)
    }
}

/// Loss increase of the victim on the target, plus `bonus` when the
/// prediction moves from the true class to a wrong one.
pub fn compute_reward<T: Scalar>(
    victim: &VictimModel<T>,
    before: &Graph<T>,
    after: &Graph<T>,
    target: usize,
    label: usize,
    bonus: T,
) -> Result<T> {
    let l0 = victim.cross_entropy(before, target, label)?;
    let l1 = victim.cross_entropy(after, target, label)?;
    let p0 = victim.predict(before, &[target])?[0];
    let p1 = victim.predict(after, &[target])?[0];
    let flip = p0 == label && p1 != label;
    Ok(l1 - l0 + if flip { bonus } else { T::zero() })
}

/// Discounted returns-to-go and advantages `R_t - V(s_t)`.
pub fn compute_returns_advantages<T: Scalar>(rewards: &[T], values: &[T], gamma: T) -> Result<(Vec<T>, Vec<T>)> {
    ensure!(!rewards.is_empty(), Validation, "empty episode");
    ensure!(rewards.len() == values.len(), Shape, "{} rewards, {} values", rewards.len(), values.len());
    let mut ret = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        ret[t] = acc;
    }
    let adv = ret.iter().zip(values).map(|(&r, &v)| r - v).collect();
    Ok((ret, adv))
}

pub fn policy_loss<T: Scalar>(log_probs: &[T], advantages: &[T]) -> Result<T> {
    ensure!(log_probs.len() == advantages.len(), Shape, "{} log-probs, {} advantages", log_probs.len(), advantages.len());
    Ok(log_probs.iter().zip(advantages).map(|(&l, &a)| -l * a).sum())
}

pub fn value_loss<T: Scalar>(values: &[T], returns: &[T]) -> Result<T> {
    ensure!(values.len() == returns.len(), Shape, "{} values, {} returns", values.len(), returns.len());
    Ok(values.iter().zip(returns).map(|(&v, &r)| smooth_l1(v, r, T::one())).sum())
}

pub fn generator_total_loss<T: Scalar>(policy: T, adv_g: T, info: T, ot: T, lambda_ot: T) -> T {
    policy + adv_g + info + lambda_ot * ot
}

#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub step: usize,
    pub state: Graph<T>,
    pub record: ActionRecord<T>,
    /// Critic input: the normalised state readout.
    pub h: Vec<T>,
    pub log_prob: T,
    pub reward: T,
    pub next: Graph<T>,
    pub injected: usize,
    pub ot_cost: T,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Episode<T> {
    pub target: usize,
    pub label: usize,
    pub refs: ReferenceSet<T>,
    pub transitions: Vec<Transition<T>>,
    pub misclassified: bool,
}

impl<T: Scalar> Episode<T> {
    pub fn final_graph(&self) -> &Graph<T> {
        &self.transitions.last().expect("episodes have at least one step").next
    }

    pub fn rewards(&self) -> Vec<T> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn injected_before(&self, step: usize) -> Vec<usize> {
        self.transitions[..=step].iter().map(|t| t.injected).collect()
    }
}

pub enum Policy<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
}

/// Runs one episode on `env.clean` against `target`.
pub fn rollout<T: Scalar>(env: &AttackEnv<T>, gen: &Generator<T>, target: usize, mut policy: Policy<'_>) -> Result<Episode<T>> {
    let label = env.label(target)?;
    let refs = build_reference_set(&env.clean, target, env.stealth.hops, env.stealth.samples)?;
    let eps = T::of(env.stealth.epsilon);
    let bonus = T::of(env.bonus);
    let mut g = env.clean.clone();
    let mut transitions = Vec::with_capacity(env.budget);
    for step in 0..env.budget {
        let draw = match &mut policy {
            Policy::Sample(rng) => Draw::Sample(rng),
            Policy::Greedy => Draw::Greedy,
        };
        let (record, h, log_prob) = gen.act(&g, target, draw)?;
        let (ot_cost, _) = ot_loss_single(&record.x_inj, &refs, eps)?;
        let next = g.inject_node(&record.x_inj, record.endpoint)?;
        let injected = next.num_nodes() - 1;
        let reward = compute_reward(&env.victim, &g, &next, target, label, bonus)?;
        ensure!(reward.is_finite(), NonFinite, "reward {reward} at target {target}");
        let wrong = env.misclassified(&next, target)?;
        let done = step + 1 == env.budget || (env.early_success && wrong);
        transitions.push(Transition {
            step,
            state: std::mem::replace(&mut g, next.clone()),
            record,
            h,
            log_prob,
            reward,
            next,
            injected,
            ot_cost,
            done,
        });
        if done {
            break;
        }
    }
    let misclassified = env.misclassified(&g, target)?;
    Ok(Episode {
        target,
        label,
        refs,
        transitions,
        misclassified,
    })
}

/// Greedy attack on each target independently, in parallel.
pub fn attack_targets<T: Scalar>(env: &AttackEnv<T>, gen: &Generator<T>, targets: &[usize]) -> Result<Vec<Episode<T>>> {
    targets.par_iter().map(|&t| rollout(env, gen, t, Policy::Greedy)).collect()
}

fn episode_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 20) | index as u64);
    rng
}

/// The three networks trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Janus<T> {
    pub generator: Generator<T>,
    pub critic: Critic<T>,
    pub discriminator: Discriminator<T>,
}

impl<T: Scalar> Janus<T> {
    pub fn new(cfg: &TrainConfig, g: &Graph<T>, seed: u64) -> Result<Self> {
        let generator = Generator::for_graph(cfg.generator.clone(), g, seed)?;
        let critic = Critic::new(generator.state_dim(), cfg.critic_hidden, seed.wrapping_add(1));
        let discriminator = Discriminator::new(
            cfg.discriminator.clone(),
            g.dim(),
            generator.latent_classes(),
            cfg.generator.cont_latent,
            seed.wrapping_add(2),
        )?;
        Ok(Self {
            generator,
            critic,
            discriminator,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorLossVars {
    pub policy: Var,
    pub adv: Var,
    pub info: Var,
    pub ot: Var,
    pub total: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorLossVars {
    pub adv: Var,
    pub info: Var,
    pub total: Var,
}

/// Losses are averaged over episodes: the policy and value sums run over
/// each episode's steps, the OT term is the per-episode mean.
pub fn critic_loss_var<T: Scalar>(tape: &mut Tape<T>, critic: &Critic<T>, p: &Bound, episodes: &[Episode<T>], returns: &[Vec<T>]) -> Result<Var> {
    ensure!(!episodes.is_empty(), Validation, "no episodes");
    let mut total = tape.scalar(T::zero());
    for (ep, ret) in episodes.iter().zip(returns) {
        for (tr, &r) in ep.transitions.iter().zip(ret) {
            let v = critic.value_var(tape, p, &tr.h);
            let l = smooth_l1_var(tape, v, r, T::one());
            total = tape.add(total, l);
        }
    }
    Ok(tape.scale(total, T::one() / T::of(episodes.len() as f64)))
}

#[allow(clippy::too_many_arguments)]
pub fn generator_loss_vars<T: Scalar>(
    tape: &mut Tape<T>,
    gen: &Generator<T>,
    pg: &Bound,
    disc: &Discriminator<T>,
    pd: &Bound,
    episodes: &[Episode<T>],
    advantages: &[Vec<T>],
    weights: LossWeights,
    epsilon: T,
) -> Result<GeneratorLossVars> {
    ensure!(!episodes.is_empty(), Validation, "no episodes");
    let b = T::of(episodes.len() as f64);
    let mut policy = tape.scalar(T::zero());
    let mut ot = tape.scalar(T::zero());
    let mut fake_scores = Vec::new();
    let mut info = tape.scalar(T::zero());
    let hops = gen.cfg.hops;
    for (ep, adv) in episodes.iter().zip(advantages) {
        let mut ep_ot = tape.scalar(T::zero());
        for (tr, &a) in ep.transitions.iter().zip(adv) {
            let step = gen.forward(tape, pg, &tr.state, ep.target, Draw::Replay(&tr.record))?;
            let term = tape.scale(step.log_prob, -a);
            policy = tape.add(policy, term);
            let o = ot_loss_var(tape, step.x, &ep.refs.features, epsilon)?;
            ep_ot = tape.add(ep_ot, o);
            if weights.global() {
                let view = injected_ego_view(&tr.next, ep.target, hops, &ep.injected_before(tr.step))?;
                let row = view.local_index(tr.injected).expect("injected node is in its ego view");
                let sample = GraphSample::from_view(&view, Some(row));
                let out = disc.forward(tape, pd, &sample, Some(step.x))?;
                fake_scores.push(out.score);
                let (class, c) = tr.record.c_values();
                let l = info_loss_var(tape, &out, class, c);
                info = tape.add(info, l);
            }
        }
        let ep_ot = tape.scale(ep_ot, T::one() / T::of(ep.transitions.len() as f64));
        ot = tape.add(ot, ep_ot);
    }
    let policy = tape.scale(policy, T::one() / b);
    let ot = tape.scale(ot, T::one() / b);
    let (adv, info) = if fake_scores.is_empty() {
        (tape.scalar(T::zero()), info)
    } else {
        let n = T::of(fake_scores.len() as f64);
        (adversarial_loss_g_var(tape, &fake_scores), tape.scale(info, T::one() / n))
    };
    let wa = tape.scale(adv, T::of(weights.adv));
    let wi = tape.scale(info, T::of(weights.info));
    let wo = tape.scale(ot, T::of(weights.ot));
    let total = tape.add(policy, wa);
    let total = tape.add(total, wi);
    let total = tape.add(total, wo);
    Ok(GeneratorLossVars {
        policy,
        adv,
        info,
        ot,
        total,
    })
}

pub fn discriminator_loss_vars<T: Scalar>(
    tape: &mut Tape<T>,
    disc: &Discriminator<T>,
    p: &Bound,
    episodes: &[Episode<T>],
    reals: &[GraphSample<T>],
    hops: usize,
) -> Result<DiscriminatorLossVars> {
    ensure!(!reals.is_empty(), Validation, "no real samples");
    let real_scores: Vec<Var> = reals
        .iter()
        .map(|s| disc.forward(tape, p, s, None).map(|o| o.score))
        .collect::<Result<_>>()?;
    let mut fake_scores = Vec::new();
    let mut info = tape.scalar(T::zero());
    for ep in episodes {
        for tr in &ep.transitions {
            let view = injected_ego_view(&tr.next, ep.target, hops, &ep.injected_before(tr.step))?;
            let out = disc.forward(tape, p, &GraphSample::from_view(&view, None), None)?;
            fake_scores.push(out.score);
            let (class, c) = tr.record.c_values();
            let l = info_loss_var(tape, &out, class, c);
            info = tape.add(info, l);
        }
    }
    ensure!(!fake_scores.is_empty(), Validation, "no fake samples");
    let info = tape.scale(info, T::one() / T::of(fake_scores.len() as f64));
    let adv = adversarial_loss_d_var(tape, &real_scores, &fake_scores);
    let total = tape.add(adv, info);
    Ok(DiscriminatorLossVars { adv, info, total })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub value: f64,
    pub policy: f64,
    pub adv_g: f64,
    pub info_g: f64,
    pub ot: f64,
    pub generator_total: f64,
    pub adv_d: f64,
    pub info_d: f64,
    pub discriminator_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_reward: f64,
    pub batch_success: f64,
    pub losses: LossLog,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_misclassification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_misclassification: f64,
    pub history: Vec<EpochMetrics>,
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{name} loss is {x}")))
    }
}

pub struct Trainer<T> {
    pub model: Janus<T>,
    pub cfg: TrainConfig,
    pub weights: LossWeights,
    pub seed: u64,
    opt_g: Adam<T>,
    opt_c: Adam<T>,
    opt_d: Adam<T>,
    epoch: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: TrainConfig, ablation: Ablation, g: &Graph<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let model = Janus::new(&cfg, g, seed)?;
        let opt_g = Adam::new(T::of(cfg.lr_actor), &model.generator.params);
        let opt_c = Adam::new(T::of(cfg.lr_critic), &model.critic.params);
        let opt_d = Adam::new(T::of(cfg.lr_disc), &model.discriminator.params);
        Ok(Self {
            weights: LossWeights::for_ablation(ablation, cfg.lambda_ot),
            model,
            cfg,
            seed,
            opt_g,
            opt_c,
            opt_d,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        })
    }

    fn next_batch(&mut self, targets: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cfg.batch);
        while out.len() < self.cfg.batch.min(targets.len()) {
            if self.cursor >= self.order.len() {
                self.order = targets.to_vec();
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Rolls out one batch of episodes with the current policy.
    pub fn collect(&mut self, env: &AttackEnv<T>, targets: &[usize]) -> Result<Vec<Episode<T>>> {
        ensure!(!targets.is_empty(), Validation, "no training targets");
        let mut rng = episode_rng(self.seed, self.epoch, usize::MAX >> 44);
        let batch = self.next_batch(targets, &mut rng);
        let gen = &self.model.generator;
        let (seed, epoch) = (self.seed, self.epoch);
        batch
            .par_iter()
            .enumerate()
            .map(|(i, &t)| rollout(env, gen, t, Policy::Sample(&mut episode_rng(seed, epoch, i))))
            .collect()
    }

    /// Critic, then generator, then discriminator, on one batch.
    pub fn update(&mut self, env: &AttackEnv<T>, episodes: &[Episode<T>]) -> Result<LossLog> {
        ensure!(!episodes.is_empty(), Validation, "no episodes");
        let gamma = T::of(self.cfg.gamma);
        let mut log = LossLog::default();
        let returns: Vec<Vec<T>> = episodes
            .iter()
            .map(|ep| compute_returns_advantages(&ep.rewards(), &vec![T::zero(); ep.transitions.len()], gamma).map(|r| r.0))
            .collect::<Result<_>>()?;

        let mut tape = Tape::new();
        let pc = self.model.critic.params.bind(&mut tape);
        let lv = critic_loss_var(&mut tape, &self.model.critic, &pc, episodes, &returns)?;
        log.value = finite("value", tape.scalar_value(lv).as_f64())?;
        tape.backward(lv);
        self.opt_c.step(&mut self.model.critic.params, &pc.grads(&tape));

        let advantages: Vec<Vec<T>> = episodes
            .iter()
            .map(|ep| {
                let v: Vec<T> = ep.transitions.iter().map(|t| self.model.critic.value(&t.h)).collect();
                compute_returns_advantages(&ep.rewards(), &v, gamma).map(|x| x.1)
            })
            .collect::<Result<_>>()?;

        let mut tape = Tape::new();
        let pg = self.model.generator.params.bind(&mut tape);
        let pd = self.model.discriminator.params.bind(&mut tape);
        let gl = generator_loss_vars(
            &mut tape,
            &self.model.generator,
            &pg,
            &self.model.discriminator,
            &pd,
            episodes,
            &advantages,
            self.weights,
            T::of(self.cfg.stealth.epsilon),
        )?;
        log.policy = finite("policy", tape.scalar_value(gl.policy).as_f64())?;
        log.adv_g = finite("adversarial (generator)", tape.scalar_value(gl.adv).as_f64())?;
        log.info_g = finite("info (generator)", tape.scalar_value(gl.info).as_f64())?;
        log.ot = finite("transport", tape.scalar_value(gl.ot).as_f64())?;
        log.generator_total = finite("generator total", tape.scalar_value(gl.total).as_f64())?;
        tape.backward(gl.total);
        self.opt_g.step(&mut self.model.generator.params, &pg.grads(&tape));

        if self.weights.global() {
            let mut rng = episode_rng(self.seed ^ 0xd15c, self.epoch, 0);
            let hops = self.cfg.generator.hops;
            let n_fake: usize = episodes.iter().map(|e| e.transitions.len()).sum();
            let reals: Vec<GraphSample<T>> = (0..n_fake)
                .map(|_| {
                    let v = rng.random_range(0..env.clean.num_original());
                    env.clean.k_hop_subgraph(v, hops).map(|s| GraphSample::from_view(&s, None))
                })
                .collect::<Result<_>>()?;
            let mut tape = Tape::new();
            let pd = self.model.discriminator.params.bind(&mut tape);
            let dl = discriminator_loss_vars(&mut tape, &self.model.discriminator, &pd, episodes, &reals, hops)?;
            log.adv_d = finite("adversarial (discriminator)", tape.scalar_value(dl.adv).as_f64())?;
            log.info_d = finite("info (discriminator)", tape.scalar_value(dl.info).as_f64())?;
            log.discriminator_total = finite("discriminator total", tape.scalar_value(dl.total).as_f64())?;
            tape.backward(dl.total);
            self.opt_d.step(&mut self.model.discriminator.params, &pd.grads(&tape));
        }
        ensure!(
            self.model.generator.params.all_finite()
                && self.model.critic.params.all_finite()
                && self.model.discriminator.params.all_finite(),
            NonFinite,
            "parameters became non-finite at epoch {}",
            self.epoch
        );
        Ok(log)
    }

    pub fn train_epoch(&mut self, env: &AttackEnv<T>, targets: &[usize]) -> Result<EpochMetrics> {
        let episodes = self.collect(env, targets)?;
        let losses = self.update(env, &episodes)?;
        let steps: Vec<f64> = episodes.iter().flat_map(|e| e.transitions.iter().map(|t| t.reward.as_f64())).collect();
        let metrics = EpochMetrics {
            epoch: self.epoch,
            mean_reward: steps.iter().sum::<f64>() / steps.len() as f64,
            batch_success: episodes.iter().filter(|e| e.misclassified).count() as f64 / episodes.len() as f64,
            losses,
            val_misclassification: None,
        };
        self.epoch += 1;
        Ok(metrics)
    }

    /// Trains for `epochs` epochs, validating every `eval_every`. Stops
    /// once `patience` consecutive validations fail to beat the best
    /// score; the best generator is kept, later ones winning ties.
    pub fn fit(&mut self, env: &AttackEnv<T>, train: &[usize], val: &[usize]) -> Result<TrainSummary> {
        ensure!(!val.is_empty(), Validation, "no validation targets");
        let score = |gen: &Generator<T>| -> Result<f64> {
            let eps = attack_targets(env, gen, val)?;
            Ok(eps.iter().filter(|e| e.misclassified).count() as f64 / eps.len() as f64)
        };
        let mut best = score(&self.model.generator)?;
        let mut best_model = self.model.clone();
        let mut best_epoch = self.epoch;
        let mut stale = 0;
        let mut history = Vec::new();
        for _ in 0..self.cfg.epochs {
            let mut m = self.train_epoch(env, train)?;
            if self.epoch % self.cfg.eval_every == 0 {
                let v = score(&self.model.generator)?;
                m.val_misclassification = Some(v);
                log::debug!("epoch {} reward {:.4} val {:.3}", m.epoch, m.mean_reward, v);
                if v >= best {
                    best_model = self.model.clone();
                    best_epoch = self.epoch;
                }
                if v > best {
                    best = v;
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
            history.push(m);
            if stale >= self.cfg.patience {
                break;
            }
        }
        self.model = best_model;
        Ok(TrainSummary {
            epochs_run: self.epoch,
            best_epoch,
            best_val_misclassification: best,
            history,
        })
    }
}
