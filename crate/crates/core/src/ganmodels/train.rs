use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::arch::{build_critic, build_generator, label_planes, CriticNet, GeneratorNet, Mode};
use super::losses::{
    generator_loss, loss_cgan, loss_rumi, loss_vanilla, ConditionedScores, LossHead,
};
use super::GanError;
use crate::corpusgen::{LabelPair, ModelKind, Objective, Partition};
use crate::levelgrid::{decode_planes, encode_onehot, Game, Grid, TileSet};
use crate::seeding::{child_rng, Rng};
use crate::tensor::{
    clip_weights, BatchStats, Gradients, Graph, RmsProp, RmsPropConfig, Tensor, Var,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Generator updates.
    pub iterations: usize,
    /// Critic updates before each generator update.
    pub critic_steps: usize,
    pub clip: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub loss_head: LossHead,
    pub seed: u64,
    pub latent_dim: usize,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 5e-5,
            iterations: 200,
            critic_steps: 5,
            clip: 0.01,
            alpha_plus: 1.0,
            alpha_minus: 0.5,
            loss_head: LossHead::Wasserstein,
            seed: 0,
            latent_dim: 32,
            rms_decay: 0.99,
            rms_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::InvalidConfig(m));
        if self.batch_size < 2 {
            // train-mode batchnorm needs two samples
            return bad(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be at least 1".into());
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.alpha_plus > 0.0 && self.alpha_plus.is_finite()) {
            return bad(format!(
                "alpha_plus must be positive, got {}",
                self.alpha_plus
            ));
        }
        if !(self.alpha_minus >= 0.0 && self.alpha_minus.is_finite()) {
            return bad(format!(
                "alpha_minus must be non-negative, got {}",
                self.alpha_minus
            ));
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_epsilon > 0.0) {
            return bad("rms_decay must lie in [0, 1) and rms_epsilon be positive".into());
        }
        Ok(())
    }

    fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rms_decay,
            epsilon: self.rms_epsilon,
        }
    }
}

/// One entry per generator update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean critic loss over the critic steps of the iteration.
    pub critic_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
    pub critic_grad_norm: Vec<f64>,
    pub generator_grad_norm: Vec<f64>,
    /// Largest absolute critic weight after the iteration's critic steps.
    pub critic_weight_max: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.generator_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generator_loss.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.critic_loss,
            &self.generator_loss,
            &self.critic_grad_norm,
            &self.generator_grad_norm,
            &self.critic_weight_max,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub game: Game,
    pub objective: Objective,
    /// Classes the label one-hot ranges over; empty when unconditional.
    pub classes: Vec<usize>,
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub history: TrainHistory,
}

impl TrainedModel {
    pub fn tileset(&self) -> TileSet {
        self.game.tileset()
    }

    /// Label used when sampling for a class target: `(k, 0)`.
    pub fn sampling_label(&self, class: usize) -> Option<LabelPair> {
        self.kind
            .is_conditional()
            .then(|| LabelPair::new(class, false))
    }

    pub fn sample(
        &self,
        n: usize,
        label: Option<LabelPair>,
        rng: &mut Rng,
    ) -> Result<Vec<Grid>, GanError> {
        sample(
            &self.generator,
            &self.classes,
            &self.tileset(),
            n,
            label,
            rng,
        )
    }
}

/// Freshly initialised networks for a run. Training starts from exactly
/// these weights, so they double as the untrained baseline.
pub fn init_models(
    kind: ModelKind,
    game: Game,
    classes: &[usize],
    config: &TrainConfig,
) -> Result<(GeneratorNet, CriticNet), GanError> {
    let (rows, cols) = game.preset_dims();
    let channels = game.tileset().len();
    let label_dim = if kind.is_conditional() {
        LabelPair::width(classes)
    } else {
        0
    };
    let generator = build_generator(
        rows,
        cols,
        channels,
        config.latent_dim,
        label_dim,
        &mut child_rng(config.seed, &[0]),
    )?;
    let critic = build_critic(
        rows,
        cols,
        channels,
        label_dim,
        &mut child_rng(config.seed, &[1]),
    )?;
    Ok((generator, critic))
}

fn check_partition(kind: ModelKind, game: Game, p: &Partition) -> Result<(), GanError> {
    let bad = |m: &str| Err(GanError::PartitionMismatch(m.to_string()));
    if p.kind != kind {
        return Err(GanError::PartitionMismatch(format!(
            "partition built for {}, training {}",
            p.kind, kind
        )));
    }
    if p.positives.is_empty() {
        return bad("no positive examples");
    }
    match kind {
        ModelKind::Vanilla if !p.negatives.is_empty() => {
            return bad("vanilla trains on positives only")
        }
        ModelKind::Rumi if p.negatives.is_empty() => return bad("rumi needs negative examples"),
        ModelKind::CGan => match &p.labels {
            Some(l)
                if l.positives.len() == p.positives.len()
                    && l.negatives.len() == p.negatives.len() => {}
            _ => return bad("cgan needs a label for every example"),
        },
        _ => {}
    }
    let dims = game.preset_dims();
    if p.positives
        .iter()
        .chain(&p.negatives)
        .any(|e| (e.grid.rows(), e.grid.cols()) != dims)
    {
        return bad("level dimensions differ from the game preset");
    }
    Ok(())
}

/// Flattened one-hot encodings plus optional label vectors.
struct Pool {
    items: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    pairs: Vec<LabelPair>,
}

impl Pool {
    fn new(grids: &[&Grid], ts: &TileSet, pairs: Option<&[LabelPair]>, classes: &[usize]) -> Self {
        let items = grids
            .iter()
            .map(|g| {
                encode_onehot(g, ts)
                    .expect("corpus grids use the game's tiles")
                    .values
            })
            .collect();
        let pairs = pairs.map(<[_]>::to_vec).unwrap_or_default();
        let labels = pairs.iter().map(|p| p.encode(classes)).collect();
        Pool {
            items,
            labels,
            pairs,
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

fn draw(rng: &mut Rng, len: usize, k: usize) -> Vec<usize> {
    if len >= k {
        sample_indices(rng, len, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..len)).collect()
    }
}

fn stack(rows: &[&[f64]], shape_tail: &[usize]) -> Tensor {
    let mut shape = vec![rows.len()];
    shape.extend_from_slice(shape_tail);
    Tensor::new(shape, rows.concat()).expect("rows share a length")
}

pub fn sample_latents(rng: &mut Rng, n: usize, dim: usize) -> Tensor {
    Tensor::from_fn(&[n, dim], |_| rng.sample(StandardNormal))
}

fn grad_norm(grads: &Gradients, vars: &[Var]) -> f64 {
    vars.iter()
        .map(|&v| grads.wrt(v).data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

struct Batch {
    x: Tensor,
    planes: Option<Tensor>,
    pairs: Vec<LabelPair>,
}

struct Trainer<'a> {
    kind: ModelKind,
    cfg: &'a TrainConfig,
    shape: [usize; 3],
    classes: &'a [usize],
    positives: Pool,
    negatives: Pool,
    rng: Rng,
}

impl Trainer<'_> {
    fn batch_from(&mut self, negative: bool) -> Batch {
        let pool = if negative {
            &self.negatives
        } else {
            &self.positives
        };
        let idx = draw(&mut self.rng, pool.len(), self.cfg.batch_size);
        let x = stack(
            &idx.iter()
                .map(|&i| pool.items[i].as_slice())
                .collect::<Vec<_>>(),
            &self.shape,
        );
        let (planes, pairs) = if pool.labels.is_empty() {
            (None, Vec::new())
        } else {
            let lab = stack(
                &idx.iter()
                    .map(|&i| pool.labels[i].as_slice())
                    .collect::<Vec<_>>(),
                &[pool.labels[0].len()],
            );
            (
                Some(label_planes(&lab, self.shape[1], self.shape[2])),
                idx.iter().map(|&i| pool.pairs[i]).collect(),
            )
        };
        Batch { x, planes, pairs }
    }

    /// Real batch for the critic: positives, or for CGAN the labelled mix of
    /// both sides.
    fn real_batch(&mut self) -> Batch {
        if self.kind == ModelKind::CGan && self.negatives.len() > 0 {
            let total = self.positives.len() + self.negatives.len();
            let idx = draw(&mut self.rng, total, self.cfg.batch_size);
            let pick = |i: usize| {
                if i < self.positives.len() {
                    (&self.positives, i)
                } else {
                    (&self.negatives, i - self.positives.len())
                }
            };
            let xs: Vec<&[f64]> = idx
                .iter()
                .map(|&i| {
                    let (p, j) = pick(i);
                    p.items[j].as_slice()
                })
                .collect();
            let ls: Vec<&[f64]> = idx
                .iter()
                .map(|&i| {
                    let (p, j) = pick(i);
                    p.labels[j].as_slice()
                })
                .collect();
            let pairs = idx
                .iter()
                .map(|&i| {
                    let (p, j) = pick(i);
                    p.pairs[j]
                })
                .collect();
            let lab = stack(&ls, &[ls[0].len()]);
            Batch {
                x: stack(&xs, &self.shape),
                planes: Some(label_planes(&lab, self.shape[1], self.shape[2])),
                pairs,
            }
        } else {
            self.batch_from(false)
        }
    }

    /// Latents and, for CGAN, labels drawn from the training label set.
    fn fake_inputs(&mut self) -> (Tensor, Option<(Tensor, Vec<LabelPair>)>) {
        let b = self.cfg.batch_size;
        let z = sample_latents(&mut self.rng, b, self.cfg.latent_dim);
        if self.kind != ModelKind::CGan {
            return (z, None);
        }
        let all: Vec<LabelPair> = self
            .positives
            .pairs
            .iter()
            .chain(&self.negatives.pairs)
            .copied()
            .collect();
        let pairs: Vec<LabelPair> = (0..b)
            .map(|_| all[self.rng.random_range(0..all.len())])
            .collect();
        let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.encode(self.classes)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        (z, Some((stack(&refs, &[rows[0].len()]), pairs)))
    }
}

/// Trains one model. Deterministic in `(kind, game, partition, config)`.
pub fn train(
    kind: ModelKind,
    game: Game,
    partition: &Partition,
    config: &TrainConfig,
) -> Result<TrainedModel, GanError> {
    config.validate()?;
    check_partition(kind, game, partition)?;
    let ts = game.tileset();
    let classes: Vec<usize> = if kind.is_conditional() {
        partition.classes.clone()
    } else {
        Vec::new()
    };
    let (mut gen, mut critic) = init_models(kind, game, &classes, config)?;
    let (rows, cols) = game.preset_dims();

    let pos_grids: Vec<&Grid> = partition.positives.iter().map(|e| &e.grid).collect();
    let neg_grids: Vec<&Grid> = partition.negatives.iter().map(|e| &e.grid).collect();
    let labels = partition.labels.as_ref();
    let mut t = Trainer {
        kind,
        cfg: config,
        shape: [ts.len(), rows, cols],
        classes: &classes,
        positives: Pool::new(
            &pos_grids,
            &ts,
            labels.map(|l| l.positives.as_slice()),
            &classes,
        ),
        negatives: Pool::new(
            &neg_grids,
            &ts,
            labels.map(|l| l.negatives.as_slice()),
            &classes,
        ),
        rng: child_rng(config.seed, &[2]),
    };
    let mut opt_c = RmsProp::new(config.rmsprop());
    let mut opt_g = RmsProp::new(config.rmsprop());
    let mut history = TrainHistory::default();

    for it in 0..config.iterations {
        let step = (|| -> Result<(f64, f64, f64, f64, f64), GanError> {
            let mut c_loss = 0.0;
            let mut c_norm = 0.0;
            for _ in 0..config.critic_steps {
                let (loss, norm) = critic_step(&mut t, &gen, &mut critic, &mut opt_c)?;
                c_loss += loss;
                c_norm = norm;
            }
            let w_max = critic.params.max_abs();
            let (g_loss, g_norm) = generator_step(&mut t, &mut gen, &critic, &mut opt_g)?;
            Ok((
                c_loss / config.critic_steps as f64,
                g_loss,
                c_norm,
                g_norm,
                w_max,
            ))
        })();
        match step {
            Ok((cl, gl, cn, gn, wm)) if [cl, gl, cn, gn].iter().all(|v| v.is_finite()) => {
                history.critic_loss.push(cl);
                history.generator_loss.push(gl);
                history.critic_grad_norm.push(cn);
                history.generator_grad_norm.push(gn);
                history.critic_weight_max.push(wm);
            }
            Ok(_) | Err(GanError::NonFinite(_)) => {
                return Err(GanError::NonFiniteLoss {
                    iteration: it,
                    history: Box::new(history),
                })
            }
            Err(e) => return Err(e),
        }
    }

    Ok(TrainedModel {
        kind,
        game,
        objective: partition.objective,
        classes,
        config: config.clone(),
        generator: gen,
        critic,
        history,
    })
}

fn labels_var(g: &mut Graph, l: Option<Tensor>) -> Result<Option<Var>, GanError> {
    l.map(|t| g.constant(t)).transpose().map_err(GanError::from)
}

fn critic_scores(
    g: &mut Graph,
    critic: &CriticNet,
    cp: &[Var],
    x: Var,
    planes: Option<Var>,
    stats: &mut Vec<Vec<BatchStats>>,
) -> Result<Var, GanError> {
    let (d, s) = critic.forward(g, cp, x, planes, Mode::Train)?;
    stats.push(s);
    Ok(d)
}

fn critic_step(
    t: &mut Trainer,
    gen: &GeneratorNet,
    critic: &mut CriticNet,
    opt: &mut RmsProp,
) -> Result<(f64, f64), GanError> {
    let cfg = t.cfg;
    let mut g = Graph::new();
    let gp = gen.params.bind(&mut g, false)?;
    let cp = critic.params.bind(&mut g, true)?;
    let mut stats = Vec::new();

    let (z, fake_lab) = t.fake_inputs();
    let z = g.constant(z)?;
    let (fake_y, fake_pairs) = match fake_lab {
        Some((y, p)) => (Some(y), p),
        None => (None, Vec::new()),
    };
    let fake_planes = fake_y
        .as_ref()
        .map(|y| label_planes(y, t.shape[1], t.shape[2]));
    let y = labels_var(&mut g, fake_y)?;
    let (fake, _) = gen.forward(&mut g, &gp, z, y, Mode::Train)?;
    let fp = labels_var(&mut g, fake_planes)?;
    let d_fake = critic_scores(&mut g, critic, &cp, fake, fp, &mut stats)?;

    let loss = match t.kind {
        ModelKind::Vanilla => {
            let real = t.real_batch();
            let x = g.constant(real.x)?;
            let d_real = critic_scores(&mut g, critic, &cp, x, None, &mut stats)?;
            loss_vanilla(&mut g, d_real, d_fake, cfg.loss_head)?
        }
        ModelKind::Rumi => {
            let pos = t.batch_from(false);
            let neg = t.batch_from(true);
            let xp = g.constant(pos.x)?;
            let xn = g.constant(neg.x)?;
            let d_pos = critic_scores(&mut g, critic, &cp, xp, None, &mut stats)?;
            let d_neg = critic_scores(&mut g, critic, &cp, xn, None, &mut stats)?;
            loss_rumi(
                &mut g,
                d_pos,
                d_neg,
                d_fake,
                cfg.alpha_plus,
                cfg.alpha_minus,
                cfg.loss_head,
            )?
        }
        ModelKind::CGan => {
            let real = t.real_batch();
            let x = g.constant(real.x)?;
            let planes = labels_var(&mut g, real.planes)?;
            let d_real = critic_scores(&mut g, critic, &cp, x, planes, &mut stats)?;
            loss_cgan(
                &mut g,
                &ConditionedScores {
                    scores: d_real,
                    labels: Some(&real.pairs),
                },
                &ConditionedScores {
                    scores: d_fake,
                    labels: Some(&fake_pairs),
                },
                cfg.loss_head,
            )?
        }
    };
    let value = g.value(loss.critic).item();
    let grads = g.backward(loss.critic)?;
    let norm = grad_norm(&grads, &cp);
    let gv: Vec<Tensor> = cp.iter().map(|&v| grads.wrt(v).clone()).collect();
    opt.step(&mut critic.params.values, &gv)?;
    if cfg.loss_head == LossHead::Wasserstein {
        clip_weights(&mut critic.params.values, cfg.clip)?;
    }
    for s in &stats {
        critic.params.update_running(s);
    }
    Ok((value, norm))
}

fn generator_step(
    t: &mut Trainer,
    gen: &mut GeneratorNet,
    critic: &CriticNet,
    opt: &mut RmsProp,
) -> Result<(f64, f64), GanError> {
    let mut g = Graph::new();
    let gp = gen.params.bind(&mut g, true)?;
    let cp = critic.params.bind(&mut g, false)?;
    let (z, lab) = t.fake_inputs();
    let z = g.constant(z)?;
    let (y, planes) = match lab {
        Some((y, _)) => {
            let planes = label_planes(&y, t.shape[1], t.shape[2]);
            (Some(y), Some(planes))
        }
        None => (None, None),
    };
    let y = labels_var(&mut g, y)?;
    let (fake, gstats) = gen.forward(&mut g, &gp, z, y, Mode::Train)?;
    let planes = labels_var(&mut g, planes)?;
    let (d_fake, _) = critic.forward(&mut g, &cp, fake, planes, Mode::Train)?;
    let loss = generator_loss(&mut g, d_fake, t.cfg.loss_head)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?;
    let norm = grad_norm(&grads, &gp);
    let gv: Vec<Tensor> = gp.iter().map(|&v| grads.wrt(v).clone()).collect();
    opt.step(&mut gen.params.values, &gv)?;
    gen.params.update_running(&gstats);
    Ok((value, norm))
}

fn label_tensor(
    gen: &GeneratorNet,
    classes: &[usize],
    n: usize,
    label: Option<LabelPair>,
) -> Result<Option<Tensor>, GanError> {
    match (gen.is_conditional(), label) {
        (true, None) => Err(GanError::LabelRequired),
        (false, Some(_)) => Err(GanError::UnexpectedLabel),
        (false, None) => Ok(None),
        (true, Some(l)) => {
            if LabelPair::width(classes) != gen.arch.label_dim || !classes.contains(&l.class_value)
            {
                return Err(GanError::IncompatibleDims(format!(
                    "label {l} does not fit a generator over classes {classes:?}"
                )));
            }
            let row = l.encode(classes);
            let d = row.len();
            Ok(Some(Tensor::from_fn(&[n, d], |i| row[i % d])))
        }
    }
}

/// Eval-mode generator output for given latents.
pub fn generator_logits(
    gen: &GeneratorNet,
    classes: &[usize],
    z: &Tensor,
    label: Option<LabelPair>,
) -> Result<Tensor, GanError> {
    let n = z.shape()[0];
    let y = label_tensor(gen, classes, n, label)?;
    let mut g = Graph::new();
    let p = gen.params.bind(&mut g, false)?;
    let zv = g.constant(z.clone())?;
    let yv = labels_var(&mut g, y)?;
    let (out, _) = gen.forward(&mut g, &p, zv, yv, Mode::Eval)?;
    Ok(g.value(out).clone())
}

const SAMPLE_CHUNK: usize = 64;

/// Draws `n` latents ~ N(0, 1), runs the generator in eval mode and decodes
/// each output by per-cell argmax.
pub fn sample(
    gen: &GeneratorNet,
    classes: &[usize],
    tileset: &TileSet,
    n: usize,
    label: Option<LabelPair>,
    rng: &mut Rng,
) -> Result<Vec<Grid>, GanError> {
    label_tensor(gen, classes, 1, label)?;
    let a = &gen.arch;
    if tileset.len() != a.channels {
        return Err(GanError::IncompatibleDims(format!(
            "generator has {} channels, tile set {}",
            a.channels,
            tileset.len()
        )));
    }
    let z = sample_latents(rng, n, a.latent_dim);
    let plane = a.channels * a.rows * a.cols;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(SAMPLE_CHUNK) {
        let m = SAMPLE_CHUNK.min(n - start);
        let chunk = Tensor::new(
            vec![m, a.latent_dim],
            z.data()[start * a.latent_dim..(start + m) * a.latent_dim].to_vec(),
        )?;
        let logits = generator_logits(gen, classes, &chunk, label)?;
        for i in 0..m {
            let grid = decode_planes(
                &logits.data()[i * plane..(i + 1) * plane],
                a.channels,
                a.rows,
                a.cols,
                tileset,
            )
            .map_err(|e| GanError::NonFinite(e.to_string()))?;
            out.push(grid);
        }
    }
    Ok(out)
}
