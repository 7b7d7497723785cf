use rand::Rng as _;

use super::*;
use crate::corpusgen::{
    build_corpus, partition_samples, CorpusSpec, LabelPair, ModelKind, Objective,
};
use crate::levelgrid::Game;
use crate::seeding::rng_from;
use crate::tensor::{Dtype, Graph, Tensor, Var};

fn scores(g: &mut Graph, vals: &[f64]) -> Var {
    g.param(Tensor::new(vec![vals.len(), 1], vals.to_vec()).unwrap())
        .unwrap()
}

#[test]
fn preset_output_shapes() {
    let mut rng = rng_from(1);
    for (game, rows, cols, ch) in [(Game::Cave, 14, 14, 5), (Game::Mario, 14, 32, 10)] {
        assert_eq!(game.tileset().len(), ch);
        let gen = build_generator(rows, cols, ch, 32, 0, &mut rng).unwrap();
        let critic = build_critic(rows, cols, ch, 0, &mut rng).unwrap();
        let mut g = Graph::new();
        let gp = gen.params.bind(&mut g, false).unwrap();
        let z = g.constant(train_latents(32)).unwrap();
        let (out, _) = gen.forward(&mut g, &gp, z, None, Mode::Train).unwrap();
        assert_eq!(g.value(out).shape(), &[32, ch, rows, cols]);
        let cp = critic.params.bind(&mut g, false).unwrap();
        let (d, _) = critic.forward(&mut g, &cp, out, None, Mode::Train).unwrap();
        assert_eq!(g.value(d).shape(), &[32, 1]);
    }
}

fn train_latents(n: usize) -> Tensor {
    sample_latents(&mut rng_from(99), n, 32)
}

#[test]
fn conditional_critic_input_channels() {
    let label_dim = LabelPair::width(&[1, 2, 3]);
    let critic = build_critic(14, 14, 5, label_dim, &mut rng_from(2)).unwrap();
    assert_eq!(critic.arch.layers[0].in_channels, 5 + 4);
    let enc = LabelPair::new(2, false).encode(&[1, 2, 3]);
    assert_eq!(enc, vec![0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn odd_and_tiny_dims() {
    let mut rng = rng_from(3);
    for (r, c) in [(5, 9), (3, 3), (7, 20), (2, 2)] {
        let gen = build_generator(r, c, 3, 4, 0, &mut rng).unwrap();
        assert_eq!(gen.arch.layers.last().unwrap().out_size, (r, c));
    }
    assert!(matches!(
        build_critic(1, 8, 3, 0, &mut rng),
        Err(GanError::IncompatibleDims(_))
    ));
    assert!(matches!(
        build_generator(0, 8, 3, 4, 0, &mut rng),
        Err(GanError::IncompatibleDims(_))
    ));
}

#[test]
fn critic_eval_mode_is_deterministic() {
    let critic = build_critic(14, 14, 5, 0, &mut rng_from(4)).unwrap();
    let x = Tensor::from_fn(&[3, 5, 14, 14], |i| ((i * 7919) % 13) as f64 / 13.0);
    let run = || {
        let mut g = Graph::new();
        let cp = critic.params.bind(&mut g, false).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let (d, _) = critic.forward(&mut g, &cp, xv, None, Mode::Eval).unwrap();
        g.value(d).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn symmetric_loss_values() {
    let mut g = Graph::new();
    let r = scores(&mut g, &[0.0; 4]);
    let f = scores(&mut g, &[0.0; 4]);
    let n = scores(&mut g, &[0.0; 4]);
    let v = loss_vanilla(&mut g, r, f, LossHead::LogGan).unwrap();
    let want = -(0.5f64.ln() + 0.5f64.ln());
    assert!((g.value(v.critic).item() - want).abs() < 1e-12);
    assert!((g.value(v.critic).item() - 1.3863).abs() < 1e-4);
    let rumi = loss_rumi(&mut g, r, n, f, 1.0, 0.5, LossHead::LogGan).unwrap();
    assert!((g.value(rumi.critic).item() - 2.5 * -0.5f64.ln()).abs() < 1e-12);
    assert!((g.value(rumi.critic).item() - 1.7329).abs() < 1e-4);
    let w = loss_vanilla(&mut g, r, f, LossHead::Wasserstein).unwrap();
    assert_eq!(g.value(w.critic).item(), 0.0);
}

#[test]
fn rumi_without_negatives_is_vanilla() {
    let mut rng = rng_from(5);
    for head in [LossHead::LogGan, LossHead::Wasserstein] {
        for _ in 0..50 {
            let b = rng.random_range(1..10);
            let mut draw = |g: &mut Graph| {
                let v: Vec<f64> = (0..b).map(|_| rng.random_range(-3.0..3.0)).collect();
                scores(g, &v)
            };
            let mut g = Graph::new();
            let (p, n, f) = (draw(&mut g), draw(&mut g), draw(&mut g));
            let rumi = loss_rumi(&mut g, p, n, f, 1.0, 0.0, head).unwrap();
            let van = loss_vanilla(&mut g, p, f, head).unwrap();
            assert_eq!(g.value(rumi.critic).item(), g.value(van.critic).item());
            assert_eq!(
                g.value(rumi.generator).item(),
                g.value(van.generator).item()
            );
        }
    }
}

#[test]
fn rumi_monotone_in_negative_scores() {
    for head in [LossHead::LogGan, LossHead::Wasserstein] {
        let value = |neg: f64| {
            let mut g = Graph::new();
            let p = scores(&mut g, &[0.3, -0.2]);
            let n = scores(&mut g, &[neg, neg]);
            let f = scores(&mut g, &[0.1, 0.4]);
            let l = loss_rumi(&mut g, p, n, f, 1.0, 0.5, head).unwrap();
            g.value(l.critic).item()
        };
        let mut last = value(2.0);
        for step in 1..20 {
            let v = value(2.0 - 0.25 * step as f64);
            assert!(
                v < last,
                "{head}: loss must fall as the negative score falls"
            );
            last = v;
        }
    }
}

#[test]
fn loss_errors() {
    let mut g = Graph::new();
    let a = scores(&mut g, &[0.1, 0.2]);
    let e = g.param(Tensor::zeros(&[0, 1])).unwrap();
    assert!(matches!(
        loss_rumi(&mut g, a, e, a, 1.0, 0.5, LossHead::LogGan),
        Err(GanError::EmptyBatch)
    ));
    assert!(matches!(
        loss_rumi(&mut g, a, a, a, 1.0, -0.1, LossHead::LogGan),
        Err(GanError::NegativeAlpha(_))
    ));
    assert!(matches!(
        loss_rumi(&mut g, a, a, a, 0.0, 0.5, LossHead::LogGan),
        Err(GanError::NegativeAlpha(_))
    ));
    let labels = [LabelPair::new(1, false), LabelPair::new(2, true)];
    let with = ConditionedScores {
        scores: a,
        labels: Some(&labels),
    };
    let without = ConditionedScores {
        scores: a,
        labels: None,
    };
    assert!(matches!(
        loss_cgan(&mut g, &with, &without, LossHead::Wasserstein),
        Err(GanError::MissingLabel)
    ));
    let c = loss_cgan(&mut g, &with, &with, LossHead::LogGan).unwrap();
    let v = loss_vanilla(&mut g, a, a, LossHead::LogGan).unwrap();
    assert_eq!(g.value(c.critic).item(), g.value(v.critic).item());
    let huge = scores(&mut g, &[-800.0, 0.0]);
    assert!(matches!(
        generator_loss(&mut g, huge, LossHead::LogGan),
        Err(GanError::NonFinite(_))
    ));
}

/// Central differences of each loss with respect to its score inputs.
#[test]
fn loss_gradients_match_finite_differences() {
    type LossFn = fn(&mut Graph, &[Var], LossHead) -> LossPair;
    let kinds: [(&str, usize, LossFn); 3] = [
        ("vanilla", 2, |g, v, h| {
            loss_vanilla(g, v[0], v[1], h).unwrap()
        }),
        ("rumi", 3, |g, v, h| {
            loss_rumi(g, v[0], v[1], v[2], 1.0, 0.5, h).unwrap()
        }),
        ("cgan", 2, |g, v, h| {
            let labels = vec![LabelPair::new(1, false); g.value(v[0]).numel()];
            let r = ConditionedScores {
                scores: v[0],
                labels: Some(&labels),
            };
            let f = ConditionedScores {
                scores: v[1],
                labels: Some(&labels),
            };
            loss_cgan(g, &r, &f, h).unwrap()
        }),
    ];
    let mut rng = rng_from(6);
    for (name, arity, f) in kinds {
        for head in [LossHead::LogGan, LossHead::Wasserstein] {
            for _ in 0..20 {
                let b = rng.random_range(1..9);
                let inputs: Vec<Vec<f64>> = (0..arity)
                    .map(|_| (0..b).map(|_| rng.random_range(-3.0..3.0)).collect())
                    .collect();
                for which in [true, false] {
                    let eval = |inp: &[Vec<f64>]| {
                        let mut g = Graph::new();
                        let vars: Vec<Var> = inp.iter().map(|v| scores(&mut g, v)).collect();
                        let l = f(&mut g, &vars, head);
                        let target = if which { l.critic } else { l.generator };
                        let value = g.value(target).item();
                        let grads = g.backward(target).unwrap();
                        (
                            value,
                            vars.iter()
                                .map(|&v| grads.wrt(v).data().to_vec())
                                .collect::<Vec<_>>(),
                        )
                    };
                    let (_, analytic) = eval(&inputs);
                    for i in 0..arity {
                        for k in 0..b {
                            let h = 1e-5;
                            let mut p = inputs.clone();
                            p[i][k] += h;
                            let mut m = inputs.clone();
                            m[i][k] -= h;
                            let num = (eval(&p).0 - eval(&m).0) / (2.0 * h);
                            let a = analytic[i][k];
                            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
                            assert!(rel <= 1e-4, "{name} {head} critic={which}: {a} vs {num}");
                        }
                    }
                }
            }
        }
    }
}

fn tiny_corpus(game: Game) -> Vec<crate::corpusgen::CorpusEntry> {
    build_corpus(&CorpusSpec::new(game, 30, 17)).unwrap()
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        iterations: 3,
        critic_steps: 2,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_clipped() {
    let corpus = tiny_corpus(Game::Cave);
    for kind in ModelKind::ALL {
        let p = partition_samples(&corpus, Objective::Playability, kind, 3).unwrap();
        let a = train(kind, Game::Cave, &p, &quick_config(8)).unwrap();
        let b = train(kind, Game::Cave, &p, &quick_config(8)).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.history.len(), 3);
        assert!(a.history.all_finite());
        assert!(a.history.critic_weight_max.iter().all(|&w| w <= 0.01));
        assert!(a.critic.params.max_abs() <= 0.01);
        let (g0, _) = init_models(kind, Game::Cave, &a.classes, &a.config).unwrap();
        assert_ne!(
            g0.params, a.generator.params,
            "training must move the generator"
        );
    }
}

#[test]
fn partition_mismatch() {
    let corpus = tiny_corpus(Game::Cave);
    let vanilla =
        partition_samples(&corpus, Objective::Playability, ModelKind::Vanilla, 3).unwrap();
    let err = train(ModelKind::Rumi, Game::Cave, &vanilla, &quick_config(1)).unwrap_err();
    assert!(matches!(err, GanError::PartitionMismatch(_)));
    let mut fake = vanilla.clone();
    fake.kind = ModelKind::Rumi;
    assert!(matches!(
        train(ModelKind::Rumi, Game::Cave, &fake, &quick_config(1)),
        Err(GanError::PartitionMismatch(_))
    ));
    let bad = TrainConfig {
        alpha_minus: -1.0,
        ..quick_config(1)
    };
    assert!(matches!(
        train(ModelKind::Vanilla, Game::Cave, &vanilla, &bad),
        Err(GanError::InvalidConfig(_))
    ));
}

#[test]
fn sampling_rules() {
    let corpus = tiny_corpus(Game::Cave);
    let p = partition_samples(&corpus, Objective::Class(2), ModelKind::CGan, 3).unwrap();
    let m = train(ModelKind::CGan, Game::Cave, &p, &quick_config(4)).unwrap();
    assert!(matches!(
        m.sample(3, None, &mut rng_from(1)),
        Err(GanError::LabelRequired)
    ));
    let a = m.sample(20, m.sampling_label(2), &mut rng_from(1)).unwrap();
    let b = m.sample(20, m.sampling_label(2), &mut rng_from(1)).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, b);
    assert!(a.iter().all(|g| (g.rows(), g.cols()) == (14, 14)));

    let z = sample_latents(&mut rng_from(2), 16, 32);
    let l1 =
        generator_logits(&m.generator, &m.classes, &z, Some(LabelPair::new(1, false))).unwrap();
    let l3 =
        generator_logits(&m.generator, &m.classes, &z, Some(LabelPair::new(3, false))).unwrap();
    assert_ne!(l1, l3, "class label must reach the generator output");

    let v = partition_samples(&corpus, Objective::Playability, ModelKind::Vanilla, 3).unwrap();
    let mv = train(ModelKind::Vanilla, Game::Cave, &v, &quick_config(4)).unwrap();
    assert!(matches!(
        mv.sample(1, Some(LabelPair::new(1, false)), &mut rng_from(1)),
        Err(GanError::UnexpectedLabel)
    ));
}

#[test]
fn conditional_critic_sees_labels() {
    let critic = build_critic(14, 14, 5, 4, &mut rng_from(12)).unwrap();
    let x = Tensor::from_fn(&[2, 5, 14, 14], |i| ((i * 31) % 5 == 0) as u8 as f64);
    let score = |pair: LabelPair| {
        let lab = Tensor::new(
            vec![2, 4],
            [pair.encode(&[1, 2, 3]), pair.encode(&[1, 2, 3])].concat(),
        )
        .unwrap();
        let mut g = Graph::new();
        let cp = critic.params.bind(&mut g, false).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let yv = g.constant(label_planes(&lab, 14, 14)).unwrap();
        let (d, _) = critic
            .forward(&mut g, &cp, xv, Some(yv), Mode::Eval)
            .unwrap();
        g.value(d).clone()
    };
    assert_ne!(
        score(LabelPair::new(1, false)),
        score(LabelPair::new(1, true))
    );
    assert_ne!(
        score(LabelPair::new(1, false)),
        score(LabelPair::new(3, false))
    );
}

#[test]
fn model_file_roundtrip() {
    let corpus = tiny_corpus(Game::Mario);
    let p = partition_samples(&corpus, Objective::Playability, ModelKind::Rumi, 3).unwrap();
    let m = train(ModelKind::Rumi, Game::Mario, &p, &quick_config(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("models").join("rumi.bin");
    save_model(&m, &path, Some("abc")).unwrap();
    assert!(sidecar_path(&path).exists());
    let (back, meta) = load_model(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(meta.corpus_hash.as_deref(), Some("abc"));
    assert_eq!(meta.kind, ModelKind::Rumi);
    let z = sample_latents(&mut rng_from(5), 10, 32);
    let a = generator_logits(&m.generator, &m.classes, &z, None).unwrap();
    let b = generator_logits(&back.generator, &back.classes, &z, None).unwrap();
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(
        m.sample(7, None, &mut rng_from(3)).unwrap(),
        back.sample(7, None, &mut rng_from(3)).unwrap()
    );

    let half = dir.path().join("rumi32.bin");
    save_model_as(&m, &half, None, Dtype::F32).unwrap();
    let (back32, _) = load_model(&half).unwrap();
    let c = generator_logits(&back32.generator, &back32.classes, &z, None).unwrap();
    assert!(a
        .data()
        .iter()
        .zip(c.data())
        .all(|(x, y)| (x - y).abs() <= 1e-6));

    std::fs::write(&path, b"junk").unwrap();
    assert!(load_model(&path).is_err());
}
