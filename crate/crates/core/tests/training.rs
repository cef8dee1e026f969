use fnrgnn_core::adam::AdamConfig;
use fnrgnn_core::gradcheck::random_graph;
use fnrgnn_core::graph::AdjacencySpec;
use fnrgnn_core::model::{self, ModelConfig, ModelParams};
use fnrgnn_core::trainer::{
    self, run_ablation_suite, split_nodes, summarize, Ablation, Prepared, TrainConfig,
};
use fnrgnn_core::{Graph, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config(ablation: Ablation) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        patience: 8,
        hidden: 8,
        lr: 1e-2,
        sample_per_group: 20,
        ablation,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn graph() -> Graph {
    random_graph(60, 4, 0.08, 11).unwrap()
}

#[test]
fn training_is_deterministic() {
    let g = graph();
    for case in Ablation::ALL {
        let cfg = small_config(case);
        let a = trainer::train(&g, &cfg).unwrap();
        let b = trainer::train(&g, &cfg).unwrap();
        assert_eq!(a.reports, b.reports, "{case:?}");
        assert_eq!(a.curves, b.curves, "{case:?}");
        assert_eq!(a.params, b.params, "{case:?}");
    }
}

#[test]
fn total_loss_is_weighted_sum_of_parts() {
    let g = graph();
    for case in Ablation::ALL {
        let cfg = TrainConfig {
            lambda_mmd: 0.7,
            lambda_dist: 0.3,
            ..small_config(case)
        };
        let eff = cfg.effective();
        let r = trainer::train(&g, &cfg).unwrap();
        for k in 0..r.curves.len() {
            let c = &r.curves;
            let want = c.mse[k] + eff.lambda_mmd * c.mmd[k] + eff.lambda_dist * c.dist[k];
            assert!((c.total[k] - want).abs() <= 1e-12, "{case:?} epoch {}", k + 1);
            if eff.lambda_mmd == 0.0 {
                assert_eq!(c.mmd[k], 0.0);
            }
            if eff.lambda_dist == 0.0 {
                assert_eq!(c.dist[k], 0.0);
            }
        }
    }
}

#[test]
fn early_stopping_keeps_best_validation_epoch() {
    let g = graph();
    let cfg = TrainConfig {
        epochs: 300,
        patience: 5,
        lr: 5e-2,
        ..small_config(Ablation::Full)
    };
    let r = trainer::train(&g, &cfg).unwrap();
    let val = &r.curves.val_mse;
    let first_min = val
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0;
    assert_eq!(r.best_epoch, first_min + 1);
    if r.epochs_run < cfg.epochs {
        assert_eq!(r.epochs_run, r.best_epoch + cfg.patience);
    }
    let prepared = Prepared::new(&g, &cfg).unwrap();
    let again = trainer::evaluate(&g, &prepared, &r.params).unwrap();
    assert_eq!(again, r.reports);
    // the validation MSE reported for the best epoch belongs to the kept parameters
    assert!((r.reports.val.mse - val[first_min]).abs() <= 1e-12);
}

#[test]
fn zero_parameters_first_epoch_loss_is_mean_square_target() {
    let g = random_graph(12, 3, 0.3, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        patience: 1,
        hidden: 4,
        ..TrainConfig::default()
    };
    let prepared = Prepared::new(&g, &cfg).unwrap();
    let r = trainer::train_prepared(&g, &prepared, &cfg, ModelParams::zeros(3, 4)).unwrap();
    let y = g.targets();
    let train = &prepared.splits.train;
    let want = train.iter().map(|&i| y[i] * y[i]).sum::<f64>() / train.len() as f64;
    assert_eq!(r.curves.len(), 1);
    assert!((r.curves.mse[0] - want).abs() <= 1e-15);
    assert_eq!(r.curves.mmd[0], 0.0);
    assert_eq!(r.curves.dist[0], 0.0);
    assert!((r.curves.total[0] - want).abs() <= 1e-15);
    // with a single epoch no update is taken
    assert_eq!(r.params, ModelParams::zeros(3, 4));
}

/// Plain AdamW on every tensor, decay on weights only.
struct RefAdam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl RefAdam {
    fn step(&mut self, params: &mut ModelParams, grads: &[fnrgnn_core::Tensor; 6]) {
        self.t += 1;
        let c = self.cfg;
        for (k, tensor) in params.tensors_mut().into_iter().enumerate() {
            let decays = k % 2 == 0;
            for (idx, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grads[k].data()[idx];
                self.m[k][idx] = c.beta1 * self.m[k][idx] + (1.0 - c.beta1) * g;
                self.v[k][idx] = c.beta2 * self.v[k][idx] + (1.0 - c.beta2) * g * g;
                let mh = self.m[k][idx] / (1.0 - c.beta1.powi(self.t));
                let vh = self.v[k][idx] / (1.0 - c.beta2.powi(self.t));
                if decays {
                    *p -= c.lr * c.weight_decay * *p;
                }
                *p -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

#[test]
fn vanilla_matches_reference_mse_loop() {
    let g = graph();
    let cfg = TrainConfig {
        epochs: 60,
        patience: 60,
        weight_decay: 1e-2,
        ..small_config(Ablation::Vanilla)
    };
    let prepared = Prepared::new(&g, &cfg).unwrap();
    assert_eq!(prepared.adjacency_spec, AdjacencySpec::Plain);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let init = ModelParams::init(g.feature_dim(), &ModelConfig { hidden: cfg.hidden }, &mut rng).unwrap();
    let got = trainer::train_prepared(&g, &prepared, &cfg, init.clone()).unwrap();

    let mut adam = RefAdam {
        cfg: AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        m: init.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        v: init.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        t: 0,
    };
    let y = g.targets();
    let val = &prepared.splits.val;
    let mut params = init;
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut mse_curve = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let x = tape.constant(prepared.features.clone());
        let vars = params.register(&mut tape);
        let out = model::forward(&mut tape, x, prepared.adjacency.matrix(), &vars).unwrap();
        let loss = model::mse_loss(&mut tape, out.yhat, y, &prepared.splits.train).unwrap();
        mse_curve.push(tape.scalar(loss).unwrap());
        let pred = tape.value(out.yhat).data();
        let val_mse = val.iter().map(|&i| (pred[i] - y[i]).powi(2)).sum::<f64>() / val.len() as f64;
        if val_mse < best.0 {
            best = (val_mse, epoch, params.clone());
        }
        if epoch == cfg.epochs {
            break;
        }
        let grads = tape.backward(loss).unwrap();
        let grads = params.collect_grads(&vars, &grads);
        adam.step(&mut params, &grads);
    }

    assert_eq!(got.best_epoch, best.1);
    for (a, b) in got.curves.mse.iter().zip(&mse_curve) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert_eq!(got.curves.total, got.curves.mse);
    for (ta, tb) in got.params.tensors().iter().zip(best.2.tensors()) {
        for (a, b) in ta.data().iter().zip(tb.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn splits_are_disjoint_sorted_and_seeded() {
    let g = random_graph(157, 2, 0.02, 1).unwrap();
    let s = split_nodes(&g, [0.5, 0.3, 0.2], 21).unwrap();
    for part in [&s.train, &s.val, &s.test] {
        assert!(part.windows(2).all(|w| w[0] < w[1]));
        for grp in [0, 1] {
            assert!(part.iter().any(|&i| g.sensitive()[i] == grp));
        }
    }
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..157).collect::<Vec<_>>());
    // 79 nodes in group 0 and 78 in group 1, rounded per group
    assert_eq!(s.train.len(), 40 + 39);
    assert_eq!(s.val.len(), 24 + 23);
    assert_eq!(s, split_nodes(&g, [0.5, 0.3, 0.2], 21).unwrap());
    assert_ne!(s, split_nodes(&g, [0.5, 0.3, 0.2], 22).unwrap());
    assert!(split_nodes(&random_graph(9, 2, 0.5, 1).unwrap(), [0.6, 0.2, 0.2], 0).is_err());
}

#[test]
fn ablation_summary_averages_seed_runs() {
    let g = graph();
    let cfg = TrainConfig {
        epochs: 5,
        patience: 5,
        ..small_config(Ablation::Full)
    };
    let seeds = [4, 9];
    let runs = run_ablation_suite(&g, &cfg, &seeds);
    assert_eq!(runs.len(), Ablation::ALL.len() * seeds.len());
    let summary = summarize(&runs);
    assert_eq!(summary.len(), Ablation::ALL.len());
    for s in &summary {
        let reports: Vec<_> = runs
            .iter()
            .filter(|r| r.case == s.case)
            .map(|r| r.outcome.as_ref().unwrap())
            .collect();
        assert_eq!(s.runs, 2);
        assert_eq!(s.failures, 0);
        assert_eq!(s.mse, (reports[0].mse + reports[1].mse) / 2.0);
        assert_eq!(s.wd, (reports[0].wd + reports[1].wd) / 2.0);
        // each run matches a direct training call with that case and seed
        let direct = trainer::train(
            &g,
            &TrainConfig {
                ablation: s.case,
                seed: seeds[1],
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(&direct.reports.test, reports[1]);
    }
}
