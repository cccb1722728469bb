//! Behavioural invariants of the continual learners on small streams.

use trgp::bench::experiment::{run_experiment, ExperimentOptions, StreamConfig};
use trgp::bench::stream::{gen_split_synthetic, SplitSyntheticConfig, TaskStream};
use trgp::checkpoint::Checkpoint;
use trgp::network::{logits, HeadMode};
use trgp::selftest::{toy_orthogonal, toy_sign_flip};
use trgp::subspace::{SubspaceConfig, SubspaceStore};
use trgp::trainer::{ContinualLearner, Method, TrainerConfig};
use trgp::trust_region::{TrustMode, TrustRegionConfig};

fn synthetic(overlap: f64, noise: f64, tasks: usize, dim: usize) -> TaskStream {
    gen_split_synthetic(
        &SplitSyntheticConfig {
            num_tasks: tasks,
            classes_per_task: 2,
            dim,
            overlap,
            ambient_noise: noise,
            train_per_class: 60,
            test_per_class: 30,
            ..Default::default()
        },
        11,
    )
    .unwrap()
}

fn config(method: Method, hidden: Vec<usize>, head: HeadMode) -> TrainerConfig {
    TrainerConfig {
        method,
        epochs: 2,
        lr: 0.05,
        hidden,
        head,
        seed: 3,
        subspace: SubspaceConfig {
            eps_th: vec![0.99],
            ..Default::default()
        },
        ..TrainerConfig::default()
    }
}

#[test]
fn sign_flip_blocks_gpm_but_not_trgp() {
    let o = toy_sign_flip(0);
    assert!(o.gpm_residual_ratio <= 0.2, "{o:?}");
    assert!(o.trgp_task2_loss <= 0.9 * o.gpm_task2_loss, "{o:?}");
    assert!(o.trgp_ratio >= 0.5, "{o:?}");
}

#[test]
fn orthogonal_tasks_are_unaffected_by_projection() {
    for root in 0..3 {
        assert!(toy_orthogonal(root) <= 1e-8);
    }
}

fn layer0_ratio(overlap: f64) -> f64 {
    let stream = synthetic(overlap, 0.0, 2, 12);
    let mut l = ContinualLearner::new(config(Method::Trgp, vec![16], HeadMode::PerTask), 12, 2, 2).unwrap();
    for t in &stream.tasks {
        l.learn_task(t).unwrap();
    }
    let c = &l.artifacts[1].selection.layers[0].candidates;
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].old_task, 0);
    c[0].ratio
}

#[test]
fn trust_region_ratio_follows_task_overlap() {
    let shared = layer0_ratio(1.0);
    let disjoint = layer0_ratio(0.0);
    assert!(shared >= 0.8, "shared subspace ratio {shared}");
    assert!(disjoint <= 0.2, "disjoint subspace ratio {disjoint}");
}

#[test]
fn old_task_logits_are_frozen() {
    // single linear layer: task inputs lie exactly in their subspace, so
    // later training cannot change old outputs
    let stream = synthetic(0.0, 0.0, 3, 8);
    for method in [Method::Gpm, Method::Trgp] {
        let mut l = ContinualLearner::new(config(method, vec![], HeadMode::Single), 8, 2, 3).unwrap();
        l.learn_task(&stream.tasks[0]).unwrap();
        let (x, _) = stream.tasks[0].test.all();
        let before = logits(&l.model, &l.selections_for(0).unwrap(), &x, 0).unwrap();
        let acc0 = l.evaluate(&stream.tasks[0]).unwrap();
        for t in &stream.tasks[1..] {
            l.learn_task(t).unwrap();
        }
        let after = logits(&l.model, &l.selections_for(0).unwrap(), &x, 0).unwrap();
        assert!(after.max_abs_diff(&before) <= 1e-8, "{method}: {}", after.max_abs_diff(&before));
        assert_eq!(l.evaluate(&stream.tasks[0]).unwrap(), acc0);
        assert!(l.frozen_projection_drift() <= 1e-10);
    }
}

#[test]
fn sgd_forgets_where_projection_does_not() {
    let stream = synthetic(0.7, 0.1, 3, 16);
    let run = |method| {
        run_experiment(&config(method, vec![16], HeadMode::PerTask), &stream, &ExperimentOptions::default()).unwrap()
    };
    let gpm = run(Method::Gpm);
    let trgp = run(Method::Trgp);
    assert!(gpm.max_frozen_drift <= 1e-5);
    assert!(trgp.max_frozen_drift <= 1e-5);
    assert!(trgp.max_accuracy_drift() <= 0.05, "{}", trgp.max_accuracy_drift());
}

#[test]
fn identical_seeds_give_identical_results() {
    let cfg = StreamConfig::SplitSynthetic {
        num_tasks: 3,
        classes_per_task: 2,
        dim: 12,
        separation: 3.0,
        overlap: 0.5,
        ambient_noise: 0.2,
        train_per_class: 40,
        test_per_class: 20,
    };
    for method in Method::ALL {
        let run = || {
            let stream = cfg.build(9).unwrap();
            let mut c = config(method, vec![10], HeadMode::PerTask);
            c.seed = 9;
            run_experiment(&c, &stream, &ExperimentOptions::default()).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.acc_rows, b.acc_rows, "{method}");
        if let (Some(la), Some(lb)) = (&a.learner, &b.learner) {
            assert_eq!(la.model.layers(), lb.model.layers());
        }
    }
}

#[test]
fn taskwise_and_top1_selection_logs() {
    let stream = synthetic(0.8, 0.1, 3, 16);
    for trust in [
        TrustRegionConfig {
            mode: TrustMode::Taskwise,
            ..Default::default()
        },
        TrustRegionConfig {
            top_k: 1,
            epsilon: 0.1,
            ..Default::default()
        },
    ] {
        let mut c = config(Method::Trgp, vec![16], HeadMode::PerTask);
        c.trust = trust.clone();
        let r = run_experiment(&c, &stream, &ExperimentOptions::default()).unwrap();
        let last = &r.artifacts[2].selection;
        assert_eq!(last.mode, trust.mode);
        for l in &last.layers {
            assert_eq!(l.candidates.len(), 2);
            assert!(l.chosen.len() <= trust.top_k);
        }
        if trust.mode == TrustMode::Taskwise {
            let first = &last.layers[0].chosen;
            assert!(last.layers.iter().all(|l| &l.chosen == first));
        }
    }
}

#[test]
fn store_and_checkpoint_round_trip() {
    let stream = synthetic(0.5, 0.1, 2, 10);
    let mut l = ContinualLearner::new(config(Method::Trgp, vec![8], HeadMode::PerTask), 10, 2, 2).unwrap();
    for t in &stream.tasks {
        l.learn_task(t).unwrap();
    }
    let back = SubspaceStore::from_bytes(&l.store.to_bytes()).unwrap();
    assert_eq!(back, l.store);
    assert!(SubspaceStore::from_bytes(&l.store.to_bytes()[..20]).is_err());

    let ck = Checkpoint {
        task: 1,
        model: l.model.clone(),
        scalings: l.artifacts[1].scalings.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.bin");
    ck.save(&p).unwrap();
    assert_eq!(Checkpoint::load(&p).unwrap(), ck);
}
