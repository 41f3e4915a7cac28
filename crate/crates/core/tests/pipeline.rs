//! Dataset synthesis through training, checkpointing and plan comparison.

use std::sync::Arc;

use toolseq::checkpoint::{Checkpoint, CheckpointError};
use toolseq::corpus;
use toolseq::degrade::dataset::{read_manifest, resolve, MANIFEST_FILE};
use toolseq::degrade::{cases_in_setting, synth_dataset, Setting};
use toolseq::oracle::{aggregate, best_sequence, compare_plan, SearchOptions};
use toolseq::po::{infer_plan, PoConfig, TrainItem, Trainer, Variant};
use toolseq::raster::Raster;
use toolseq::reward::{ProviderConfig, Proxy};
use toolseq::toolset::{default_registry, Registry};

fn write_corpus(dir: &std::path::Path, n: usize) {
    for (i, img) in corpus::corpus(n, 48, 70).iter().enumerate() {
        img.save_png(dir.join(format!("c{i}.png"))).unwrap();
    }
}

fn load_items(manifest: &std::path::Path, with_clean: bool) -> Vec<TrainItem> {
    read_manifest(manifest)
        .unwrap()
        .iter()
        .map(|r| TrainItem {
            degraded: Raster::load_png(resolve(manifest, &r.degraded)).unwrap(),
            clean: with_clean.then(|| Raster::load_png(resolve(manifest, &r.clean)).unwrap()),
        })
        .collect()
}

#[test]
fn synth_train_checkpoint_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let clean_dir = tmp.path().join("clean");
    std::fs::create_dir_all(&clean_dir).unwrap();
    write_corpus(&clean_dir, 3);
    let data_dir = tmp.path().join("data");
    let rows = synth_dataset(&clean_dir, &cases_in_setting(Setting::I), 2, 9, &data_dir).unwrap();
    assert_eq!(rows.len(), 10);
    let manifest = data_dir.join(MANIFEST_FILE);
    assert_eq!(read_manifest(&manifest).unwrap(), rows);

    let reg = Arc::new(default_registry());
    for (provider, with_clean) in [(ProviderConfig::default(), false), (ProviderConfig::Oracle, true)] {
        let items = load_items(&manifest, with_clean);
        let cfg = PoConfig {
            updates: 3,
            episodes_per_update: 6,
            minibatch: 4,
            t_max: 3,
            eval_every: 0,
            ..Default::default()
        };
        let mut tr = Trainer::new(cfg, Arc::clone(&reg), items.clone(), items.clone(), &provider).unwrap();
        let log = tr.run(|_, _| {}).unwrap();
        assert_eq!(log.len(), 3);
        assert!(log.iter().all(|r| r.failed_episodes == 0 && r.max_telescoping_error < 1e-9));
        assert!(log.last().unwrap().greedy_eval.is_some());

        let path = tmp.path().join(format!("{}.json", provider.kind()));
        let ck = Checkpoint::from_trainer(&tr, provider.kind());
        ck.save(&path).unwrap();
        let back = Checkpoint::load_for(&path, &reg).unwrap();
        assert_eq!(back.actor, tr.learner.actor);
        assert_eq!(back.updates_done, 3);

        // the saved actor reproduces the trainer's greedy plans
        for it in &items {
            let a = infer_plan(&tr.learner.actor, &reg, &it.degraded, 3, None).unwrap();
            let b = infer_plan(&back.actor, &reg, &it.degraded, 3, None).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn missing_clean_images_are_rejected_for_the_oracle_provider() {
    let reg = Arc::new(default_registry());
    let items = vec![TrainItem {
        degraded: corpus::scene(40, 40, 1),
        clean: None,
    }];
    assert!(Trainer::new(PoConfig::default(), reg, items, vec![], &ProviderConfig::Oracle).is_err());
}

#[test]
fn policy_comparison_against_the_oracle() {
    let reg = default_registry();
    let scorer = Proxy::default();
    let n = reg.n_actions();
    let actor = toolseq::nets::init_params(toolseq::featurize::state_dim(n), n, 3);
    let mut reports = Vec::new();
    for seed in 0..3 {
        let img = toolseq::degrade::add_noise(&corpus::scene(40, 40, seed), toolseq::degrade::NoiseKind::Gaussian, 0.06, seed);
        let best = best_sequence(&img, &reg, 2, &scorer, &SearchOptions::default()).unwrap();
        let plan = infer_plan(&actor, &reg, &img, 2, None).unwrap();
        let rep = compare_plan(&reg, &plan.actions, &plan.output, &best, &scorer).unwrap();
        assert!(rep.gap >= -1e-12, "policy beat an exhaustive search: {rep:?}");
        assert_eq!(rep.exact_match, plan.actions == best.sequence);
        reports.push(rep);
    }
    let agg = aggregate(&reports, 0.05);
    assert_eq!(agg.images, 3);
    assert!((0.0..=1.0).contains(&agg.score_match_rate));
    assert!(agg.match_rate <= agg.score_match_rate);
}

#[test]
fn checkpoint_from_another_registry_is_rejected() {
    let reg = default_registry();
    let n = reg.n_actions();
    let ck = Checkpoint::new(
        &reg,
        toolseq::nets::init_params(toolseq::featurize::state_dim(n), n, 0),
        None,
        PoConfig {
            variant: Variant::Grpo,
            ..Default::default()
        },
        "proxy",
        0,
    );
    let other = Registry::subset(&["median3", "median5", "clahe"]).unwrap();
    assert!(matches!(ck.validate(&other), Err(CheckpointError::Fingerprint { .. })));
    assert!(ck.validate(&reg).is_ok());
}
