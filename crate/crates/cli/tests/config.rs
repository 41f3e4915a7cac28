//! Config files and overrides compose predictably.

use proptest::prelude::*;

use toolseq_cli::Config;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overrides_match_an_equivalent_config_file(
        updates in 0usize..1000,
        t_max in 1usize..8,
        lr in 1e-5f64..1.0,
        seed in any::<u64>(),
        per_case in 1usize..50,
    ) {
        let sets = vec![
            format!("po.updates={updates}"),
            format!("po.t_max={t_max}"),
            format!("po.lr={lr}"),
            format!("po.seed={seed}"),
            format!("synth.per_case={per_case}"),
        ];
        let from_sets = Config::load(None, &sets).unwrap();
        prop_assert_eq!(from_sets.po.updates, updates);
        prop_assert_eq!(from_sets.po.t_max, t_max);
        prop_assert_eq!(from_sets.po.lr, lr);
        prop_assert_eq!(from_sets.po.seed, seed);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, from_sets.to_json_pretty()).unwrap();
        let from_file = Config::load(Some(&path), &[]).unwrap();
        prop_assert_eq!(&from_file, &from_sets);

        // a later override wins over the file
        let again = Config::load(Some(&path), &["po.updates=3".to_string()]).unwrap();
        prop_assert_eq!(again.po.updates, 3);
        prop_assert_eq!(again.po.seed, seed);
    }
}
