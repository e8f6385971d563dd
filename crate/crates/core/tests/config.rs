mod kv {
    use bfftrack::kv::*;
    use bfftrack::Error;

    #[test]
    fn parses_comments_repeats_and_overrides() {
        let kv = KvBlock::parse("# header\na = 1\nb=two # trailing\n\na = 3\n").unwrap();
        assert_eq!(kv.get("a"), Some("3"));
        assert_eq!(kv.get_all("a").collect::<Vec<_>>(), vec!["1", "3"]);
        assert_eq!(kv.get("b"), Some("two"));
        assert_eq!(kv.parse_value::<u32>("a").unwrap(), Some(3));
        assert!(kv.parse_value::<u32>("b").is_err());
    }

    #[test]
    fn unknown_keys_are_listed() {
        let kv = KvBlock::parse("a = 1\nzz = 2\nyy = 3").unwrap();
        match kv.check_keys(&["a"]) {
            Err(Error::UnknownKeys(keys)) => assert_eq!(keys, vec!["yy", "zz"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(KvBlock::parse("just words").is_err());
    }

    #[test]
    fn merge_replaces_all_occurrences() {
        let mut a = KvBlock::parse("o = 1\no = 2\nk = x").unwrap();
        a.merge(&KvBlock::parse("o = 9").unwrap());
        assert_eq!(a.get_all("o").collect::<Vec<_>>(), vec!["9"]);
        assert_eq!(a.get("k"), Some("x"));
    }
}

mod seed {
    use bfftrack::seed::*;

    #[test]
    fn derivation_separates_domains_and_paths() {
        let a = derive(7, Domain::Shadowing, &[1, 2]);
        assert_eq!(a, derive(7, Domain::Shadowing, &[1, 2]));
        assert_ne!(a, derive(7, Domain::Trajectory, &[1, 2]));
        assert_ne!(a, derive(7, Domain::Shadowing, &[2, 1]));
        assert_ne!(a, derive(8, Domain::Shadowing, &[1, 2]));
    }
}

mod config {
    use bfftrack::harness::*;
    use bfftrack::Error;

    #[test]
    fn canonical_text_round_trips() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = ExperimentConfig::parse("grid = 401\nmodels = transformer,persistence\nt_obs_list = 7\n").unwrap();
        assert_eq!(c.env.grid_nx * c.env.grid_ny, 160_801);
        assert_eq!(c.models, vec![ModelKind::Transformer, ModelKind::Persistence]);
        assert_ne!(c.digest(), ExperimentConfig::default().digest());
        match ExperimentConfig::parse("colour = red\nzeta = 1\n") {
            Err(Error::UnknownKeys(k)) => assert_eq!(k, vec!["colour".to_string(), "zeta".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("t_obs_list = 12\n").is_err());
    }
}
