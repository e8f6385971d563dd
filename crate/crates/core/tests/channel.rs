mod trace {
    use bfftrack::channel::trace::*;
    use bfftrack::channel::*;
    use bfftrack::Error;

    fn open_area() -> Environment {
        Environment {
            obstacles: vec![],
            ..Environment::default()
        }
    }

    #[test]
    fn free_space_has_exactly_the_direct_path() {
        let env = open_area();
        let rx = Point::new(30.0, 40.0);
        let paths = trace_paths(&env, rx).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].delay - 50.0 / SPEED_OF_LIGHT).abs() < 1e-12);
        assert_eq!(paths[0].bounce_count, 0);
        assert!((paths[0].departure_angle - (40.0f64).atan2(30.0)).abs() < 1e-12);
    }

    #[test]
    fn wall_parallel_to_link_adds_one_reflection() {
        // thin wall along y = 10 above the x axis link
        let mut env = open_area();
        env.obstacles.push(Obstacle::new(
            Point::new(-50.0, 10.0),
            Point::new(90.0, 12.0),
            6.0,
        ));
        let rx = Point::new(40.0, 0.0);
        let paths = trace_paths(&env, rx).unwrap();
        assert_eq!(paths.len(), 2);
        // image of tx across y = 10 is (0, 20)
        let expected = Point::new(0.0, 20.0).distance(rx) / SPEED_OF_LIGHT;
        assert!((paths[1].delay - expected).abs() < 1e-12);
        assert_eq!(paths[1].bounce_count, 1);
        assert!(paths[1].path_gain_db < paths[0].path_gain_db);
        let dir = Point::new(20.0, 10.0);
        assert!((paths[1].departure_angle - dir.angle()).abs() < 1e-12);
    }

    #[test]
    fn enclosed_receiver_with_absorbing_walls_sees_nothing() {
        let mut env = open_area();
        let inf = f64::INFINITY;
        let (cx, cy) = (50.0, 50.0);
        env.obstacles = vec![
            Obstacle::new(Point::new(cx - 6.0, cy - 6.0), Point::new(cx + 6.0, cy - 5.0), inf),
            Obstacle::new(Point::new(cx - 6.0, cy + 5.0), Point::new(cx + 6.0, cy + 6.0), inf),
            Obstacle::new(Point::new(cx - 6.0, cy - 5.0), Point::new(cx - 5.0, cy + 5.0), inf),
            Obstacle::new(Point::new(cx + 5.0, cy - 5.0), Point::new(cx + 6.0, cy + 5.0), inf),
        ];
        let paths = trace_paths(&env, Point::new(cx, cy)).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn receiver_inside_obstacle_is_deep_shadow() {
        let env = Environment::default();
        let paths = trace_paths(&env, Point::new(-55.0, -65.0)).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn domain_errors() {
        let env = Environment::default();
        assert!(matches!(
            trace_paths(&env, Point::new(500.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            trace_paths(&env, env.tx_position),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn paths_are_sorted_and_lengths_exceed_direct_distance() {
        let env = Environment::default();
        let rx = Point::new(10.0, -70.0);
        let paths = trace_paths(&env, rx).unwrap();
        assert!(paths.len() > 1);
        let d = env.tx_position.distance(rx);
        for w in paths.windows(2) {
            assert!(w[0].delay <= w[1].delay);
        }
        for p in &paths {
            assert!(p.length() >= d - 1e-9);
        }
    }

    #[test]
    fn second_order_corner_reflection() {
        // Two walls forming a corner: tx and rx both see x = 20 and y = 20
        // faces from below-left.
        let mut env = open_area();
        env.obstacles = vec![
            Obstacle::new(Point::new(20.0, -90.0), Point::new(22.0, 90.0), 3.0),
            Obstacle::new(Point::new(-90.0, 20.0), Point::new(18.0, 22.0), 3.0),
        ];
        let rx = Point::new(10.0, 5.0);
        let paths = trace_paths(&env, rx).unwrap();
        let two: Vec<_> = paths.iter().filter(|p| p.bounce_count == 2).collect();
        assert!(!two.is_empty());
        // double image of tx across x=20 then y=20 (or reverse) is (40, 40)
        let expected = Point::new(40.0, 40.0).distance(rx) / SPEED_OF_LIGHT;
        assert!(two.iter().any(|p| (p.delay - expected).abs() < 1e-12));
        for p in two {
            assert!((p.path_gain_db + free_space_loss_db(p.length(), env.carrier_freq) + 6.0).abs() < 1e-9);
        }
    }
}

mod environment {
    use bfftrack::channel::environment::*;
    use bfftrack::channel::*;

    #[test]
    fn default_environment_is_valid_and_tx_is_not_a_node() {
        let env = Environment::default();
        env.validate().unwrap();
        assert_eq!(env.pitch(), (2.0, 2.0));
        for i in 0..env.n_nodes() {
            assert_ne!(env.node_position(env.grid_index(i)), env.tx_position);
        }
    }

    #[test]
    fn validation_rejects_bad_setups() {
        let mut env = Environment {
            grid_nx: 1,
            ..Environment::default()
        };
        assert!(env.validate().is_err());
        env = Environment::default();
        env.tx_position = Point::new(1000.0, 0.0);
        assert!(env.validate().is_err());
        env = Environment::default();
        env.obstacles.push(Obstacle::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0), 6.0));
        assert!(env.validate().is_err());
        env = Environment::default();
        env.obstacles.push(Obstacle::new(Point::new(5.0, 5.0), Point::new(5.0, 9.0), 6.0));
        assert!(env.validate().is_err());
    }

    #[test]
    fn linear_index_round_trips() {
        let env = Environment::default();
        for i in [0, 1, 100, 101, 5000, env.n_nodes() - 1] {
            assert_eq!(env.linear_index(env.grid_index(i)), i);
        }
    }
}

mod pdp {
    use bfftrack::channel::pdp::*;
    use std::f64::consts::TAU;
    use bfftrack::channel::*;
    use bfftrack::seed::{self, Domain};
    use bfftrack::Error;

    fn path(delay: f64, gain: f64) -> PropagationPath {
        PropagationPath {
            delay,
            departure_angle: 0.0,
            path_gain_db: gain,
            bounce_count: 0,
        }
    }

    fn omni() -> BeamPattern {
        BeamPattern {
            boresight: 0.0,
            beamwidth: TAU,
            mainlobe_gain_db: 0.0,
            sidelobe_gain_db: -20.0,
        }
    }

    #[test]
    fn default_sounder_has_64_samples() {
        let cfg = SounderConfig::default();
        assert_eq!(cfg.n_samples(), 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn single_impulse_lands_in_its_bin() {
        let cfg = SounderConfig::default();
        let pdp = compute_pdp(&[path(3.0 * cfg.sample_interval, -90.0)], &omni(), &cfg);
        for (j, s) in pdp.samples.iter().enumerate() {
            if j == 3 {
                assert!((s - (20.0 - 90.0)).abs() < 1e-9);
            } else {
                assert_eq!(*s, FLOOR_DBM);
            }
        }
    }

    #[test]
    fn two_equal_paths_in_one_bin_add_3db() {
        let cfg = SounderConfig::default();
        let one = compute_pdp(&[path(50e-9, -80.0)], &omni(), &cfg);
        let two = compute_pdp(&[path(50e-9, -80.0), path(51e-9, -80.0)], &omni(), &cfg);
        assert!((two.samples[5] - one.samples[5] - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn power_above_cap_is_clipped() {
        let cfg = SounderConfig::default();
        let pdp = compute_pdp(&[path(20e-9, 40.0)], &omni(), &cfg);
        assert_eq!(pdp.samples[2], 30.0);
    }

    #[test]
    fn late_paths_are_dropped_and_counted() {
        let cfg = SounderConfig::default();
        let pdp = compute_pdp(
            &[path(100e-9, -80.0), path(640e-9, -80.0), path(636e-9, -80.0)],
            &omni(),
            &cfg,
        );
        assert_eq!(pdp.dropped_paths, 2);
        assert!(pdp.samples[10] > FLOOR_DBM);
    }

    #[test]
    fn empty_path_list_gives_floor() {
        let cfg = SounderConfig::default();
        assert_eq!(compute_pdp(&[], &omni(), &cfg), PowerDelayProfile::floor(64));
    }

    #[test]
    fn beam_gain_sectors() {
        let cb = Codebook::sectors(8).unwrap();
        let b = cb.beams[2]; // boresight π/2
        assert_eq!(b.gain_db(TAU / 4.0), 0.0);
        assert_eq!(b.gain_db(TAU / 4.0 + 0.3), 0.0);
        assert_eq!(b.gain_db(TAU / 4.0 + 0.5), -20.0);
        assert_eq!(cb.beams[0].gain_db(TAU - 0.1), 0.0);
        assert!(Codebook::uniform(0, 1.0, 0.0, -20.0).is_err());
        assert!(Codebook::uniform(4, 1.0, -20.0, 0.0).is_err());
    }

    #[test]
    fn shadowing_edge_cases() {
        let cfg = SounderConfig::default();
        let pdp = compute_pdp(&[path(30e-9, -85.0), path(90e-9, -95.0)], &omni(), &cfg);
        let mut rng = seed::rng(1, Domain::Shadowing, &[]);
        let same = add_shadowing(std::slice::from_ref(&pdp), 0.0, cfg.max_rx_power_dbm, &mut rng).unwrap();
        assert_eq!(same[0], pdp);

        let floor = PowerDelayProfile::floor(64);
        let out = add_shadowing(std::slice::from_ref(&floor), 6.0, cfg.max_rx_power_dbm, &mut rng).unwrap();
        assert_eq!(out[0], floor);

        assert!(matches!(
            add_shadowing(std::slice::from_ref(&pdp), -1.0, 30.0, &mut rng),
            Err(Error::Domain(_))
        ));

        let a = add_shadowing(std::slice::from_ref(&pdp), 6.0, 30.0, &mut seed::rng(9, Domain::Shadowing, &[])).unwrap();
        let b = add_shadowing(std::slice::from_ref(&pdp), 6.0, 30.0, &mut seed::rng(9, Domain::Shadowing, &[])).unwrap();
        assert_eq!(a, b);
        // one draw shifts every live bin by the same amount
        let d3 = a[0].samples[3] - pdp.samples[3];
        let d9 = a[0].samples[9] - pdp.samples[9];
        assert!((d3 - d9).abs() < 1e-9);
        assert_eq!(a[0].samples[0], FLOOR_DBM);
    }

    #[test]
    fn binarize_examples() {
        let eta = -100.0;
        let pdp = PowerDelayProfile {
            samples: vec![eta + 1.0, eta - 1.0, eta],
            dropped_paths: 0,
        };
        assert_eq!(binarize(&pdp, eta), vec![1, 0, 1]);
        assert_eq!(binarize(&PowerDelayProfile::floor(5), eta), vec![0; 5]);
    }
}

mod dataset {
    use bfftrack::channel::dataset::*;
    use bfftrack::channel::*;

    use bfftrack::Error;
    use bfftrack::channel::pdp::Codebook;
    use proptest::prelude::*;

    fn small_model() -> ChannelModel {
        ChannelModel::new(
            Environment {
                grid_nx: 9,
                grid_ny: 7,
                ..Environment::default()
            },
            SounderConfig::default(),
            Codebook::sectors(4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn file_round_trip_is_byte_exact() {
        let ds = FingerprintDataset::build(&small_model()).unwrap();
        assert_eq!(ds.records.len(), 63);
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"BFF1");
        let back = FingerprintDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bff");
        ds.write(&p).unwrap();
        assert_eq!(FingerprintDataset::read(&p).unwrap(), ds);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = FingerprintDataset::build(&small_model()).unwrap().to_bytes();
        assert!(matches!(
            FingerprintDataset::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FingerprintDataset::from_bytes(&bad).is_err());
        let mut newer = bytes;
        newer[4] = 9;
        assert!(matches!(FingerprintDataset::from_bytes(&newer), Err(Error::Version(_))));
    }

    #[test]
    fn unwritable_destination_is_an_io_error() {
        let ds = FingerprintDataset::build(&small_model()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        assert!(matches!(ds.write(&blocker.join("d.bff")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(bits in proptest::collection::vec(0u8..2, 0..200)) {
            prop_assert_eq!(unpack_bits(&pack_bits(&bits), bits.len()), bits);
        }
    }
}

mod geometry {
    use bfftrack::channel::geometry::*;

    fn unit() -> Rect {
        Rect::from_corners(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
    }

    #[test]
    fn clipping_measures_interior_length() {
        let r = unit();
        let len = r.clipped_length(Point::new(-1.0, 0.5), Point::new(2.0, 0.5));
        assert!((len - 1.0).abs() < 1e-12);
        assert_eq!(r.clipped_length(Point::new(-1.0, 2.0), Point::new(2.0, 2.0)), 0.0);
        // touching a corner only
        assert!(!r.blocks(Point::new(-1.0, 1.0), Point::new(1.0, -1.0)));
        // ending on a face
        assert!(!r.blocks(Point::new(-1.0, 0.5), Point::new(0.0, 0.5)));
    }

    #[test]
    fn mirror_and_intersect() {
        let r = unit();
        let left = r.faces()[0];
        assert_eq!(left.mirror(Point::new(-2.0, 3.0)), Point::new(2.0, 3.0));
        assert!(left.faces_toward(Point::new(-0.1, 0.5)));
        assert!(!left.faces_toward(Point::new(0.5, 0.5)));
        let hit = left.intersect(Point::new(-1.0, 0.25), Point::new(1.0, 0.75)).unwrap();
        assert!((hit.y - 0.5).abs() < 1e-12 && hit.x == 0.0);
        assert!(left.intersect(Point::new(-1.0, 5.0), Point::new(1.0, 5.0)).is_none());
    }

    #[test]
    fn angles_wrap_into_unit_circle() {
        assert!((Point::new(0.0, -1.0).angle() - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(Point::new(1.0, 0.0).angle(), 0.0);
    }
}

mod fingerprint {
    use bfftrack::channel::fingerprint::*;
    use bfftrack::channel::*;
    use bfftrack::seed::{self, Domain};

    use std::f64::consts::TAU;

    fn model() -> ChannelModel {
        ChannelModel::new(
            Environment {
                grid_nx: 11,
                grid_ny: 11,
                ..Environment::default()
            },
            SounderConfig::default(),
            Codebook::sectors(8).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deep_shadow_is_all_zero() {
        let m = model();
        let fp = m
            .fingerprint(Point::new(-55.0, -65.0), &mut seed::rng(0, Domain::Shadowing, &[]))
            .unwrap();
        assert_eq!(fp.bits.len(), 8 * 64);
        assert_eq!(fp.count_ones(), 0);
    }

    #[test]
    fn omni_beams_in_free_space_give_identical_rows() {
        let mut m = model();
        m.env.obstacles.clear();
        m.codebook = Codebook::uniform(8, TAU, 0.0, -20.0).unwrap();
        let fp = m
            .fingerprint(Point::new(37.0, -12.0), &mut seed::rng(3, Domain::Shadowing, &[]))
            .unwrap();
        assert!(fp.count_ones() > 0);
        for i in 1..8 {
            assert_eq!(fp.row(i), fp.row(0));
        }
    }

    #[test]
    fn fingerprints_are_reproducible() {
        let m = model();
        let g = GridIndex { ix: 7, iy: 3 };
        assert_eq!(m.node_fingerprint(g).unwrap(), m.node_fingerprint(g).unwrap());
        let d = m.build_dataset().unwrap();
        assert_eq!(d.len(), 121);
        assert_eq!(d[m.env.linear_index(g)], m.node_fingerprint(g).unwrap());
    }

    #[test]
    fn simulator_matches_direct_realization_path() {
        let m = model();
        let sim = FingerprintSimulator::new(m.clone()).unwrap();
        let node = 40;
        let g = m.env.grid_index(node);
        let mut rng = seed::rng(m.env.rng_seed, Domain::Realization, &[g.ix as u64, g.iy as u64, 5]);
        let direct = m.fingerprint(m.env.node_position(g), &mut rng).unwrap();
        assert_eq!(sim.realization(node, 5).unwrap(), direct);
        assert!(sim.bits(10_000, 0).is_err());
    }
}

mod invariants {
    use std::f64::consts::TAU;

    use bfftrack::channel::*;
    use proptest::prelude::*;

    fn free_space(tx: Point) -> ChannelModel {
        let env = Environment {
            obstacles: vec![],
            tx_position: tx,
            ..Environment::default()
        };
        ChannelModel::new(env, SounderConfig::default(), Codebook::sectors(8).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn direct_path_lands_in_its_geometric_bin(
            tx in (-100.0f64..99.0, -100.0f64..99.0),
            rx in (-100.0f64..99.0, -100.0f64..99.0),
        ) {
            let (tx, rx) = (Point::new(tx.0, tx.1), Point::new(rx.0, rx.1));
            prop_assume!(tx.distance(rx) > 0.5);
            let m = free_space(tx);
            let bin = (tx.distance(rx) / SPEED_OF_LIGHT / m.sounder.sample_interval).round() as usize;
            for p in m.noise_free_pdps(rx).unwrap() {
                let lit: Vec<usize> = (0..p.samples.len()).filter(|&j| p.samples[j] > FLOOR_DBM).collect();
                if bin < m.n_samples() {
                    prop_assert_eq!(lit, vec![bin]);
                } else {
                    prop_assert!(lit.is_empty());
                    prop_assert_eq!(p.dropped_paths, 1);
                }
            }
        }

        #[test]
        fn raising_the_threshold_only_clears_bits(
            samples in proptest::collection::vec(-210.0f64..40.0, 1..64),
            a in -150.0f64..0.0,
            b in -150.0f64..0.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pdp = PowerDelayProfile { samples, dropped_paths: 0 };
            let low = binarize(&pdp, lo);
            let high = binarize(&pdp, hi);
            prop_assert!(low.iter().zip(&high).all(|(l, h)| h <= l));
        }

        #[test]
        fn exactly_one_sector_holds_the_mainlobe(angle in 0.0f64..TAU, m in 1usize..12) {
            let cb = Codebook::sectors(m).unwrap();
            let main = cb.beams.iter().filter(|b| b.gain_db(angle) == 0.0).count();
            // Angles on a sector edge belong to both neighbours.
            prop_assert!(main == 1 || main == 2);
        }
    }
}
