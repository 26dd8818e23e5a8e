use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use voxevo_core::checkpoint::Checkpoint;
use voxevo_core::evolution::{Individual, MutationKind};
use voxevo_core::experiments::convergence_metrics;
use voxevo_core::sensing::GLOBAL_OBS_LEN;
use voxevo_core::{
    ControllerGenome, ControllerKind, MorphologyGenome, ObservationConfig, PhysicsConfig, SimWorld, Vec2,
};

fn body(seed: u64) -> MorphologyGenome {
    MorphologyGenome::random(&mut ChaCha8Rng::seed_from_u64(seed), 1000).unwrap()
}

fn kind(modular: bool) -> ControllerKind {
    if modular {
        ControllerKind::Modular
    } else {
        ControllerKind::Global
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn rigid_translation_commutes_with_stepping(seed in any::<u64>(), dx in -50.0..50.0f64, dy in 0.0..5.0f64) {
        let g = body(seed);
        let mut cfg = PhysicsConfig::default();
        cfg.contact.enabled = false;
        let mut a = SimWorld::build(&g, &cfg).unwrap();
        let mut b = a.clone();
        for m in &mut b.masses {
            m.position = m.position + Vec2::new(dx, dy);
        }
        for _ in 0..30 {
            a.step_env().unwrap();
            b.step_env().unwrap();
        }
        for (p, q) in a.masses.iter().zip(&b.masses) {
            prop_assert!((q.position.x - p.position.x - dx).abs() < 1e-9);
            prop_assert!((q.position.y - p.position.y - dy).abs() < 1e-9);
        }
    }

    #[test]
    fn actuation_scale_stays_in_range(a in 0.0..=1.0f64) {
        let cfg = PhysicsConfig::default();
        let s = cfg.actuation_scale(a);
        prop_assert!((cfg.actuation_min..=cfg.actuation_max).contains(&s));
    }

    #[test]
    fn out_of_range_actions_are_rejected(seed in any::<u64>(), a in prop_oneof![-10.0..-1e-9f64, 1.0 + 1e-9..10.0f64]) {
        let g = body(seed);
        let mut w = SimWorld::build(&g, &PhysicsConfig::default()).unwrap();
        let cell = g.actuator_cells().next().unwrap();
        prop_assert!(w.apply_actuation([(cell.raster(), a)]).is_err());
        prop_assert!(w.apply_actuation([(cell.raster(), f64::NAN)]).is_err());
    }

    #[test]
    fn mutation_yields_valid_distinct_bodies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parent = MorphologyGenome::random(&mut rng, 1000).unwrap();
        prop_assert!(parent.is_valid());
        let child = parent.mutate(&mut rng, 1000).unwrap();
        prop_assert!(child.is_valid());
        prop_assert_ne!(child, parent);
    }

    #[test]
    fn controller_outputs_lie_strictly_inside_unit_interval(seed in any::<u64>(), modular in any::<bool>(), steps in 0u64..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = MorphologyGenome::random(&mut rng, 1000).unwrap();
        let obs = ObservationConfig::default();
        let ctrl = ControllerGenome::init(kind(modular), &obs, &mut rng);
        let mut w = SimWorld::build(&g, &PhysicsConfig::default()).unwrap();
        for _ in 0..steps {
            w.step_env().unwrap();
        }
        let actions = ctrl.act(&g, &w, steps, &obs);
        prop_assert_eq!(actions.len(), g.actuator_count());
        for v in actions.values() {
            prop_assert!(v > 0.0 && v < 1.0);
        }
        // Large weights saturate the sigmoid to exactly 0 or 1 in f64,
        // which actuation still accepts.
        let wild = ctrl.mutate(&mut rng, 1.0).act(&g, &w, steps, &obs);
        prop_assert!(wild.values().all(|v| (0.0..=1.0).contains(&v)));
        prop_assert!(w.clone().apply_actuation(wild.as_raster()).is_ok());
        prop_assert_eq!(voxevo_core::sensing::observe_global(&w, &g, steps, &obs).len(), GLOBAL_OBS_LEN);
    }

    #[test]
    fn genome_encodings_round_trip(seed in any::<u64>(), modular in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = MorphologyGenome::random(&mut rng, 1000).unwrap();
        prop_assert_eq!(MorphologyGenome::from_compact(&g.to_compact()).unwrap(), g);
        prop_assert_eq!(g.to_string().parse::<MorphologyGenome>().unwrap(), g);
        let c = ControllerGenome::init(kind(modular), &ObservationConfig::default(), &mut rng);
        let bytes = c.to_bytes();
        let (back, used) = ControllerGenome::from_bytes(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, c);
    }

    #[test]
    fn convergence_generations_are_monotone(steps in prop::collection::vec(0.0..3.0f64, 1..80), start in -20.0..20.0f64) {
        let series: Vec<f64> = steps
            .iter()
            .scan(start, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let m = convergence_metrics(&series).unwrap();
        prop_assert!(m.generations.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(m.generations.iter().all(|&g| g < series.len()));
        prop_assert_eq!(m.shifted, *series.last().unwrap() <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), generation in 0u64..1000, n in 1usize..5, text in "[a-z =\n]{0,40}") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = ObservationConfig::default();
        let mut make = |id: u64| Individual {
            morphology: MorphologyGenome::random(&mut rng, 1000).unwrap(),
            controller: ControllerGenome::init(ControllerKind::Modular, &obs, &mut rng),
            age: id as u32,
            fitness: Some(id as f64 * 0.25 - 1.0),
            id,
            parent_id: id.checked_sub(1),
            mutation_kind: if id == 0 { MutationKind::Fresh } else { MutationKind::Brain },
            parent_fitness_at_birth: id.checked_sub(1).map(|p| p as f64),
            born: id,
        };
        let population: Vec<Individual> = (0..n as u64).map(&mut make).collect();
        let ck = Checkpoint {
            seed,
            generation,
            config_text: text,
            champion: population[0].clone(),
            population,
        };
        let bytes = ck.to_bytes();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        let mut bad = bytes.clone();
        let i = bad.len() / 3;
        bad[i] ^= 0x10;
        prop_assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
