use gamecode_core::envelope::{Envelope, DEFAULT_GRID_SIZE};
use gamecode_core::simulator::{
    accept, check_scenario_equivalence, condition_noncancelling, dominance_check, estimate, run_monte_carlo, substream,
    IidAtomic, IidUniform, ScenarioCheck, SimulationResult,
};
use gamecode_core::strategy::{best_alpha_set, build_adversary, replicate_gstar};
use gamecode_core::{
    AdversaryStrategy, AdversaryUtility, DcUtility, DiscreteNoise, GameConfig, GridSpec, HonestNoiseModel,
    KernelContext, UtilitySpec,
};
use proptest::prelude::*;
use rand::Rng;

fn uniform_env(eta: f64) -> Envelope {
    let ctx = KernelContext::new(eta, HonestNoiseModel::uniform(1.0).unwrap()).unwrap();
    Envelope::build(&ctx, DEFAULT_GRID_SIZE).unwrap()
}

fn config(n: usize, trials: u64, seed: u64) -> GameConfig {
    GameConfig::new(n, 2.0, HonestNoiseModel::uniform(1.0).unwrap(), trials, seed).unwrap()
}

fn within(x: f64, target: f64, se: f64) -> bool {
    (x - target).abs() <= 4.0 * se
}

fn overlap(a: &SimulationResult, b: &SimulationResult) -> bool {
    let pa = (a.pa_hat - b.pa_hat).abs() <= 4.0 * a.pa_stderr.hypot(b.pa_stderr);
    let (ma, mb) = (a.mse_hat.unwrap(), b.mse_hat.unwrap());
    let mse = (ma - mb).abs() <= 4.0 * a.mse_stderr.unwrap().hypot(b.mse_stderr.unwrap());
    pa && mse
}

#[test]
fn error_decomposition_on_random_vectors() {
    let mut rng = substream(1, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..10);
        let u = rng.random_range(-1000.0..1000.0);
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = noise.iter().map(|x| u + x).collect();
        let lo = noise.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = noise.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((estimate(&y) - u - 0.5 * (lo + hi)).abs() < 1e-9);
        assert_eq!(
            accept(&y, 2.0, 1.0),
            accept(&noise, 2.0, 1.0) || (hi - lo - 2.0).abs() < 1e-9
        );
    }
}

#[test]
fn optimum_at_half_acceptance_matches_closed_form() {
    let adv = build_adversary(&uniform_env(2.0), 0.5).unwrap();
    let g = replicate_gstar(&adv, 2).unwrap();
    let r = run_monte_carlo(&config(2, 1_000_000, 2024), &g).unwrap();
    assert!(within(r.pa_hat, 0.5, (0.25f64 / 1e6).sqrt()), "{r:?}");
    assert!(within(r.mse_hat.unwrap(), 19.0 / 12.0, r.mse_stderr.unwrap()), "{r:?}");
    assert_eq!(r.accepted_count, (r.pa_hat * r.trials as f64).round() as u64);
}

#[test]
fn silent_adversary_is_always_accepted() {
    let g = AdversaryStrategy::replicated(DiscreteNoise::point(0.0), 1);
    let r = run_monte_carlo(&config(2, 400_000, 5), &g).unwrap();
    assert_eq!(r.pa_hat, 1.0);
    assert!(within(r.mse_hat.unwrap(), 1.0 / 12.0, r.mse_stderr.unwrap()));
}

#[test]
fn never_accepted_strategy_flags_mse() {
    let g = AdversaryStrategy::replicated(DiscreteNoise::point(10.0), 1);
    let r = run_monte_carlo(&config(2, 1000, 5), &g).unwrap();
    assert_eq!(r.accepted_count, 0);
    assert_eq!(r.mse_hat, None);
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let adv = build_adversary(&uniform_env(2.0), 0.9).unwrap();
    let g = replicate_gstar(&adv, 4).unwrap();
    let cfg = config(4, 300_000, 99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_monte_carlo(&cfg, &g).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn replicated_results_are_identical_across_node_counts_for_one_seed() {
    // One shared adversarial draw per trial: the extra nodes change nothing
    // but the buffer they are copied into.
    let adv = build_adversary(&uniform_env(2.0), 0.7).unwrap();
    let base = run_monte_carlo(&config(2, 100_000, 8), &replicate_gstar(&adv, 2).unwrap()).unwrap();
    for n in [3, 5, 8] {
        let r = run_monte_carlo(&config(n, 100_000, 8), &replicate_gstar(&adv, n).unwrap()).unwrap();
        assert_eq!(r, base);
    }
}

#[test]
fn node_count_invariance_with_independent_seeds() {
    let adv = build_adversary(&uniform_env(2.0), 0.9).unwrap();
    let results: Vec<SimulationResult> = [2usize, 3, 5, 8]
        .iter()
        .map(|&n| {
            run_monte_carlo(
                &config(n, 1_000_000, 100 + n as u64),
                &replicate_gstar(&adv, n).unwrap(),
            )
            .unwrap()
        })
        .collect();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            assert!(
                overlap(&results[i], &results[j]),
                "{:?} vs {:?}",
                results[i],
                results[j]
            );
        }
    }
}

#[test]
fn rejects_mismatched_or_u_dependent_strategies() {
    let g = AdversaryStrategy::replicated(DiscreteNoise::point(0.0), 2);
    assert!(run_monte_carlo(&config(2, 10, 0), &g).is_err());
    #[derive(Debug)]
    struct Peeks;
    impl gamecode_core::simulator::JointSampler for Peeks {
        fn arity(&self) -> usize {
            1
        }
        fn u_dependent(&self) -> bool {
            true
        }
        fn draw(&self, _: &mut dyn rand::RngCore, u: f64, out: &mut [f64]) {
            out[0] = -u;
        }
    }
    let peek = AdversaryStrategy::custom(Peeks);
    assert!(run_monte_carlo(&config(2, 10, 0), &peek).is_err());
    let mut cfg = config(2, 10, 0);
    cfg.exploratory = true;
    assert!(run_monte_carlo(&cfg, &peek).is_ok());
    assert!(GameConfig::new(1, 2.0, HonestNoiseModel::uniform(1.0).unwrap(), 10, 0).is_err());
    assert!(GameConfig::new(2, 1.5, HonestNoiseModel::uniform(1.0).unwrap(), 10, 0).is_err());
    assert!(GameConfig::new(2, 2.0, HonestNoiseModel::uniform(1.0).unwrap(), 0, 0).is_err());
}

#[test]
fn scenario_reductions_hold_on_every_realization() {
    let (eta, delta) = (2.0, 1.0);
    let honest = HonestNoiseModel::uniform(delta).unwrap();
    let mut rng = substream(31, 0);
    let mut checked = 0;
    while checked < 100_000 {
        let k = rng.random_range(1..=7);
        let centre = rng.random_range(-4.0..4.0);
        let adv: Vec<f64> = (0..k)
            .map(|_| centre + rng.random_range(-0.5..=0.5) * eta * delta)
            .collect();
        let h = honest.sample_one(&mut rng);
        match check_scenario_equivalence(h, &adv, eta, delta).unwrap() {
            ScenarioCheck::Checked(o) => {
                assert!(o.holds(), "h={h} adv={adv:?}: {o:?}");
                checked += 1;
            }
            ScenarioCheck::Skipped { .. } => unreachable!("clustered draws satisfy the precondition"),
        }
    }
}

#[test]
fn conditioning_keeps_spread_and_raises_acceptance() {
    let (eta, delta) = (2.0, 1.0);
    let raw = AdversaryStrategy::custom(IidUniform {
        half_width: 2.0 * eta * delta,
        arity: 2,
    });
    let cond = condition_noncancelling(&raw, eta, delta, &mut substream(4, 0)).unwrap();
    let mut rng = substream(4, 1);
    let mut buf = [0.0; 2];
    for _ in 0..100_000 {
        cond.draw(&mut rng, 0.0, &mut buf);
        assert!((buf[0] - buf[1]).abs() <= eta * delta);
    }
    let cfg = config(3, 400_000, 12);
    let before = run_monte_carlo(&cfg, &raw).unwrap();
    let after = run_monte_carlo(&cfg.with_seed(13), &cond).unwrap();
    assert!(after.pa_hat >= before.pa_hat - 4.0 * before.pa_stderr.hypot(after.pa_stderr));

    let replicated = AdversaryStrategy::replicated(DiscreteNoise::point(1.0), 2);
    assert!(matches!(
        condition_noncancelling(&replicated, eta, delta, &mut rng).unwrap(),
        AdversaryStrategy::Replicated { .. }
    ));
    let hopeless = AdversaryStrategy::custom(IidUniform {
        half_width: 1e6,
        arity: 6,
    });
    assert!(condition_noncancelling(&hopeless, eta, delta, &mut rng).is_err());
}

fn random_atoms<R: Rng>(rng: &mut R) -> DiscreteNoise {
    let n = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut atoms: Vec<(f64, f64)> = raw.iter().map(|w| (rng.random_range(-3.2..3.2), w / total)).collect();
    let drift: f64 = atoms.iter().map(|a| a.1).sum::<f64>() - 1.0;
    atoms[0].1 -= drift;
    DiscreteNoise::new(atoms).unwrap()
}

#[test]
fn optimum_dominates_sampled_strategies() {
    let env = uniform_env(2.0);
    let cfg = config(3, 100_000, 500);
    let families = [
        AdversaryUtility::ScaledProduct { c: 1.0 },
        AdversaryUtility::WeightedSum { a: 1.0, b: 1.0 },
    ];
    for adversary in families {
        let spec = UtilitySpec::new(adversary, DcUtility::Linear { gamma: 0.5 }, 100.0).unwrap();
        let a_star = best_alpha_set(&env, &spec, &GridSpec::default_alpha()).unwrap()[0];
        let optimum = replicate_gstar(&build_adversary(&env, a_star).unwrap(), 3).unwrap();
        let mut rng = substream(600, 0);
        let mut candidates: Vec<AdversaryStrategy> = (0..40)
            .map(|_| AdversaryStrategy::replicated(random_atoms(&mut rng), 2))
            .collect();
        for _ in 0..4 {
            let alpha = rng.random_range(0.1..1.0);
            let f = build_adversary(&env, alpha).unwrap();
            candidates.push(AdversaryStrategy::custom(IidAtomic {
                noise: f.noise(),
                arity: 2,
            }));
        }
        candidates.push(optimum.clone());
        let report = dominance_check(&cfg, &spec, &candidates, &optimum).unwrap();
        assert!(report.violations.is_empty(), "{adversary:?}: {:?}", report.violations);
        assert_eq!(report.candidates.len(), candidates.len());
    }
}

proptest! {
    #[test]
    fn accept_is_translation_invariant(u in -1e3f64..1e3, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let spread_ok = (a - b).abs() <= 2.0;
        prop_assert_eq!(accept(&[a, b], 2.0, 1.0), spread_ok);
        let shifted = accept(&[u + a, u + b], 2.0, 1.0);
        // Rounding at the boundary aside, shifting by u changes nothing.
        if ((a - b).abs() - 2.0).abs() > 1e-9 {
            prop_assert_eq!(shifted, spread_ok);
        }
    }
}
