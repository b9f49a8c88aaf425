use gamecode_core::envelope::{Envelope, EnvelopeOptions, DEFAULT_GRID_SIZE};
use gamecode_core::simulator::substream;
use gamecode_core::strategy::{best_alpha_set, build_adversary, replicate_gstar, solve_equilibrium, solve_on_grid};
use gamecode_core::tradeoff::{
    accept_mass, c_alpha, c_limit_at_zero, error_mass, max_relative_deviation, three_atom_search, OracleTable,
    TradeoffCurve, DEFAULT_ORACLE_GRID,
};
use gamecode_core::{
    AdversaryStrategy, AdversaryUtility, DcUtility, GridSpec, HonestNoiseModel, KernelContext, UtilitySpec,
};
use rand::Rng;

fn uniform(eta: f64) -> KernelContext {
    KernelContext::new(eta, HonestNoiseModel::uniform(1.0).unwrap()).unwrap()
}

fn truncated(eta: f64) -> KernelContext {
    KernelContext::new(eta, HonestNoiseModel::truncated_normal(1.0, 0.5).unwrap()).unwrap()
}

fn tenths() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn scaled_product() -> UtilitySpec {
    UtilitySpec::new(
        AdversaryUtility::ScaledProduct { c: 1.0 },
        DcUtility::Linear { gamma: 0.5 },
        100.0,
    )
    .unwrap()
}

#[test]
fn formula_matches_brute_force_oracle() {
    for eta in [2.0, 2.5, 3.0] {
        for ctx in [uniform(eta), truncated(eta)] {
            let env = Envelope::build(&ctx, DEFAULT_GRID_SIZE).unwrap();
            let table = OracleTable::new(&ctx, DEFAULT_ORACLE_GRID).unwrap();
            let dev = max_relative_deviation(&env, &table, &tenths()).unwrap();
            assert!(dev <= 5e-3, "eta={eta} {:?}: {dev}", ctx.noise().kind());
        }
    }
}

#[test]
fn oracle_never_beats_formula_beyond_grid_error() {
    // The oracle searches a subset of strategies, so it can only fall short.
    let ctx = uniform(2.0);
    let env = Envelope::build(&ctx, DEFAULT_GRID_SIZE).unwrap();
    let table = OracleTable::new(&ctx, 1024).unwrap();
    for a in tenths() {
        let best = table.best(a).unwrap();
        assert!(best.value <= c_alpha(&env, a).unwrap() + 1e-6);
        assert!(best.pa >= a - 1e-12);
    }
}

#[test]
fn inner_atoms_are_never_strictly_optimal() {
    for eta in [2.0, 3.0] {
        for ctx in [uniform(eta), truncated(eta)] {
            let edge = (eta - 1.0) * ctx.delta();
            let top = (eta + 1.0) * ctx.delta();
            let mut zs: Vec<f64> = (0..256).map(|i| edge * i as f64 / 256.0).collect();
            zs.extend((0..=512).map(|i| edge + (top - edge) * i as f64 / 512.0));
            let table = OracleTable::from_points(&ctx, zs).unwrap();
            let outer = table.filtered(|z| z >= edge);
            for a in tenths() {
                let full = table.best(a).unwrap().value;
                let restricted = outer.best(a).unwrap().value;
                assert!(restricted >= full - 1e-12 * full.max(1.0), "eta={eta} alpha={a}");
            }
        }
    }
}

#[test]
fn three_atoms_never_beat_two() {
    let ctx = uniform(2.0);
    let table = OracleTable::new(&ctx, 256).unwrap();
    let mut rng = substream(9, 0);
    for a in [0.3, 0.6, 0.9] {
        let two = table.best(a).unwrap().value;
        let three = three_atom_search(&table, a, 20, 2000, &mut rng).unwrap();
        assert!(three <= two + 1e-12, "alpha={a}: {three} > {two}");
    }
}

#[test]
fn alpha_times_c_is_concave() {
    let env = Envelope::build(&truncated(2.5), DEFAULT_GRID_SIZE).unwrap();
    let mut rng = substream(2, 2);
    let g = |a: f64| a * c_alpha(&env, a).unwrap();
    for _ in 0..100 {
        let mut t: [f64; 3] = core::array::from_fn(|_| rng.random_range(1e-3..=1.0));
        t.sort_by(f64::total_cmp);
        let [x, y, z] = t;
        if z - x < 1e-9 {
            continue;
        }
        let line = g(x) + (g(z) - g(x)) * (y - x) / (z - x);
        assert!(g(y) >= line - 1e-12);
    }
}

#[test]
fn small_alpha_limit() {
    let env = Envelope::build(&uniform(2.0), DEFAULT_GRID_SIZE).unwrap();
    // Secant over the first grid cell: off by about |h''(0)| / (2 * 4096 * 4).
    assert!((c_limit_at_zero(&env) - 4.0).abs() < 2e-3);
    let c = c_alpha(&env, 1e-3).unwrap();
    assert!(c < 4.0 && c > 3.99);
}

#[test]
fn curve_is_independent_of_node_count_and_rejects_tiny_alpha() {
    let ctx = uniform(2.0);
    let curve = TradeoffCurve::build(&ctx, &GridSpec::default_alpha(), EnvelopeOptions::default()).unwrap();
    assert_eq!(curve.alphas.len(), 1000);
    assert!(TradeoffCurve::build(&ctx, &GridSpec::values([5e-4, 0.5]), EnvelopeOptions::default()).is_err());
    assert!(TradeoffCurve::build(&ctx, &GridSpec::values(Vec::new()), EnvelopeOptions::default()).is_err());
}

fn achievability(ctx: &KernelContext) -> (usize, usize) {
    let env = Envelope::build(ctx, DEFAULT_GRID_SIZE).unwrap();
    let (mut touch, mut chord) = (0, 0);
    for m in 15..=64 {
        let alpha = m as f64 / 64.0;
        let adv = build_adversary(&env, alpha).unwrap();
        let pa = adv.achieved_pa(ctx).unwrap();
        let mse = adv.achieved_mse(ctx).unwrap();
        assert!((pa - alpha).abs() < 1e-8, "alpha={alpha} pa={pa}");
        assert!((mse - c_alpha(&env, alpha).unwrap()).abs() < 1e-6, "alpha={alpha}");
        let wsum: f64 = adv.atoms.iter().map(|a| a.1).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        let eta = ctx.eta();
        let d = ctx.delta();
        for &(z, w) in &adv.atoms {
            assert!(w > 0.0);
            assert!(z.abs() >= (eta - 1.0) * d - 1e-9 && z.abs() <= (eta + 1.0) * d + 1e-9);
        }
        if adv.is_touch() {
            touch += 1;
        } else {
            chord += 1;
        }
    }
    (touch, chord)
}

#[test]
fn built_adversary_achieves_alpha_and_c() {
    let (touch, chord) = achievability(&uniform(2.0));
    assert!(touch > 0 && chord > 0, "touch {touch}, chord {chord}");
    achievability(&uniform(3.0));
    achievability(&truncated(2.5));
}

#[test]
fn chord_adversary_matches_hand_derivation() {
    let env = Envelope::build(&uniform(2.0), DEFAULT_GRID_SIZE).unwrap();
    let adv = build_adversary(&env, 0.9).unwrap();
    assert_eq!(adv.atoms.len(), 4);
    let q1 = adv.touch_points[0];
    assert!((q1 - 11.0 / 14.0).abs() < 1e-4);
    assert_eq!(adv.touch_points[1], 1.0);
    let b1 = (1.0 - 0.9) / (2.0 * (1.0 - q1));
    let b2 = (0.9 - q1) / (2.0 * (1.0 - q1));
    assert!((adv.atoms[0].1 - b1).abs() < 1e-12 && (adv.atoms[1].1 - b2).abs() < 1e-12);
    // k^{-1}(q) = 3 - 2q for uniform noise, delta = 1, eta = 2.
    assert!((adv.atoms[2].0 - (3.0 - 2.0 * q1)).abs() < 1e-9);
    assert!((adv.atoms[3].0 - 1.0).abs() < 1e-9);
}

/// Exact (PA, MSE) of one adversary node drawing from `atoms`.
fn exact_stats(ctx: &KernelContext, atoms: &[(f64, f64)]) -> (f64, f64) {
    let pa: f64 = atoms.iter().map(|&(z, w)| w * accept_mass(ctx, z).unwrap()).sum();
    let num: f64 = atoms.iter().map(|&(z, w)| w * error_mass(ctx, z).unwrap()).sum();
    (num / (4.0 * pa), pa)
}

#[test]
fn best_response_dominates_random_atomic_strategies() {
    let ctx = uniform(2.0);
    let env = Envelope::build(&ctx, DEFAULT_GRID_SIZE).unwrap();
    let grid = GridSpec::range(1e-4, 1.0, 1e-4);
    let specs = [
        scaled_product(),
        UtilitySpec::new(
            AdversaryUtility::WeightedSum { a: 1.0, b: 1.0 },
            DcUtility::Linear { gamma: 0.5 },
            100.0,
        )
        .unwrap(),
    ];
    for spec in specs {
        let best = best_alpha_set(&env, &spec, &grid).unwrap();
        let a_star = best[0];
        let ceiling = spec.adversary.eval(c_alpha(&env, a_star).unwrap(), a_star);
        let mut rng = substream(77, 0);
        let mut tested = 0;
        while tested < 1000 {
            let n = rng.random_range(1..=4);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let atoms: Vec<(f64, f64)> = raw.iter().map(|w| (rng.random_range(-3.2..3.2), w / total)).collect();
            let (mse, pa) = exact_stats(&ctx, &atoms);
            // Below the grid resolution the grid argmax is not a valid bound.
            if pa < 1e-4 {
                continue;
            }
            tested += 1;
            let u = spec.adversary.eval(mse, pa);
            assert!(u <= ceiling + 1e-6, "{atoms:?}: {u} > {ceiling}");
            assert!(mse <= c_alpha(&env, pa.min(1.0)).unwrap() + 1e-6);
        }
    }
}

#[test]
fn scaled_product_best_alpha_is_unique() {
    let env = Envelope::build(&uniform(2.0), DEFAULT_GRID_SIZE).unwrap();
    let set = best_alpha_set(&env, &scaled_product(), &GridSpec::default_alpha()).unwrap();
    assert_eq!(set.len(), 1);
    assert!((set[0] - 0.714).abs() < 1e-12);
}

#[test]
fn pa_dominated_utility_picks_full_acceptance() {
    let env = Envelope::build(&uniform(2.0), DEFAULT_GRID_SIZE).unwrap();
    let spec = UtilitySpec::new(
        AdversaryUtility::WeightedSum { a: 1e-6, b: 1.0 },
        DcUtility::Linear { gamma: 0.5 },
        100.0,
    )
    .unwrap();
    assert_eq!(best_alpha_set(&env, &spec, &GridSpec::default_alpha()).unwrap(), [1.0]);
}

#[test]
fn single_eta_grid() {
    let r = solve_on_grid(
        &uniform(2.0),
        &GridSpec::values([2.0]),
        &scaled_product(),
        &GridSpec::default_alpha(),
        EnvelopeOptions::default(),
    )
    .unwrap();
    assert_eq!(r.eta_star, 2.0);
    assert!(!r.on_grid_boundary);
    assert!(solve_equilibrium(
        &[],
        &scaled_product(),
        &GridSpec::default_alpha(),
        EnvelopeOptions::default()
    )
    .is_err());
}

#[test]
fn acceptance_only_dc_golden() {
    // Golden values from a grid search over eta in [2, 8] step 0.25. The
    // adversary's best response reaches alpha = 1 first at eta = 6; past that
    // the 1e-9 MSE penalty breaks the tie toward the smaller eta.
    let spec = UtilitySpec::new(
        AdversaryUtility::ScaledProduct { c: 1.0 },
        DcUtility::Linear { gamma: 1e-9 },
        100.0,
    )
    .unwrap();
    let r = solve_on_grid(
        &uniform(2.0),
        &GridSpec::range(2.0, 8.0, 0.25),
        &spec,
        &GridSpec::default_alpha(),
        EnvelopeOptions::default(),
    )
    .unwrap();
    assert_eq!(r.eta_star, 6.0);
    assert_eq!(r.equilibrium.pa, 1.0);
    assert!((r.equilibrium.mse - 19.0 / 3.0).abs() < 1e-9);
    assert!(r
        .per_eta
        .iter()
        .filter(|row| row.eta >= 6.0)
        .all(|row| row.best_alphas == [1.0]));
}

#[test]
fn eta_refinement_moves_optimum_by_at_most_one_coarse_step() {
    let base = uniform(2.0);
    let specs = [
        UtilitySpec::new(
            AdversaryUtility::ScaledProduct { c: 1.0 },
            DcUtility::Linear { gamma: 1e-9 },
            100.0,
        )
        .unwrap(),
        UtilitySpec::new(
            AdversaryUtility::ScaledProduct { c: 1.0 },
            DcUtility::Exponential { s: 2.0 },
            100.0,
        )
        .unwrap(),
        UtilitySpec::new(
            AdversaryUtility::WeightedSum { a: 0.05, b: 1.0 },
            DcUtility::Linear { gamma: 0.1 },
            100.0,
        )
        .unwrap(),
    ];
    for spec in specs {
        let coarse = 0.2;
        let solve = |step: f64| {
            solve_on_grid(
                &base,
                &GridSpec::range(2.0, 8.0, step),
                &spec,
                &GridSpec::default_alpha(),
                EnvelopeOptions::default(),
            )
            .unwrap()
            .eta_star
        };
        let (a, b) = (solve(coarse), solve(coarse / 2.0));
        assert!((a - b).abs() <= coarse + 1e-12, "{spec:?}: {a} vs {b}");
    }
}

#[test]
fn reports_are_deterministic() {
    let run = || {
        solve_on_grid(
            &truncated(2.0),
            &GridSpec::range(2.0, 4.0, 0.25),
            &scaled_product(),
            &GridSpec::default_alpha(),
            EnvelopeOptions::default(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    for row in &a.per_eta {
        assert!(row.dc_guaranteed_utility <= a.dc_utility_at_eq);
    }
}

#[test]
fn replicated_strategy_shares_one_draw() {
    let env = Envelope::build(&uniform(2.0), DEFAULT_GRID_SIZE).unwrap();
    let adv = build_adversary(&env, 0.9).unwrap();
    assert!(replicate_gstar(&adv, 1).is_err());
    let g = replicate_gstar(&adv, 5).unwrap();
    assert_eq!(g.arity(), 4);
    let mut rng = substream(0, 0);
    let mut buf = [0.0; 4];
    for _ in 0..1000 {
        g.draw(&mut rng, 0.0, &mut buf);
        assert!(buf.iter().all(|&x| x == buf[0]));
    }
    let AdversaryStrategy::Replicated { noise, arity } = replicate_gstar(&adv, 2).unwrap() else {
        panic!("expected a replicated strategy")
    };
    assert_eq!(arity, 1);
    assert_eq!(noise.atoms(), adv.atoms.as_slice());
}
