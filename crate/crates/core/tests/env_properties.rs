use echelon_core::env::{pipeline_total, RawAction};
use echelon_core::{ChainConfig, CostCase, Env, EnvState, Items};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_raw(rng: &mut ChaCha8Rng) -> RawAction {
    RawAction {
        q_factory: rng.gen_range(-5.0..40.0),
        q_warehouse: rng.gen_range(-5.0..40.0),
        rp_next: rng.gen_range(-2.0..9.0),
    }
}

fn in_flight(s: &EnvState) -> [Items; 3] {
    [
        pipeline_total(&s.pipeline_production),
        pipeline_total(&s.pipeline_fw),
        pipeline_total(&s.pipeline_wr),
    ]
}

/// Runs `steps` random clipped actions and checks every per-step invariant.
fn random_walk(case: CostCase, seed: u64, steps: usize) {
    let cfg = ChainConfig::for_case(case);
    let cap = cfg.capacity;
    let mut env = Env::new(cfg.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    env.reset();
    // Running totals since the last reset; the state starts with nothing in flight.
    let mut totals = [0u64; 6];
    let mut start = env.state().clone();
    for i in 0..steps {
        if i % 200 == 0 {
            start = env.reset();
            totals = [0; 6];
        }
        let before = env.state().clone();
        let clipped = env.clip(random_raw(&mut rng));
        assert!(env.action_box().contains(&clipped.action));
        let out = env.step(clipped.action);
        let s = &out.next_state;
        let f = out.flows;

        assert!(s.inv_factory <= cap && s.inv_warehouse <= cap && s.inv_retailer <= cap, "{s:?}");
        assert!((cfg.rp_min..=cfg.rp_max).contains(&s.rp));
        assert_eq!(s.rp, clipped.action.rp_next);

        let want = -(cfg.h_factory * s.inv_factory as f64
            + cfg.h_warehouse * s.inv_warehouse as f64
            + cfg.stockout_cost * out.stockout_units as f64);
        assert_eq!(out.reward, want);
        assert!(out.reward <= 0.0);
        assert_eq!(
            out.reward == 0.0,
            s.inv_factory == 0 && s.inv_warehouse == 0 && out.stockout_units == 0
        );
        assert_eq!(out.stockout_units, f.demand - f.served);

        assert_eq!(
            s.inv_factory + f.shipped_to_warehouse + f.discarded_factory,
            before.inv_factory + f.received_factory
        );
        assert_eq!(
            s.inv_warehouse + f.shipped_to_retailer + f.discarded_warehouse,
            before.inv_warehouse + f.received_warehouse
        );
        assert_eq!(
            s.inv_retailer + f.served + f.discarded_retailer,
            before.inv_retailer + f.received_retailer
        );
        assert_eq!(out.shipped_to_retailer, f.shipped_to_retailer);
        assert_eq!(out.shipped_to_warehouse, f.shipped_to_warehouse);
        assert_eq!(f.production_started, clipped.action.q_factory);

        for (t, v) in totals.iter_mut().zip([
            f.production_started,
            f.received_factory,
            f.shipped_to_warehouse,
            f.received_warehouse,
            f.shipped_to_retailer,
            f.received_retailer,
        ]) {
            *t += u64::from(v);
        }
        let flight = in_flight(s);
        let start_flight = in_flight(&start);
        // Whatever entered a link either arrived or is still on it.
        for (k, (sent, got)) in [(0, 1), (2, 3), (4, 5)].into_iter().enumerate() {
            assert_eq!(
                totals[sent] + u64::from(start_flight[k]),
                totals[got] + u64::from(flight[k]),
                "link {k} at step {i}"
            );
            if flight[k] == 0 && start_flight[k] == 0 {
                assert_eq!(totals[sent], totals[got]);
            }
        }
        assert_eq!(s.t, before.t + 1);
    }
}

#[test]
fn hundred_thousand_random_steps_case_one() {
    random_walk(CostCase::One, 1, 100_000);
}

#[test]
fn hundred_thousand_random_steps_case_two() {
    random_walk(CostCase::Two, 2, 100_000);
}

#[test]
fn drained_pipelines_conserve_items() {
    let cfg = ChainConfig::for_case(CostCase::One);
    let mut env = Env::new(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    env.reset();
    let start = env.state().clone();
    let (mut shipped_w, mut got_w, mut shipped_r, mut got_r) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..50 {
        let a = env.clip(random_raw(&mut rng)).action;
        let f = env.step(a).flows;
        shipped_w += u64::from(f.shipped_to_warehouse);
        got_w += u64::from(f.received_warehouse);
        shipped_r += u64::from(f.shipped_to_retailer);
        got_r += u64::from(f.received_retailer);
    }
    // Stop producing and ordering until nothing is in flight anywhere.
    let mut drained = false;
    for _ in 0..500 {
        let s = env.state();
        if in_flight(s) == [0, 0, 0] && s.backlog_f == 0 && s.backlog_w == 0 && s.retailer_order == 0 {
            drained = true;
            break;
        }
        let a = env.clip(RawAction::default()).action;
        let f = env.step(a).flows;
        shipped_w += u64::from(f.shipped_to_warehouse);
        got_w += u64::from(f.received_warehouse);
        shipped_r += u64::from(f.shipped_to_retailer);
        got_r += u64::from(f.received_retailer);
    }
    assert!(drained, "pipelines never emptied: {:?}", env.state());
    assert_eq!(in_flight(&start), [0, 0, 0]);
    assert_eq!(shipped_w, got_w);
    assert_eq!(shipped_r, got_r);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let cfg = ChainConfig::for_case(CostCase::Two);
    let run = |seed: u64| {
        let mut env = Env::new(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = vec![env.reset()];
        for _ in 0..2000 {
            let a = env.clip(random_raw(&mut rng)).action;
            trace.push(env.step(a).next_state);
        }
        trace
    };
    assert_eq!(run(17), run(17));
    assert_ne!(run(17), run(18));
}

#[test]
fn demand_is_two_and_orders_centre_on_ten() {
    let cfg = ChainConfig::for_case(CostCase::One);
    let mut env = Env::new(cfg, 3).unwrap();
    env.reset();
    let mut orders = Vec::new();
    for _ in 0..20_000 {
        let a = env.clip(RawAction {
            q_factory: 30.0,
            q_warehouse: 30.0,
            rp_next: 6.0,
        });
        let out = env.step(a.action);
        assert_eq!(out.flows.demand, 2);
        if out.next_state.retailer_order > 0 {
            orders.push(out.next_state.retailer_order as f64);
        }
    }
    let mean = orders.iter().sum::<f64>() / orders.len() as f64;
    assert!(orders.len() > 100);
    assert!((mean - 10.0).abs() < 0.2, "mean order {mean}");
}

proptest! {
    #[test]
    fn clip_lands_in_the_box(
        f in 0u32..=30, w in 0u32..=30, r in 0u32..=30, rp in 0u32..=6, order in 0u32..=20,
        qf in -100.0f64..100.0, qw in -100.0f64..100.0, q_rp in -10.0f64..10.0,
    ) {
        let cfg = ChainConfig::for_case(CostCase::One);
        let mut env = Env::new(cfg, 0).unwrap();
        let mut s = EnvState::idle(f, w, r, rp);
        s.retailer_order = order;
        env.set_state(s).unwrap();
        let b = env.action_box();
        let c = env.clip(RawAction { q_factory: qf, q_warehouse: qw, rp_next: q_rp });
        if !c.capacity_violation {
            prop_assert!(b.contains(&c.action));
        }
        prop_assert!(c.action.rp_next <= 6);
        prop_assert!(c.action.q_warehouse >= order.saturating_sub(w));
    }

    #[test]
    fn reset_is_seed_determined(seed in any::<u64>()) {
        let cfg = ChainConfig::for_case(CostCase::Two);
        let a = Env::new(cfg.clone(), seed).unwrap().reset();
        let b = Env::new(cfg, seed).unwrap().reset();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.inv_factory <= 30 && a.inv_warehouse <= 30 && a.rp <= 6);
    }
}
