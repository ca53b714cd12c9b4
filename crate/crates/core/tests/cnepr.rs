//! CNEPR pool structure, insertion rule, recombination and reconstruction.

mod common {
    pub mod replay;
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use common::replay::{adversarial, filled, ids, tr, Oracle};
use sesim_core::cnepr::{bin, sample_minibatch, Axis, CneprConfig, Labels, PoolSet, UniformReplay};

#[test]
fn pool_count_at_default_labels() {
    let p = PoolSet::new(CneprConfig::default()).unwrap();
    assert_eq!(p.pool_count(), 30);
    let p = PoolSet::new(CneprConfig { l: 3, m: 4, n: 7, ..Default::default() }).unwrap();
    assert_eq!(p.pool_count(), 28);
}

#[test]
fn insertion_matches_rule_on_adversarial_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in 0..8 {
        for cap in [3, 50, 10_000] {
            let cfg = CneprConfig { capacity: cap, ..Default::default() };
            let mut pools = PoolSet::new(cfg.clone()).unwrap();
            let mut oracle = Oracle::default();
            for i in 0..600 {
                let r = adversarial(kind, i, &mut rng);
                let labels = Labels { l: 1 + i % 5, m: 1 + (i / 5) % 5, n: 1 + (i * 7) % 5 };
                pools.insert(tr(i, r, labels)).unwrap();
                oracle.insert(i, r, labels, cfg.ema_decay, cap);
            }
            for (a, ax) in Axis::ALL.into_iter().enumerate() {
                for label in 1..=5 {
                    let (high, low, mean) = pools.pools(ax, label);
                    let key = (a, label);
                    assert_eq!(ids(high.iter()), oracle.high.get(&key).cloned().unwrap_or_default(), "kind {kind}");
                    assert_eq!(ids(low.iter()), oracle.low.get(&key).cloned().unwrap_or_default(), "kind {kind}");
                    assert_eq!(mean, oracle.mean.get(&key).copied().unwrap_or(0.0));
                }
            }
        }
    }
}

#[test]
fn reward_equal_to_mean_goes_low() {
    let mut pools = PoolSet::new(CneprConfig::default()).unwrap();
    let labels = Labels { l: 1, m: 1, n: 1 };
    pools.insert(tr(0, 0.0, labels)).unwrap();
    let (high, low, _) = pools.pools(Axis::Soc, 1);
    assert!(high.is_empty());
    assert_eq!(low.len(), 1);
}

#[test]
fn one_record_is_shared_by_three_pools() {
    let mut pools = PoolSet::new(CneprConfig::default()).unwrap();
    pools.insert(tr(0, 1.0, Labels { l: 2, m: 3, n: 4 })).unwrap();
    let a = &pools.pools(Axis::Sdr, 2).0[0];
    let b = &pools.pools(Axis::Soc, 3).0[0];
    let c = &pools.pools(Axis::Ao, 4).0[0];
    assert!(std::sync::Arc::ptr_eq(a, b) && std::sync::Arc::ptr_eq(b, c));
    assert_eq!(pools.inserted(), 1);
}

#[test]
fn recombination_draws_high_pool_at_rho() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pools = filled(&mut rng, 2000);
    for ax in Axis::ALL {
        for k in 1..=5 {
            let (h, l, _) = pools.pools(ax, k);
            assert!(!h.is_empty() && !l.is_empty());
        }
    }
    // 15 labels × 6667 slots ≈ 10^5 draws.
    let c = pools.recombine(6667, &mut rng);
    let n = c.draws as f64;
    let h = c.high_draws as f64;
    let freq = h / n;
    assert!((freq - 0.8).abs() <= 0.02, "high-pool frequency {freq}");
    let chi2 = (h - 0.8 * n).powi(2) / (0.8 * n) + (n - h - 0.2 * n).powi(2) / (0.2 * n);
    assert!(chi2 < 10.83, "chi-square {chi2} (df 1, p = 0.001)");
}

#[test]
fn recombination_falls_back_to_the_nonempty_side() {
    let mut pools = PoolSet::new(CneprConfig::default()).unwrap();
    let labels = Labels { l: 1, m: 1, n: 1 };
    for i in 0..10 {
        pools.insert(tr(i, 0.0, labels)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = pools.recombine(100, &mut rng);
    assert_eq!(c.high_draws, 0);
    assert_eq!(c.pool(Axis::Sdr, 1).len(), 100);
    assert!(c.pool(Axis::Sdr, 2).is_empty());
    assert_eq!(c.len(), 3);
}

#[test]
fn reconstruction_respects_tau_or_proves_it_impossible() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = CneprConfig::default();
    let mut fallbacks = 0;
    for trial in 0..400 {
        // Sparse pools make the constraint bind.
        let pools = filled(&mut rng, 1 + trial % 12);
        let combined = pools.recombine(8, &mut rng);
        let current = Labels { l: rng.random_range(1..=5), m: rng.random_range(1..=5), n: rng.random_range(1..=5) };
        let rec = combined.reconstruct(current, &mut rng).unwrap();
        let nonempty = |ax: Axis| (1..=5).filter(|&k| !combined.pool(ax, k).is_empty()).collect::<Vec<_>>();
        if rec.fallback {
            fallbacks += 1;
            for l in nonempty(Axis::Sdr) {
                for m in nonempty(Axis::Soc) {
                    for n in nonempty(Axis::Ao) {
                        assert!(cfg.distance(current, Labels { l, m, n }) > cfg.tau);
                    }
                }
            }
        } else {
            assert!(cfg.distance(current, rec.selected) <= cfg.tau + 1e-12);
        }
        let expect: usize = Axis::ALL.iter().map(|&ax| combined.pool(ax, rec.selected.get(ax)).len()).sum();
        assert_eq!(rec.pool.len(), expect);
    }
    assert!(fallbacks < 400);
}

#[test]
fn minibatch_is_uniform_over_the_pool() {
    let items: Vec<usize> = (0..10).collect();
    let refs: Vec<&usize> = items.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = sample_minibatch(&refs, 100_000, &mut rng).unwrap();
    let mut counts = [0f64; 10];
    for d in draws {
        counts[*d] += 1.0;
    }
    let chi2: f64 = counts.iter().map(|c| (c - 10_000.0).powi(2) / 10_000.0).sum();
    assert!(chi2 < 27.88, "chi-square {chi2} (df 9, p = 0.001)");
    assert!(sample_minibatch::<usize, _>(&[], 1, &mut rng).is_err());
}

#[test]
fn uniform_replay_overwrites_oldest() {
    let mut buf = UniformReplay::new(3).unwrap();
    for i in 0..5 {
        buf.push(tr(i, 0.0, Labels { l: 1, m: 1, n: 1 }).transition);
    }
    assert_eq!(buf.len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut seen: Vec<usize> = buf.sample(200, &mut rng).unwrap().iter().map(|t| t.state[0] as usize).collect();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen, vec![2, 3, 4]);
    assert!(UniformReplay::new(0).is_err());
}

proptest! {
    #[test]
    fn bins_are_one_based_and_in_range(f in -0.5..1.5f64, k in 1usize..20) {
        let b = bin(f, k);
        prop_assert!((1..=k).contains(&b));
        if (0.0..1.0).contains(&f) {
            prop_assert_eq!(b, (f * k as f64).floor() as usize + 1);
        }
    }

    #[test]
    fn pools_never_exceed_capacity(rewards in prop::collection::vec(-10.0..10.0f64, 1..300), cap in 1usize..20) {
        let mut pools = PoolSet::new(CneprConfig { capacity: cap, ..Default::default() }).unwrap();
        for (i, r) in rewards.iter().enumerate() {
            pools.insert(tr(i, *r, Labels { l: 1 + i % 2, m: 1, n: 5 })).unwrap();
        }
        for o in pools.occupancy() {
            prop_assert!(o.high <= cap && o.low <= cap);
        }
    }
}

#[test]
fn invalid_labels_are_rejected() {
    let mut pools = PoolSet::new(CneprConfig::default()).unwrap();
    assert!(pools.insert(tr(0, 0.0, Labels { l: 0, m: 1, n: 1 })).is_err());
    assert!(pools.insert(tr(0, 0.0, Labels { l: 1, m: 6, n: 1 })).is_err());
    assert!(CneprConfig { rho_high: 1.5, ..Default::default() }.validate().is_err());
}
