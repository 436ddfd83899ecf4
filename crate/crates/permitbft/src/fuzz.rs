//! Adversarial scenario generation for the fuzz driver.
//!
//! Each index under a master seed maps to one scenario mixing equivocation,
//! withholding, stale permits, timeout spam, partitions and asynchronous
//! phases over n in {4, 7}. Generated scenarios always pass validation and
//! keep the fault budget at exactly f.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::Digest;
use crate::node::TimerConfig;
use crate::scenario::{
    AdversaryStrategy, Checks, Jitter, Partition, Scenario, SynchronyMode, SynchronyPhase,
    TxInjection,
};
use crate::types::{NodeId, Owner, Transaction};

fn derive_seed(master: u64, index: u64, salt: &[u8]) -> u64 {
    let mut bytes = Vec::with_capacity(24 + salt.len());
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    bytes.extend_from_slice(salt);
    u64::from_le_bytes(Digest::of(&bytes).0[..8].try_into().unwrap())
}

/// Deterministically generates the `index`-th adversarial scenario.
pub fn generate(master_seed: u64, index: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, index, b"scenario"));
    let n: u32 = *[4, 7].choose(&mut rng).unwrap();
    let f = (n - 1) / 3;
    let timers = TimerConfig::default_ticks();
    let horizon = rng.gen_range(25..=40) * 1000;

    // alternating-ish synchrony schedule covering [0, horizon)
    let mut phases = Vec::new();
    let mut t = 0u64;
    while t < horizon {
        let len = rng.gen_range(8..=16) * 1000;
        let end = (t + len).min(horizon).max(t + 1);
        let mode = if phases.is_empty() || rng.gen_bool(0.65) {
            let jitter = if rng.gen_bool(0.5) {
                Jitter::Fixed
            } else {
                Jitter::Uniform
            };
            SynchronyMode::Synchronous(jitter)
        } else {
            SynchronyMode::Asynchronous
        };
        phases.push(SynchronyPhase {
            start: t,
            end,
            mode,
        });
        t = end;
    }

    // up to two partition windows splitting the nodes in two groups
    let mut partitions = Vec::new();
    for _ in 0..rng.gen_range(0..=2u32) {
        let start = rng.gen_range(0..horizon - 2000);
        let end = (start + rng.gen_range(2..=8) * 1000).min(horizon);
        let mut g1 = BTreeSet::new();
        let mut g2 = BTreeSet::new();
        for i in 0..n {
            if rng.gen_bool(0.5) {
                g1.insert(NodeId(i));
            } else {
                g2.insert(NodeId(i));
            }
        }
        if g1.is_empty() {
            let moved = *g2.iter().next().unwrap();
            g2.remove(&moved);
            g1.insert(moved);
        }
        if g2.is_empty() {
            let moved = *g1.iter().next().unwrap();
            g1.remove(&moved);
            g2.insert(moved);
        }
        partitions.push(Partition {
            start,
            end,
            groups: vec![g1, g2],
        });
    }

    // exactly f byzantine nodes with mixed strategies
    let mut ids: Vec<u32> = (0..n).collect();
    ids.shuffle(&mut rng);
    let byz_ids: Vec<u32> = ids.into_iter().take(f as usize).collect();
    let mut byzantine = std::collections::BTreeMap::new();
    for id in &byz_ids {
        byzantine.insert(NodeId(*id), random_strategy(&mut rng, n, &byz_ids));
    }

    // one coin per node (byzantine ones fuel equivocation double-spends)
    // plus client coins for the injection schedule
    let client_coins = rng.gen_range(2..=5u32);
    let mut mints: Vec<(Owner, u64)> = (0..n).map(|i| (Owner::Node(NodeId(i)), 100)).collect();
    for c in 0..client_coins {
        mints.push((Owner::Client(c), 50));
    }
    let coinbase = Transaction::mint(mints.clone());

    // injections: each spends a fresh client coin; some coins are spent by a
    // conflicting pair delivered to two different nodes
    let mut injections = Vec::new();
    let mut label = 0u32;
    for c in 0..client_coins {
        let coin = crate::types::OutputRef {
            tx_id: coinbase.id(),
            index: n + c,
        };
        let time = rng.gen_range(1..horizon * 3 / 4);
        let target = NodeId(rng.gen_range(0..n));
        let tx = Transaction::new([coin], vec![(Owner::Client(100 + label), 50)]);
        injections.push(TxInjection {
            label: format!("t{label}"),
            time,
            target,
            tx,
        });
        label += 1;
        if rng.gen_bool(0.4) {
            // conflicting spend of the same coin, nearby in time
            let time2 = time.saturating_add(rng.gen_range(0..3000)).min(horizon - 1);
            let target2 = NodeId(rng.gen_range(0..n));
            let tx2 = Transaction::new([coin], vec![(Owner::Client(100 + label), 50)]);
            injections.push(TxInjection {
                label: format!("t{label}"),
                time: time2,
                target: target2,
                tx: tx2,
            });
            label += 1;
        }
    }
    injections.sort_by_key(|i| i.time);

    let scenario = Scenario {
        name: format!("fuzz-{index}"),
        n,
        f,
        timers,
        horizon,
        seed: derive_seed(master_seed, index, b"delays"),
        checks: Checks {
            safety: true,
            ..Default::default()
        },
        phases,
        partitions,
        byzantine,
        mints,
        injections,
    };
    scenario
        .validate()
        .expect("generated scenarios are valid by construction");
    scenario
}

fn random_strategy(rng: &mut ChaCha8Rng, n: u32, byz_ids: &[u32]) -> AdversaryStrategy {
    let simple = |rng: &mut ChaCha8Rng| -> AdversaryStrategy {
        match rng.gen_range(0..6u32) {
            0 => AdversaryStrategy::Silent,
            1 => AdversaryStrategy::CrashAt(rng.gen_range(1..=8)),
            2 => AdversaryStrategy::EquivocateBlocks(rng.gen_range(2..=3)),
            3 => {
                let honest: Vec<u32> =
                    (0..n).filter(|i| !byz_ids.contains(i)).collect();
                let k = rng.gen_range(1..=honest.len().min(3));
                let mut set = BTreeSet::new();
                let mut pool = honest;
                for _ in 0..k {
                    let idx = rng.gen_range(0..pool.len());
                    set.insert(NodeId(pool.swap_remove(idx)));
                }
                AdversaryStrategy::WithholdFrom(set)
            }
            4 => AdversaryStrategy::StalePermit(rng.gen_range(1..=4)),
            _ => AdversaryStrategy::SpamTimeouts,
        }
    };
    if rng.gen_bool(0.2) {
        let a = simple(rng);
        let b = simple(rng);
        AdversaryStrategy::Custom(vec![(0, a), (rng.gen_range(3..=7), b)])
    } else {
        simple(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate(42, 7);
        let b = generate(42, 7);
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn generated_scenarios_validate_and_mix() {
        let mut ns = BTreeSet::new();
        let mut strategies = BTreeSet::new();
        for i in 0..60 {
            let s = generate(1, i);
            s.validate().unwrap();
            ns.insert(s.n);
            for strat in s.byzantine.values() {
                strategies.insert(format!("{strat:?}").split('(').next().unwrap().to_string());
            }
            assert_eq!(s.byzantine.len() as u32, s.f);
        }
        assert_eq!(ns, [4u32, 7].into_iter().collect());
        // all strategy families appear across the corpus
        for name in ["Silent", "CrashAt", "EquivocateBlocks", "WithholdFrom", "StalePermit", "SpamTimeouts"] {
            assert!(
                strategies.iter().any(|s| s.contains(name)),
                "{name} never generated: {strategies:?}"
            );
        }
    }
}
