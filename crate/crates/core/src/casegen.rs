//! Synthetic feeder generation for testing and benchmarking.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::net::{Branch, Bus, BusId, NetworkCase};

/// A minimal slack-plus-load feeder.
pub fn two_bus_case(p_load_kw: f64, q_load_kvar: f64, r_ohm: f64, x_ohm: f64) -> NetworkCase {
    NetworkCase::new(
        12.66,
        10.0,
        1.0,
        vec![
            Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0, is_slack: true },
            Bus { id: 2, p_load_kw: p_load_kw, q_load_kvar: q_load_kvar, is_slack: false },
        ],
        vec![Branch { from: 1, to: 2, r_ohm, x_ohm, status: true }],
        vec![],
    )
    .expect("two-bus case is valid")
}

/// Builds a random radial feeder with `n_buses` buses on a 12.66 kV /
/// 10 MVA base: a uniformly random spanning tree rooted at bus 1 (slack),
/// moderate impedances and light constant-power loads. Deterministic for a
/// given seed.
pub fn random_radial_case(seed: u64, n_buses: usize) -> NetworkCase {
    assert!(n_buses >= 2, "a feeder needs a slack bus and one load bus");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::with_capacity(n_buses);
    buses.push(Bus { id: 1, p_load_kw: 0.0, q_load_kvar: 0.0, is_slack: true });
    let mut branches = Vec::with_capacity(n_buses - 1);
    for id in 2..=n_buses as BusId {
        buses.push(Bus {
            id,
            p_load_kw: rng.random_range(10.0..80.0),
            q_load_kvar: rng.random_range(5.0..50.0),
            is_slack: false,
        });
        // attach to any earlier bus: keeps expected depth logarithmic
        let parent = rng.random_range(1..id);
        branches.push(Branch {
            from: parent,
            to: id,
            r_ohm: rng.random_range(0.1..0.6),
            x_ohm: rng.random_range(0.05..0.45),
            status: true,
        });
    }
    NetworkCase::new(12.66, 10.0, 1.0, buses, branches, vec![])
        .expect("generated tree is a valid radial case")
}
