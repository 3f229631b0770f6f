//! Fixtures shared by the benchmarks under `benches/`.

use steer_core::demand::{split_adjustable, BinDemand, GravityParams};
use steer_core::scenario::select_top_k;
use steer_core::topology::{abilene, Network};

/// One Abilene bin with gravity demand and the top-10 providers adjustable.
pub fn abilene_bin(seed: u64) -> (Network, BinDemand) {
    let topo = abilene();
    let mut params = GravityParams::new(60_000.0, seed);
    params.masses = Some(vec![0.1, 5.3, 9.5, 2.9, 6.3, 2.0, 2.1, 13.0, 19.0, 7.0, 3.9, 6.2]);
    let matrix = steer_core::demand::generate_gravity_demands(&topo, &params).expect("valid parameters");
    let bin = split_adjustable(&matrix, 0, &select_top_k(&matrix, 10)).expect("bin 0 exists");
    (Network::new(topo).expect("abilene routes"), bin)
}
