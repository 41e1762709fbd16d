//! Regenerates `demo/grid50.txt`, the 50x50 benchmark grid.

use mfpt_mdp::gridworld::{Cell, RandomGrid};

fn main() {
    let spec = RandomGrid {
        width: 50,
        height: 50,
        obstacle_density: 0.1,
        goal: Some(Cell::new(0, 45)),
        seed: 1,
    }
    .generate()
    .expect("demo grid parameters are valid");
    let out = std::env::args().nth(1).unwrap_or_else(|| "demo/grid50.txt".into());
    std::fs::write(&out, spec.to_text()).expect("write demo grid");
    eprintln!("wrote {out}");
}
