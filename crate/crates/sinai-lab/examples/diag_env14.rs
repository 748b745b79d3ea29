use sinai_lab::env::*;
use sinai_lab::rng::SeedTree;

fn main() {
    let seeds = SeedTree::new(4);
    let dt: f64 = 1e-3;
    for side in [0u64, 1] {
        let mut w: Vec<f64> = Vec::new();
        for n in [16000usize, 64000, 256000] {
            extend_wing(&mut w, dt, n, &seeds, "cli-jumpprob", 14, side);
            let mn = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            println!("side {side} n={n}: min {mn:.4} max {mx:.4} last {:.4}", w.last().unwrap());
        }
        // fresh sampling for comparison
        let fresh = sample_wing(dt, 256000, &seeds, "cli-jumpprob", 14, side);
        let mn = fresh.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("side {side} fresh min {mn:.4}; prefix equal: {}", fresh[..16000] == w[..16000]);
    }
}
