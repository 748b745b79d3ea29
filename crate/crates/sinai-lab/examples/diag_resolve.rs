use sinai_lab::env::*;
use sinai_lab::rng::SeedTree;
use sinai_lab::wells::*;

fn main() {
    let seeds = SeedTree::new(4);
    let dt = 1e-3;
    for env in 0..3u64 {
        let mut left: Vec<f64> = Vec::new();
        let mut right: Vec<f64> = Vec::new();
        for n in [16000usize, 32000, 64000, 128000, 256000] {
            extend_wing(&mut left, dt, n, &seeds, "cli-jumpprob", env, 1);
            extend_wing(&mut right, dt, n, &seeds, "cli-jumpprob", env, 0);
            let a = well_analysis_from_wings(dt, 0.0, &left, &right);
            let lmin = left.iter().cloned().fold(f64::INFINITY, f64::min);
            let rmin = right.iter().cloned().fold(f64::INFINITY, f64::min);
            println!(
                "env {env} n={n}: resolved_to={:.4} max_depth={:.4} jumps={} lmin={lmin:.3} rmin={rmin:.3}",
                a.resolved_to, a.process.max_depth, a.process.jumps.len()
            );
        }
    }
}
