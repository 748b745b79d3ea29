use sinai_lab::env::*;
use sinai_lab::rng::SeedTree;
use sinai_lab::wells::*;

fn main() {
    let seeds = SeedTree::new(4);
    let dt: f64 = 1e-3;
    let shift = 2.0 * EXTREMUM_OVERSHOOT * dt.sqrt();
    let (h1, h2) = (1.0 - shift, 2.0 - shift);
    let mut worst = 0usize;
    for env in 0..2000u64 {
        let mut left: Vec<f64> = Vec::new();
        let mut right: Vec<f64> = Vec::new();
        let mut n = 16000usize;
        let mut rounds = 0;
        loop {
            extend_wing(&mut left, dt, n, &seeds, "cli-jumpprob", env, 1);
            extend_wing(&mut right, dt, n, &seeds, "cli-jumpprob", env, 0);
            let a = well_analysis_from_wings(dt, 0.0, &left, &right);
            if jump_in_window_decided(&a, h1, h2).is_some() {
                break;
            }
            rounds += 1;
            if rounds > 40 {
                println!("env {env} stuck: resolved={:.4} max_depth={:.4}", a.resolved_to, a.process.max_depth);
                for (j, e) in a.process.jumps.iter().zip(a.jump_exact.iter()) {
                    println!("  jump d={:.4} loc={:+.3} exact={e}", j.depth, j.location);
                }
                debug_dump_chains(dt, 0.0, &left, &right);
                return;
            }
            n += 8000;
        }
        if rounds > worst {
            worst = rounds;
            println!("env {env}: {rounds} rounds (n={n})");
        }
    }
    println!("all decided; worst rounds {worst}");
}
