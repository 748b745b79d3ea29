use sinai_lab::env::*;
use sinai_lab::rng::SeedTree;
use sinai_lab::wells::*;

fn main() {
    let seeds = SeedTree::new(4);
    let dt = 1e-3;
    let n = 256000usize;
    let left = sample_wing(dt, n, &seeds, "cli-jumpprob", 1, 1);
    let right = sample_wing(dt, n, &seeds, "cli-jumpprob", 1, 0);
    let a = well_analysis_from_wings(dt, 0.0, &left, &right);
    println!("resolved {:.4}", a.resolved_to);
    debug_dump_chains(dt, 0.0, &left, &right);
}
