use sinai_lab::rng::SeedTree;
use sinai_lab::wells::*;
use rand::Rng;

fn main() {
    let seeds = SeedTree::new(101);
    let mut rng = seeds.stream("depths", 0);
    for i in 0..200u64 {
        let p = sinai_lab::env::sample_brownian(0.02, 500, 500, &seeds, "oracle", i).unwrap();
        let wp = well_process(&p);
        let zw = zero_wells_bruteforce(&p);
        for _ in 0..50 {
            let h: f64 = rng.gen_range(0.005..wp.max_depth.max(0.01) * 1.2);
            let fast = wp.eval(h);
            let slow = bruteforce_eval(&zw, h);
            if fast != slow {
                println!("path {i}: h={h:.6} fast={fast} slow={slow}");
                // dump the brute-force wells containing zero near this depth
                for w in &zw {
                    if w.depth >= h - 0.5 {
                        println!("  well: a={:.3} c={:.3} bottom={:.4} v={:.4} depth={:.5} asc=({:.4},{:.4}) trunc=({},{})",
                            w.a, w.c, w.bottom, w.bottom_value, w.depth, w.left_ascent, w.right_ascent, w.left_truncated, w.right_truncated);
                    }
                }
                println!("  jumps:");
                for j in &wp.jumps {
                    println!("    depth {:.5} -> {:.4}", j.depth, j.location);
                }
                return;
            }
        }
    }
    println!("no mismatch found");
}
