use sinai_lab::occupation::StepSpec;
use sinai_lab::vessel::*;
use sinai_lab::wells::well_process;

fn main() {
    let spec = StepSpec::new(vec![0.9, 2.0, 2.9, 4.1], vec![0.3, -0.5, 0.8, -1.0]).unwrap();
    let vs = VesselSpec::new(spec, 0.05, 0.05).unwrap();
    let path = construct_witness(&vs).unwrap();
    let rep = vessel_membership(&path, &vs).unwrap();
    println!("member: {} ({:?})", rep.ok, rep.first_violation);
    let wp = well_process(&path);
    for j in &wp.jumps {
        println!("jump depth {:.5} -> {:.5}", j.depth, j.location);
    }
    let prof = v_profile(&path, &vs);
    for (i, v) in prof.v.iter().enumerate() {
        println!("v_{} = {:.5}", i + 1, v);
    }
    let sk = skorokhod_closeness(&path, &vs);
    println!("dist {:.4} bound {:.4} sandwich {}", sk.distance, sk.bound, sk.xvariation_ok);
}
