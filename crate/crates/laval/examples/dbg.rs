use laval::gas::GasModel;
use laval::nozzle::{NozzleSpec, Profile, BoundaryMaps};
use laval::subsonic::{continue_to_sonic, continuation_schedule, SubsonicConfig};
fn main() {
    let g = GasModel::new(1.4).unwrap();
    let spec = NozzleSpec::straight_channel(-0.3, 0.3, 1.0).unwrap();
    let c_star = g.c_star();
    let maps = BoundaryMaps::build(&spec, &g,
        Profile::constant(0.0, spec.inlet_height(), c_star),
        Profile::constant(spec.l_minus, 0.0, c_star),
        Profile::constant(0.0, spec.l_plus, c_star)).unwrap();
    let cfg = SubsonicConfig { n_phi: 24, n_psi: 8, ..Default::default() };
    let schedule = continuation_schedule(&g, 1e-6);
    println!("schedule len {}", schedule.len());
    match continue_to_sonic(&maps, &g, &schedule, &cfg, None) {
        Ok(f) => println!("ok, sweeps {}", f.inner_sweeps),
        Err(e) => println!("ERR: {e}"),
    }
}
