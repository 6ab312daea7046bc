//! Noise-free solution relaxing onto the equilibrium.

use lattice_ldp::config::parse_config;
use lattice_ldp::model::drift_eval;
use lattice_ldp::skeleton::{find_equilibrium, solve_limit};

const CONFIG: &str = "
dim = 1
radius = 6
lambda = 0.5
epsilon = 0.1
f.kind = cubic
sigma.a_profile = power_decay(1, 2)
g_profile = single_site(0, 2)
u0_profile = constant(-1)
";

fn main() -> lattice_ldp::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let p = &cfg.params;
    let u_star = find_equilibrium(p)?;
    println!("|drift(u*)| = {:.2e}", drift_eval(p, &u_star)?.norm());
    for (i, x) in p.shape().sites().zip(u_star.values()) {
        println!("u*({:+}) = {x:+.8}", i[0]);
    }
    let traj = solve_limit(p, &cfg.u0, 20.0, 0.01)?;
    for (t, u) in traj.times.iter().zip(&traj.states).step_by(400) {
        println!("t = {t:5.1}  |u(t) - u*| = {:.3e}", u.distance(&u_star));
    }
    Ok(())
}
