//! Long-run sampling of the stationary law of a linear chain, compared with
//! the Gaussian law from the Lyapunov equation.

use lattice_ldp::config::parse_config;
use lattice_ldp::mcstats::sample_invariant;
use lattice_ldp::verify::lyapunov_oracle;

const CONFIG: &str = "
dim = 1
radius = 3
lambda = 1
epsilon = 0.5
f.kind = zero
sigma.kind = constant_diagonal
sigma.a_profile = power_decay(1, 2)
g_profile = power_decay(0.5, 2)
dt = 0.005
t_end = 500
paths = 4
seed = 1
invariant.burn_in = 10
invariant.thin = 0.5
invariant.radii = 0.5, 1
";

fn main() -> lattice_ldp::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let p = &cfg.params;
    let s = sample_invariant(p, &cfg.sim, &cfg.invariant)?;
    let oracle = lyapunov_oracle(p)?;
    let q = oracle.covariance_diagonal();
    println!("{} samples", s.n_samples);
    println!("site   mean      ± se       exact     variance  exact");
    for (k, site) in p.shape().sites().enumerate() {
        println!(
            "{:+3}   {:+.5}  {:.5}   {:+.5}  {:.5}   {:.5}",
            site[0],
            s.mean.values()[k],
            s.mean_std_error.values()[k],
            oracle.mean.values()[k],
            s.variance.values()[k],
            p.epsilon * q.values()[k]
        );
    }
    for (r, o) in s.radii.iter().zip(&s.outside) {
        println!("P(|u|_kappa > {r}) = {:.4} [{:.4}, {:.4}]", o.estimate, o.lower, o.upper);
    }
    Ok(())
}
