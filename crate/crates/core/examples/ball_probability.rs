//! Probability that the terminal state, or the whole path, stays near the
//! noise-free solution, with Wilson intervals.

use lattice_ldp::config::parse_config;
use lattice_ldp::mcstats::{estimate_ball_probability, BallEvent};
use lattice_ldp::skeleton::{solve_limit_with, Integrator};

const CONFIG: &str = "
dim = 1
radius = 2
lambda = 1
f.kind = cubic
sigma.a_profile = power_decay(1, 2)
u0_profile = constant(1)
dt = 0.01
t_end = 2
paths = 4000
seed = 12
save_stride = 10
";

fn main() -> lattice_ldp::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let reference = solve_limit_with(&cfg.params, &cfg.u0, cfg.sim.t_end, cfg.sim.dt, Integrator::Explicit(cfg.sim.scheme), 10)?;
    for eps in [0.2, 0.05, 0.0125] {
        let p = cfg.params.with_epsilon(eps);
        let terminal = BallEvent::Terminal { center: reference.final_state().clone(), radius: 0.1 };
        let tube = BallEvent::Tube { reference: reference.clone(), radius: 0.1 };
        let a = estimate_ball_probability(&p, &cfg.u0, &cfg.sim, &terminal)?;
        let b = estimate_ball_probability(&p, &cfg.u0, &cfg.sim, &tube)?;
        println!(
            "eps = {eps:<7} terminal {:.4} [{:.4}, {:.4}]   tube {:.4} [{:.4}, {:.4}]",
            a.estimate, a.lower, a.upper, b.estimate, b.lower, b.upper
        );
    }
    Ok(())
}
