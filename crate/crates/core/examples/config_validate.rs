//! Parsing a configuration, collecting every error, and the derived constants.

use lattice_ldp::config::parse_config;
use lattice_ldp::mcstats::choose_delta;

fn main() {
    let good = "dim = 2\nradius = 3\nlambda = 2\nepsilon = 0.3\nf.kind = odd_polynomial\nf.coeffs = 0.5, 1\nsigma.a_profile = power_decay(1, 2)\n";
    match parse_config(good) {
        Ok(cfg) => {
            let p = &cfg.params;
            for c in &cfg.validation.conditions {
                println!("[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            println!("L_sigma = {:.6}, dt_max = {}, dt = {}, delta = {}", p.l_sigma(), p.dt_max(), cfg.sim.dt, choose_delta(p));
        }
        Err(e) => println!("unexpected: {e}"),
    }

    let bad = "dim = 1\nradius = 4\nlambda = -1\nepsilon = 2\nf.kind = cubic\nsigma.a_profile = power_decay(1, 2)\ndt = 5\n";
    match parse_config(bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected:\n{e}"),
    }

    match parse_config("dim = 1\nradius 4\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
}
