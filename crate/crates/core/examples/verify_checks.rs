//! Runs a few bound checks on a small chain and prints their reports.

use lattice_ldp::config::parse_config;
use lattice_ldp::verify::{run_check, CheckId, CheckInstance};

const CONFIG: &str = "
dim = 1
radius = 3
lambda = 1
gamma = 0.5
epsilon = 0.2
f.kind = cubic
sigma.kind = normalized_diagonal
sigma.a_profile = power_decay(0.5, 2)
g_profile = power_decay(0.5, 2)
u0_profile = power_decay(1, 1)
dt = 0.01
t_end = 2
paths = 1000
seed = 5
save_stride = 20
";

fn main() -> lattice_ldp::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let inst = CheckInstance {
        params: cfg.params,
        u0: cfg.u0,
        sim: cfg.sim,
        options: cfg.check,
    };
    println!("{}", inst.describe());
    for id in [CheckId::Est1, CheckId::Contraction, CheckId::Csol, CheckId::Cest1] {
        match run_check(id, &inst) {
            Ok(report) => println!("{}", report.summary_line()),
            Err(e) => println!("SKIP {id}: {e}"),
        }
    }
    // Full table for one of them.
    println!("\n{}", run_check(CheckId::Csol, &inst)?.to_text());
    Ok(())
}
