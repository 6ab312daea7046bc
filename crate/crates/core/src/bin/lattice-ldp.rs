fn main() {
    std::process::exit(lattice_ldp::cli::run_command(std::env::args_os()));
}
