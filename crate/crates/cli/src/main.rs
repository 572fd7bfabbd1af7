fn main() {
    std::process::exit(ringlattice_cli::run_cli(std::env::args_os()));
}
