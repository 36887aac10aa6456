fn main() {
    std::process::exit(ecn_core::cli::run_from_args(std::env::args_os()));
}
