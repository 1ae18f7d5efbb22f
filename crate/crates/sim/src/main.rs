fn main() {
    std::process::exit(membrane_sim::cli::run(std::env::args_os()));
}
