fn main() {
    std::process::exit(uav_isac::cli::run_cli(std::env::args_os()));
}
