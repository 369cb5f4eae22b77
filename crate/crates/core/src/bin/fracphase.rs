fn main() {
    std::process::exit(fracphase::cli::run_cli(std::env::args_os()));
}
