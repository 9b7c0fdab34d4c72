fn main() {
    std::process::exit(viscodamage::cli::run_cli(std::env::args_os()));
}
