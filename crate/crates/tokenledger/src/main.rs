fn main() {
    std::process::exit(tokenledger::cli::run_cli(std::env::args_os()));
}
