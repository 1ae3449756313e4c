fn main() {
    std::process::exit(ringsim::harness::cli::cli_main(std::env::args_os()));
}
