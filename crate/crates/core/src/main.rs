fn main() {
    std::process::exit(spiked_core::cli::parse_and_dispatch(std::env::args_os()));
}
