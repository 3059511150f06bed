fn main() {
    std::process::exit(polyscore_core::cli::run(std::env::args_os()));
}
