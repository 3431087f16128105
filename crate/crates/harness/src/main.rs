fn main() {
    std::process::exit(hiernet_harness::cli::run(std::env::args_os()));
}
