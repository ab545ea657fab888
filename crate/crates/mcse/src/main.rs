fn main() {
    std::process::exit(mcse::cli::run(std::env::args_os()));
}
