fn main() {
    std::process::exit(homlie_cli::run(std::env::args_os()));
}
