fn main() {
    std::process::exit(telegraph_core::cli::run(std::env::args_os()));
}
