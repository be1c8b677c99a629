fn main() {
    std::process::exit(vtelos_core::cli::run(std::env::args_os()))
}
