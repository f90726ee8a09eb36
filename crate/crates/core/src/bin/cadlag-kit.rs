fn main() {
    cadlag_kit::cli::init_logging();
    std::process::exit(cadlag_kit::cli::main_with_args(std::env::args_os()));
}
