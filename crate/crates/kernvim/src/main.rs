fn main() {
    std::process::exit(kernvim::cli::main_with_args(std::env::args_os()));
}
