fn main() {
    std::process::exit(gcmvs::cli::main_with_args(std::env::args_os()));
}
