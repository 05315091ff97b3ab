fn main() {
    std::process::exit(fsbp::cli::run_with_args(std::env::args_os()));
}
