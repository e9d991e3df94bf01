fn main() {
    std::process::exit(darkpath::cli::run_from_args(std::env::args_os()));
}
