fn main() {
    std::process::exit(envforge::cli::cli_dispatch(std::env::args_os()));
}
