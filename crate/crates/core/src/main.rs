fn main() {
    std::process::exit(framecorr::cli::run_cli(std::env::args_os()));
}
