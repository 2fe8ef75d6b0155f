fn main() {
    std::process::exit(cylsfm_cli::run(std::env::args_os()));
}
