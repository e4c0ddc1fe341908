fn main() {
    std::process::exit(altchain::cli::run(std::env::args_os()));
}
