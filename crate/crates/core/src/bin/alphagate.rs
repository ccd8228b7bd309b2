fn main() {
    std::process::exit(alphagate::cli::run(std::env::args_os()));
}
