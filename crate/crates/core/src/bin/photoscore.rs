fn main() {
    let code = photoscore::cli::run(std::env::args_os());
    std::process::exit(code);
}
