fn main() {
    let code = cusplab::cli::run(std::env::args().collect());
    std::process::exit(code);
}
