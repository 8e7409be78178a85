fn main() {
    std::process::exit(riskq::cli::run(std::env::args_os()));
}
