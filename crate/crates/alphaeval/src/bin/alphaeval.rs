fn main() {
    std::process::exit(alphaeval::cli::run());
}
