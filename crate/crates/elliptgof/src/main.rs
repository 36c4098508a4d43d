fn main() {
    std::process::exit(elliptgof::cli::run());
}
