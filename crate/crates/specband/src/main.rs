fn main() {
    std::process::exit(specband::cli::run());
}
