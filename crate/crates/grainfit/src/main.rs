fn main() {
    std::process::exit(grainfit::cli::run());
}
