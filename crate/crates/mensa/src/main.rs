fn main() {
    std::process::exit(mensa::cli::run());
}
