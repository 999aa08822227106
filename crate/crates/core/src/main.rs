fn main() {
    std::process::exit(newsgen::cli::run());
}
