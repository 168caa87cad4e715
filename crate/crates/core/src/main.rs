fn main() {
    std::process::exit(ssmrom::pipeline::cli::run());
}
