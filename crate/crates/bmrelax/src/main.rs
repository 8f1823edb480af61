fn main() {
    std::process::exit(bmrelax::cli::run(std::env::args()));
}
