fn main() {
    std::process::exit(dynelab::cli::run(std::env::args_os()));
}
