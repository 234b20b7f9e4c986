fn main() {
    std::process::exit(starlab::cli::run(std::env::args_os()));
}
