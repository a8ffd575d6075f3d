fn main() {
    std::process::exit(klda::cli::run(std::env::args_os()));
}
