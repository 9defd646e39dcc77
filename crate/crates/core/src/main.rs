fn main() {
    std::process::exit(oksir::cli::run(std::env::args_os()));
}
