fn main() {
    std::process::exit(triproxy::cli::run(std::env::args_os()));
}
