fn main() {
    std::process::exit(gandet::cli::run(std::env::args_os()));
}
