fn main() {
    std::process::exit(vecwave::cli::run(std::env::args_os()));
}
