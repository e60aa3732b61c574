fn main() {
    std::process::exit(mtforge::cli::run(std::env::args_os()));
}
