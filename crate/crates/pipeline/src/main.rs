fn main() {
    std::process::exit(blurforge::cli::run(std::env::args_os()));
}
