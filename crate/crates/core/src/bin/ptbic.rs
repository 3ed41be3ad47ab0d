fn main() {
    std::process::exit(ptbic::cli::run(std::env::args_os()));
}
