fn main() {
    std::process::exit(pate::cli::run(std::env::args_os()));
}
