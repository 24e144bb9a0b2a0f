fn main() {
    std::process::exit(hopnet::cli::run(std::env::args_os()));
}
