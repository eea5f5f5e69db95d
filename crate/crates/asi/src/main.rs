fn main() {
    std::process::exit(asi::cli::run(std::env::args_os()));
}
