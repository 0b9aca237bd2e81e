fn main() {
    std::process::exit(litevr::cli::run(std::env::args_os()));
}
