fn main() {
    std::process::exit(pnpi::cli::run(std::env::args_os()));
}
