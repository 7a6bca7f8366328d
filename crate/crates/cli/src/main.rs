fn main() {
    std::process::exit(oia_cli::run(std::env::args_os()));
}
