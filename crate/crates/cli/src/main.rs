fn main() {
    std::process::exit(heisfowler_cli::run(std::env::args_os()));
}
