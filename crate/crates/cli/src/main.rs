fn main() {
    std::process::exit(aewatch_cli::run(std::env::args_os()));
}
