fn main() {
    std::process::exit(intonation_cli::run(std::env::args_os()));
}
