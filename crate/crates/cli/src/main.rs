fn main() {
    std::process::exit(tilereduce_cli::run(std::env::args_os()));
}
