fn main() {
    std::process::exit(ordrank_cli::run(std::env::args_os()));
}
