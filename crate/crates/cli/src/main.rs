fn main() {
    std::process::exit(spherefield_cli::run(std::env::args_os()));
}
