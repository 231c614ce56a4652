fn main() {
    std::process::exit(hjlab::cli::main_with(std::env::args_os()));
}
