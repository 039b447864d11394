fn main() {
    std::process::exit(leda::cli::main_with_args(std::env::args_os()));
}
