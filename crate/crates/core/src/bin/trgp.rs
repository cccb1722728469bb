fn main() {
    std::process::exit(trgp::cli::main_with_args(std::env::args_os()));
}
