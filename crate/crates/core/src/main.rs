fn main() {
    std::process::exit(delaylmi::cli::main_with_args(std::env::args_os()));
}
